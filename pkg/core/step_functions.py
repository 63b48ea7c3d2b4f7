"""
紧支撑分段常数函数
原子、g、h、W1、W2 以及残差都用 StepFunction 表示，关于 m_λ 的积分是精确的
"""
from typing import Callable, Iterable, Iterator, Optional, Sequence, Tuple, Union

import numpy as np

from core.errors import DomainError
from core.measure_geometry import BesselParam, Interval, antiderivative_diff


class StepFunction:
    """
    分段常数函数

    breakpoints 严格递增（长度 n+1），values 长度 n；
    第 k 个单元为 [b_k, b_{k+1})，支撑外取 0。
    构造时化为规范形式：合并相邻等值单元，去掉首尾取 0 的单元。
    """

    __slots__ = ("_breakpoints", "_values")

    def __init__(self, breakpoints: Sequence[float], values: Sequence[float]):
        b = np.asarray(breakpoints, dtype=float).ravel()
        v = np.asarray(values, dtype=float).ravel()
        if len(b) == 0 and len(v) == 0:
            self._breakpoints, self._values = b, v
            return
        if len(b) != len(v) + 1:
            raise DomainError(f"断点数应为取值数 + 1: {len(b)} vs {len(v)}")
        if np.any(np.diff(b) <= 0):
            raise DomainError("断点必须严格递增")
        if b[0] < 0:
            raise DomainError(f"支撑必须在 ℝ₊ 内，当前左端点: {b[0]}")
        if not np.all(np.isfinite(v)):
            raise DomainError("取值中含有非有限数")
        self._breakpoints, self._values = self._canonical(b, v)

    @staticmethod
    def _canonical(b: np.ndarray, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        nonzero = np.flatnonzero(v != 0.0)
        if len(nonzero) == 0:
            return np.empty(0), np.empty(0)
        first, last = nonzero[0], nonzero[-1]
        b = b[first:last + 2]
        v = v[first:last + 1]
        # 合并相邻等值单元
        keep = np.concatenate(([True], v[1:] != v[:-1]))
        v = v[keep]
        b = np.concatenate((b[:-1][keep], b[-1:]))
        b.flags.writeable = False
        v.flags.writeable = False
        return b, v

    # ==================== 构造 ====================

    @classmethod
    def zero(cls) -> "StepFunction":
        return cls([], [])

    @classmethod
    def indicator(cls, lo: float, hi: float, value: float = 1.0) -> "StepFunction":
        return cls([lo, hi], [value])

    @classmethod
    def indicator_of(cls, interval: Interval, value: float = 1.0) -> "StepFunction":
        return cls([interval.lo, interval.hi], [value])

    @classmethod
    def sample(
        cls,
        func: Callable[[np.ndarray], np.ndarray],
        lo: float,
        hi: float,
        cells: int,
        anchor: str = "mid"
    ) -> "StepFunction":
        """
        在 [lo, hi] 的均匀网格上采样光滑函数

        anchor: "mid" 取单元中点，"left" 取左端点（加密时采样点嵌套）
        """
        edges = np.linspace(lo, hi, cells + 1)
        if anchor == "mid":
            points = 0.5 * (edges[:-1] + edges[1:])
        elif anchor == "left":
            points = edges[:-1]
        else:
            raise DomainError(f"未知的采样位置: {anchor}")
        return cls(edges, np.asarray(func(points), dtype=float))

    # ==================== 基本属性 ====================

    @property
    def breakpoints(self) -> np.ndarray:
        return self._breakpoints

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def is_zero(self) -> bool:
        return len(self._values) == 0

    @property
    def support(self) -> Optional[Tuple[float, float]]:
        if self.is_zero:
            return None
        return float(self._breakpoints[0]), float(self._breakpoints[-1])

    def cells(self) -> Iterator[Tuple[float, float, float]]:
        """遍历 (lo, hi, value)"""
        for k in range(len(self._values)):
            yield float(self._breakpoints[k]), float(self._breakpoints[k + 1]), float(self._values[k])

    def __len__(self) -> int:
        return len(self._values)

    def __call__(self, x: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        x_arr = np.asarray(x, dtype=float)
        if self.is_zero:
            out = np.zeros_like(x_arr)
        else:
            idx = np.searchsorted(self._breakpoints, x_arr, side="right") - 1
            inside = (idx >= 0) & (idx < len(self._values))
            out = np.where(inside, self._values[np.clip(idx, 0, len(self._values) - 1)], 0.0)
        return float(out) if out.ndim == 0 else out

    def cell_measures(self, lam: Union[float, BesselParam]) -> np.ndarray:
        if self.is_zero:
            return np.empty(0)
        return np.asarray(antiderivative_diff(self._breakpoints[:-1], self._breakpoints[1:], lam))

    # ==================== 积分与范数 ====================

    def integrate(self, lam: Union[float, BesselParam]) -> float:
        """∫ f dm_λ，逐单元精确求和"""
        if self.is_zero:
            return 0.0
        return float(np.dot(self._values, self.cell_measures(lam)))

    def lp_norm(self, p: float, lam: Union[float, BesselParam]) -> float:
        """
        L^p(dm_λ) 范数；p = inf 时为上确界范数

        p < 1 时返回同一表达式，不声称三角不等式成立
        """
        if self.is_zero:
            return 0.0
        if p == np.inf:
            return float(np.max(np.abs(self._values)))
        if not p > 0:
            raise DomainError(f"p 必须为正，当前: {p}")
        # 先按 max|v| 归一，避免 |v|^p 下溢
        peak = float(np.max(np.abs(self._values)))
        if peak == 0.0:
            return 0.0
        total = float(np.dot((np.abs(self._values) / peak) ** p, self.cell_measures(lam)))
        return peak * total ** (1.0 / p)

    @property
    def sup_norm(self) -> float:
        return self.lp_norm(np.inf, 1.0)

    # ==================== 代数运算 ====================

    def _merged(self, other: "StepFunction") -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """合并分划，返回 (breakpoints, self 在各单元的值, other 在各单元的值)"""
        edges = np.union1d(self._breakpoints, other._breakpoints)
        if len(edges) < 2:
            return edges, np.empty(0), np.empty(0)
        mids = 0.5 * (edges[:-1] + edges[1:])
        return edges, np.asarray(self(mids)), np.asarray(other(mids))

    def __add__(self, other: "StepFunction") -> "StepFunction":
        if not isinstance(other, StepFunction):
            return NotImplemented
        if self.is_zero:
            return other
        if other.is_zero:
            return self
        edges, a, b = self._merged(other)
        return StepFunction(edges, a + b)

    def __neg__(self) -> "StepFunction":
        return self.scale(-1.0)

    def __sub__(self, other: "StepFunction") -> "StepFunction":
        if not isinstance(other, StepFunction):
            return NotImplemented
        return self + (-other)

    def scale(self, c: float) -> "StepFunction":
        if self.is_zero or c == 0:
            return StepFunction.zero()
        return StepFunction(self._breakpoints, self._values * c)

    def __mul__(self, other: Union[float, "StepFunction"]) -> "StepFunction":
        if isinstance(other, StepFunction):
            return self.multiply(other)
        return self.scale(float(other))

    __rmul__ = __mul__

    def multiply(self, other: "StepFunction") -> "StepFunction":
        """在合并分划上逐点相乘"""
        if self.is_zero or other.is_zero:
            return StepFunction.zero()
        edges, a, b = self._merged(other)
        return StepFunction(edges, a * b)

    def abs(self) -> "StepFunction":
        if self.is_zero:
            return self
        return StepFunction(self._breakpoints, np.abs(self._values))

    def map_values(self, func: Callable[[np.ndarray], np.ndarray]) -> "StepFunction":
        if self.is_zero:
            return self
        return StepFunction(self._breakpoints, func(self._values))

    def restrict(self, lo: Union[float, Interval], hi: Optional[float] = None) -> "StepFunction":
        """限制到 [lo, hi)，也可以直接传入 Interval"""
        if isinstance(lo, Interval):
            lo, hi = lo.lo, lo.hi
        if self.is_zero or hi <= lo:
            return StepFunction.zero()
        return self.multiply(StepFunction.indicator(lo, hi))

    def restrict_complement(self, lo: Union[float, Interval], hi: Optional[float] = None) -> "StepFunction":
        if isinstance(lo, Interval):
            lo, hi = lo.lo, lo.hi
        return self - self.restrict(lo, hi)

    def refined_grid(self, cells: int) -> np.ndarray:
        """支撑上 cells 个均匀单元与原断点的并"""
        if self.is_zero:
            return np.empty(0)
        lo, hi = self.support
        return np.union1d(np.linspace(lo, hi, cells + 1), self._breakpoints)

    # ==================== 比较 ====================

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, StepFunction):
            return NotImplemented
        return (np.array_equal(self._breakpoints, other._breakpoints)
                and np.array_equal(self._values, other._values))

    def __hash__(self) -> int:
        return hash((self._breakpoints.tobytes(), self._values.tobytes()))

    def max_abs_difference(self, other: "StepFunction") -> float:
        diff = self - other
        return 0.0 if diff.is_zero else float(np.max(np.abs(diff.values)))

    def is_close(self, other: "StepFunction", atol: float = 0.0, rtol: float = 1e-12) -> bool:
        """在合并分划上逐单元比较"""
        scale = max(self.sup_norm, other.sup_norm)
        return self.max_abs_difference(other) <= atol + rtol * scale

    def __repr__(self) -> str:
        if self.is_zero:
            return "StepFunction(0)"
        lo, hi = self.support
        return f"StepFunction(cells={len(self)}, support=[{lo:.6g}, {hi:.6g}])"

    # ==================== 文本序列化 ====================

    def to_text(self) -> str:
        """两行文本: 'breakpoints: ...' 与 'values: ...'"""
        b = " ".join(repr(float(x)) for x in self._breakpoints)
        v = " ".join(repr(float(x)) for x in self._values)
        return f"breakpoints: {b}\nvalues: {v}\n"

    @classmethod
    def from_text(cls, text: str) -> "StepFunction":
        fields = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if ":" not in line:
                raise DomainError(f"无法解析的行: {line}")
            key, rest = line.split(":", 1)
            fields[key.strip()] = [float(tok) for tok in rest.replace(",", " ").split()]
        if "breakpoints" not in fields or "values" not in fields:
            raise DomainError("缺少 breakpoints 或 values 行")
        return cls(fields["breakpoints"], fields["values"])


def sum_functions(functions: Iterable[StepFunction]) -> StepFunction:
    """一次性在全部断点的并上求和，避免逐个合并的重复开销"""
    functions = [f for f in functions if not f.is_zero]
    if not functions:
        return StepFunction.zero()
    edges = np.unique(np.concatenate([f.breakpoints for f in functions]))
    mids = 0.5 * (edges[:-1] + edges[1:])
    total = np.zeros_like(mids)
    for f in functions:
        total += f(mids)
    return StepFunction(edges, total)
