"""
测度 m_λ 与区间 I(x, r) 的精确计算
dm_λ(x) = x^{2λ} dx，所有测度都使用精确原函数
"""
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Tuple, Union

import numpy as np

from core.errors import DomainError

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class BesselParam:
    """Bessel 算子 Δ_λ 的参数 λ > 0"""
    lam: float

    def __post_init__(self):
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise DomainError(f"lambda 必须为正有限数，当前: {self.lam}")

    @property
    def dim(self) -> float:
        """齐次维数 2λ+1"""
        return 2.0 * self.lam + 1.0


def as_param(lam: Union[float, BesselParam]) -> BesselParam:
    if isinstance(lam, BesselParam):
        return lam
    return BesselParam(float(lam))


def antiderivative_diff(lo: ArrayLike, hi: ArrayLike, lam: Union[float, BesselParam]) -> ArrayLike:
    """
    ∫_lo^hi x^{2λ} dx = (hi^{d} - lo^{d}) / d，d = 2λ+1

    lo 与 hi 接近时用 expm1 形式避免相消
    """
    d = as_param(lam).dim
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(hi > 0, lo / np.where(hi > 0, hi, 1.0), 0.0)
        close = -np.expm1(d * np.log(np.where(ratio > 0, ratio, 1.0)))
        frac = np.where(ratio > 0, close, 1.0)
    result = np.power(hi, d) * frac / d
    if result.ndim == 0:
        return float(result)
    return result


@dataclass(frozen=True)
class Interval:
    """
    球 I(x, r) = (x - r, x + r) ∩ ℝ₊

    lo 在 0 处截断
    """
    center: float
    radius: float

    def __post_init__(self):
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise DomainError(f"半径必须为正，当前: {self.radius}")
        if not (self.center >= 0 and math.isfinite(self.center)):
            raise DomainError(f"中心必须非负，当前: {self.center}")

    @property
    def lo(self) -> float:
        return max(self.center - self.radius, 0.0)

    @property
    def hi(self) -> float:
        return self.center + self.radius

    @property
    def length(self) -> float:
        return self.hi - self.lo

    @classmethod
    def from_endpoints(cls, lo: float, hi: float) -> "Interval":
        """由端点 (lo, hi) 构造，lo ≥ 0"""
        if lo < 0 or not hi > lo:
            raise DomainError(f"非法端点: ({lo}, {hi})")
        return cls((lo + hi) / 2.0, (hi - lo) / 2.0)

    def normalized(self) -> "Interval":
        """
        r > x 时 I(x, r) = I((x+r)/2, (x+r)/2)，返回满足 r ≤ x 的等价表示
        """
        if self.radius > self.center:
            half = (self.center + self.radius) / 2.0
            return Interval(half, half)
        return self

    def dilate(self, factor: float) -> "Interval":
        return Interval(self.center, self.radius * factor)

    def contains(self, x: ArrayLike) -> ArrayLike:
        return (np.asarray(x) > self.lo) & (np.asarray(x) < self.hi)

    def measure(self, lam: Union[float, BesselParam]) -> float:
        return measure(self, lam)

    def __str__(self) -> str:
        return f"I({self.center:.6g}, {self.radius:.6g})"


def measure(interval: Interval, lam: Union[float, BesselParam]) -> float:
    """m_λ(I)，精确闭式"""
    return antiderivative_diff(interval.lo, interval.hi, lam)


def ball_measure(x: ArrayLike, r: ArrayLike, lam: Union[float, BesselParam]) -> ArrayLike:
    """
    向量化的 m_λ(I(x, r))

    r < x/2 时写成 x^d (1-t)^d expm1(2d·atanh t) / d，t = r/x，r ≪ x 时不丢精度
    """
    d = as_param(lam).dim
    x = np.asarray(x, dtype=float)
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        small = r < 0.5 * x
        t = np.where(small, r / np.where(x > 0, x, 1.0), 0.0)
        inner = np.power(x, d) * np.power(1.0 - t, d) * np.expm1(2.0 * d * np.arctanh(t)) / d
    result = np.where(small, inner, antiderivative_diff(np.maximum(x - r, 0.0), x + r, lam))
    if result.ndim == 0:
        return float(result)
    return result


def doubling_proxy(x: ArrayLike, r: ArrayLike, lam: Union[float, BesselParam]) -> ArrayLike:
    """x^{2λ} r + r^{2λ+1}"""
    param = as_param(lam)
    x = np.asarray(x, dtype=float)
    r = np.asarray(r, dtype=float)
    result = np.power(x, 2.0 * param.lam) * r + np.power(r, param.dim)
    return float(result) if result.ndim == 0 else result


def doubling_comparability(x: float, r: float, lam: Union[float, BesselParam]) -> Tuple[float, float]:
    """
    返回 m_λ(I(x,r)) / (x^{2λ}r + r^{2λ+1}) 及其倒数
    """
    if not (x > 0 and r > 0):
        raise DomainError(f"x, r 必须为正: x={x}, r={r}")
    ratio = ball_measure(x, r, lam) / doubling_proxy(x, r, lam)
    ratio = float(ratio)
    return ratio, 1.0 / ratio


def doubling_ratio(x: ArrayLike, r: ArrayLike, lam: Union[float, BesselParam]) -> ArrayLike:
    """m_λ(I(x, 2r)) / m_λ(I(x, r))"""
    x = np.asarray(x, dtype=float)
    r = np.asarray(r, dtype=float)
    return ball_measure(x, 2.0 * r, lam) / ball_measure(x, r, lam)


def log_grid(lo: float, hi: float, n: int) -> np.ndarray:
    return np.logspace(math.log10(lo), math.log10(hi), n)


def scan_doubling_constant(
    lam: Union[float, BesselParam],
    xs: Iterable[float] = None,
    rs: Iterable[float] = None
) -> float:
    """
    在网格上求最小的 C 使两个比值都落在 [1/C, C] 内

    默认网格为 [1e-3, 1e3]² 上的 64×64 对数网格
    """
    xs = log_grid(1e-3, 1e3, 64) if xs is None else np.asarray(list(xs), dtype=float)
    rs = log_grid(1e-3, 1e3, 64) if rs is None else np.asarray(list(rs), dtype=float)
    X, Rr = np.meshgrid(xs, rs, indexing="ij")
    ratio = ball_measure(X, Rr, lam) / doubling_proxy(X, Rr, lam)
    return float(max(np.max(ratio), np.max(1.0 / ratio)))


@dataclass(frozen=True)
class PRange:
    """左开右闭区间 (lower, upper]"""
    lower: float
    upper: float = 1.0

    def contains(self, p: float) -> bool:
        return self.lower < p <= self.upper

    def __str__(self) -> str:
        lo = Fraction(self.lower).limit_denominator(1000)
        hi = Fraction(self.upper).limit_denominator(1000)
        return f"({lo}, {hi}]"


def p_range(lam: Union[float, BesselParam]) -> PRange:
    """H^p 原子刻画允许的 p 区间 ((2λ+1)/(2λ+2), 1]"""
    param = as_param(lam)
    return PRange((2.0 * param.lam + 1.0) / (2.0 * param.lam + 2.0), 1.0)


def commutator_p_range(lam: Union[float, BesselParam]) -> PRange:
    """p_range 与 (1/2, 1) 的交集；交换子估计只在该范围内运行"""
    base = p_range(lam)
    return PRange(max(base.lower, 0.5), min(base.upper, 1.0))


def smallest_interval(x: float, y: float) -> Interval:
    """包含 x, y 的最小区间 I((x+y)/2, |x-y|/2)"""
    if x == y:
        raise DomainError("x 与 y 相同，不存在非退化区间")
    return Interval((x + y) / 2.0, abs(x - y) / 2.0)


def pair_measure(x: ArrayLike, y: ArrayLike, lam: Union[float, BesselParam]) -> ArrayLike:
    """向量化的 m_λ(区间 [min(x,y), max(x,y)])"""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return antiderivative_diff(np.minimum(x, y), np.maximum(x, y), lam)
