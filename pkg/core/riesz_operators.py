"""
R_{Δλ}、伴随算子、交换子 [b, R] 与分数次积分 I_α⁺ 作用在阶梯函数上

所有算子都按 s = |y - x| 把每个单元拆成“径向段”，同一次自适应求积里批量处理：
    ∫ f(y) K(x, y) w(y) y^{2λ} dy = Σ_段 v ∫_{s_lo}^{s_hi} K(x, x ± s) w(x ± s) (x ± s)^{2λ} ds
x 落在某个单元内部时，Riesz 变换取主值：对称挖去 (x-δ, x+δ)，δ 取三个值后做 Richardson 外推；
挖去的小区间用对数代换的近场规则补回
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from core.errors import DomainError, PrincipalValueError, QuadratureError
from core.kernels import kernel_values
from core.measure_geometry import BesselParam, as_param, ball_measure, pair_measure
from core.quadrature import (
    QuadratureSpec, adaptive_gauss, composite_gauss_nodes, default_spec, graded_edges, uniform_edges
)
from core.step_functions import StepFunction

logger = logging.getLogger(__name__)

LamLike = Union[float, BesselParam]
Kernel = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
Weight = Callable[[np.ndarray, np.ndarray], np.ndarray]

# 每次径向求积的最大行数
_ROW_CHUNK = 256

# 近场 |y - x| < _NEAR_ZONE·x 用对数代换的固定规则，避开 b(x) - b(y) 的相消噪声
_NEAR_ZONE = 1e-4

# |y - x| < _NEAR_FLOOR·x 的贡献忽略：交换子被积函数有界，主值两侧之和有界；核在相对间距 1e-12 以下不求值
_NEAR_FLOOR = 1e-11

_LOG_PANELS = 8

# 代换 u = s^order 后 s 的下限
_S_FLOOR = np.sqrt(np.finfo(float).tiny)

# 主值挖去半径：单元内到最近边界距离 δ_c 的 1/8, 1/16, 1/32
# 挖去的对称小区间 (x-δ, x+δ) 由近场规则补回，三个半径的外推差作为误差估计
PV_FRACTIONS = (8.0, 16.0, 32.0)


@dataclass(frozen=True)
class OperatorValue:
    """单点算子值与误差估计"""
    value: float
    error: float
    principal_value: bool = False

    def __float__(self) -> float:
        return self.value


# ==================== 径向段 ====================

@dataclass
class _Rows:
    owner: np.ndarray
    x: np.ndarray
    side: np.ndarray
    s_lo: np.ndarray
    s_hi: np.ndarray
    value: np.ndarray

    @classmethod
    def empty(cls) -> "_Rows":
        e = np.empty(0)
        return cls(np.empty(0, dtype=int), e, e, e, e, e)

    def __len__(self) -> int:
        return len(self.x)

    def take(self, idx) -> "_Rows":
        return _Rows(self.owner[idx], self.x[idx], self.side[idx], self.s_lo[idx], self.s_hi[idx], self.value[idx])

    @staticmethod
    def concat(parts: Sequence["_Rows"]) -> "_Rows":
        parts = [p for p in parts if len(p)]
        if not parts:
            return _Rows.empty()
        return _Rows(*(np.concatenate([getattr(p, name) for p in parts])
                       for name in ("owner", "x", "side", "s_lo", "s_hi", "value")))


def _cell_arrays(f: StepFunction) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    b = f.breakpoints
    return b[:-1], b[1:], f.values


def _build_rows(f: StepFunction, xs: np.ndarray, split_inside: bool) -> Tuple[_Rows, np.ndarray]:
    """
    把 f 的单元按到 xs 的距离拆成径向段

    split_inside=False 时，落在单元内部或断点上的点不生成径向段，
    以布尔数组返回（交给主值计算）
    """
    lo, hi, v = _cell_arrays(f)
    nonzero = v != 0.0
    lo, hi, v = lo[nonzero], hi[nonzero], v[nonzero]
    X = xs[:, None]
    left = hi[None, :] <= X
    right = lo[None, :] >= X
    inside = ~(left | right)
    at_break = np.isin(xs, f.breakpoints)
    singular = inside.any(axis=1) | at_break

    parts = []
    i, j = np.nonzero(left)
    parts.append(_Rows(i, xs[i], -np.ones(len(i)), xs[i] - hi[j], xs[i] - lo[j], v[j]))
    i, j = np.nonzero(right)
    parts.append(_Rows(i, xs[i], np.ones(len(i)), lo[j] - xs[i], hi[j] - xs[i], v[j]))
    if split_inside:
        i, j = np.nonzero(inside)
        zeros = np.zeros(len(i))
        parts.append(_Rows(i, xs[i], -np.ones(len(i)), zeros, xs[i] - lo[j], v[j]))
        parts.append(_Rows(i, xs[i], np.ones(len(i)), zeros, hi[j] - xs[i], v[j]))
        rows = _Rows.concat(parts)
        return rows, np.zeros(len(xs), dtype=bool)

    rows = _Rows.concat(parts)
    keep = ~singular[rows.owner] if len(rows) else np.zeros(0, dtype=bool)
    return rows.take(keep), singular


def _radial_integral(
    rows: _Rows,
    kernel: Kernel,
    weight: Optional[Weight],
    lam: float,
    spec: QuadratureSpec,
    order: float = 1.0
) -> Tuple[np.ndarray, np.ndarray]:
    """
    每行 ∫_{s_lo}^{s_hi} v·K(x, y)·w(x, y)·y^{2λ} ds，y = x + side·s

    order < 1 时代换 u = s^order（s = 0 处的 |s|^{order-1} 型奇点变为有界）；
    初始面板向 s_lo 一端几何加密
    """
    values = np.zeros(len(rows))
    errors = np.zeros(len(rows))
    if not len(rows):
        return values, errors
    two_lam = 2.0 * lam
    inv = 1.0 / order

    for start in range(0, len(rows), _ROW_CHUNK):
        r = rows.take(slice(start, start + _ROW_CHUNK))
        u_lo = r.s_lo ** order
        u_hi = r.s_hi ** order
        du = u_hi - u_lo
        positive = (u_lo > 0) & (du > 0)
        rel = np.min(u_lo[positive] / du[positive]) if np.any(positive) else 1.0
        edges = graded_edges(0.0, 1.0, max(float(rel), 1e-14), "left", spec.initial_panels)

        def integrand(t, r=r, u_lo=u_lo, du=du):
            u = u_lo[:, None] + du[:, None] * t[None, :]
            if order == 1.0:
                s, jac = u, du[:, None]
            else:
                # u 很小时 u^{1/order} 会下溢为 0
                s = np.maximum(u ** inv, _S_FLOOR)
                jac = du[:, None] * inv * u ** (inv - 1.0)
            xr = r.x[:, None]
            y = xr + r.side[:, None] * s
            diff = r.side[:, None] * s
            out = r.value[:, None] * kernel(xr, y, diff) * y ** two_lam * jac
            if weight is not None:
                out = out * weight(xr, y)
            return out

        result = adaptive_gauss(integrand, edges, spec)
        if not result.converged:
            raise QuadratureError("径向积分超出最大细分次数", float(np.max(result.error)))
        values[start:start + len(r)] = result.value
        errors[start:start + len(r)] = result.error
    return values, errors


def _log_radial_integral(
    rows: _Rows,
    kernel: Kernel,
    weight: Optional[Weight],
    lam: float,
    spec: QuadratureSpec,
    panels: int = _LOG_PANELS
) -> Tuple[np.ndarray, np.ndarray]:
    """
    近场的径向积分，要求 0 < s_lo < s_hi

    代换 s = s_lo·(s_hi/s_lo)^t 后被积函数带因子 s，在 t ∈ [0, 1] 上光滑；
    固定复合 Gauss，误差取 panels 与 panels/2 两次结果之差
    """
    values = np.zeros(len(rows))
    errors = np.zeros(len(rows))
    if not len(rows):
        return values, errors
    two_lam = 2.0 * lam

    def evaluate(r: _Rows, count: int) -> np.ndarray:
        t, w = composite_gauss_nodes(uniform_edges(0.0, 1.0, count), spec.nodes_per_panel)
        span = np.log(r.s_hi / r.s_lo)[:, None]
        s = r.s_lo[:, None] * np.exp(span * t[None, :])
        xr = r.x[:, None]
        diff = r.side[:, None] * s
        y = xr + diff
        out = r.value[:, None] * kernel(xr, y, diff) * y ** two_lam * s * span
        if weight is not None:
            out = out * weight(xr, y)
        return out @ w

    for start in range(0, len(rows), _ROW_CHUNK):
        r = rows.take(slice(start, start + _ROW_CHUNK))
        fine = evaluate(r, panels)
        coarse = evaluate(r, max(panels // 2, 1))
        values[start:start + len(r)] = fine
        errors[start:start + len(r)] = np.abs(fine - coarse)
    return values, errors


def _split_near(rows: _Rows) -> Tuple[_Rows, _Rows]:
    """按 s = _NEAR_ZONE·x 把径向段拆成 (近场, 远场)，近场下端截在 _NEAR_FLOOR·x"""
    near_edge = _NEAR_ZONE * rows.x
    near = rows.take(rows.s_lo < near_edge)
    near.s_lo = np.maximum(near.s_lo, _NEAR_FLOOR * near.x)
    near.s_hi = np.minimum(near.s_hi, _NEAR_ZONE * near.x)
    near = near.take(near.s_hi > near.s_lo)
    far = rows.take(rows.s_hi > near_edge)
    far.s_lo = np.maximum(far.s_lo, _NEAR_ZONE * far.x)
    return near, far


def _riesz_kernel(lam: float, spec: QuadratureSpec, transpose: bool) -> Kernel:
    if transpose:
        return lambda x, y, diff: kernel_values(y, x, lam, spec, diff=-diff)
    return lambda x, y, diff: kernel_values(x, y, lam, spec, diff=diff)


def _scalar_weight(weight: Optional[Callable[[np.ndarray], np.ndarray]]) -> Optional[Weight]:
    if weight is None:
        return None
    return lambda x, y: weight(y)


# ==================== 主值 ====================

def _principal_value(
    f: StepFunction,
    x: float,
    lam: float,
    spec: QuadratureSpec,
    transpose: bool,
    weight: Optional[Weight]
) -> OperatorValue:
    lo, hi, v = _cell_arrays(f)
    if x in f.breakpoints:
        raise PrincipalValueError(f"x={x} 恰好落在间断点上，主值发散")
    c = int(np.flatnonzero((lo < x) & (x < hi))[0])
    left_len, right_len = x - lo[c], hi[c] - x
    delta_cell = min(left_len, right_len)

    # 单元 c 以外的部分，以及 c 中对称区间外的余段
    others = f.restrict_complement(lo[c], hi[c])
    rest_rows, _ = _build_rows(others, np.array([x]), split_inside=True)
    if left_len > right_len:
        rest_rows = _Rows.concat([rest_rows, _Rows(np.array([0]), np.array([x]), np.array([-1.0]),
                                                   np.array([delta_cell]), np.array([left_len]), v[c:c + 1])])
    elif right_len > left_len:
        rest_rows = _Rows.concat([rest_rows, _Rows(np.array([0]), np.array([x]), np.array([1.0]),
                                                   np.array([delta_cell]), np.array([right_len]), v[c:c + 1])])

    # 对称段 [δ₃, δ₂], [δ₂, δ₁], [δ₁, δ_c] 与近场 [floor, δ_k]，两侧共享节点
    d1, d2, d3 = (delta_cell / k for k in PV_FRACTIONS)
    floor = _NEAR_FLOOR * x
    if not d3 > floor:
        raise PrincipalValueError(f"x={x} 距间断点过近（δ_c={delta_cell:.3e}），主值无法分离")
    bounds = np.array([[d3, d2], [d2, d1], [d1, delta_cell]])
    sym = _Rows(
        owner=np.zeros(6, dtype=int),
        x=np.full(6, x),
        side=np.array([1.0, -1.0] * 3),
        s_lo=np.repeat(bounds[:, 0], 2),
        s_hi=np.repeat(bounds[:, 1], 2),
        value=np.full(6, v[c]),
    )
    near = _Rows(
        owner=np.zeros(6, dtype=int),
        x=np.full(6, x),
        side=np.array([1.0, -1.0] * 3),
        s_lo=np.full(6, floor),
        s_hi=np.repeat([d3, d2, d1], 2),
        value=np.full(6, v[c]),
    )

    kernel = _riesz_kernel(lam, spec, transpose)
    all_rows = _Rows.concat([rest_rows, sym])
    values, errors = _radial_integral(all_rows, kernel, weight, lam, spec)
    near_values, near_errors = _log_radial_integral(near, kernel, weight, lam, spec)
    n_rest = len(rest_rows)
    rest = float(values[:n_rest].sum())
    pieces = values[n_rest:].reshape(3, 2).sum(axis=1)
    inner = near_values.reshape(3, 2).sum(axis=1)
    quad_error = float(errors.sum() + near_errors.sum())

    # T(δ) = 挖去 (x-δ, x+δ) 后的积分 + 近场补回
    outer1 = rest + pieces[2]
    outer2 = outer1 + pieces[1]
    outer3 = outer2 + pieces[0]
    t1, t2, t3 = outer1 + inner[2], outer2 + inner[1], outer3 + inner[0]
    e1 = 2.0 * t2 - t1
    e2 = 2.0 * t3 - t2
    extrapolation_error = abs(e1 - e2)
    error = extrapolation_error + quad_error

    scale = max(abs(e2), abs(rest), abs(pieces[2]))
    if error > spec.pv_rel_tol * scale and error > 0:
        raise PrincipalValueError(
            f"x={x} 处主值外推不收敛: 估计 {e2:.6e}, 误差 {error:.3e}", estimate=e2, error=error
        )
    return OperatorValue(value=float(e2), error=error, principal_value=True)


# ==================== Riesz 变换 ====================

def _singular_apply_many(
    f: StepFunction,
    xs: np.ndarray,
    lam: LamLike,
    spec: Optional[QuadratureSpec],
    transpose: bool,
    weight: Optional[Callable[[np.ndarray], np.ndarray]]
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    l = as_param(lam).lam
    spec = spec or default_spec()
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    if np.any(xs <= 0):
        raise DomainError("x 必须为正")
    values = np.zeros(len(xs))
    errors = np.zeros(len(xs))
    pv = np.zeros(len(xs), dtype=bool)
    if f.is_zero:
        return values, errors, pv

    w = _scalar_weight(weight)
    rows, singular = _build_rows(f, xs, split_inside=False)
    row_values, row_errors = _radial_integral(rows, _riesz_kernel(l, spec, transpose), w, l, spec)
    np.add.at(values, rows.owner, row_values)
    np.add.at(errors, rows.owner, row_errors)

    for i in np.flatnonzero(singular):
        result = _principal_value(f, float(xs[i]), l, spec, transpose, w)
        values[i], errors[i], pv[i] = result.value, result.error, True
    return values, errors, pv


def riesz_apply_many(
    f: StepFunction,
    xs: np.ndarray,
    lam: LamLike,
    spec: Optional[QuadratureSpec] = None,
    weight: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    transpose: bool = False
) -> Tuple[np.ndarray, np.ndarray]:
    """
    R(w·f)(x) 在多个点上的值与误差估计

    支撑外的点在一次批量求积中完成，支撑内的点逐个取主值
    """
    values, errors, _ = _singular_apply_many(f, xs, lam, spec, transpose, weight)
    return values, errors


def riesz_apply(
    f: StepFunction,
    x: float,
    lam: LamLike,
    spec: Optional[QuadratureSpec] = None,
    weight: Optional[Callable[[np.ndarray], np.ndarray]] = None
) -> OperatorValue:
    """R f(x) = ∫ f(y) R(x, y) dm_λ(y)，x 在支撑内时取主值"""
    values, errors, pv = _singular_apply_many(f, np.array([x]), lam, spec, False, weight)
    return OperatorValue(float(values[0]), float(errors[0]), bool(pv[0]))


def riesz_adjoint_apply(
    g: StepFunction,
    x: float,
    lam: LamLike,
    spec: Optional[QuadratureSpec] = None,
    weight: Optional[Callable[[np.ndarray], np.ndarray]] = None
) -> OperatorValue:
    """R̃ g(x) = ∫ g(y) R(y, x) dm_λ(y)"""
    values, errors, pv = _singular_apply_many(g, np.array([x]), lam, spec, True, weight)
    return OperatorValue(float(values[0]), float(errors[0]), bool(pv[0]))


# ==================== Lip_α 符号 ====================

def pairwise_lip_seminorm(
    points: np.ndarray,
    values: np.ndarray,
    alpha: float,
    lam: LamLike,
    chunk: int = 512
) -> float:
    """所有采样点对上 |b(x) - b(y)| / m_λ([min, max])^α 的最大值"""
    points = np.asarray(points, dtype=float)
    values = np.asarray(values, dtype=float)
    best = 0.0
    for start in range(0, len(points), chunk):
        p = points[start:start + chunk, None]
        v = values[start:start + chunk, None]
        distinct = p != points[None, :]
        den = np.where(distinct, pair_measure(p, points[None, :], lam), 1.0) ** alpha
        ratio = np.where(distinct, np.abs(v - values[None, :]) / den, 0.0)
        if ratio.size:
            best = max(best, float(ratio.max()))
    return best


def measure_coordinate(x: np.ndarray, lam: LamLike) -> np.ndarray:
    """u(x) = m_λ((0, x)) = x^{2λ+1} / (2λ+1)"""
    d = as_param(lam).dim
    return np.asarray(x, dtype=float) ** d / d


@dataclass(frozen=True, eq=False)
class LipschitzSymbol:
    """
    Lip_α 符号 b

    func 为向量化的精确函数（算子求积在节点处直接取值），
    sample 为左端点采样的阶梯函数，seminorm_estimate 为采样点对上的半范数下界，
    seminorm_bound 为构造保证的半范数上界（未知时为 None）
    """
    func: Callable[[np.ndarray], np.ndarray]
    alpha: float
    lam: float
    sample: StepFunction
    grid: np.ndarray = field(repr=False)
    seminorm_estimate: float
    name: str = "b"
    seminorm_bound: Optional[float] = None

    def __call__(self, x):
        return self.func(np.asarray(x, dtype=float))

    @classmethod
    def from_function(
        cls,
        func: Callable[[np.ndarray], np.ndarray],
        alpha: float,
        lam: LamLike,
        lo: float,
        hi: float,
        resolution: int,
        name: str = "b",
        seminorm_bound: Optional[float] = None
    ) -> "LipschitzSymbol":
        param = as_param(lam)
        if not 0.0 < alpha < 1.0 / param.dim:
            raise DomainError(f"alpha 必须在 (0, 1/(2λ+1)) = (0, {1.0 / param.dim:.6g}) 内，当前: {alpha}")
        if not 0 <= lo < hi:
            raise DomainError(f"非法采样区间: [{lo}, {hi}]")
        grid = np.linspace(lo, hi, resolution + 1)
        values = np.asarray(func(grid), dtype=float)
        sample = StepFunction(grid, values[:-1])
        seminorm = pairwise_lip_seminorm(grid, values, alpha, param)
        return cls(func=func, alpha=alpha, lam=param.lam, sample=sample, grid=grid,
                   seminorm_estimate=seminorm, name=name, seminorm_bound=seminorm_bound)


def lip_seminorm(b: Union[StepFunction, LipschitzSymbol], alpha: float, lam: LamLike) -> float:
    """
    Lip_α 半范数的采样下界

    StepFunction 按单元左端点取样；LipschitzSymbol 用其采样网格上的精确值
    """
    if isinstance(b, LipschitzSymbol):
        return pairwise_lip_seminorm(b.grid, b.func(b.grid), alpha, lam)
    if b.is_zero:
        return 0.0
    return pairwise_lip_seminorm(b.breakpoints[:-1], b.values, alpha, lam)


def canonical_symbol(lam: LamLike, alpha: float, lo: float, hi: float, resolution: int) -> LipschitzSymbol:
    """b(x) = m_λ((0, x))^α，|s^α - t^α| ≤ |s - t|^α 给出半范数 ≤ 1"""
    param = as_param(lam)
    func = lambda x: measure_coordinate(x, param) ** alpha
    return LipschitzSymbol.from_function(func, alpha, param, lo, hi, resolution, name="canonical", seminorm_bound=1.0)


def constant_symbol(value: float, lam: LamLike, alpha: float, lo: float, hi: float, resolution: int) -> LipschitzSymbol:
    func = lambda x: np.full(np.shape(x), float(value))
    return LipschitzSymbol.from_function(func, alpha, lam, lo, hi, resolution, name="constant", seminorm_bound=0.0)


def random_symbol(
    rng: np.random.Generator,
    lam: LamLike,
    alpha: float,
    lo: float,
    hi: float,
    resolution: int,
    terms: int = 4,
    name: str = "random"
) -> LipschitzSymbol:
    """
    b(x) = Σ c_k |u(x) - u_k|^α，u = m_λ((0, ·))

    Σ|c_k| = 1，因此真实半范数 ≤ 1
    """
    param = as_param(lam)
    u_lo, u_hi = measure_coordinate(lo, param), measure_coordinate(hi, param)
    anchors = rng.uniform(u_lo, u_hi, size=terms)
    coeffs = rng.normal(size=terms)
    coeffs = coeffs / np.sum(np.abs(coeffs))

    def func(x):
        u = measure_coordinate(x, param)
        return np.sum(coeffs[:, None] * np.abs(np.ravel(u)[None, :] - anchors[:, None]) ** alpha, axis=0).reshape(np.shape(u))

    return LipschitzSymbol.from_function(func, alpha, param, lo, hi, resolution, name=name, seminorm_bound=1.0)


# ==================== 交换子与分数次积分 ====================

def commutator_values(
    b: LipschitzSymbol,
    f: StepFunction,
    xs: np.ndarray,
    lam: LamLike,
    spec: Optional[QuadratureSpec] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """
    [b, R] f(x) = b(x) R f(x) - R(b f)(x)

    两项使用相同的挖去半径，合并后被积函数为 f(y)(b(x) - b(y)) R(x, y)，
    在 y = x 附近有界（b 在 x 处连续），δ → 0 的极限直接求出。
    |y - x| < _NEAR_ZONE·x 的近场走对数代换的固定规则
    """
    l = as_param(lam).lam
    spec = spec or default_spec()
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    values = np.zeros(len(xs))
    errors = np.zeros(len(xs))
    if f.is_zero:
        return values, errors
    rows, _ = _build_rows(f, xs, split_inside=True)
    near, far = _split_near(rows)

    def weight(x, y):
        return b.func(x) - b.func(y)

    kernel = _riesz_kernel(l, spec, False)
    for part, method in ((far, _radial_integral), (near, _log_radial_integral)):
        row_values, row_errors = method(part, kernel, weight, l, spec)
        np.add.at(values, part.owner, row_values)
        np.add.at(errors, part.owner, row_errors)
    return values, errors


def commutator_apply(
    b: LipschitzSymbol,
    f: StepFunction,
    x: float,
    lam: LamLike,
    spec: Optional[QuadratureSpec] = None
) -> OperatorValue:
    if not x > 0:
        raise DomainError(f"x 必须为正: {x}")
    if not f.is_zero:
        lo, hi = f.support
        if not (b.grid[0] <= min(lo, x) and max(hi, x) <= b.grid[-1]):
            raise DomainError(
                f"符号 {b.name} 的采样区间 [{b.grid[0]:.6g}, {b.grid[-1]:.6g}] 未覆盖 supp f 与 x={x}"
            )
    values, errors = commutator_values(b, f, np.array([x]), lam, spec)
    return OperatorValue(float(values[0]), float(errors[0]))


def fractional_integral_values(
    f: StepFunction,
    alpha: float,
    xs: np.ndarray,
    lam: LamLike,
    spec: Optional[QuadratureSpec] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """
    I_α⁺ f(x) = ∫ |f(y)| dm_λ(y) / m_λ(I(x, |x-y|))^{1-α}

    y = x 处的 |x-y|^{α-1} 奇点用 u = s^α 代换消去
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha 必须在 (0, 1) 内，当前: {alpha}")
    param = as_param(lam)
    spec = spec or default_spec()
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    values = np.zeros(len(xs))
    errors = np.zeros(len(xs))
    if f.is_zero:
        return values, errors
    rows, _ = _build_rows(f.abs(), xs, split_inside=True)

    def kernel(x, y, diff):
        return ball_measure(x, np.abs(diff), param) ** (alpha - 1.0)

    row_values, row_errors = _radial_integral(rows, kernel, None, param.lam, spec, order=alpha)
    np.add.at(values, rows.owner, row_values)
    np.add.at(errors, rows.owner, row_errors)
    return values, errors


def fractional_integral(
    f: StepFunction,
    alpha: float,
    x: float,
    lam: LamLike,
    spec: Optional[QuadratureSpec] = None
) -> OperatorValue:
    if not x > 0:
        raise DomainError(f"x 必须为正: {x}")
    values, errors = fractional_integral_values(f, alpha, np.array([x]), lam, spec)
    return OperatorValue(float(values[0]), float(errors[0]))


# ==================== 范数与配对 ====================

def halfline_nodes(
    lo: float,
    hi: float,
    nodes: int,
    panels: int = 16,
    breakpoints: Optional[Sequence[float]] = None,
    geometric: bool = False
) -> Tuple[np.ndarray, np.ndarray]:
    """[lo, hi] 上的复合 Gauss 节点，断点并入面板边界"""
    if geometric and lo > 0:
        edges = np.geomspace(lo, hi, panels + 1)
    else:
        edges = np.linspace(lo, hi, panels + 1)
    if breakpoints is not None:
        bp = np.asarray(breakpoints, dtype=float)
        edges = np.union1d(edges, bp[(bp > lo) & (bp < hi)])
    return composite_gauss_nodes(edges, nodes)


def lq_norm_on_halfline(
    F: Callable[[np.ndarray], np.ndarray],
    q: float,
    lam: LamLike,
    lo: float,
    hi: float,
    spec: Optional[QuadratureSpec] = None,
    breakpoints: Optional[Sequence[float]] = None,
    panels: int = 16,
    nodes: Optional[int] = None
) -> float:
    """
    (∫_lo^hi |F|^q dm_λ)^{1/q}，固定复合 Gauss

    截断在 [lo, hi] 上，是全线范数的下界估计
    """
    spec = spec or default_spec()
    param = as_param(lam)
    points, weights = halfline_nodes(lo, hi, nodes or spec.nodes_per_panel, panels, breakpoints,
                                     geometric=hi / max(lo, 1e-300) > 100.0)
    values = np.abs(np.asarray(F(points), dtype=float))
    total = float(np.sum(weights * values ** q * points ** (2.0 * param.lam)))
    return total ** (1.0 / q)


def integrate_against(
    func: Callable[[np.ndarray], np.ndarray],
    f: StepFunction,
    lam: LamLike,
    spec: Optional[QuadratureSpec] = None
) -> float:
    """∫ func·f dm_λ，逐单元自适应求积"""
    if f.is_zero:
        return 0.0
    two_lam = 2.0 * as_param(lam).lam

    def integrand(y):
        return f(y) * func(y) * y ** two_lam

    return float(adaptive_gauss(integrand, f.breakpoints, spec or default_spec()).value[0])


def commutator_pairing(
    b: LipschitzSymbol,
    g: StepFunction,
    h: StepFunction,
    lam: LamLike,
    spec: Optional[QuadratureSpec] = None,
    panels_per_cell: int = 2
) -> float:
    """⟨g, [b, R] h⟩ = ∫ g(x) [b, R]h(x) dm_λ(x)，外层复合 Gauss"""
    if g.is_zero or h.is_zero:
        return 0.0
    spec = spec or default_spec()
    param = as_param(lam)
    edges = np.unique(np.concatenate([np.linspace(lo, hi, panels_per_cell + 1) for lo, hi, _ in g.cells()]))
    points, weights = composite_gauss_nodes(edges, spec.nodes_per_panel)
    inner, _ = commutator_values(b, h, points, param, spec)
    return float(np.sum(weights * g(points) * inner * points ** (2.0 * param.lam)))
