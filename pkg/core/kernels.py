"""
Bessel 情形下的 θ 积分核
Poisson 核 P_t、共轭核 Q_t、Riesz 核 R(x, y)、Hankel 平移

所有核都利用齐次性化到 x = 1：
    R(x, y) = x^{-(2λ+1)} R(1, y/x)
分母写成 (1-ρ)² + τ² + 4ρ sin²(θ/2)，分子写成 (1-ρ) + 2ρ sin²(θ/2)，避免近对角处的相消
"""
import logging
import math
import threading
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Dict, Optional, Tuple, Union

import numpy as np
from scipy import optimize, special

from core.errors import CertificationError, DomainError, HypothesisViolation, QuadratureError
from core.measure_geometry import BesselParam, as_param, ball_measure
from core.quadrature import (
    QuadratureResult, QuadratureSpec, adaptive_gauss, composite_gauss_nodes,
    default_spec, graded_edges, uniform_edges
)
from core.step_functions import StepFunction

logger = logging.getLogger(__name__)

LamLike = Union[float, BesselParam]

# 每次 θ 积分的最大批量（行数）
_ROW_CHUNK = 2048

# 低于这个相对距离视为落在对角线上
_DIAGONAL_FLOOR = 1e-12

# 符号证书使用的网格点数
CERTIFICATE_POINTS = 512


def hankel_constant(lam: LamLike) -> float:
    """Γ(λ+1/2) / (Γ(λ)√π)，使 sin^{2λ-1} 在 (0, π) 上的加权积分为 1"""
    l = as_param(lam).lam
    return math.exp(special.gammaln(l + 0.5) - special.gammaln(l) - 0.5 * math.log(math.pi))


def sin_power_integral(lam: LamLike) -> float:
    """∫₀^π sin^{2λ-1}θ dθ = √π Γ(λ) / Γ(λ+1/2)"""
    return 1.0 / hankel_constant(lam)


# ==================== θ 积分引擎 ====================

def _sin_weighted(
    core: Callable[[np.ndarray], np.ndarray],
    lam: float,
    spec: QuadratureSpec,
    scale: float
) -> QuadratureResult:
    """
    ∫₀^π core(θ) sin^{2λ-1}θ dθ，core 返回 (B, N)

    λ < 1/2 时端点 0 与 π 处为可积奇点，两侧分别代换 θ = u^k（及 π - u^k），
    k = 1/(2λ)，权重变为 k·(sinθ/θ)^{2λ-1}，有界。
    scale 为被积函数在 θ = 0 附近的峰宽，初始面板向 0 几何加密。
    """
    expo = 2.0 * lam - 1.0
    if lam >= 0.5:
        def integrand(theta):
            return core(theta) * np.sin(theta)[None, :] ** expo

        return adaptive_gauss(integrand, graded_edges(0.0, math.pi, scale, "left", spec.initial_panels), spec)

    k = 1.0 / (2.0 * lam)
    u_max = (math.pi / 2.0) ** (1.0 / k)

    def weight(theta):
        return k * (np.sin(theta) / theta) ** expo

    def near_zero(u):
        theta = u ** k
        return core(theta) * weight(theta)[None, :]

    def near_pi(u):
        theta = u ** k
        return core(math.pi - theta) * weight(theta)[None, :]

    left = adaptive_gauss(near_zero, graded_edges(0.0, u_max, scale ** (1.0 / k), "left", spec.initial_panels), spec)
    right = adaptive_gauss(near_pi, uniform_edges(0.0, u_max, spec.initial_panels), spec)
    return QuadratureResult(
        left.value + right.value,
        left.error + right.error,
        left.panels + right.panels,
        left.converged and right.converged,
    )


def _weinstein(
    rho: np.ndarray,
    tau: np.ndarray,
    lam: float,
    spec: QuadratureSpec,
    kind: str,
    gap: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, bool]:
    """
    x = 1 处的核值批量计算，gap = 1 - ρ 由调用方精确给出

    kind: "poisson" → (2λτ/π) ∫ sin^{2λ-1}/D^{λ+1}
          "conjugate" → -(2λ/π) ∫ ((1-ρ) + 2ρ sin²(θ/2)) sin^{2λ-1}/D^{λ+1}
    """
    gap2 = gap ** 2 + tau ** 2
    power = lam + 1.0

    def core(theta):
        s2 = np.sin(0.5 * theta)[None, :] ** 2
        denom = gap2[:, None] + 4.0 * rho[:, None] * s2
        if kind == "poisson":
            return denom ** (-power)
        return (gap[:, None] + 2.0 * rho[:, None] * s2) * denom ** (-power)

    width = np.sqrt(gap2) / np.sqrt(np.maximum(rho, 1e-300))
    scale = float(np.clip(np.min(width), 1e-15, math.pi))
    result = _sin_weighted(core, lam, spec, scale)

    if kind == "poisson":
        factor = 2.0 * lam * tau / math.pi
    else:
        factor = np.full_like(rho, -2.0 * lam / math.pi)
    return result.value * factor, result.error * np.abs(factor), result.converged


def _grouped_weinstein(
    rho: np.ndarray,
    tau: np.ndarray,
    lam: float,
    spec: QuadratureSpec,
    kind: str,
    strict: bool = True,
    gap: Optional[np.ndarray] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """按峰宽的二进量级分组，同组共享面板"""
    rho = np.asarray(rho, dtype=float).ravel()
    gap = (1.0 - rho) if gap is None else np.asarray(gap, dtype=float).ravel()
    tau = np.broadcast_to(np.asarray(tau, dtype=float), rho.shape).ravel()
    values = np.empty_like(rho)
    errors = np.empty_like(rho)
    if rho.size == 0:
        return values, errors

    width = np.sqrt(gap ** 2 + tau ** 2) / np.sqrt(np.maximum(rho, 1e-300))
    bins = np.where(width < 0.25, np.floor(np.log2(np.maximum(width, 1e-300))), 0.0)

    for b in np.unique(bins):
        idx = np.flatnonzero(bins == b)
        for start in range(0, len(idx), _ROW_CHUNK):
            chunk = idx[start:start + _ROW_CHUNK]
            v, e, converged = _weinstein(rho[chunk], tau[chunk], lam, spec, kind, gap[chunk])
            if not converged:
                achieved = float(np.max(e))
                if strict:
                    raise QuadratureError(
                        f"θ 积分超出最大细分次数 (kind={kind}, ρ∈[{rho[chunk].min():.6g}, {rho[chunk].max():.6g}])",
                        achieved,
                    )
                logger.warning(f"[Kernels] θ 积分未收敛，误差估计 {achieved:.3e}")
            values[chunk] = v
            errors[chunk] = e
    return values, errors


# ==================== 核缓存 ====================

class KernelCache:
    """
    R(1, ρ) 的缓存，键为 (λ, 求积参数, ρ)

    线程安全；条目数到达上限后不再插入
    """

    def __init__(self, max_entries: int = 1 << 18):
        self.max_entries = max_entries
        self._data: Dict[Tuple, Tuple[float, float]] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    @staticmethod
    def prefix(lam: float, spec: QuadratureSpec) -> Tuple:
        return (lam, spec.rel_tol, spec.nodes_per_panel, spec.max_subdivisions, spec.initial_panels)

    def lookup(self, prefix: Tuple, rho: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        values = np.empty_like(rho)
        errors = np.empty_like(rho)
        missing = np.zeros(rho.shape, dtype=bool)
        with self._lock:
            for i, r in enumerate(rho.tolist()):
                hit = self._data.get(prefix + (r,))
                if hit is None:
                    missing[i] = True
                else:
                    values[i], errors[i] = hit
            self.misses += int(missing.sum())
            self.hits += int(len(rho) - missing.sum())
        return values, errors, missing

    def store(self, prefix: Tuple, rho: np.ndarray, values: np.ndarray, errors: np.ndarray):
        with self._lock:
            for r, v, e in zip(rho.tolist(), values.tolist(), errors.tolist()):
                if len(self._data) >= self.max_entries:
                    break
                self._data[prefix + (r,)] = (v, e)

    def clear(self):
        with self._lock:
            self._data.clear()
            self.hits = 0
            self.misses = 0

    def __len__(self) -> int:
        return len(self._data)

    def stats(self) -> Dict[str, int]:
        return {"entries": len(self._data), "hits": self.hits, "misses": self.misses}


kernel_cache = KernelCache()


def riesz_kernel_normalized(
    rho: np.ndarray,
    lam: LamLike,
    spec: Optional[QuadratureSpec] = None,
    use_cache: Optional[bool] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """R(1, ρ) 及其误差估计，ρ ≥ 0 且 ρ ≠ 1"""
    spec = spec or default_spec()
    l = as_param(lam).lam
    rho = np.asarray(rho, dtype=float).ravel()
    use_cache = spec.kernel_cache if use_cache is None else use_cache
    if not use_cache:
        return _grouped_weinstein(rho, 0.0, l, spec, "conjugate")

    prefix = KernelCache.prefix(l, spec)
    values, errors, missing = kernel_cache.lookup(prefix, rho)
    if np.any(missing):
        todo = np.unique(rho[missing])
        v, e = _grouped_weinstein(todo, 0.0, l, spec, "conjugate")
        kernel_cache.store(prefix, todo, v, e)
        pos = np.searchsorted(todo, rho[missing])
        values[missing] = v[pos]
        errors[missing] = e[pos]
    return values, errors


# ==================== 公开核函数 ====================

def _check_pair(x: float, y: float):
    if not (x > 0 and y > 0):
        raise DomainError(f"x, y 必须为正: x={x}, y={y}")
    if x == y:
        raise DomainError(f"Riesz 核在对角线 x = y = {x} 上无定义")
    if abs(x - y) < _DIAGONAL_FLOOR * max(x, y):
        raise QuadratureError(
            f"|x-y|/x = {abs(x - y) / x:.3e} 低于 {_DIAGONAL_FLOOR:g}，近对角求积不可靠", None
        )


def riesz_kernel_with_error(x: float, y: float, lam: LamLike, spec: Optional[QuadratureSpec] = None) -> Tuple[float, float]:
    _check_pair(x, y)
    l = as_param(lam)
    v, e = riesz_kernel_normalized(np.array([y / x]), l, spec)
    scale = x ** (-l.dim)
    return float(v[0] * scale), float(e[0] * scale)


def riesz_kernel(x: float, y: float, lam: LamLike, spec: Optional[QuadratureSpec] = None) -> float:
    """
    R(x, y) = -(2λ/π) ∫₀^π (x - y cosθ) sin^{2λ-1}θ / (x² + y² - 2xy cosθ)^{λ+1} dθ
    """
    return riesz_kernel_with_error(x, y, lam, spec)[0]


def riesz_kernel_grid(
    x: np.ndarray,
    y: np.ndarray,
    lam: LamLike,
    spec: Optional[QuadratureSpec] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """扫描用的批量版本，走缓存；x, y 可广播"""
    l = as_param(lam)
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    if np.any(x <= 0) or np.any(y <= 0) or np.any(x == y):
        raise DomainError("riesz_kernel_grid 需要 x, y > 0 且 x ≠ y")
    v, e = riesz_kernel_normalized((y / x).ravel(), l, spec)
    scale = x.ravel() ** (-l.dim)
    return (v * scale).reshape(x.shape), (e * scale).reshape(x.shape)


def kernel_values(
    x: np.ndarray,
    y: np.ndarray,
    lam: LamLike,
    spec: Optional[QuadratureSpec] = None,
    diff: Optional[np.ndarray] = None
) -> np.ndarray:
    """
    算子求积内部使用的 R(x, y)，不走缓存

    x, y 可广播；调用方保证 x ≠ y。
    diff = y - x 已知时直接传入，近对角处 1 - ρ 不经过 y/x 的舍入
    """
    l = as_param(lam)
    spec = spec or default_spec()
    if diff is None:
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        gap = None
    else:
        x, y, diff = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (x, y, diff)))
        gap = (-diff / x).ravel()
    v, _ = _grouped_weinstein((y / x).ravel(), 0.0, l.lam, spec, "conjugate", gap=gap)
    return (v * x.ravel() ** (-l.dim)).reshape(x.shape)


def poisson_kernel_values(
    t: np.ndarray,
    x: np.ndarray,
    y: np.ndarray,
    lam: LamLike,
    spec: Optional[QuadratureSpec] = None
) -> Tuple[np.ndarray, np.ndarray]:
    l = as_param(lam)
    spec = spec or default_spec()
    t, x, y = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (t, x, y)))
    v, e = _grouped_weinstein((y / x).ravel(), (t / x).ravel(), l.lam, spec, "poisson")
    scale = x.ravel() ** (-l.dim)
    return (v * scale).reshape(x.shape), (e * scale).reshape(x.shape)


def poisson_kernel(t: float, x: float, y: float, lam: LamLike, spec: Optional[QuadratureSpec] = None) -> float:
    """
    P_t(x, y) = (2λt/π) ∫₀^π sin^{2λ-1}θ / (x² + y² + t² - 2xy cosθ)^{λ+1} dθ
    """
    if not (t > 0 and x > 0 and y > 0):
        raise DomainError(f"t, x, y 必须为正: t={t}, x={x}, y={y}")
    v, _ = poisson_kernel_values(np.array([t]), np.array([x]), np.array([y]), lam, spec)
    return float(v[0])


def conjugate_kernel(t: float, x: float, y: float, lam: LamLike, spec: Optional[QuadratureSpec] = None) -> float:
    """
    Q_t(x, y) = -(2λ/π) ∫₀^π (x - y cosθ) sin^{2λ-1}θ / (x² + y² + t² - 2xy cosθ)^{λ+1} dθ

    t = 0 时即 Riesz 核
    """
    if not (t >= 0 and x > 0 and y > 0):
        raise DomainError(f"需要 t ≥ 0, x, y > 0: t={t}, x={x}, y={y}")
    if t == 0:
        return riesz_kernel(x, y, lam, spec)
    l = as_param(lam)
    spec = spec or default_spec()
    v, _ = _grouped_weinstein(np.array([y / x]), np.array([t / x]), l.lam, spec, "conjugate")
    return float(v[0] * x ** (-l.dim))


def poisson_mass(t: float, x: float, lam: LamLike, spec: Optional[QuadratureSpec] = None, panels: int = 60) -> float:
    """
    ∫₀^∞ P_t(x, y) y^{2λ} dy

    在 [0, Y] 上用几何复合 Gauss 求积，Y = 10³(x+t)，
    尾部用 P_t(x, y) ≈ (2λt/π)·c₀·y^{-(2λ+2)} 补上，c₀ = ∫ sin^{2λ-1}
    """
    l = as_param(lam)
    spec = spec or default_spec()
    s = x + t
    cutoff = 1e3 * s
    edges = np.concatenate(([0.0], np.geomspace(1e-3 * s, cutoff, panels)))
    nodes, weights = composite_gauss_nodes(edges, spec.nodes_per_panel)
    values, _ = poisson_kernel_values(t, x, nodes, l, spec)
    body = float(np.sum(weights * values * nodes ** (2.0 * l.lam)))
    tail = 2.0 * l.lam * t * sin_power_integral(l) / (math.pi * cutoff)
    return body + tail


# ==================== 尺寸与光滑性比值 ====================

def size_ratio(x: np.ndarray, y: np.ndarray, lam: LamLike, spec: Optional[QuadratureSpec] = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    |R(x, y)|·m_λ(I(x, |x-y|))，返回 (R 值, 比值, 误差估计)
    """
    values, errors = riesz_kernel_grid(x, y, lam, spec)
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    m = ball_measure(x, np.abs(x - y), lam)
    return values, np.abs(values) * m, errors


def smoothness_ratio(y: float, x0: float, x: float, lam: LamLike, spec: Optional[QuadratureSpec] = None) -> float:
    """
    |R(y, x₀) - R(y, x)| / [(|x₀-x| / |x₀-y|) / m_λ(I(x₀, |x₀-y|))]

    要求 |x₀ - x| < |x₀ - y| / 2
    """
    if not abs(x0 - x) < abs(x0 - y) / 2.0:
        raise HypothesisViolation(f"需要 |x0-x| < |x0-y|/2: x0={x0}, x={x}, y={y}")
    if x == x0:
        return 0.0
    diff = abs(riesz_kernel(y, x0, lam, spec) - riesz_kernel(y, x, lam, spec))
    bracket = (abs(x0 - x) / abs(x0 - y)) / float(ball_measure(x0, abs(x0 - y), lam))
    return diff / bracket


@lru_cache(maxsize=64)
def _cached_size_constant(lam: float, spec: QuadratureSpec, points: int) -> float:
    near = 1.0 - np.logspace(-8.0, 0.0, points)[:-1]
    far = 1.0 + np.logspace(-8.0, 3.0, points)
    rho = np.concatenate((near, far))
    values, _ = riesz_kernel_normalized(rho, lam, spec)
    m = ball_measure(1.0, np.abs(1.0 - rho), lam)
    return float(np.max(np.abs(values) * m))


def size_constant(lam: LamLike, spec: Optional[QuadratureSpec] = None, points: int = CERTIFICATE_POINTS) -> float:
    """
    sup |R(x, y)|·m_λ(I(x, |x-y|)) 的网格估计

    由齐次性只依赖 ρ = y/x，取 x = 1，在 ρ = 1 两侧与 ρ ∈ (1, 1001] 上对数加密
    """
    return _cached_size_constant(as_param(lam).lam, spec or default_spec(), int(points))


# ==================== 区间常数 ====================

@dataclass(frozen=True)
class KernelRegimeConstants:
    """
    R(1, y) 的符号区间常数（由齐次性推广到任意 x）

    y < K1·x 时 R(x, y) ≤ -C_K1 / x^{2λ+1}
    0 < y/x - 1 < K2 时 R(x, y) ≥ C_K2 / (x^λ y^λ (y - x))
    """
    lam: float
    K1: float
    K2: float
    C_K1: float
    C_K2: float
    grid_points: int = CERTIFICATE_POINTS

    def __post_init__(self):
        if not 0.0 < self.K1 < 1.0:
            raise CertificationError(f"K1 不在 (0, 1) 内: {self.K1}")
        if not 0.0 < self.K2 < 0.5:
            raise CertificationError(f"K2 不在 (0, 1/2) 内: {self.K2}")


def _first_sign_change(
    func: Callable[[np.ndarray], np.ndarray],
    grid: np.ndarray,
    failing: Callable[[np.ndarray], np.ndarray]
) -> Optional[float]:
    """网格上第一个不满足条件的点，与前一点之间用二分求根"""
    values = func(grid)
    bad = np.flatnonzero(failing(values))
    if len(bad) == 0:
        return None
    i = bad[0]
    if i == 0:
        return float(grid[0])
    scalar = lambda y: float(func(np.array([y]))[0])
    return float(optimize.bisect(scalar, grid[i - 1], grid[i], xtol=1e-12))


def _regime_constants(lam: float, spec: QuadratureSpec) -> KernelRegimeConstants:
    n = CERTIFICATE_POINTS

    def r1(y):
        return riesz_kernel_normalized(y, lam, spec)[0]

    def phi(y):
        return r1(y) * y ** lam * (y - 1.0)

    # K1：R(1, y) < 0 的区间
    scan = np.arange(1, 2 * n) / (2.0 * n)
    root = _first_sign_change(r1, scan, lambda v: v >= 0.0)
    k1 = 0.9 * (root if root is not None else 1.0)
    cert_y = k1 * np.arange(1, n + 1) / n
    cert = r1(cert_y)
    if np.any(cert >= 0.0):
        raise CertificationError(f"lambda={lam}: K1={k1:.6g} 的负号证书失败")
    c_k1 = float(np.min(np.abs(cert)))

    # K2：R(1, y)·y^λ·(y-1) > 0 的区间
    scan = 1.0 + 0.5 * np.arange(1, n + 1) / n
    root = _first_sign_change(phi, scan, lambda v: v <= 0.0)
    limit = (root - 1.0) if root is not None else 0.5
    k2 = min(0.9 * limit, 0.45)
    cert_y = 1.0 + k2 * np.arange(1, n + 1) / n
    cert = phi(cert_y)
    if not k2 > 0 or np.any(cert <= 0.0):
        raise CertificationError(f"lambda={lam}: K2={k2:.6g} 的正号证书失败")
    c_k2 = float(np.min(cert))

    logger.info(f"[Kernels] lambda={lam}: K1={k1:.4f} C_K1={c_k1:.4e} K2={k2:.4f} C_K2={c_k2:.4e}")
    return KernelRegimeConstants(lam=lam, K1=k1, K2=k2, C_K1=c_k1, C_K2=c_k2)


@lru_cache(maxsize=64)
def _cached_regime_constants(lam: float, spec: QuadratureSpec) -> KernelRegimeConstants:
    return _regime_constants(lam, spec)


def estimate_regime_constants(lam: LamLike, spec: Optional[QuadratureSpec] = None) -> KernelRegimeConstants:
    """
    固定 x = 1，在 512 点网格上确定 K1、K2 并给出证书常数

    结果按 (λ, spec) 缓存
    """
    return _cached_regime_constants(as_param(lam).lam, spec or default_spec())


# ==================== Hankel 平移 ====================

def _sin_measure_cdf(u: np.ndarray, lam: float) -> np.ndarray:
    """
    G(θ) = c_λ ∫₀^θ sin^{2λ-1}，G(π) = 1

    以 u = sin²(θ/2) 为自变量时 G 恰为正则化不完全 Beta 函数 I_u(λ, λ)
    """
    return special.betainc(lam, lam, u)


def hankel_translate_values(g: StepFunction, x: float, y: np.ndarray, lam: LamLike) -> np.ndarray:
    """
    τ_x g(y) = c_λ ∫₀^π g(√(x² + y² - 2xy cosθ)) sin^{2λ-1}θ dθ

    g 为阶梯函数时 θ 积分在每个取值段上精确：段端点由 √(...) = 断点反解得到
    """
    l = as_param(lam).lam
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if g.is_zero:
        return np.zeros_like(y)
    b = g.breakpoints[None, :]
    yy = y[:, None]
    gap2 = (x - yy) ** 2
    # x² + y² - 2xy cosθ = b² 的解，以 u = sin²(θ/2) 表示
    u = np.clip((b ** 2 - gap2) / (4.0 * x * yy), 0.0, 1.0)
    cdf = _sin_measure_cdf(u, l)
    return np.diff(cdf, axis=1) @ g.values


def hankel_translate(g: StepFunction, x: float, y: float, lam: LamLike, spec: Optional[QuadratureSpec] = None) -> float:
    if not (x > 0 and y > 0):
        raise DomainError(f"x, y 必须为正: x={x}, y={y}")
    return float(hankel_translate_values(g, x, np.array([y]), lam)[0])


def hankel_sharp(f: StepFunction, g: StepFunction, x: float, lam: LamLike, spec: Optional[QuadratureSpec] = None) -> float:
    """
    f ♯_λ g(x) = ∫₀^∞ f(y) τ_x g(y) dm_λ(y)

    τ_x g 在 y = |x ± b|（b 为 g 的断点）处不光滑，这些点并入初始面板
    """
    if not x > 0:
        raise DomainError(f"x 必须为正: {x}")
    if f.is_zero or g.is_zero:
        return 0.0
    l = as_param(lam)
    spec = spec or default_spec()
    lo, hi = f.support
    kinks = np.concatenate((x + g.breakpoints, np.abs(x - g.breakpoints)))
    edges = np.union1d(f.breakpoints, kinks[(kinks > lo) & (kinks < hi)])

    def integrand(y):
        return f(y) * hankel_translate_values(g, x, y, l) * y ** (2.0 * l.lam)

    result = adaptive_gauss(integrand, edges, spec)
    return float(result.value[0])
