"""
自适应 Gauss-Legendre 求积
按层向量化：每一层所有未收敛面板在一次 numpy 调用中求值，被积函数可以一次返回多行（批量）
"""
import logging
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy import special

from config.settings import QuadratureConfig, quadrature_config
from core.errors import DomainError, QuadratureError

logger = logging.getLogger(__name__)

# 单层活跃面板数上限，超过即视为不收敛
_MAX_ACTIVE_PANELS = 1 << 14

# 舍入噪声下限：面板误差小于 |f| 积分的这个倍数即接受
_NOISE_FACTOR = 64.0 * np.finfo(float).eps


@dataclass(frozen=True)
class QuadratureSpec:
    """求积参数"""
    rel_tol: float = 1e-10
    max_subdivisions: int = 60
    nodes_per_panel: int = 16
    initial_panels: int = 4
    pv_rel_tol: float = 1e-6
    kernel_cache: bool = True

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise DomainError(f"rel_tol 必须为正，当前: {self.rel_tol}")
        if self.max_subdivisions < 1:
            raise DomainError(f"max_subdivisions 至少为 1，当前: {self.max_subdivisions}")
        if self.nodes_per_panel < 2 or self.initial_panels < 1:
            raise DomainError("nodes_per_panel ≥ 2 且 initial_panels ≥ 1")

    @classmethod
    def from_config(cls, config: Optional[QuadratureConfig] = None) -> "QuadratureSpec":
        config = config or quadrature_config
        return cls(
            rel_tol=config.rel_tol,
            max_subdivisions=config.max_subdivisions,
            nodes_per_panel=config.nodes_per_panel,
            initial_panels=config.initial_panels,
            pv_rel_tol=config.pv_rel_tol,
            kernel_cache=config.kernel_cache,
        )

    def with_nodes(self, nodes_per_panel: int) -> "QuadratureSpec":
        return replace(self, nodes_per_panel=nodes_per_panel)

    def with_tolerance(self, rel_tol: float) -> "QuadratureSpec":
        return replace(self, rel_tol=rel_tol)


def default_spec() -> QuadratureSpec:
    return QuadratureSpec.from_config(quadrature_config)


@lru_cache(maxsize=32)
def gauss_legendre(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """[-1, 1] 上的 n 点 Gauss-Legendre 节点与权重"""
    nodes, weights = special.roots_legendre(n)
    nodes.flags.writeable = False
    weights.flags.writeable = False
    return nodes, weights


@dataclass
class QuadratureResult:
    """
    value / error 的形状为 (B,)，B 为被积函数返回的行数
    """
    value: np.ndarray
    error: np.ndarray
    panels: int
    converged: bool

    def scalar(self) -> Tuple[float, float]:
        return float(self.value[0]), float(self.error[0])


def _as_rows(values: np.ndarray, n_points: int) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        return values.reshape(1, n_points)
    return values.reshape(values.shape[0], n_points)


def _panel_sums(
    func: Callable[[np.ndarray], np.ndarray],
    lo: np.ndarray,
    hi: np.ndarray,
    n: int
) -> Tuple[np.ndarray, np.ndarray]:
    """所有面板的 Gauss 和，返回 (∫f, ∫|f|)，形状 (B, P)"""
    nodes, weights = gauss_legendre(n)
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    points = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
    values = _as_rows(func(points), points.size).reshape(-1, len(lo), n)
    signed = values @ weights * half
    absolute = np.abs(values) @ weights * half
    return signed, absolute


def adaptive_gauss(
    func: Callable[[np.ndarray], np.ndarray],
    edges: Sequence[float],
    spec: Optional[QuadratureSpec] = None,
    abs_tol: float = 0.0
) -> QuadratureResult:
    """
    以 edges 为初始面板的自适应二分 Gauss-Legendre 求积

    func 接收一维节点数组（长度 N），返回 (N,) 或 (B, N)。
    每个面板比较 n 点结果与两个半面板之和；各行的局部容差为
    rel_tol·|当前总和| 按面板长度分配，所有行都满足时面板才被接受。
    """
    spec = spec or default_spec()
    edges = np.asarray(edges, dtype=float)
    if edges.ndim != 1 or len(edges) < 2 or np.any(np.diff(edges) <= 0):
        raise DomainError("edges 必须是严格递增且至少两个点的数组")

    n = spec.nodes_per_panel
    span = edges[-1] - edges[0]
    lo, hi = edges[:-1].copy(), edges[1:].copy()
    coarse, _ = _panel_sums(func, lo, hi, n)

    accepted = np.zeros(coarse.shape[0])
    accepted_err = np.zeros(coarse.shape[0])
    panels = len(lo)

    for _ in range(spec.max_subdivisions):
        mid = 0.5 * (lo + hi)
        left, left_abs = _panel_sums(func, np.concatenate((lo, mid)), np.concatenate((mid, hi)), n)
        k = len(lo)
        right, right_abs = left[:, k:], left_abs[:, k:]
        left, left_abs = left[:, :k], left_abs[:, :k]
        fine = left + right
        err = np.abs(fine - coarse)

        total = accepted + fine.sum(axis=1)
        share = (hi - lo) / span
        tol = np.maximum(spec.rel_tol * np.abs(total), abs_tol)[:, None] * share[None, :]
        noise = _NOISE_FACTOR * (left_abs + right_abs)
        ok = np.all((err <= tol) | (err <= noise), axis=0)

        accepted += fine[:, ok].sum(axis=1)
        accepted_err += err[:, ok].sum(axis=1)
        panels += len(lo)

        bad = ~ok
        if not np.any(bad):
            return QuadratureResult(accepted, accepted_err, panels, True)

        pending = fine[:, bad].sum(axis=1)
        pending_err = err[:, bad].sum(axis=1)
        lo = np.concatenate((lo[bad], mid[bad]))
        hi = np.concatenate((mid[bad], hi[bad]))
        coarse = np.concatenate((left[:, bad], right[:, bad]), axis=1)
        if len(lo) > _MAX_ACTIVE_PANELS:
            break

    # 未收敛：剩余面板取细估计，误差取最后一层的差
    return QuadratureResult(accepted + pending, accepted_err + pending_err, panels, False)


def integrate(
    func: Callable[[np.ndarray], np.ndarray],
    edges: Sequence[float],
    spec: Optional[QuadratureSpec] = None,
    strict: bool = True,
    what: str = "integral"
) -> QuadratureResult:
    """adaptive_gauss 的包装；strict 时未收敛抛出 QuadratureError"""
    result = adaptive_gauss(func, edges, spec)
    if not result.converged:
        achieved = float(np.max(result.error))
        if strict:
            raise QuadratureError(f"{what} 超出最大细分次数，误差估计 {achieved:.3e}", achieved)
        logger.warning(f"[Quadrature] {what} 未收敛，误差估计 {achieved:.3e}")
    return result


def uniform_edges(a: float, b: float, panels: int) -> np.ndarray:
    return np.linspace(a, b, panels + 1)


def graded_edges(a: float, b: float, scale: float, toward: str = "left", min_panels: int = 1) -> np.ndarray:
    """
    向一端几何加密的初始面板：到加密端的距离为 scale, 2·scale, 4·scale, ...

    scale ≥ (b - a) 时退化为 min_panels 个均匀面板
    """
    length = b - a
    if not scale > 0 or scale >= length:
        return uniform_edges(a, b, min_panels)
    offsets = [0.0]
    d = scale
    while d < length:
        offsets.append(d)
        d *= 2.0
    offsets.append(length)
    offsets = np.asarray(offsets)
    if toward == "left":
        return a + offsets
    return (b - offsets)[::-1]


def composite_gauss_nodes(edges: Sequence[float], n: int) -> Tuple[np.ndarray, np.ndarray]:
    """固定的复合 Gauss 规则：返回所有面板的节点与权重（已乘半长）"""
    edges = np.asarray(edges, dtype=float)
    nodes, weights = gauss_legendre(n)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    points = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
    w = (half[:, None] * weights[None, :]).ravel()
    return points, w
