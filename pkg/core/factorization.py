"""
双线性形式 Π(g, h) = g·Rh - h·R̃g 与 H^p(dm_λ) 的逐层弱分解

单原子近似：对原子 a（支撑 I(x₀, r)），取 g = χ_{I(y₀,r)}，h = -a / R̃g(x₀)，
残差 a - Π(g, h) = W₁ + W₂ 是支撑在 I(x₀,r) ∪ I(y₀,r) 上的两峰函数，
再按两峰分解重新写成原子，进入下一层
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from core.atoms import (
    Atom, AtomicDecomposition, AtomTerm, TwoBumpFunction, decompose_two_bump, hp_norm_upper
)
from core.errors import ConfigError, DenominatorDegeneracy, DivergenceDetected, DomainError, HypothesisViolation
from core.kernels import KernelRegimeConstants, estimate_regime_constants
from core.measure_geometry import BesselParam, Interval, as_param, measure, p_range
from core.quadrature import QuadratureSpec, composite_gauss_nodes, default_spec
from core.riesz_operators import LipschitzSymbol, commutator_pairing, integrate_against, riesz_apply_many
from core.step_functions import StepFunction

logger = logging.getLogger(__name__)

LamLike = Union[float, BesselParam]

# |R̃g(x₀)| < DENOMINATOR_FLOOR / M 视为退化
DENOMINATOR_FLOOR = 1e-6

# M 的搜索上限 2^MAX_LOG2_M
MAX_LOG2_M = 60

# 连续多少层残差界不下降即判定发散
DIVERGENCE_PATIENCE = 2


class CaseTag(str, Enum):
    """y₀ 的两种取法"""
    NEAR = "a"   # x₀ ≤ 2Mr：y₀ = x₀ + 2MK₀r
    FAR = "b"    # x₀ > 2Mr：y₀ = x₀ - Mr/K₀


# ==================== 常数表 ====================

@dataclass(frozen=True)
class ConstantSchedule:
    """K₀、M、ε 以及指数 p, q, r（1/p = 1/q + 1/r）"""
    K0: float
    M: float
    epsilon: float
    p: float
    q: float
    r: float
    lam: float
    K1: float
    K2: float
    schedule_constant: float = 16.0

    @property
    def log_condition(self) -> float:
        """C·log₂M / M^{2p-1}，需小于 ε^p"""
        return self.schedule_constant * math.log2(self.M) / self.M ** (2.0 * self.p - 1.0)

    def validate(self) -> "ConstantSchedule":
        """不满足约束时抛出 ConfigError"""
        admissible = p_range(self.lam)
        if not admissible.contains(self.p):
            raise ConfigError(f"p={self.p} 不在 lambda={self.lam} 的允许区间 {admissible} 内")
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigError(f"epsilon 必须在 (0, 1) 内，当前: {self.epsilon}")
        if not (self.q > 1.0 and self.r > 1.0):
            raise ConfigError(f"q, r 必须大于 1: q={self.q}, r={self.r}")
        if abs(1.0 / self.p - 1.0 / self.q - 1.0 / self.r) > 1e-12:
            raise ConfigError(f"1/p ≠ 1/q + 1/r: p={self.p}, q={self.q}, r={self.r}")
        floor = max(1.0 / self.K1, 1.0 / self.K2) + 1.0
        if not self.K0 > floor:
            raise ConfigError(f"K0={self.K0} 必须大于 max(1/K1, 1/K2) + 1 = {floor:.6g}")
        if self.M < 100.0 * self.K0:
            raise ConfigError(f"M={self.M} 必须不小于 100·K0 = {100.0 * self.K0:.6g}")
        if not self.log_condition < self.epsilon ** self.p:
            raise ConfigError(
                f"M={self.M} 不满足 {self.schedule_constant}·log2(M)/M^(2p-1) = "
                f"{self.log_condition:.4g} < epsilon^p = {self.epsilon ** self.p:.4g}"
            )
        return self

    def to_dict(self) -> Dict[str, float]:
        return {
            "K0": self.K0, "M": self.M, "epsilon": self.epsilon,
            "p": self.p, "q": self.q, "r": self.r, "lambda": self.lam,
            "K1": self.K1, "K2": self.K2, "schedule_constant": self.schedule_constant,
        }


def conjugate_exponents(p: float, q: Optional[float] = None, r: Optional[float] = None) -> Tuple[float, float]:
    """补全 1/p = 1/q + 1/r，默认 q = r = 2p"""
    if q is None and r is None:
        return 2.0 * p, 2.0 * p
    if q is not None and r is not None:
        return float(q), float(r)
    given = q if q is not None else r
    rest = 1.0 / p - 1.0 / given
    if not rest > 0:
        raise ConfigError(f"无法由 p={p} 与 {given} 补全共轭指数")
    other = 1.0 / rest
    return (float(given), other) if q is not None else (other, float(given))


def smallest_admissible_M(K0: float, p: float, epsilon: float, schedule_constant: float) -> float:
    """满足 M ≥ 100K₀ 且 C·log₂M/M^{2p-1} < ε^p 的最小 2 的幂"""
    k = max(1, math.ceil(math.log2(100.0 * K0)))
    target = epsilon ** p
    while k <= MAX_LOG2_M:
        M = 2.0 ** k
        if schedule_constant * k / M ** (2.0 * p - 1.0) < target:
            return M
        k += 1
    raise ConfigError(f"在 2^{MAX_LOG2_M} 以内找不到满足条件的 M（p={p}, epsilon={epsilon}）")


def select_schedule(
    lam: LamLike,
    p: float,
    epsilon: float = 1.0 / 16.0,
    spec: Optional[QuadratureSpec] = None,
    schedule_constant: float = 16.0,
    q: Optional[float] = None,
    r: Optional[float] = None,
    M: Optional[float] = None,
    constants: Optional[KernelRegimeConstants] = None
) -> ConstantSchedule:
    """
    由核的区间常数生成常数表

    K₀ = ⌊max(1/K₁, 1/K₂) + 1⌋ + 1，M 默认取最小的可行 2 的幂
    """
    param = as_param(lam)
    constants = constants or estimate_regime_constants(param, spec)
    K0 = float(math.floor(max(1.0 / constants.K1, 1.0 / constants.K2) + 1.0) + 1)
    q, r = conjugate_exponents(p, q, r)
    if M is None:
        M = smallest_admissible_M(K0, p, epsilon, schedule_constant)
    schedule = ConstantSchedule(
        K0=K0, M=float(M), epsilon=epsilon, p=p, q=q, r=r, lam=param.lam,
        K1=constants.K1, K2=constants.K2, schedule_constant=schedule_constant,
    )
    return schedule.validate()


def pair_center(x0: float, r: float, M: float, K0: float) -> Tuple[CaseTag, float]:
    """按 x₀ ≤ 2Mr 与否选择 y₀"""
    if x0 <= 2.0 * M * r:
        return CaseTag.NEAR, x0 + 2.0 * M * K0 * r
    return CaseTag.FAR, x0 - M * r / K0


# ==================== Π(g, h) ====================

def _midpoints(edges: np.ndarray) -> np.ndarray:
    return 0.5 * (edges[:-1] + edges[1:])


def pi_form(
    g: StepFunction,
    h: StepFunction,
    lam: LamLike,
    spec: Optional[QuadratureSpec] = None,
    cells: int = 64
) -> StepFunction:
    """
    Π(g, h) = g·Rh - h·R̃g 在 supp g ∪ supp h 的细分网格中点上采样

    两个支撑重叠时，重叠处的算子值取主值
    """
    if g.is_zero or h.is_zero:
        return StepFunction.zero()
    spec = spec or default_spec()
    edges = np.union1d(g.refined_grid(cells), h.refined_grid(cells))
    mids = _midpoints(edges)
    gv, hv = np.asarray(g(mids)), np.asarray(h(mids))
    values = np.zeros(len(mids))
    on_g, on_h = gv != 0.0, hv != 0.0
    if np.any(on_g):
        rh, _ = riesz_apply_many(h, mids[on_g], lam, spec)
        values[on_g] += gv[on_g] * rh
    if np.any(on_h):
        rg, _ = riesz_apply_many(g, mids[on_h], lam, spec, transpose=True)
        values[on_h] -= hv[on_h] * rg
    return StepFunction(edges, values)


def _operator_pairing(
    u: StepFunction,
    v: StepFunction,
    lam: LamLike,
    spec: QuadratureSpec,
    transpose: bool,
    panels_per_cell: int
) -> Tuple[float, float]:
    """∫ u·(Rv 或 R̃v) dm_λ 及其绝对值积分，外层复合 Gauss"""
    two_lam = 2.0 * as_param(lam).lam
    edges = np.unique(np.concatenate([np.linspace(lo, hi, panels_per_cell + 1) for lo, hi, _ in u.cells()]))
    points, weights = composite_gauss_nodes(edges, spec.nodes_per_panel)
    inner, _ = riesz_apply_many(v, points, lam, spec, transpose=transpose)
    integrand = weights * u(points) * inner * points ** two_lam
    return float(np.sum(integrand)), float(np.sum(np.abs(integrand)))


def pi_integral(
    g: StepFunction,
    h: StepFunction,
    lam: LamLike,
    spec: Optional[QuadratureSpec] = None,
    panels_per_cell: int = 2
) -> Tuple[float, float]:
    """
    ∫ Π(g, h) dm_λ 与量级 ∫|g·Rh| + ∫|h·R̃g|

    两项分别在各自支撑上用复合 Gauss 计算，用于检查 Fubini 抵消
    """
    if g.is_zero or h.is_zero:
        return 0.0, 0.0
    spec = spec or default_spec()
    first, first_abs = _operator_pairing(g, h, lam, spec, False, panels_per_cell)
    second, second_abs = _operator_pairing(h, g, lam, spec, True, panels_per_cell)
    return first - second, first_abs + second_abs


# ==================== 单原子近似 ====================

@dataclass(frozen=True)
class FactorPair:
    g: StepFunction
    h: StepFunction
    x0: float
    y0: float
    radius: float
    case: CaseTag
    # R̃g(x₀)
    denominator: float
    # ‖g‖_q · ‖h‖_r
    product_norm: float

    @property
    def support_gap(self) -> float:
        """dist(supp g, supp h) 的下界 |x₀ - y₀| - 2r"""
        return abs(self.x0 - self.y0) - 2.0 * self.radius

    def product_ratio(self, schedule: ConstantSchedule) -> float:
        """‖g‖_q‖h‖_r / M^{2λ/q + 1}"""
        return self.product_norm / schedule.M ** (2.0 * schedule.lam / schedule.q + 1.0)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "x0": self.x0, "y0": self.y0, "r": self.radius, "case": self.case.value,
            "denominator": self.denominator, "product_norm": self.product_norm,
        }


@dataclass(frozen=True)
class AtomApproximation:
    pair: FactorPair
    residual: TwoBumpFunction
    certified_eps: float
    decomposition: AtomicDecomposition
    # 采样后 ∫(W₁ + W₂) dm_λ 的值（修正前），以及相对 ∫|W₁| + ∫|W₂| 的比值
    cancellation_defect: float
    relative_defect: float
    # m_λ(I(y₀,r))·m_λ(I(x₀,r))^{-1/p} / m_λ(I(x₀,|x₀-y₀|))
    c1_reference: float


def approximate_atom(
    atom: Atom,
    schedule: ConstantSchedule,
    lam: LamLike,
    spec: Optional[QuadratureSpec] = None,
    cells: int = 64
) -> AtomApproximation:
    """
    a ≈ Π(g, h)，返回因子对、残差两峰函数与其原子分解界 certified_eps

    W₁ = a·(R̃g(x₀) - R̃g)/R̃g(x₀) 在 I(x₀,r) 上，W₂ = -g·Rh 在 I(y₀,r) 上，
    两者都在 cells 等分网格的中点采样；采样带来的积分偏差以常数形式从 W₂ 中扣除
    """
    param = as_param(lam)
    spec = spec or default_spec()
    if atom.p != schedule.p:
        raise DomainError(f"原子的 p={atom.p} 与常数表的 p={schedule.p} 不一致")
    if atom.profile.is_zero:
        raise DomainError("零原子无需近似")

    ball = atom.support.normalized()
    x0, r = ball.center, ball.radius
    case, y0 = pair_center(x0, r, schedule.M, schedule.K0)
    if abs(x0 - y0) < 4.0 * r:
        raise HypothesisViolation(f"|x0 - y0| = {abs(x0 - y0):.6g} < 4r = {4.0 * r:.6g}")

    g = StepFunction.indicator(y0 - r, y0 + r)
    denom = float(riesz_apply_many(g, np.array([x0]), param, spec, transpose=True)[0][0])
    if abs(denom) < DENOMINATOR_FLOOR / schedule.M:
        raise DenominatorDegeneracy(
            f"|R̃g(x0)| = {abs(denom):.3e} < {DENOMINATOR_FLOOR}/M（x0={x0:.6g}, y0={y0:.6g}, case {case.value}）"
        )
    h = atom.profile.scale(-1.0 / denom)

    grid1 = atom.profile.refined_grid(cells)
    mid1 = _midpoints(grid1)
    rg, _ = riesz_apply_many(g, mid1, param, spec, transpose=True)
    w1 = StepFunction(grid1, np.asarray(atom.profile(mid1)) * (denom - rg) / denom)

    grid2 = np.linspace(y0 - r, y0 + r, cells + 1)
    rh, _ = riesz_apply_many(h, _midpoints(grid2), param, spec)
    raw_w2 = StepFunction(grid2, -rh)

    defect = w1.integrate(param) + raw_w2.integrate(param)
    scale = w1.abs().integrate(param) + raw_w2.abs().integrate(param)
    m_y = measure(Interval(y0, r), param)
    w2 = StepFunction(grid2, -rh - defect / m_y)

    residual = TwoBumpFunction.from_parts(w1, w2, x0, y0, r)
    decomposition, eps = decompose_two_bump(residual, atom.p, param)

    pair = FactorPair(
        g=g, h=h, x0=x0, y0=y0, radius=r, case=case, denominator=denom,
        product_norm=g.lp_norm(schedule.q, param) * h.lp_norm(schedule.r, param),
    )
    c1_reference = m_y * measure(ball, param) ** (-1.0 / atom.p) / measure(Interval(x0, abs(x0 - y0)), param)
    logger.debug(
        f"[Factorize] x0={x0:.6g} r={r:.6g} case={case.value} y0={y0:.6g} "
        f"R̃g(x0)={denom:.4e} eps={eps:.4e}"
    )
    return AtomApproximation(
        pair=pair,
        residual=residual,
        certified_eps=eps,
        decomposition=decomposition,
        cancellation_defect=defect,
        relative_defect=abs(defect) / scale if scale > 0 else 0.0,
        c1_reference=c1_reference,
    )


# ==================== 逐层弱分解 ====================

@dataclass
class LevelRecord:
    level: int
    pairs: List[Tuple[float, FactorPair]]
    certified_eps: List[float]
    # 本层处理的原子 Σ|α|^p
    tally: float
    processed: int
    carried: int
    residual_bound: float
    ratio: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "level": self.level,
            "tally": self.tally,
            "bound": self.residual_bound,
            "ratio": self.ratio,
            "processed": self.processed,
            "carried": self.carried,
            "pairs": [
                {"alpha": alpha, "certified_eps": eps, **pair.to_dict()}
                for (alpha, pair), eps in zip(self.pairs, self.certified_eps)
            ],
        }


@dataclass
class FactorizationResult:
    source: AtomicDecomposition
    schedule: ConstantSchedule
    levels: List[LevelRecord] = field(default_factory=list)
    # residual_bounds[0] 为输入的 (Σ|α|^p)^{1/p}
    residual_bounds: List[float] = field(default_factory=list)
    residual: AtomicDecomposition = field(default_factory=AtomicDecomposition)

    @property
    def coefficient_tallies(self) -> List[float]:
        return [lv.tally for lv in self.levels]

    @property
    def total_tally(self) -> float:
        return float(sum(self.coefficient_tallies))

    @property
    def level_ratios(self) -> List[float]:
        return [lv.ratio for lv in self.levels]

    @property
    def eC_ratio(self) -> float:
        """各层 bound[k]/bound[k-1] 的最大值"""
        return max(self.level_ratios) if self.levels else 0.0

    @property
    def C_emp(self) -> float:
        return self.eC_ratio / self.schedule.epsilon

    @property
    def geometric_tally_bound(self) -> float:
        """Σ_k (εC)^{(k-1)p} ‖f‖^p"""
        p = self.schedule.p
        base = self.residual_bounds[0] ** p if self.residual_bounds else 0.0
        return float(sum(self.eC_ratio ** ((k - 1) * p) * base for k in range(1, len(self.levels) + 1)))

    @property
    def factorization_norm(self) -> float:
        """(Σ_k Σ_j (|α|·‖g‖_q‖h‖_r)^p)^{1/p}"""
        p = self.schedule.p
        total = sum((abs(alpha) * pair.product_norm) ** p for lv in self.levels for alpha, pair in lv.pairs)
        return total ** (1.0 / p)

    @property
    def max_certified_eps(self) -> float:
        return max((max(lv.certified_eps) for lv in self.levels if lv.certified_eps), default=0.0)

    def to_ledger(self) -> Dict[str, Any]:
        return {
            "schedule": self.schedule.to_dict(),
            "input_bound": self.residual_bounds[0] if self.residual_bounds else 0.0,
            "levels": [lv.to_dict() for lv in self.levels],
            "residual_bounds": list(self.residual_bounds),
            "total_tally": self.total_tally,
            "geometric_tally_bound": self.geometric_tally_bound,
            "factorization_norm": self.factorization_norm,
            "eC_ratio": self.eC_ratio,
            "C_emp": self.C_emp,
        }


def weak_factorize(
    f: AtomicDecomposition,
    schedule: ConstantSchedule,
    k_max: int,
    lam: LamLike,
    spec: Optional[QuadratureSpec] = None,
    workers: int = 1,
    atoms_per_level: int = 512,
    floor_tolerance: float = 1e-12,
    cells: int = 64
) -> FactorizationResult:
    """
    逐层把原子替换为 Π 形式

    每层按 |α| 从大到小处理至多 atoms_per_level 个原子，其余原子原样带入残差；
    残差 E_k 由各原子残差的两峰分解拼接而成。
    workers == 1 时顺序执行，结果可逐位复现
    """
    param = as_param(lam)
    spec = spec or default_spec()
    schedule.validate()
    if k_max < 1:
        raise DomainError(f"k_max 至少为 1，当前: {k_max}")

    bound0 = hp_norm_upper(f)
    result = FactorizationResult(source=f, schedule=schedule, residual_bounds=[bound0], residual=f)
    if bound0 == 0.0:
        return result

    def approximate(term: AtomTerm) -> AtomApproximation:
        return approximate_atom(term.atom, schedule, param, spec, cells)

    current = f
    stalled = 0
    executor = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for k in range(1, k_max + 1):
            ordered = [t for t in current.sorted_by_size() if t.coefficient != 0.0]
            processed, carried = ordered[:atoms_per_level], ordered[atoms_per_level:]
            if carried:
                logger.warning(f"[Factorize-L{k}] 本层原子数 {len(ordered)} 超过预算，{len(carried)} 个原样带入残差")

            if executor is not None:
                approximations = list(executor.map(approximate, processed))
            else:
                approximations = [approximate(t) for t in processed]

            next_terms: List[AtomTerm] = list(carried)
            for term, approx in zip(processed, approximations):
                next_terms.extend(approx.decomposition.scaled(term.coefficient).terms)
            current = AtomicDecomposition(next_terms, f.p)

            bound = hp_norm_upper(current)
            prev = result.residual_bounds[-1]
            record = LevelRecord(
                level=k,
                pairs=[(t.coefficient, a.pair) for t, a in zip(processed, approximations)],
                certified_eps=[a.certified_eps for a in approximations],
                tally=float(sum(abs(t.coefficient) ** f.p for t in processed)),
                processed=len(processed),
                carried=len(carried),
                residual_bound=bound,
                ratio=bound / prev if prev > 0 else 0.0,
            )
            result.levels.append(record)
            result.residual_bounds.append(bound)
            result.residual = current
            logger.info(
                f"[Factorize-L{k}] 处理 {record.processed} 个原子，残差界 {bound:.6e}，比值 {record.ratio:.4f}"
            )

            stalled = stalled + 1 if bound >= prev else 0
            if stalled >= DIVERGENCE_PATIENCE:
                raise DivergenceDetected(
                    f"残差界连续 {stalled} 层未下降（第 {k} 层比值 {record.ratio:.4f}），εC_emp ≥ 1",
                    ratio=record.ratio,
                )
            if bound < floor_tolerance * bound0:
                logger.info(f"[Factorize-L{k}] 残差界低于 {floor_tolerance:g}·初始界，提前结束")
                break
    finally:
        if executor is not None:
            executor.shutdown()
    return result


# ==================== 对偶配对 ====================

@dataclass(frozen=True)
class PairingCheck:
    """⟨b, f⟩ 与逐层累加的 Σα⟨g, [b,R]h⟩"""
    lhs: float
    partial_sums: List[float]
    discrepancies: List[float]

    @property
    def discrepancy(self) -> float:
        return self.discrepancies[-1] if self.discrepancies else 0.0


def symbol_pairing(b: LipschitzSymbol, f: AtomicDecomposition, lam: LamLike, spec: Optional[QuadratureSpec] = None) -> float:
    """⟨b, f⟩ = Σ α ∫ (b - b(x_I)) a dm_λ（原子均值为零）"""
    total = 0.0
    for t in f.terms:
        anchor = float(b.func(np.array([t.atom.support.center]))[0])
        total += t.coefficient * integrate_against(lambda y: b.func(y) - anchor, t.atom.profile, lam, spec)
    return total


def pairing_check(
    b: LipschitzSymbol,
    result: FactorizationResult,
    lam: LamLike,
    spec: Optional[QuadratureSpec] = None,
    levels: Optional[int] = None
) -> PairingCheck:
    """
    对前 K 层（默认全部）逐层计算相对偏差 |⟨b,f⟩ - Σ_{k≤K} Σ_j α⟨g,[b,R]h⟩| / |⟨b,f⟩|

    ⟨b,f⟩ = 0 时返回绝对偏差
    """
    spec = spec or default_spec()
    lhs = symbol_pairing(b, result.source, lam, spec)
    use = result.levels if levels is None else result.levels[:levels]
    partial = 0.0
    partial_sums, discrepancies = [], []
    for lv in use:
        for alpha, pair in lv.pairs:
            partial += alpha * commutator_pairing(b, pair.g, pair.h, lam, spec)
        partial_sums.append(partial)
        gap = abs(lhs - partial)
        discrepancies.append(gap / abs(lhs) if lhs != 0.0 else gap)
    return PairingCheck(lhs=lhs, partial_sums=partial_sums, discrepancies=discrepancies)


def pi_dual_estimate(
    g: StepFunction,
    h: StepFunction,
    symbols: Sequence[LipschitzSymbol],
    lam: LamLike,
    spec: Optional[QuadratureSpec] = None
) -> float:
    """max_b |⟨Π(g,h), b⟩| / ‖b‖_Lip，Π(g,h) 的 H^p 范数的对偶下界估计"""
    best = 0.0
    for b in symbols:
        if not b.seminorm_estimate > 0:
            continue
        best = max(best, abs(commutator_pairing(b, g, h, lam, spec)) / b.seminorm_estimate)
    return best
