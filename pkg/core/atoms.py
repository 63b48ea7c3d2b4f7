"""
H^p(dm_λ) 原子与两峰函数的原子分解

原子 a：支撑在区间 I 上，‖a‖_∞ ≤ m_λ(I)^{-1/p}，∫ a dm_λ = 0
两峰函数 f = f₁ + f₂：supp f_i ⊆ I(x_i, r)，|f_i| ≤ C_i，∫ f dm_λ = 0，|x₁ - x₂| ≥ 4r
"""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, Iterator, List, Optional, Tuple, Union

import numpy as np

from core.errors import DomainError, HypothesisViolation
from core.measure_geometry import BesselParam, Interval, as_param, measure, p_range
from core.step_functions import StepFunction, sum_functions

logger = logging.getLogger(__name__)

LamLike = Union[float, BesselParam]

# 原子上确界条件的相对松弛
SUP_SLACK = 1e-12

# 原子矩条件：|∫a| ≤ MOMENT_TOL · ‖a‖_∞ · m_λ(I)
MOMENT_TOL = 1e-10

# 两峰函数总积分的相对容差
TWO_BUMP_INTEGRAL_TOL = 1e-9

# 支撑包含关系的相对松弛（浮点端点）
_SUPPORT_SLACK = 1e-12


@dataclass(frozen=True)
class Atom:
    support: Interval
    profile: StepFunction
    p: float

    @property
    def sup_norm(self) -> float:
        return self.profile.sup_norm

    def __repr__(self) -> str:
        return f"Atom(support={self.support}, cells={len(self.profile)}, p={self.p})"


@dataclass(frozen=True)
class AtomCertificate:
    """原子三个条件的检查结果与实测松弛"""
    support_ok: bool
    sup_ok: bool
    moment_ok: bool
    # ‖a‖_∞ · m_λ(I)^{1/p}，≤ 1 为通过
    sup_ratio: float
    # |∫a dm_λ| / (‖a‖_∞ m_λ(I))
    moment_ratio: float
    # supp a 超出 I 的距离（≤ 0 为通过）
    support_excess: float

    @property
    def passed(self) -> bool:
        return self.support_ok and self.sup_ok and self.moment_ok

    def to_dict(self) -> Dict[str, Union[bool, float]]:
        return {
            "passed": self.passed,
            "support_ok": self.support_ok,
            "sup_ok": self.sup_ok,
            "moment_ok": self.moment_ok,
            "sup_ratio": self.sup_ratio,
            "moment_ratio": self.moment_ratio,
            "support_excess": self.support_excess,
        }


def validate_atom(a: Atom, lam: LamLike) -> AtomCertificate:
    """
    检查 a 是否为 p-原子

    不抛异常，失败时返回 passed=False 的证书
    """
    m = measure(a.support, lam)
    slack = _SUPPORT_SLACK * max(a.support.hi, 1.0)
    if a.profile.is_zero:
        return AtomCertificate(True, True, True, 0.0, 0.0, -math.inf)

    lo, hi = a.profile.support
    excess = max(a.support.lo - lo, hi - a.support.hi)
    sup = a.profile.sup_norm
    sup_ratio = sup * m ** (1.0 / a.p)
    moment_ratio = abs(a.profile.integrate(lam)) / (sup * m)
    return AtomCertificate(
        support_ok=excess <= slack,
        sup_ok=sup_ratio <= 1.0 + SUP_SLACK,
        moment_ok=moment_ratio <= MOMENT_TOL,
        sup_ratio=sup_ratio,
        moment_ratio=moment_ratio,
        support_excess=excess,
    )


def standard_atom(interval: Interval, p: float, lam: LamLike) -> Atom:
    """
    a = m_λ(I)^{-1/p} (χ_{左半} - c χ_{右半})，c = m_λ(左半) / m_λ(右半) ≤ 1
    """
    mid = 0.5 * (interval.lo + interval.hi)
    left = Interval.from_endpoints(interval.lo, mid)
    right = Interval.from_endpoints(mid, interval.hi)
    c = measure(left, lam) / measure(right, lam)
    height = measure(interval, lam) ** (-1.0 / p)
    profile = StepFunction([interval.lo, mid, interval.hi], [height, -c * height])
    return Atom(interval, profile, p)


# ==================== 原子分解 ====================

@dataclass(frozen=True)
class AtomTerm:
    """分解中的一项 α·a；bump / level 记录来源（第几个峰、第几层）"""
    coefficient: float
    atom: Atom
    bump: int = 0
    level: int = 0


@dataclass
class AtomicDecomposition:
    terms: List[AtomTerm] = field(default_factory=list)
    p: float = 1.0

    @classmethod
    def single(cls, atom: Atom, coefficient: float = 1.0) -> "AtomicDecomposition":
        return cls([AtomTerm(coefficient, atom)], atom.p)

    def __len__(self) -> int:
        return len(self.terms)

    def __iter__(self) -> Iterator[AtomTerm]:
        return iter(self.terms)

    def __add__(self, other: "AtomicDecomposition") -> "AtomicDecomposition":
        if not isinstance(other, AtomicDecomposition):
            return NotImplemented
        if self.terms and other.terms and self.p != other.p:
            raise DomainError(f"无法拼接 p 不同的分解: {self.p} vs {other.p}")
        p = self.p if self.terms else other.p
        return AtomicDecomposition(self.terms + other.terms, p)

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([t.coefficient for t in self.terms], dtype=float)

    def tally(self) -> float:
        """Σ|α_k|^p"""
        if not self.terms:
            return 0.0
        return float(np.sum(np.abs(self.coefficients) ** self.p))

    def scaled(self, c: float) -> "AtomicDecomposition":
        return AtomicDecomposition([replace(t, coefficient=t.coefficient * c) for t in self.terms], self.p)

    def reconstruct(self) -> StepFunction:
        """Σ α_k a_k"""
        return sum_functions(t.atom.profile.scale(t.coefficient) for t in self.terms)

    def sorted_by_size(self) -> List[AtomTerm]:
        """按 |α| 降序（稳定排序）"""
        order = np.argsort(-np.abs(self.coefficients), kind="stable")
        return [self.terms[i] for i in order]

    def validate(self, lam: LamLike) -> List[AtomCertificate]:
        return [validate_atom(t.atom, lam) for t in self.terms]


def hp_norm_upper(d: AtomicDecomposition) -> float:
    """(Σ|α|^p)^{1/p}，H^p 范数的上界替代量"""
    if not d.terms:
        return 0.0
    return d.tally() ** (1.0 / d.p)


# ==================== 两峰函数 ====================

@dataclass(frozen=True)
class TwoBumpFunction:
    f1: StepFunction
    f2: StepFunction
    x1: float
    x2: float
    r: float
    C1: float
    C2: float

    @classmethod
    def from_parts(cls, f1: StepFunction, f2: StepFunction, x1: float, x2: float, r: float) -> "TwoBumpFunction":
        """C_i 取实测的 ‖f_i‖_∞"""
        return cls(f1, f2, x1, x2, r, f1.sup_norm, f2.sup_norm)

    @property
    def separation(self) -> float:
        return abs(self.x1 - self.x2)

    @property
    def bumps(self) -> Tuple[Tuple[StepFunction, float, float], Tuple[StepFunction, float, float]]:
        return (self.f1, self.x1, self.C1), (self.f2, self.x2, self.C2)

    def total(self) -> StepFunction:
        return self.f1 + self.f2

    def check(self, lam: LamLike):
        """不满足假设时抛出 HypothesisViolation"""
        if not self.r > 0:
            raise HypothesisViolation(f"半径必须为正: {self.r}")
        if self.separation < 4.0 * self.r:
            raise HypothesisViolation(
                f"两峰间距 {self.separation:.6g} < 4r = {4.0 * self.r:.6g}"
            )
        for k, (f, x, C) in enumerate(self.bumps, start=1):
            if f.is_zero:
                continue
            ball = Interval(x, self.r)
            lo, hi = f.support
            slack = _SUPPORT_SLACK * max(ball.hi, 1.0)
            if lo < ball.lo - slack or hi > ball.hi + slack:
                raise HypothesisViolation(f"supp f{k} = [{lo:.6g}, {hi:.6g}] 不在 {ball} 内")
            if f.sup_norm > C * (1.0 + SUP_SLACK):
                raise HypothesisViolation(f"‖f{k}‖_∞ = {f.sup_norm:.6g} 超过 C{k} = {C:.6g}")
        F1, F2 = self.f1.integrate(lam), self.f2.integrate(lam)
        scale = self.f1.abs().integrate(lam) + self.f2.abs().integrate(lam)
        if abs(F1 + F2) > TWO_BUMP_INTEGRAL_TOL * scale:
            raise HypothesisViolation(f"两峰函数总积分非零: {F1 + F2:.3e}（尺度 {scale:.3e}）")


def dyadic_depth(separation: float, r: float) -> int:
    """J₀：严格大于 log₂(separation / r) 的最小整数"""
    return int(math.floor(math.log2(separation / r))) + 1


def top_interval(f: TwoBumpFunction, j0: int) -> Interval:
    return Interval(0.5 * (f.x1 + f.x2), 2.0 ** (j0 + 1) * f.r)


def _as_term(piece: StepFunction, support: Interval, p: float, lam: LamLike, bump: int, level: int) -> Optional[AtomTerm]:
    if piece.is_zero:
        return None
    alpha = piece.sup_norm * measure(support, lam) ** (1.0 / p)
    return AtomTerm(alpha, Atom(support, piece.scale(1.0 / alpha), p), bump, level)


def decompose_two_bump(f: TwoBumpFunction, p: float, lam: LamLike) -> Tuple[AtomicDecomposition, float]:
    """
    两峰函数的逐层望远镜分解

    第 j ≤ J₀ 层：f_i^1 = f_i - ã_i^1 χ_{I(x_i,2r)}，
    f_i^j = ã_i^{j-1} χ_{I(x_i,2^{j-1}r)} - ã_i^j χ_{I(x_i,2^j r)}，
    其中 ã_i^j = ∫ f_i dm_λ / m_λ(I(x_i, 2^j r))。
    第 J₀+1 层在公共区间 I((x₁+x₂)/2, 2^{J₀+1}r) 上各自减去 F_i / m_λ(top)，
    每个原子的矩精确为零；总积分的残余 F₁+F₂ 不进入任何原子，
    重构误差即 |F₁+F₂| / m_λ(top)，受 check() 的积分容差约束。

    返回 (分解, (Σ|α|^p)^{1/p})；零函数返回空分解与 0
    """
    param = as_param(lam)
    if not p_range(param).contains(p):
        raise DomainError(f"p={p} 不在允许区间 {p_range(param)} 内")
    if f.f1.is_zero and f.f2.is_zero:
        return AtomicDecomposition([], p), 0.0
    f.check(param)

    j0 = dyadic_depth(f.separation, f.r)
    top = top_interval(f, j0)
    m_top = measure(top, param)
    F = [f.f1.integrate(param), f.f2.integrate(param)]

    terms: List[AtomTerm] = []
    for i, (fi, xi, _) in enumerate(f.bumps):
        # carry: 上一层留下的部分（第一层为 f_i 本身）
        carry = fi
        for j in range(1, j0 + 1):
            ball = Interval(xi, 2.0 ** j * f.r)
            level_part = StepFunction.indicator_of(ball, F[i] / measure(ball, param))
            term = _as_term(carry - level_part, ball, p, param, i + 1, j)
            if term is not None:
                terms.append(term)
            carry = level_part

        piece = carry - StepFunction.indicator_of(top, F[i] / m_top)
        term = _as_term(piece, top, p, param, i + 1, j0 + 1)
        if term is not None:
            terms.append(term)

    decomposition = AtomicDecomposition(terms, p)
    bound = hp_norm_upper(decomposition)
    logger.debug(f"[Atoms] 两峰分解: J0={j0}, 原子数={len(terms)}, 界={bound:.6e}")
    return decomposition, bound


# ==================== 界与比值 ====================

def two_bump_bound(f: TwoBumpFunction, p: float, lam: LamLike) -> float:
    """
    闭式上界 (s/r)^{1/p-1} (log₂(s/r))^{1/p} (Σ C_i^p m_λ(I(x_i,r)))^{1/p}，s = |x₁ - x₂|
    """
    ratio = f.separation / f.r
    mass = sum(C ** p * measure(Interval(x, f.r), lam) for _, x, C in f.bumps)
    return ratio ** (1.0 / p - 1.0) * math.log2(ratio) ** (1.0 / p) * mass ** (1.0 / p)


def coefficient_ratios(d: AtomicDecomposition, f: TwoBumpFunction, lam: LamLike) -> np.ndarray:
    """
    |α_i^j| / (2^{j(1/p-1)} C_i m_λ(I(x_i,r))^{1/p})，最大值即系数表的经验常数
    """
    p = d.p
    out = []
    for t in d.terms:
        _, x, C = f.bumps[t.bump - 1]
        reference = 2.0 ** (t.level * (1.0 / p - 1.0)) * C * measure(Interval(x, f.r), lam) ** (1.0 / p)
        out.append(abs(t.coefficient) / reference if reference > 0 else math.inf)
    return np.asarray(out, dtype=float)

