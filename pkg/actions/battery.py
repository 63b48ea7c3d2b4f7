"""
Action: battery
生成确定性的测试集（原子 + Lip_α 符号），同一种子逐字节相同
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from actions.base_action import ActionContext, BaseAction, ExperimentResult
from config import ExperimentConfig
from core.atoms import Atom, AtomicDecomposition, AtomTerm, TwoBumpFunction, standard_atom, validate_atom
from core.factorization import CaseTag, ConstantSchedule, pair_center, select_schedule
from core.measure_geometry import Interval, antiderivative_diff, as_param, measure
from core.quadrature import QuadratureSpec
from core.riesz_operators import LipschitzSymbol, canonical_symbol, random_symbol
from core.step_functions import StepFunction

logger = logging.getLogger(__name__)


def symbol_alpha(lam: float, p: float) -> float:
    """
    符号的阶 α = 1/p - 1（H^p 的对偶指数）

    p = 1 时对偶为 BMO，改用 α = 1/(2(2λ+1))
    """
    if p < 1.0:
        return 1.0 / p - 1.0
    return 0.5 / (2.0 * lam + 1.0)


def _rng(seed: int, lam: float, p: float, stream: int = 0) -> np.random.Generator:
    return np.random.default_rng([seed, int(round(lam * 1000)), int(round(p * 1000)), stream])


def random_atom(rng: np.random.Generator, interval: Interval, p: float, lam: float, cells: int) -> Atom:
    """支撑在 interval 上、随机取值的 p-原子：先减去加权均值，再缩放到上确界 m_λ(I)^{-1/p}"""
    edges = np.linspace(interval.lo, interval.hi, cells + 1)
    weights = np.asarray(antiderivative_diff(edges[:-1], edges[1:], lam))
    values = rng.normal(size=cells)
    values = values - np.dot(values, weights) / np.sum(weights)
    values = values * (measure(interval, lam) ** (-1.0 / p) / np.max(np.abs(values)))
    return Atom(interval, StepFunction(edges, values), p)


@dataclass
class Battery:
    """一个 (λ, p) 组合的测试集"""
    lam: float
    p: float
    seed: int
    schedule: ConstantSchedule
    atoms: List[Atom] = field(default_factory=list)
    coefficients: List[float] = field(default_factory=list)
    cases: List[CaseTag] = field(default_factory=list)
    symbols: List[LipschitzSymbol] = field(default_factory=list)

    def decomposition(self) -> AtomicDecomposition:
        return AtomicDecomposition(
            [AtomTerm(c, a) for c, a in zip(self.coefficients, self.atoms)], self.p
        )

    def case_counts(self) -> Dict[str, int]:
        return {tag.value: sum(1 for c in self.cases if c == tag) for tag in CaseTag}

    def to_dict(self) -> Dict[str, Any]:
        return {
            "lambda": self.lam,
            "p": self.p,
            "seed": self.seed,
            "schedule": self.schedule.to_dict(),
            "atoms": [
                {
                    "id": k,
                    "case": case.value,
                    "center": atom.support.center,
                    "radius": atom.support.radius,
                    "coefficient": coef,
                    "breakpoints": [float(b) for b in atom.profile.breakpoints],
                    "values": [float(v) for v in atom.profile.values],
                }
                for k, (atom, coef, case) in enumerate(zip(self.atoms, self.coefficients, self.cases))
            ],
            "symbols": [
                {"id": k, "name": b.name, "alpha": b.alpha, "seminorm_estimate": b.seminorm_estimate}
                for k, b in enumerate(self.symbols)
            ],
        }


def _atom_geometry(rng: np.random.Generator, regime: str, M: float) -> Tuple[float, float]:
    """按区域返回 (x0, r)，均满足 r ≤ x0"""
    if regime == "near_origin":
        x0 = 10.0 ** rng.uniform(-2.0, 2.0)
        return x0, x0 * rng.uniform(0.5, 1.0)
    if regime == "euclidean":
        x0 = 10.0 ** rng.uniform(-1.0, 2.0)
        r = max(x0 * 10.0 ** rng.uniform(-3.0, -1.0), x0 / M)
        return x0, r
    # far：x0 > 2Mr
    r = 10.0 ** rng.uniform(-2.0, 0.0)
    return 2.0 * M * r * 10.0 ** rng.uniform(0.1, 1.0), r


def generate_battery(
    seed: int,
    lam: float,
    p: float,
    config: ExperimentConfig,
    spec: Optional[QuadratureSpec] = None,
    size: Optional[int] = None,
    schedule: Optional[ConstantSchedule] = None
) -> Battery:
    """
    单个 (λ, p) 的测试集

    四分之一近原点（r ≃ x0）、四分之一欧氏区域（r ≪ x0），二者触发情形 a；
    其余 x0 > 2Mr 触发情形 b。偶数号为标准原子，奇数号为随机取值原子
    """
    param = as_param(lam)
    size = size or config.battery_size
    schedule = schedule or select_schedule(
        param, p, config.epsilon, spec, config.schedule_constant
    )
    rng = _rng(seed, param.lam, p)
    quarter = size // 4
    regimes = ["near_origin"] * quarter + ["euclidean"] * quarter + ["far"] * (size - 2 * quarter)

    battery = Battery(lam=param.lam, p=p, seed=seed, schedule=schedule)
    window_hi = 0.0
    for k, regime in enumerate(regimes):
        x0, r = _atom_geometry(rng, regime, schedule.M)
        interval = Interval(x0, r)
        if k % 2 == 0:
            atom = standard_atom(interval, p, param)
        else:
            atom = random_atom(rng, interval, p, param.lam, int(rng.integers(3, 9)))
        case, y0 = pair_center(x0, r, schedule.M, schedule.K0)
        battery.atoms.append(atom)
        battery.coefficients.append(float(rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 1.5)))
        battery.cases.append(case)
        window_hi = max(window_hi, x0 + r, y0 + r)

    alpha = symbol_alpha(param.lam, p)
    symbol_rng = _rng(seed, param.lam, p, stream=1)
    battery.symbols.append(canonical_symbol(param, alpha, 0.0, window_hi, config.resolution))
    for k in range(1, config.symbol_count):
        battery.symbols.append(
            random_symbol(symbol_rng, param, alpha, 0.0, window_hi, config.resolution, name=f"random-{k}")
        )
    logger.info(f"[Battery] lambda={param.lam} p={p}: {len(battery.atoms)} 个原子 {battery.case_counts()}，"
                f"{len(battery.symbols)} 个符号")
    return battery


def battery_generate(
    seed: int,
    config: ExperimentConfig,
    spec: Optional[QuadratureSpec] = None
) -> Dict[Tuple[float, float], Battery]:
    """配置中每个 (λ, p) 组合的测试集"""
    return {
        (lam, p): generate_battery(seed, lam, p, config, spec)
        for lam in config.lambda_list
        for p in config.p_list
    }


def two_bump_battery(seed: int, lam: float, count: int) -> List[TwoBumpFunction]:
    """
    随机两峰函数：r ∈ [1e-2, 10]，x1 ∈ [r, 1e3 r]，|x1 - x2| ∈ [4r, 256r]，
    f2 减去常数使总积分为零
    """
    param = as_param(lam)
    rng = _rng(seed, param.lam, 0.0, stream=2)
    out = []
    for _ in range(count):
        r = 10.0 ** rng.uniform(-2.0, 1.0)
        x1 = r * 10.0 ** rng.uniform(0.0, 3.0)
        x2 = x1 + r * 2.0 ** rng.uniform(2.0, 8.0)
        parts = []
        for x in (x1, x2):
            ball = Interval(x, r)
            cells = int(rng.integers(1, 7))
            parts.append(StepFunction(np.linspace(ball.lo, ball.hi, cells + 1), rng.normal(size=cells)))
        f1, f2 = parts
        ball2 = Interval(x2, r)
        shift = (f1.integrate(param) + f2.integrate(param)) / measure(ball2, param)
        f2 = f2 - StepFunction.indicator_of(ball2, shift)
        out.append(TwoBumpFunction.from_parts(f1, f2, x1, x2, r))
    return out


class BatteryAction(BaseAction):
    """生成并写出测试集"""

    action_name = "battery"

    def _do_action(self, context: ActionContext, payload: Dict[str, Any]) -> ExperimentResult:
        """
        payload 参数:
            lambda_list / p_list: 可选，覆盖配置
            size: 可选，每个组合的原子数
        """
        failures: List[str] = []
        summary: Dict[str, Any] = {}
        rows = []
        size = int(payload["size"]) if payload.get("size") else None
        for lam, p in self._pairs(context, payload):
            battery = generate_battery(context.seed, lam, p, context.config, context.spec, size)
            counts = battery.case_counts()
            invalid = [k for k, a in enumerate(battery.atoms) if not validate_atom(a, lam).passed]
            if invalid:
                failures.append(f"lambda={lam} p={p}: 原子 {invalid} 未通过检查")
            self.write_json(context, f"battery_lam{lam:g}_p{p:g}.json", battery.to_dict())
            for k, (atom, coef, case) in enumerate(zip(battery.atoms, battery.coefficients, battery.cases)):
                rows.append([lam, p, k, case.value, atom.support.center, atom.support.radius, coef])
            summary[f"lambda={lam:g},p={p:g}"] = {"cases": counts, "symbols": len(battery.symbols)}
        self.write_csv(context, "battery.csv", ["lambda", "p", "atom_id", "case", "x0", "r", "coefficient"], rows)
        return self._finish(summary, failures)
