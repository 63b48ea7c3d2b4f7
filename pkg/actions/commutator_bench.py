"""
Action: commutator_bench
交换子 [b, R] 的 L^p → L^q 经验范数比值与逐点控制 |[b,R]f| ≤ C_size·‖b‖_Lip·I_α⁺|f|
"""
import logging
from typing import Any, Dict, List, Tuple

import numpy as np

from actions.base_action import ActionContext, BaseAction, ExperimentResult
from actions.battery import generate_battery
from core.atoms import Atom
from core.kernels import size_constant
from core.measure_geometry import commutator_p_range
from core.riesz_operators import LipschitzSymbol, commutator_values, fractional_integral_values, lq_norm_on_halfline

logger = logging.getLogger(__name__)

# 输入空间 L^{P_IN}
P_IN = 2.0

# 每个原子上检查逐点控制的点数
DOMINATION_POINTS = 8

# 参与基准的原子数上限
MAX_BENCH_ATOMS = 64

# 逐点控制比值超过该值记为违反（容纳求积误差）
DOMINATION_SLACK = 1.01


def exponents(p: float) -> Tuple[float, float]:
    """α = 1/p - 1，输出指数 q 满足 1/q = 1/P_IN - α"""
    alpha = 1.0 / p - 1.0
    rest = 1.0 / P_IN - alpha
    return alpha, (1.0 / rest if rest > 0 else float("inf"))


def norm_window(atom: Atom) -> Tuple[float, float]:
    """[b,R]f 的 L^q 范数截断窗口：支撑两侧各延伸 8 个支撑长度"""
    lo, hi = atom.support.lo, atom.support.hi
    length = hi - lo
    return max(lo - 8.0 * length, lo / 16.0), hi + 8.0 * length


def commutator_ratio(
    b: LipschitzSymbol,
    atom: Atom,
    q: float,
    lam: float,
    spec,
    panels: int = 16
) -> float:
    """‖[b,R]f‖_q / (‖b‖_Lip ‖f‖_{P_IN})，截断范数，给出下界估计"""
    f = atom.profile
    lo, hi = norm_window(atom)
    numerator = lq_norm_on_halfline(
        lambda x: commutator_values(b, f, x, lam, spec)[0],
        q, lam, lo, hi, spec, breakpoints=f.breakpoints, panels=panels,
    )
    denominator = b.seminorm_estimate * f.lp_norm(P_IN, lam)
    return numerator / denominator if denominator > 0 else 0.0


def domination_ratio(
    b: LipschitzSymbol,
    atom: Atom,
    lam: float,
    c_size: float,
    spec
) -> float:
    """
    max_x |[b,R]f(x)| / (C_size·‖b‖_Lip·I_α⁺|f|(x))，α 取 b 的阶

    采样点取窗口内均匀点与各单元中点；‖b‖_Lip 优先用构造上界，比值 ≤ 1 才满足控制
    """
    f = atom.profile
    lo, hi = norm_window(atom)
    points = np.unique(np.concatenate((
        np.linspace(lo, hi, DOMINATION_POINTS + 2)[1:-1],
        0.5 * (f.breakpoints[:-1] + f.breakpoints[1:]),
    )))
    seminorm = b.seminorm_bound if b.seminorm_bound is not None else b.seminorm_estimate
    comm, comm_err = commutator_values(b, f, points, lam, spec)
    frac, _ = fractional_integral_values(f, b.alpha, points, lam, spec)
    if not (np.all(np.isfinite(comm)) and np.all(np.isfinite(frac))):
        return float("inf")
    bound = c_size * seminorm * frac
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(bound > 0, np.abs(comm) / np.where(bound > 0, bound, 1.0),
                          np.where(np.abs(comm) <= comm_err, 0.0, np.inf))
    return float(np.max(ratios))


class CommutatorBenchAction(BaseAction):
    """交换子基准"""

    action_name = "commutator-bench"

    def _do_action(self, context: ActionContext, payload: Dict[str, Any]) -> ExperimentResult:
        """
        payload 参数:
            lambda_list / p_list: 可选，覆盖配置；只运行 p ∈ (1/2, 1) ∩ p_range(λ) 的组合
            atoms: 可选，参与的原子数
        """
        config = context.config
        rows: List[list] = []
        failures: List[str] = []
        summary: Dict[str, Any] = {}
        n_atoms = int(payload.get("atoms") or min(config.battery_size, MAX_BENCH_ATOMS))

        for lam, p in self._pairs(context, payload):
            key = f"lambda={lam:g},p={p:g}"
            if not commutator_p_range(lam).contains(p) or p >= 1.0:
                logger.info(f"[CommutatorBench] 跳过 {key}：p 不在 {commutator_p_range(lam)} 内部")
                continue
            alpha, q = exponents(p)
            if not q > P_IN:
                logger.info(f"[CommutatorBench] 跳过 {key}：alpha={alpha:.4g} 时 1/P_IN - alpha ≤ 0")
                continue
            battery = generate_battery(context.seed, lam, p, config, context.spec)
            atoms = battery.atoms[:n_atoms]

            c_size = size_constant(lam, context.spec)
            best, best_pair = 0.0, None
            worst_domination, violations = 0.0, 0
            for s_id, b in enumerate(battery.symbols):
                for a_id, atom in enumerate(atoms):
                    ratio = commutator_ratio(b, atom, q, lam, context.spec)
                    if not np.isfinite(ratio):
                        failures.append(f"{key}: symbol={s_id} atom={a_id} 比值非有限")
                        continue
                    rows.append([lam, P_IN, q, alpha, s_id, a_id, ratio])
                    if ratio > best:
                        best, best_pair = ratio, (s_id, a_id)
                    domination = domination_ratio(b, atom, lam, c_size, context.spec)
                    if not np.isfinite(domination):
                        failures.append(f"{key}: symbol={s_id} atom={a_id} 逐点控制出现非有限值")
                        violations += 1
                        continue
                    worst_domination = max(worst_domination, domination)
                    if domination > DOMINATION_SLACK:
                        failures.append(f"{key}: symbol={s_id} atom={a_id} 逐点控制比值 {domination:.4g} > 1")
                        violations += 1

            refinement = None
            if best_pair is not None:
                s_id, a_id = best_pair
                refined = commutator_ratio(battery.symbols[s_id], atoms[a_id], q, lam, context.spec, panels=32)
                refinement = abs(refined - best) / best
                if refinement > 0.1:
                    failures.append(f"{key}: 网格加密后比值变化 {refinement:.2%}")

            summary[key] = {
                "alpha": alpha,
                "q": q,
                "max_ratio": best,
                "refinement_change": refinement,
                "size_constant": c_size,
                "max_domination_ratio": worst_domination,
                "domination_violations": violations,
            }
            logger.info(f"[CommutatorBench] {key}: max_ratio={best:.4g} domination={worst_domination:.4g} violations={violations}")

        self.write_csv(context, "commutator_bench.csv",
                       ["lambda", "p", "q", "alpha", "symbol_id", "atom_id", "ratio"], rows)
        return self._finish(summary, failures)
