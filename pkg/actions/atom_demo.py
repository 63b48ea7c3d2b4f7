"""
Action: atom_demo
两峰函数的逐层原子分解：重构误差、原子检查、系数表常数与闭式界比值
"""
import logging
from typing import Any, Dict, List

import numpy as np

from actions.base_action import ActionContext, BaseAction, ExperimentResult
from actions.battery import two_bump_battery
from core.atoms import coefficient_ratios, decompose_two_bump, dyadic_depth, two_bump_bound

logger = logging.getLogger(__name__)

# 重构误差（相对 ‖f‖_∞）
RECONSTRUCTION_TOL = 1e-12


class AtomDemoAction(BaseAction):
    """两峰分解演示"""

    action_name = "atom-demo"

    def _do_action(self, context: ActionContext, payload: Dict[str, Any]) -> ExperimentResult:
        """
        payload 参数:
            lambda_list / p_list: 可选，覆盖配置
            cases: 可选，两峰函数个数，默认 2 × battery_size
        """
        cases = int(payload.get("cases") or 2 * context.config.battery_size)
        rows: List[list] = []
        failures: List[str] = []
        summary: Dict[str, Any] = {}

        for lam, p in self._pairs(context, payload):
            battery = two_bump_battery(context.seed, lam, cases)
            coef_max, bound_max, worst_recon, atom_count = 0.0, 0.0, 0.0, 0
            for case_id, f in enumerate(battery):
                decomposition, bound = decompose_two_bump(f, p, lam)
                expected_atoms = 2 * (dyadic_depth(f.separation, f.r) + 1)
                if len(decomposition) != expected_atoms:
                    failures.append(f"lambda={lam} p={p} case={case_id}: 原子数 {len(decomposition)} ≠ {expected_atoms}")

                target = f.total()
                recon = decomposition.reconstruct().max_abs_difference(target) / max(target.sup_norm, 1e-300)
                worst_recon = max(worst_recon, recon)
                if recon > RECONSTRUCTION_TOL:
                    failures.append(f"lambda={lam} p={p} case={case_id}: 重构误差 {recon:.3e}")

                certificates = decomposition.validate(lam)
                bad = [k for k, c in enumerate(certificates) if not c.passed]
                if bad:
                    failures.append(f"lambda={lam} p={p} case={case_id}: 原子 {bad} 未通过检查")

                ratios = coefficient_ratios(decomposition, f, lam)
                bound_ratio = bound / two_bump_bound(f, p, lam)
                coef_max = max(coef_max, float(np.max(ratios)))
                bound_max = max(bound_max, bound_ratio)
                atom_count += len(decomposition)

                for term, ratio in zip(decomposition.terms, ratios):
                    support = term.atom.support
                    rows.append([lam, p, case_id, term.bump, term.level, support.lo, support.hi,
                                 term.coefficient, float(ratio), bound_ratio])

            summary[f"lambda={lam:g},p={p:g}"] = {
                "cases": cases,
                "atoms": atom_count,
                "C_coefficient": coef_max,
                "C_bound": bound_max,
                "max_reconstruction_error": worst_recon,
            }
            logger.info(f"[AtomDemo] lambda={lam} p={p}: C_coef={coef_max:.4g} C_bound={bound_max:.4g}")

        self.write_csv(context, "atom_demo.csv",
                       ["lambda", "p", "case_id", "bump", "level", "lo", "hi", "alpha",
                        "coefficient_ratio", "bound_ratio"], rows)
        return self._finish(summary, failures)
