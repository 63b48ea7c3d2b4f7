"""
Action: kernel_scan
Riesz 核在对数网格上的尺寸比值、测度倍增常数与符号区间常数
"""
import logging
from typing import Any, Dict, List

import numpy as np

from actions.base_action import ActionContext, BaseAction, ExperimentResult
from core.kernels import estimate_regime_constants, size_ratio
from core.measure_geometry import log_grid, scan_doubling_constant

logger = logging.getLogger(__name__)

SCAN_LO, SCAN_HI = 1e-3, 1e3


def scan_grid(n: int):
    """
    x 取 [1e-3, 1e3] 上的 n 点对数网格，y 取同一网格错开半步，网格上不出现 x = y
    """
    xs = log_grid(SCAN_LO, SCAN_HI, n)
    half_step = (np.log10(SCAN_HI) - np.log10(SCAN_LO)) / (2.0 * max(n - 1, 1))
    ys = xs * 10.0 ** half_step
    return xs, ys


class KernelScanAction(BaseAction):
    """扫描 |R(x,y)|·m_λ(I(x,|x-y|))"""

    action_name = "kernel-scan"

    def _do_action(self, context: ActionContext, payload: Dict[str, Any]) -> ExperimentResult:
        """
        payload 参数:
            lambda_list: 可选，覆盖配置
            grid: 可选，网格边长，默认 config.scan_grid
        """
        lambdas = payload.get("lambda_list") or context.config.lambda_list
        n = int(payload.get("grid") or context.config.scan_grid)
        xs, ys = scan_grid(n)
        X, Y = np.meshgrid(xs, ys, indexing="ij")

        rows: List[list] = []
        failures: List[str] = []
        summary: Dict[str, Any] = {}
        for lam in lambdas:
            lam = float(lam)
            values, ratios, errors = size_ratio(X, Y, lam, context.spec)
            finite = np.isfinite(ratios)
            if not np.all(finite):
                failures.append(f"lambda={lam}: {int(np.sum(~finite))} 个比值非有限")
            for x, y, v, ratio, err in zip(X.ravel(), Y.ravel(), values.ravel(), ratios.ravel(), errors.ravel()):
                rows.append([lam, float(x), float(y), float(v), float(ratio), float(err)])

            constants = estimate_regime_constants(lam, context.spec)
            summary[f"lambda={lam:g}"] = {
                "C_scan": float(np.max(ratios[finite])) if np.any(finite) else None,
                "doubling_C": scan_doubling_constant(lam),
                "K1": constants.K1,
                "K2": constants.K2,
                "C_K1": constants.C_K1,
                "C_K2": constants.C_K2,
            }
            logger.info(f"[KernelScan] lambda={lam}: C_scan={summary[f'lambda={lam:g}']['C_scan']:.6g}")

        self.write_csv(context, "kernel_scan.csv",
                       ["lambda", "x", "y", "kernel", "bound_ratio", "quad_error"], rows)
        summary["rows"] = len(rows)
        return self._finish(summary, failures)
