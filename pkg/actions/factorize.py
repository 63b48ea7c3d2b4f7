"""
Action: factorize
对原子分解形式的输入做逐层弱分解，写出 JSON 账本与逐层 CSV
"""
import logging
import os
from typing import Any, Dict, List, Optional

from actions.base_action import ActionContext, BaseAction, ExperimentResult
from actions.battery import generate_battery
from core.atoms import Atom, AtomicDecomposition, AtomTerm, validate_atom
from core.errors import ConfigError, DivergenceDetected, DomainError
from core.factorization import pairing_check, select_schedule, weak_factorize
from core.measure_geometry import Interval
from core.step_functions import StepFunction

logger = logging.getLogger(__name__)


def read_decomposition_file(path: str, p: float, lam: float) -> AtomicDecomposition:
    """
    每行 "alpha center radius profile_file"，# 开头为注释；
    profile_file 为 StepFunction 文本格式，相对路径相对于本文件所在目录。
    每个原子都经过 validate_atom，不合格时抛出 ConfigError
    """
    base = os.path.dirname(os.path.abspath(path))
    terms: List[AtomTerm] = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            fields = line.split()
            if len(fields) != 4:
                raise ConfigError(f"{path}:{lineno} 需要 4 个字段: alpha center radius profile_file")
            try:
                alpha, center, radius = (float(v) for v in fields[:3])
            except ValueError:
                raise ConfigError(f"{path}:{lineno} 数值无法解析: {line}")
            profile_path = fields[3] if os.path.isabs(fields[3]) else os.path.join(base, fields[3])
            with open(profile_path, "r", encoding="utf-8") as pf:
                profile = StepFunction.from_text(pf.read())
            try:
                atom = Atom(Interval(center, radius), profile, p)
            except DomainError as e:
                raise ConfigError(f"{path}:{lineno} 非法区间: {e}")
            cert = validate_atom(atom, lam)
            if not cert.passed:
                raise ConfigError(
                    f"{path}:{lineno} 不是 lambda={lam:g}, p={p:g} 的原子: "
                    f"support_excess={cert.support_excess:.3e} sup_ratio={cert.sup_ratio:.6g} "
                    f"moment_ratio={cert.moment_ratio:.3e}"
                )
            terms.append(AtomTerm(alpha, atom))
    return AtomicDecomposition(terms, p)


def _optional_float(value: Any) -> Optional[float]:
    return None if value is None else float(value)


class FactorizeAction(BaseAction):
    """逐层弱分解"""

    action_name = "factorize"

    def _do_action(self, context: ActionContext, payload: Dict[str, Any]) -> ExperimentResult:
        """
        payload 参数:
            input: 可选，原子分解文件；缺省时使用测试集
            lambda_list / p_list: 可选，覆盖配置
            M, q, r: 可选，覆盖常数表
            pairing: 可选，对前 pairing 层做 ⟨b, f⟩ 配对检查（0 表示跳过）
        """
        config = context.config
        rows: List[list] = []
        failures: List[str] = []
        summary: Dict[str, Any] = {}

        for lam, p in self._pairs(context, payload):
            key = f"lambda={lam:g},p={p:g}"
            schedule = select_schedule(
                lam, p, config.epsilon, context.spec, config.schedule_constant,
                q=_optional_float(payload.get("q")), r=_optional_float(payload.get("r")),
                M=_optional_float(payload.get("M")),
            )
            battery = None
            if payload.get("input"):
                source = read_decomposition_file(payload["input"], p, lam)
            else:
                battery = generate_battery(context.seed, lam, p, config, context.spec, schedule=schedule)
                source = battery.decomposition()

            try:
                result = weak_factorize(
                    source, schedule, config.k_max, lam, context.spec,
                    workers=config.workers,
                    atoms_per_level=config.atoms_per_level,
                    floor_tolerance=config.floor_tolerance,
                    cells=config.operator_cells,
                )
            except DivergenceDetected as e:
                failures.append(f"{key}: {e}")
                summary[key] = {"diverged": True, "ratio": e.ratio}
                continue

            ledger = result.to_ledger()
            self.write_json(context, f"factorize_lam{lam:g}_p{p:g}.json", ledger)
            for lv in result.levels:
                rows.append([lam, p, lv.level, lv.tally, lv.residual_bound, lv.ratio, lv.processed, lv.carried])

            first_eps = result.levels[0].certified_eps if result.levels else []
            over = [k for k, eps in enumerate(first_eps) if not eps < schedule.epsilon]
            if over:
                failures.append(f"{key}: {len(over)} 个原子的 certified_eps ≥ epsilon")
            bounds = result.residual_bounds
            if any(b1 >= b0 for b0, b1 in zip(bounds, bounds[1:])):
                failures.append(f"{key}: 残差界未严格下降 {bounds}")
            if not result.eC_ratio < 1.0:
                failures.append(f"{key}: eC_ratio = {result.eC_ratio:.4g} ≥ 1")

            entry: Dict[str, Any] = {
                "M": schedule.M,
                "K0": schedule.K0,
                "levels": len(result.levels),
                "residual_bounds": bounds,
                "eC_ratio": result.eC_ratio,
                "C_emp": result.C_emp,
                "total_tally": result.total_tally,
                "geometric_tally_bound": result.geometric_tally_bound,
                "factorization_norm": result.factorization_norm,
            }
            if battery is not None:
                entry["cases"] = battery.case_counts()
                entry["max_product_ratio"] = max(
                    (pair.product_ratio(schedule) for _, pair in result.levels[0].pairs), default=0.0
                )

            pairing_levels = int(payload.get("pairing") or 0)
            if pairing_levels and battery is not None and battery.symbols:
                check = pairing_check(battery.symbols[0], result, lam, context.spec, levels=pairing_levels)
                entry["pairing_discrepancies"] = check.discrepancies
            summary[key] = entry

        self.write_csv(context, "factorize_levels.csv",
                       ["lambda", "p", "level", "tally", "bound", "ratio", "processed", "carried"], rows)
        return self._finish(summary, failures)
