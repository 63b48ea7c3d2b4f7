"""
实验运行入口
负责：解析命令行、加载配置、执行子命令、写出 summary.json、返回退出码

退出码：0 全部证书通过；1 证书失败或数值错误；2 配置错误
"""
import argparse
import logging
import sys
from dataclasses import asdict
from typing import Any, Dict, List, Optional

from actions import ActionContext, ExperimentResult, get_action_class, list_available_actions
from config import ExperimentConfig, load_experiment_config
from core.errors import ConfigError
from core.kernels import kernel_cache
from core.ledger_store import LedgerStore
from core.quadrature import QuadratureSpec

logger = logging.getLogger("runner")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2

# 命令行参数 -> 配置项
_CONFIG_FLAGS = {
    "lambda_list": "lambda_list",
    "p_list": "p_list",
    "epsilon": "epsilon",
    "seed": "seed",
    "output_dir": "output_dir",
    "workers": "workers",
    "k_max": "k_max",
    "resolution": "resolution",
    "cells": "operator_cells",
    "battery_size": "battery_size",
    "atoms_per_level": "atoms_per_level",
    "schedule_constant": "schedule_constant",
    "rel_tol": "quadrature.rel_tol",
    "nodes": "quadrature.nodes_per_panel",
}

# 直接传给 Action 的参数
_PAYLOAD_FLAGS = ("input", "M", "q", "r", "grid", "cases", "atoms", "pairing", "size")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Bessel 设定下 Hardy 空间弱分解实验")
    parser.add_argument("subcommand", choices=list_available_actions())
    parser.add_argument("--config", help="key = value 格式的配置文件")
    parser.add_argument("--verbose", "-v", action="store_true", help="输出 DEBUG 日志")

    group = parser.add_argument_group("配置覆盖")
    group.add_argument("--lambda", dest="lambda_list", help="逗号分隔的 λ 列表")
    group.add_argument("--p", dest="p_list", help="逗号分隔的 p 列表")
    group.add_argument("--epsilon")
    group.add_argument("--seed")
    group.add_argument("--output-dir", dest="output_dir")
    group.add_argument("--workers")
    group.add_argument("--K-max", dest="k_max")
    group.add_argument("--resolution")
    group.add_argument("--cells", help="W1/W2 采样单元数")
    group.add_argument("--battery-size", dest="battery_size")
    group.add_argument("--atoms-per-level", dest="atoms_per_level")
    group.add_argument("--schedule-constant", dest="schedule_constant")
    group.add_argument("--rel-tol", dest="rel_tol")
    group.add_argument("--nodes", help="每个面板的 Gauss 节点数")

    group = parser.add_argument_group("子命令参数")
    group.add_argument("--input", help="factorize: 原子分解文件")
    group.add_argument("--M", dest="M", help="factorize: 覆盖 M")
    group.add_argument("--q", dest="q")
    group.add_argument("--r", dest="r")
    group.add_argument("--grid", help="kernel-scan: 网格边长")
    group.add_argument("--cases", help="atom-demo: 两峰函数个数")
    group.add_argument("--atoms", help="commutator-bench: 原子数")
    group.add_argument("--pairing", help="factorize: 配对检查的层数")
    group.add_argument("--size", help="battery: 每个组合的原子数")
    return parser


def setup_logging(verbose: bool = False):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def exit_code_for(result: ExperimentResult) -> int:
    if result.ok:
        return EXIT_OK
    if result.error_code == ConfigError.code:
        return EXIT_CONFIG
    return EXIT_FAILURE


class ExperimentRunner:
    """子命令执行器"""

    def __init__(self, config: ExperimentConfig, store: Optional[LedgerStore] = None):
        self.config = config
        self.spec = QuadratureSpec.from_config(config.quadrature)
        self.store = store or LedgerStore(config.output_dir)

    def run(self, subcommand: str, payload: Optional[Dict[str, Any]] = None) -> ExperimentResult:
        """执行一个子命令并写出 summary.json"""
        payload = payload or {}
        run_id = self.store.create_run(subcommand, self.config.seed)
        action = get_action_class(subcommand)(store=self.store)
        context = ActionContext(run_id=run_id, config=self.config, spec=self.spec)

        result = action.execute(context, payload)
        summary = asdict(result)
        summary["run_id"] = run_id
        summary["kernel_cache"] = kernel_cache.stats()
        # timing 不写入 summary.json，保证同一种子的产物逐字节相同
        summary.pop("timing_ms", None)
        self.store.write_json(run_id, "summary.json", summary)
        self.store.complete_run(run_id, {"ok": result.ok, "timing_ms": result.timing_ms}, result.error_message)
        return result


def _overrides(args: argparse.Namespace) -> Dict[str, str]:
    overrides = {}
    for flag, key in _CONFIG_FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = str(value)
    return overrides


def _payload(args: argparse.Namespace) -> Dict[str, Any]:
    return {name: getattr(args, name) for name in _PAYLOAD_FLAGS if getattr(args, name, None) is not None}


def print_summary(result: ExperimentResult):
    """打印结果表"""
    print("-" * 50)
    print(f"{'action':<16}{result.action}")
    print(f"{'ok':<16}{result.ok}")
    if result.timing_ms is not None:
        print(f"{'timing_ms':<16}{result.timing_ms}")
    for key, value in (result.data or {}).items():
        print(f"{key:<16}{value}")
    if result.error_code:
        print(f"{'error_code':<16}{result.error_code}")
        print(f"{'error':<16}{result.error_message}")
    for failure in result.failures[:20]:
        print(f"  ✗ {failure}")
    print("-" * 50)


def main(argv: Optional[List[str]] = None) -> int:
    """主函数"""
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)

    print("=" * 50)
    print("Bessel Hardy-space Factorization Runner")
    print("=" * 50)
    print(f"可用子命令: {list_available_actions()}")
    print()

    try:
        config = load_experiment_config(args.config, _overrides(args)).validate()
    except ConfigError as e:
        print(f"配置错误: {e}")
        return EXIT_CONFIG
    except OSError as e:
        print(f"无法读取配置文件: {e}")
        return EXIT_CONFIG

    runner = ExperimentRunner(config)
    result = runner.run(args.subcommand, _payload(args))
    print_summary(result)
    return exit_code_for(result)


if __name__ == "__main__":
    sys.exit(main())
