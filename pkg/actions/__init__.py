"""
Actions 模块
每个实验子命令对应一个 Action
"""
from typing import Dict, Type

from actions.base_action import BaseAction, ActionContext, ExperimentResult
from actions.battery import BatteryAction
from actions.kernel_scan import KernelScanAction
from actions.atom_demo import AtomDemoAction
from actions.factorize import FactorizeAction
from actions.commutator_bench import CommutatorBenchAction


# Action 注册表（键为子命令名）
ACTION_REGISTRY: Dict[str, Type[BaseAction]] = {
    "battery": BatteryAction,
    "kernel-scan": KernelScanAction,
    "atom-demo": AtomDemoAction,
    "factorize": FactorizeAction,
    "commutator-bench": CommutatorBenchAction,
}


def get_action_class(action_name: str) -> Type[BaseAction]:
    """获取 Action 类"""
    if action_name not in ACTION_REGISTRY:
        raise ValueError(f"未知的 Action: {action_name}，可用: {list(ACTION_REGISTRY.keys())}")
    return ACTION_REGISTRY[action_name]


def list_available_actions() -> list:
    """列出所有可用的 Action"""
    return list(ACTION_REGISTRY.keys())


__all__ = [
    "BaseAction", "ActionContext", "ExperimentResult",
    "BatteryAction", "KernelScanAction", "AtomDemoAction", "FactorizeAction", "CommutatorBenchAction",
    "ACTION_REGISTRY", "get_action_class", "list_available_actions"
]
