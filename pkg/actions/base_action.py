"""
Action 基类
所有实验子命令都继承这个类
"""
import logging
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

from config import ExperimentConfig
from core.errors import BesselError
from core.ledger_store import LedgerStore
from core.quadrature import QuadratureSpec

logger = logging.getLogger(__name__)


@dataclass
class ExperimentResult:
    """子命令执行结果"""
    ok: bool
    action: str
    data: Optional[dict] = None
    error_code: Optional[str] = None
    error_message: Optional[str] = None
    # 产物路径
    evidence: Optional[dict] = None
    timing_ms: Optional[int] = None
    # 未通过的证书描述
    failures: List[str] = field(default_factory=list)


@dataclass
class ActionContext:
    """Action 执行上下文"""
    run_id: str
    config: ExperimentConfig
    spec: QuadratureSpec
    extra: Dict[str, Any] = field(default_factory=dict)

    @property
    def seed(self) -> int:
        return self.config.seed


class BaseAction(ABC):
    """Action 基类"""

    # 子类需要定义 action 名称（即子命令名）
    action_name: str = "base"

    def __init__(self, store: Optional[LedgerStore] = None):
        self.store = store
        self.start_time = 0.0
        self.artifacts: Dict[str, str] = {}

    def execute(self, context: ActionContext, payload: Dict[str, Any]) -> ExperimentResult:
        """
        执行 Action（模板方法）

        子类不要覆盖这个方法，而是实现 _do_action
        """
        self.start_time = time.time()
        self.artifacts = {}
        logger.info(f"[{self.action_name}] 开始执行 run_id={context.run_id}")

        try:
            result = self._do_action(context, payload)
        except BesselError as e:
            logger.error(f"[{self.action_name}] {e.code}: {e}")
            result = ExperimentResult(
                ok=False,
                action=self.action_name,
                error_code=e.code,
                error_message=str(e),
            )
            self._save_error(context, e.code, str(e))
        except Exception as e:
            logger.exception(f"[{self.action_name}] 未预期的异常")
            result = ExperimentResult(
                ok=False,
                action=self.action_name,
                error_code="EXCEPTION",
                error_message=str(e),
            )
            self._save_error(context, "EXCEPTION", str(e))

        result.evidence = dict(self.artifacts) or None
        result.timing_ms = int((time.time() - self.start_time) * 1000)
        return result

    @abstractmethod
    def _do_action(self, context: ActionContext, payload: Dict[str, Any]) -> ExperimentResult:
        """
        执行具体实验（子类实现）

        Args:
            context: 执行上下文
            payload: 子命令参数

        Returns:
            ExperimentResult
        """
        pass

    # ==================== 产物 ====================

    def write_csv(self, context: ActionContext, name: str, header: List[str], rows: List[list]) -> Optional[str]:
        if not self.store:
            return None
        path = self.store.write_csv(context.run_id, name, header, rows)
        self.artifacts[name] = path
        return path

    def write_json(self, context: ActionContext, name: str, payload: Dict[str, Any]) -> Optional[str]:
        if not self.store:
            return None
        path = self.store.write_json(context.run_id, name, payload)
        self.artifacts[name] = path
        return path

    def _save_error(self, context: ActionContext, code: str, message: str):
        if self.store:
            self.artifacts["error.txt"] = self.store.write_text(context.run_id, "error.txt", f"{code}: {message}\n")

    def _finish(self, data: Dict[str, Any], failures: List[str]) -> ExperimentResult:
        """证书全部通过时 ok=True"""
        return ExperimentResult(
            ok=not failures,
            action=self.action_name,
            data=data,
            error_code=None if not failures else "CERTIFICATE_FAILURE",
            error_message=None if not failures else f"{len(failures)} 项证书未通过",
            failures=failures,
        )

    @staticmethod
    def _pairs(context: ActionContext, payload: Dict[str, Any]) -> List[tuple]:
        """payload 或配置中的 (λ, p) 组合"""
        lambdas = payload.get("lambda_list") or context.config.lambda_list
        ps = payload.get("p_list") or context.config.p_list
        return [(float(lam), float(p)) for lam in lambdas for p in ps]
