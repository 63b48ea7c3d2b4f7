"""
本地实验记录
负责：运行记录（runs.jsonl）、CSV / JSON 产物写出与读回
"""
import csv
import json
import logging
import os
from datetime import datetime
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

from config import experiment_config

logger = logging.getLogger(__name__)


class RunStatus(str, Enum):
    RUNNING = "running"
    SUCCESS = "success"
    FAILED = "failed"


class ArtifactType(str, Enum):
    CSV = "csv"
    JSON = "json"
    TEXT = "text"


def _format_cell(value: Any) -> str:
    """浮点数用 repr 写出，保证读回后逐位相同"""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_cell(text: str) -> Any:
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


class LedgerStore:
    """写到 output_dir 下的实验记录"""

    INDEX_FILE = "runs.jsonl"

    def __init__(self, output_dir: Optional[str] = None):
        self.output_dir = output_dir or experiment_config.output_dir
        os.makedirs(self.output_dir, exist_ok=True)
        self._sequence: Dict[Tuple[str, int], int] = {}
        self._runs: Dict[str, Dict[str, Any]] = {}

    # ==================== 执行记录 ====================

    def create_run(self, action: str, seed: int = 0) -> str:
        """
        创建执行记录

        Returns:
            run_id，格式 <action>-<seed>-<序号>，同一 store 内确定
        """
        key = (action, seed)
        self._sequence[key] = self._sequence.get(key, 0) + 1
        run_id = f"{action}-{seed}-{self._sequence[key]:03d}"
        os.makedirs(self.run_dir(run_id), exist_ok=True)
        self._runs[run_id] = {
            "id": run_id,
            "action": action,
            "seed": seed,
            "status": RunStatus.RUNNING.value,
            "start_at": datetime.utcnow().isoformat(),
            "artifacts": [],
        }
        return run_id

    def complete_run(self, run_id: str, result: Dict[str, Any], error: Optional[str] = None):
        """完成执行记录并追加到 runs.jsonl"""
        record = self._runs.pop(run_id, {"id": run_id, "artifacts": []})
        record["end_at"] = datetime.utcnow().isoformat()
        record["status"] = (RunStatus.FAILED if error else RunStatus.SUCCESS).value
        record["result"] = result
        if error:
            record["error"] = error
        with open(os.path.join(self.output_dir, self.INDEX_FILE), "a", encoding="utf-8") as f:
            f.write(json.dumps(record, ensure_ascii=False, default=str) + "\n")

    def run_dir(self, run_id: str) -> str:
        return os.path.join(self.output_dir, run_id)

    def list_runs(self) -> List[Dict[str, Any]]:
        path = os.path.join(self.output_dir, self.INDEX_FILE)
        if not os.path.exists(path):
            return []
        with open(path, "r", encoding="utf-8") as f:
            return [json.loads(line) for line in f if line.strip()]

    # ==================== 产物 ====================

    def write_csv(self, run_id: str, name: str, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
        path = os.path.join(self.run_dir(run_id), name)
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_format_cell(v) for v in row])
        self.save_artifact_record(run_id, ArtifactType.CSV, path)
        return path

    @staticmethod
    def read_csv(path: str) -> Tuple[List[str], List[List[Any]]]:
        """读回 CSV：返回 (表头, 行)，数值列解析为 int / float"""
        with open(path, "r", encoding="utf-8", newline="") as f:
            reader = csv.reader(f)
            header = next(reader)
            rows = [[_parse_cell(cell) for cell in row] for row in reader]
        return header, rows

    def write_json(self, run_id: str, name: str, payload: Dict[str, Any]) -> str:
        path = os.path.join(self.run_dir(run_id), name)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(payload, f, ensure_ascii=False, indent=2, sort_keys=True)
            f.write("\n")
        self.save_artifact_record(run_id, ArtifactType.JSON, path)
        return path

    def write_text(self, run_id: str, name: str, text: str) -> str:
        path = os.path.join(self.run_dir(run_id), name)
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
        self.save_artifact_record(run_id, ArtifactType.TEXT, path)
        return path

    def save_artifact_record(self, run_id: str, artifact_type: ArtifactType, local_path: str):
        """记录本地产物路径"""
        record = self._runs.get(run_id)
        if record is not None:
            record["artifacts"].append({"type": artifact_type.value, "path": local_path})
        logger.debug(f"[Ledger] {run_id}: {artifact_type.value} -> {local_path}")


def get_store(output_dir: Optional[str] = None) -> LedgerStore:
    """获取记录实例"""
    return LedgerStore(output_dir)
