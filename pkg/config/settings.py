"""
Bessel 弱分解实验配置文件
默认值可被配置文件、环境变量（.env）和命令行参数依次覆盖
"""
import os
from dataclasses import dataclass, field, fields, replace
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv

load_dotenv()


@dataclass(frozen=True)
class QuadratureConfig:
    """θ 积分与主值积分的求积配置"""
    # 相对误差目标
    rel_tol: float = 1e-10

    # 自适应二分的最大深度
    max_subdivisions: int = 60

    # 每个面板的 Gauss-Legendre 节点数
    nodes_per_panel: int = 16

    # 初始均匀面板数
    initial_panels: int = 4

    # 主值外推的容差（相对）
    pv_rel_tol: float = 1e-6

    # 是否启用基于齐次性的核缓存
    kernel_cache: bool = True


@dataclass
class ExperimentConfig:
    """实验驱动配置"""
    lambda_list: List[float] = field(default_factory=lambda: [0.5, 1.0, 2.0])
    p_list: List[float] = field(default_factory=lambda: [0.85, 0.95, 1.0])

    epsilon: float = 1.0 / 16.0

    # 电池（测试集）随机种子
    seed: int = 20240601

    # 符号函数采样分辨率（每个支撑区间的单元数）
    resolution: int = 1024

    # W1 / W2 以及 b·f 采样的单元数
    operator_cells: int = 64

    output_dir: str = os.getenv("BESSEL_OUTPUT_DIR", "./artifacts")

    # 并行度，1 表示顺序模式（可逐位复现）
    workers: int = int(os.getenv("BESSEL_WORKERS", str(os.cpu_count() or 1)))

    k_max: int = 5

    # 条件 C·log2(M)/M^(2p-1) < ε^p 中的常数 C
    schedule_constant: float = 16.0

    battery_size: int = 50
    symbol_count: int = 16

    # 每层最多近似的原子数，其余原子原样带入下一层残差
    atoms_per_level: int = 512

    # 残差界低于 floor_tolerance · 初始界时停止迭代
    floor_tolerance: float = 1e-12

    # kernel-scan 网格边长
    scan_grid: int = 64

    quadrature: QuadratureConfig = field(default_factory=QuadratureConfig)

    def validate(self) -> "ExperimentConfig":
        """检查 (λ, p) 组合，非法时抛出 ConfigError"""
        from core.errors import ConfigError
        from core.measure_geometry import BesselParam, p_range

        if not self.lambda_list or not self.p_list:
            raise ConfigError("lambda_list 与 p_list 不能为空")
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigError(f"epsilon 必须在 (0, 1) 内，当前: {self.epsilon}")
        for name in ("resolution", "operator_cells", "k_max", "battery_size",
                     "symbol_count", "atoms_per_level", "scan_grid", "workers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} 必须为正整数，当前: {getattr(self, name)}")
        for lam in self.lambda_list:
            if lam <= 0:
                raise ConfigError(f"lambda 必须为正，当前: {lam}")
            admissible = p_range(BesselParam(lam))
            for p in self.p_list:
                if not admissible.contains(p):
                    raise ConfigError(
                        f"p={p} 不在 lambda={lam} 的允许区间 {admissible} 内"
                    )
        return self


def _parse_value(raw: str, current: Any) -> Any:
    """按默认值的类型解析字符串"""
    raw = raw.strip()
    if isinstance(current, bool):
        lowered = raw.lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"无法解析布尔值: {raw}")
    if isinstance(current, list):
        return [float(item) for item in raw.split(",") if item.strip()]
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    return raw


def apply_overrides(config: ExperimentConfig, overrides: Dict[str, str]) -> ExperimentConfig:
    """
    把扁平的 key -> 字符串 覆盖项应用到配置上

    以 quadrature. 开头的键作用于 QuadratureConfig
    """
    from core.errors import ConfigError

    top_names = {f.name for f in fields(ExperimentConfig)} - {"quadrature"}
    quad_names = {f.name for f in fields(QuadratureConfig)}
    quad_updates: Dict[str, Any] = {}

    for key, raw in overrides.items():
        try:
            if key.startswith("quadrature."):
                name = key.split(".", 1)[1]
                if name not in quad_names:
                    raise ConfigError(f"未知的配置项: {key}")
                quad_updates[name] = _parse_value(raw, getattr(config.quadrature, name))
            elif key in top_names:
                setattr(config, key, _parse_value(raw, getattr(config, key)))
            else:
                raise ConfigError(f"未知的配置项: {key}")
        except ValueError as e:
            raise ConfigError(f"配置项 {key} 的值无法解析: {raw} ({e})")

    if quad_updates:
        config.quadrature = replace(config.quadrature, **quad_updates)
    return config


def read_config_file(path: str) -> Dict[str, str]:
    """读取 key = value 格式的配置文件，# 开头为注释"""
    from core.errors import ConfigError

    entries: Dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno} 缺少 '=': {line}")
            key, value = line.split("=", 1)
            entries[key.strip()] = value.strip()
    return entries


def load_experiment_config(
    path: Optional[str] = None,
    overrides: Optional[Dict[str, str]] = None
) -> ExperimentConfig:
    """
    加载实验配置

    优先级：默认值 < 配置文件 < 环境变量 < overrides（命令行）
    """
    config = ExperimentConfig()
    if path:
        apply_overrides(config, read_config_file(path))
    env_overrides = {}
    if os.getenv("BESSEL_OUTPUT_DIR"):
        env_overrides["output_dir"] = os.environ["BESSEL_OUTPUT_DIR"]
    if os.getenv("BESSEL_WORKERS"):
        env_overrides["workers"] = os.environ["BESSEL_WORKERS"]
    apply_overrides(config, env_overrides)
    if overrides:
        apply_overrides(config, overrides)
    return config


# 全局配置实例
quadrature_config = QuadratureConfig()
experiment_config = ExperimentConfig()
