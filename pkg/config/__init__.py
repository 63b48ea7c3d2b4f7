from .settings import (
    QuadratureConfig, ExperimentConfig, quadrature_config, experiment_config,
    load_experiment_config, read_config_file, apply_overrides
)

__all__ = [
    "QuadratureConfig", "ExperimentConfig", "quadrature_config", "experiment_config",
    "load_experiment_config", "read_config_file", "apply_overrides"
]
