from .config import (
    ConfigError,
    DatasetConfig,
    ExperimentConfig,
    PredictorConfig,
    experiment_config_from_json,
    load_experiment_config,
)
from .experiments import (
    build_predictor,
    generate_dataset,
    realized_throughput,
    run_mobility_experiment,
    run_static_experiment,
    write_mobility_report,
    write_static_report,
)

__all__ = [
    "ConfigError",
    "DatasetConfig",
    "ExperimentConfig",
    "PredictorConfig",
    "build_predictor",
    "experiment_config_from_json",
    "generate_dataset",
    "load_experiment_config",
    "realized_throughput",
    "run_mobility_experiment",
    "run_static_experiment",
    "write_mobility_report",
    "write_static_report",
]
