"""Experiment configuration: JSON in, validated dataclasses out.

Validation failures raise ConfigError, which the CLI maps to exit code 2;
anything failing later is a runtime error (exit 1).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

from ..codebook import CodebookConfig
from ..scenario import ScenarioConfig


class ConfigError(ValueError):
    pass


@dataclass
class PredictorConfig:
    kind: str = "oracle"  # oracle | knn | lqtn | independent
    k: int = 3
    embed_dim: int = 32
    num_heads: int = 4
    ffn_dim: int = 64
    epochs: int = 60
    lr: float = 0.01
    batch_size: int = 32
    optimizer: str = "sgd"
    train_seed: int = 0

    def __post_init__(self):
        if self.kind not in ("oracle", "knn", "lqtn", "independent"):
            raise ConfigError(f"unknown predictor kind {self.kind!r}")
        if self.k < 1:
            raise ConfigError("knn k must be >= 1")


@dataclass
class DatasetConfig:
    n_train: int = 300
    n_test: int = 60
    seed: int = 11

    def __post_init__(self):
        if self.n_train < 0 or self.n_test < 0:
            raise ConfigError("dataset sizes must be nonnegative")


@dataclass
class ExperimentConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    scenario_seed: int = 7
    codebook: CodebookConfig = field(default_factory=lambda: CodebookConfig(4, 1, 2, 1, 2))
    predictor: PredictorConfig = field(default_factory=PredictorConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    ue_counts: list[int] = field(default_factory=lambda: [4, 6])
    q_levels: list[int] = field(default_factory=lambda: [1, 2])
    num_seeds: int = 5
    speed_kmh: list[float] = field(default_factory=lambda: [0.0, 30.0, 60.0])
    feedback_delay_s: float = 0.003
    mobility_ue_count: int = 30
    brute_force_limit: int = 0  # 0 disables the oracle comparison
    output_dir: str = "out"
    seed: int = 0

    def __post_init__(self):
        if self.feedback_delay_s < 0:
            raise ConfigError("feedback delay must be >= 0")
        if self.num_seeds < 1:
            raise ConfigError("num_seeds must be >= 1")
        if not self.ue_counts or not self.q_levels:
            raise ConfigError("ue_counts and q_levels must be nonempty")
        total_rbs = self.scenario.num_bs * self.scenario.rb_count
        for m in self.ue_counts:
            for q in self.q_levels:
                if total_rbs < q * m:
                    raise ConfigError(
                        f"infeasible cell: W={total_rbs} < Q*M={q}*{m}; "
                        "raise rb_count or drop the cell"
                    )


def _build(cls, doc: dict, name: str):
    try:
        return cls(**doc)
    except ConfigError:
        raise
    except TypeError as exc:
        raise ConfigError(f"bad {name} config: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"bad {name} config: {exc}") from None


def experiment_config_from_json(text: str) -> ExperimentConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config root must be an object")
    kwargs = dict(doc)
    if "scenario" in kwargs:
        sc = dict(kwargs["scenario"])
        for key in ("panel", "building_size_range", "building_height_range",
                    "scatterer_height_range"):
            if key in sc:
                sc[key] = tuple(sc[key])
        if "bs_positions" in sc and sc["bs_positions"] is not None:
            sc["bs_positions"] = [tuple(p) for p in sc["bs_positions"]]
        kwargs["scenario"] = _build(ScenarioConfig, sc, "scenario")
    if "codebook" in kwargs:
        kwargs["codebook"] = _build(CodebookConfig, kwargs["codebook"], "codebook")
    if "predictor" in kwargs:
        kwargs["predictor"] = _build(PredictorConfig, kwargs["predictor"], "predictor")
    if "dataset" in kwargs:
        kwargs["dataset"] = _build(DatasetConfig, kwargs["dataset"], "dataset")
    return _build(ExperimentConfig, kwargs, "experiment")


def load_experiment_config(path: str | Path) -> ExperimentConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    return experiment_config_from_json(p.read_text())


def resolved_config_dict(cfg: ExperimentConfig) -> dict:
    """Full resolved config for output manifests."""
    return asdict(cfg)
