"""Run configuration: every knob of a data/train/sample run in one serializable object."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace

from .network import NetConfig
from .ode import SolverConfig
from .synth import ToyProcessSpec
from .training import TrainConfig

CONFIG_VERSION = 1


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    data: ToyProcessSpec = field(default_factory=ToyProcessSpec)
    n_train: int = 2000
    data_seed: int = 1
    norm_mean: float | None = None  # None: estimate from 30k frames of the process
    norm_std: float | None = None
    audio_net: NetConfig = field(default_factory=NetConfig)
    audio_train: TrainConfig = field(default_factory=TrainConfig)
    duration_mode: str = "regression"
    duration_dim: int = 32
    duration_layers: int = 2
    duration_train: TrainConfig = field(default_factory=TrainConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    alpha: float = 0.7
    duration_alpha: float = 0.0

    def __post_init__(self):
        if (self.norm_mean is None) != (self.norm_std is None):
            raise ValueError("give both normalization mean and std, or neither")
        if self.norm_std is not None and self.norm_std <= 0:
            raise ValueError("normalization std must be positive")
        if self.n_train < 1:
            raise ValueError("n_train must be positive")

    @classmethod
    def desk(cls, **overrides) -> "RunConfig":
        """Settings that train in minutes on one CPU core.

        The short runs need a higher peak rate and a short warmup to converge.
        """
        fast = TrainConfig(steps=1500, batch_size=16, lr=1e-3, warmup=100)
        base = cls(audio_train=fast, duration_train=replace(fast, steps=300, warmup=30))
        return replace(base, **overrides)

    def to_dict(self) -> dict:
        return {"version": CONFIG_VERSION, **asdict(self)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        version = d.pop("version", CONFIG_VERSION)
        if version != CONFIG_VERSION:
            raise ValueError(f"unsupported run config version {version}")
        nested = {
            "data": ToyProcessSpec,
            "audio_net": NetConfig,
            "audio_train": TrainConfig,
            "duration_train": TrainConfig,
            "solver": SolverConfig,
        }
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown run config keys: {sorted(unknown)}")
        for key, kind in nested.items():
            if key in d:
                d[key] = _build(kind, d[key])
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        return cls.from_dict(json.loads(text))


def _build(kind, values: dict):
    names = {f.name for f in fields(kind)}
    unknown = set(values) - names
    if unknown:
        raise ValueError(f"unknown {kind.__name__} keys: {sorted(unknown)}")
    return kind(**{k: tuple(v) if isinstance(v, list) else v for k, v in values.items()})
