"""Run driver: datasets, models, training and checkpoint directories from a RunConfig."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .config import RunConfig
from .duration import DurationModel
from .network import FieldNet, load_checkpoint, save_checkpoint
from .reports import write_csv, write_svg
from .synth import Dataset, Normalizer, ToyProcess, generate_dataset
from .tasks import Infiller
from .training import TrainLog, train_audio, train_duration

AUDIO_CKPT = "audio.ckpt"
DURATION_CKPT = "duration.ckpt"
LOSS_COLUMNS = ("step", "loss", "grad_norm", "clipped_norm", "lr")


def make_dataset(run_config: RunConfig, n: int | None = None, seed: int | None = None) -> Dataset:
    normalizer = None
    if run_config.norm_mean is not None:
        normalizer = Normalizer(run_config.norm_mean, run_config.norm_std)
    return generate_dataset(
        run_config.data,
        run_config.n_train if n is None else n,
        seed=run_config.data_seed if seed is None else seed,
        normalizer=normalizer,
    )


def build_models(run_config: RunConfig, vocab: int) -> dict:
    audio = FieldNet(replace(run_config.audio_net, vocab=vocab), seed=run_config.seed)
    duration = DurationModel.create(
        run_config.duration_mode,
        vocab,
        seed=run_config.seed + 1,
        dim=run_config.duration_dim,
        layers=run_config.duration_layers,
        ffn_width=2 * run_config.duration_dim,
    )
    return {"audio": audio, "duration": duration}


@dataclass
class TrainOutcome:
    logs: dict[str, TrainLog] = field(default_factory=dict)
    checkpoints: dict[str, Path] = field(default_factory=dict)
    curves: list[Path] = field(default_factory=list)


def train(models: dict, dataset: Dataset, run_config: RunConfig, out_dir=None, on_log=None) -> TrainOutcome:
    """Train every model in ``models`` ("audio" and/or "duration").

    With ``out_dir`` set, final checkpoints, per-model loss CSVs and an SVG of
    the loss curves are written there.
    """
    unknown = set(models) - {"audio", "duration"}
    if unknown:
        raise ValueError(f"unknown model roles {sorted(unknown)}")
    outcome = TrainOutcome()
    echo = run_config.to_dict()
    if "audio" in models:
        cfg = replace(run_config.audio_train, seed=run_config.seed)
        outcome.logs["audio"] = train_audio(models["audio"], dataset, cfg, _tagged(on_log, "audio"))
    if "duration" in models:
        cfg = replace(run_config.duration_train, seed=run_config.seed + 1)
        outcome.logs["duration"] = train_duration(models["duration"], dataset, cfg, _tagged(on_log, "duration"))
    if out_dir is None:
        return outcome
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    extras = {"run_config": echo, "normalizer": {"mean": dataset.normalizer.mean, "std": dataset.normalizer.std}}
    if "audio" in models:
        path = out / AUDIO_CKPT
        save_checkpoint(path, models["audio"], {**extras, "role": "audio"})
        outcome.checkpoints["audio"] = path
    if "duration" in models:
        dm = models["duration"]
        path = out / DURATION_CKPT
        save_checkpoint(path, dm.net, {**extras, "role": "duration", "mode": dm.mode, "use_context": dm.use_context})
        outcome.checkpoints["duration"] = path
    series = {}
    for name, log in outcome.logs.items():
        outcome.curves.append(write_csv(out / f"loss_{name}.csv", log.rows(), LOSS_COLUMNS, echo, f"loss-{name}"))
        series[name] = (log.steps, log.losses)
    outcome.curves.append(write_svg(out / "loss.svg", series, "training loss", "step", "loss", echo, "loss-curves"))
    return outcome


def _tagged(on_log, name):
    if on_log is None:
        return None
    return lambda step, loss: on_log(name, step, loss)


def load_models(model_dir) -> tuple[Infiller, RunConfig, Normalizer]:
    """Rebuild the task runner saved by :func:`train`."""
    model_dir = Path(model_dir)
    audio, meta = load_checkpoint(model_dir / AUDIO_CKPT)
    run_config = RunConfig.from_dict(meta["run_config"])
    normalizer = Normalizer(**meta["normalizer"])
    duration = None
    if (model_dir / DURATION_CKPT).exists():
        net, dmeta = load_checkpoint(model_dir / DURATION_CKPT)
        duration = DurationModel(dmeta["mode"], net, dmeta["use_context"])
    phones = ToyProcess(run_config.data).phones
    if audio.config.vocab != phones.size:
        raise ValueError(f"audio model vocabulary {audio.config.vocab} does not match {phones.size} phones")
    infiller = Infiller(audio, duration, phones, solver=run_config.solver, duration_alpha=run_config.duration_alpha)
    return infiller, run_config, normalizer


def seeds_for(run_config: RunConfig, n: int) -> np.ndarray:
    """Per-request sampling seeds derived from the run seed."""
    return run_config.seed * 1_000_003 + np.arange(n)
