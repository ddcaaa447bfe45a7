"""Training loops for the audio and duration models."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import flow
from .duration import DurationModel, duration_forward_transform, loss_duration_cfm, loss_duration_regression, make_duration_batch
from .network import FieldNet
from .numeric.autodiff import Tape
from .numeric.optim import Adam, clip_grad_norm, warmup_linear
from .numeric.rng import Rng
from .sequence import MASK_POLICY, build_context, random_chunk, sample_training_mask
from .synth import Dataset

log = logging.getLogger(__name__)


class TrainingDiverged(FloatingPointError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 2000
    batch_size: int = 16
    lr: float = 1e-4
    warmup: int = 5000
    clip_norm: float = 0.2
    p_uncond: float = 0.2
    p_drop: float | None = None
    r_range: tuple[float, float] | None = None
    masked_loss: bool = True
    sigma_min: float = flow.SIGMA_MIN
    max_frames: int = 1600
    seed: int = 0
    log_interval: int = 100
    checkpoint_interval: int = 0


@dataclass
class TrainLog:
    steps: list[int] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)
    grad_norms: list[float] = field(default_factory=list)
    clipped_norms: list[float] = field(default_factory=list)
    lrs: list[float] = field(default_factory=list)
    checkpoints: list[tuple[int, dict]] = field(default_factory=list)

    def rows(self) -> list[dict]:
        return [
            {"step": s, "loss": l, "grad_norm": g, "clipped_norm": c, "lr": r}
            for s, l, g, c, r in zip(self.steps, self.losses, self.grad_norms, self.clipped_norms, self.lrs)
        ]


def _pad_frames(arrays, fill=0.0, dtype=np.float64):
    n = max(len(a) for a in arrays)
    tail = arrays[0].shape[1:]
    out = np.full((len(arrays), n) + tail, fill, dtype=dtype)
    valid = np.zeros((len(arrays), n), dtype=bool)
    for i, a in enumerate(arrays):
        out[i, : len(a)] = a
        valid[i, : len(a)] = True
    return out, valid


def audio_batch(dataset: Dataset, indices, rng: Rng, cfg: TrainConfig, null_id: int) -> flow.CfmBatch:
    """Masked, context-built, conditioning-dropped batch with fresh ``t`` and ``x0``."""
    phones = dataset.phones
    xs, zs, ms = [], [], []
    for i in indices:
        rec = dataset[int(i)]
        mask = sample_training_mask(rec.alignment, "audio", rng, cfg.p_drop, cfg.r_range)
        window = random_chunk(rec.num_frames, cfg.max_frames, rng)
        xs.append(rec.x[window])
        zs.append(rec.frame_ids(phones)[window])
        ms.append(mask.m[window])
    x1, valid = _pad_frames(xs)
    z, _ = _pad_frames(zs, fill=null_id, dtype=np.int64)
    m, _ = _pad_frames(ms, fill=0, dtype=np.int64)
    b = len(xs)
    batch = flow.CfmBatch(
        x1=x1,
        x0=rng.normal(size=x1.shape),
        t=rng.uniform(0.0, 1.0, size=b),
        x_ctx=build_context(x1, m),
        z=z,
        m=m,
        valid=valid,
    )
    batch, _ = flow.drop_conditioning(batch, cfg.p_uncond, rng, null_id)
    return batch


def _fit(params, loss_fn: Callable[[int], object], cfg: TrainConfig, on_log=None) -> TrainLog:
    opt = Adam(params)
    record = TrainLog()
    last_good = [p.data.copy() for p in params]
    for step in range(cfg.steps):
        with Tape() as tape:
            loss = loss_fn(step)
        value = loss.item()
        if not math.isfinite(value):
            for p, saved in zip(params, last_good):
                p.data = saved
            raise TrainingDiverged(f"non-finite loss at step {step}; parameters restored to the last checkpoint")
        grads = tape.backward(loss, params)
        before, after = clip_grad_norm(grads, cfg.clip_norm)
        lr = warmup_linear(step, cfg.lr, cfg.warmup, cfg.steps)
        opt.step(grads, lr)
        if step % cfg.log_interval == 0 or step == cfg.steps - 1:
            record.steps.append(step)
            record.losses.append(value)
            record.grad_norms.append(before)
            record.clipped_norms.append(after)
            record.lrs.append(lr)
            log.info("step %d loss %.5f grad %.3f lr %.2e", step, value, before, lr)
            if on_log is not None:
                on_log(step, value)
        if cfg.checkpoint_interval and (step + 1) % cfg.checkpoint_interval == 0:
            last_good = [p.data.copy() for p in params]
            record.checkpoints.append((step + 1, {i: d for i, d in enumerate(last_good)}))
    return record


def train_audio(model: FieldNet, dataset: Dataset, cfg: TrainConfig, on_log=None) -> TrainLog:
    rng = Rng(cfg.seed, stream=0xA0D10)
    n = len(dataset)

    def loss_fn(step):
        idx = rng.integers(0, n, size=cfg.batch_size)
        batch = audio_batch(dataset, idx, rng, cfg, model.null_id)
        return flow.loss_audio_cfm(model, batch, masked=cfg.masked_loss, sigma_min=cfg.sigma_min)

    return _fit(model.parameters(), loss_fn, cfg, on_log)


def duration_batch(dataset: Dataset, indices, rng: Rng, cfg: TrainConfig, null_id: int):
    ls, ys, ms = [], [], []
    for i in indices:
        rec = dataset[int(i)]
        mask = sample_training_mask(rec.alignment, "duration", rng, cfg.p_drop, cfg.r_range)
        ls.append(duration_forward_transform(rec.alignment.l, rng, dequantize=True))
        ys.append(rec.phone_ids(dataset.phones))
        ms.append(mask.m_phone)
    l_tf, valid = _pad_frames(ls)
    y, _ = _pad_frames(ys, fill=null_id, dtype=np.int64)
    m, _ = _pad_frames(ms, fill=0, dtype=np.int64)
    batch = make_duration_batch(l_tf, y, m, valid)
    if cfg.p_uncond > 0:
        drop = rng.random(len(ls)) < cfg.p_uncond
        batch.l_ctx[drop] = 0.0
        batch.y[drop] = null_id
    return batch


def train_duration(model: DurationModel, dataset: Dataset, cfg: TrainConfig, on_log=None) -> TrainLog:
    rng = Rng(cfg.seed, stream=0xD0D0)
    n = len(dataset)

    def loss_fn(step):
        idx = rng.integers(0, n, size=cfg.batch_size)
        batch = duration_batch(dataset, idx, rng, cfg, model.null_id)
        if model.mode == "regression":
            return loss_duration_regression(model, batch)
        b = batch.l.shape[0]
        return loss_duration_cfm(model, batch, rng.normal(size=batch.l.shape + (1,)), rng.uniform(0, 1, b), cfg.sigma_min)

    return _fit(model.parameters(), loss_fn, cfg, on_log)


def config_echo(*configs) -> dict:
    out = {}
    for c in configs:
        out[type(c).__name__] = asdict(c)
    return out


__all__ = [
    "MASK_POLICY",
    "TrainConfig",
    "TrainLog",
    "TrainingDiverged",
    "audio_batch",
    "duration_batch",
    "train_audio",
    "train_duration",
]
