"""Phone-duration models: masked L1 regression and a flow-matching sampler.

Durations live in ``log(1 + l)`` space.  During training the integer
durations are dequantized with ``U[-0.5, 0.5]`` noise first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import flow
from .numeric import autodiff as ad
from .network import FieldNet, NetConfig
from .numeric.rng import Rng
from .ode import SolverConfig, solve_guided

MODES = ("regression", "flow")


def duration_forward_transform(l, rng: Rng | None = None, dequantize: bool = False) -> np.ndarray:
    l = np.asarray(l, dtype=np.float64)
    if np.any(l < 0):
        raise ValueError("durations must be nonnegative")
    if dequantize:
        if rng is None:
            raise ValueError("dequantization needs an rng")
        l = l + rng.uniform(-0.5, 0.5, size=l.shape)
    return np.log1p(l)


def duration_inverse_transform(v) -> np.ndarray:
    """``round(exp(v) - 1)`` clipped at zero, as integers."""
    v = np.asarray(v, dtype=np.float64)
    return np.maximum(np.rint(np.expm1(v)), 0).astype(np.int64)


def duration_net_config(mode: str, vocab: int, **overrides) -> NetConfig:
    if mode not in MODES:
        raise ValueError(f"unknown duration mode {mode!r}")
    base = dict(feat_dim=1, vocab=vocab, phone_dim=16, dim=32, layers=2, heads=4, ffn_width=64)
    if mode == "regression":
        base.update(streams=1, use_time=False)
    base.update(overrides)
    return NetConfig(**base)


class DurationModel:
    """A duration network plus its mode.

    ``use_context=False`` gives the unconditional regression variant that
    never sees ``l_ctx``.
    """

    def __init__(self, mode: str, net: FieldNet, use_context: bool = True):
        if mode not in MODES:
            raise ValueError(f"unknown duration mode {mode!r}")
        if (mode == "regression") == net.config.use_time:
            raise ValueError(f"network config does not fit {mode} mode")
        self.mode = mode
        self.net = net
        self.use_context = use_context

    @classmethod
    def create(cls, mode: str, vocab: int, seed: int = 0, use_context: bool = True, **overrides) -> "DurationModel":
        return cls(mode, FieldNet(duration_net_config(mode, vocab, **overrides), seed), use_context)

    @property
    def null_id(self) -> int:
        return self.net.null_id

    def parameters(self):
        return self.net.parameters()

    def context(self, l_ctx_tf: np.ndarray) -> np.ndarray:
        return l_ctx_tf if self.use_context else np.zeros_like(l_ctx_tf)

    def regress(self, l_ctx_tf, y, valid=None) -> ad.Tensor:
        if self.mode != "regression":
            raise ValueError("regress() needs a regression-mode model")
        return self.net(None, self.context(l_ctx_tf), y, valid=valid)

    def __call__(self, w, l_ctx_tf, y, t, valid=None) -> ad.Tensor:
        """Vector field in flow mode (matches the audio model's call signature)."""
        if self.mode != "flow":
            raise ValueError("vector field needs a flow-mode model")
        return self.net(w, self.context(np.asarray(l_ctx_tf)), y, t, valid=valid)


@dataclass
class DurationBatch:
    """Padded duration batch: ``l`` and ``l_ctx`` are ``(B, M)`` transformed values."""

    l: np.ndarray
    l_ctx: np.ndarray
    y: np.ndarray
    m_phone: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        shapes = {self.l.shape, self.l_ctx.shape, self.y.shape, self.m_phone.shape, self.valid.shape}
        if len(shapes) != 1:
            raise ad.ShapeError(f"duration batch fields disagree in shape: {shapes}")


def make_duration_batch(l_tf: np.ndarray, y: np.ndarray, m_phone: np.ndarray, valid: np.ndarray | None = None) -> DurationBatch:
    l_tf = np.asarray(l_tf, dtype=np.float64)
    m_phone = np.asarray(m_phone)
    valid = np.ones(l_tf.shape, dtype=bool) if valid is None else np.asarray(valid, dtype=bool)
    l_ctx = np.where(m_phone.astype(bool), 0.0, l_tf)
    return DurationBatch(l_tf, l_ctx, np.asarray(y), m_phone, valid)


def loss_duration_regression(model: DurationModel, batch: DurationBatch) -> ad.Tensor:
    """Mean absolute error over masked phones in transformed space."""
    weights = (batch.m_phone * batch.valid).astype(np.float64)
    count = weights.sum()
    if count == 0:
        raise ValueError("duration loss needs at least one masked phone")
    pred = model.regress(batch.l_ctx[..., None], batch.y, valid=batch.valid)
    err = ad.abs_(ad.sub(pred, batch.l[..., None]))
    return ad.mul(ad.sum_(ad.mul(err, weights[..., None])), 1.0 / count)


def loss_duration_cfm(model: DurationModel, batch: DurationBatch, x0: np.ndarray, t: np.ndarray, sigma_min: float = flow.SIGMA_MIN) -> ad.Tensor:
    """Masked CFM loss on the 1-wide transformed durations."""
    cfm = flow.CfmBatch(
        x1=batch.l[..., None],
        x0=x0,
        t=t,
        x_ctx=batch.l_ctx[..., None],
        z=batch.y,
        m=batch.m_phone,
        valid=batch.valid,
    )
    return flow.loss_audio_cfm(model, cfm, masked=True, sigma_min=sigma_min)


def _pad(seqs, fill, dtype):
    m = max(len(s) for s in seqs)
    out = np.full((len(seqs), m), fill, dtype=dtype)
    valid = np.zeros((len(seqs), m), dtype=bool)
    for i, s in enumerate(seqs):
        out[i, : len(s)] = s
        valid[i, : len(s)] = True
    return out, valid


def predict_durations(
    model: DurationModel,
    ys,
    l_ctxs,
    masks,
    solver: SolverConfig | None = None,
    rng: Rng | None = None,
    seeds=None,
):
    """Fill masked durations for a list of utterances.

    Unmasked entries are copied from the integer context unchanged.  Flow mode
    draws one sample per utterance; noise for utterance ``i`` comes from
    ``Rng(seeds[i])`` when ``seeds`` is given, else from ``rng``.
    """
    single = np.ndim(ys[0]) == 0
    if single:
        ys, l_ctxs, masks = [ys], [l_ctxs], [masks]
        seeds = None if seeds is None else [seeds]
    y, valid = _pad([np.asarray(v) for v in ys], model.null_id, np.int64)
    lc, _ = _pad([np.asarray(v) for v in l_ctxs], 0, np.int64)
    m, _ = _pad([np.asarray(v) for v in masks], 0, np.int64)
    lc = np.where(m.astype(bool), 0, lc)
    ctx_tf = duration_forward_transform(lc)[..., None]
    if model.mode == "regression":
        pred_tf = model.regress(ctx_tf, y, valid=valid).data[..., 0]
    else:
        solver = solver or SolverConfig()
        x0 = _noise(y.shape + (1,), rng, seeds)
        trace = solve_guided(model, ctx_tf, y, solver, x0, valid=valid)
        pred_tf = trace.endpoint[..., 0]
    pred = np.where(m.astype(bool), duration_inverse_transform(pred_tf), lc)
    out = [pred[i, : len(ys[i])] for i in range(len(ys))]
    return out[0] if single else out


def _noise(shape, rng: Rng | None, seeds) -> np.ndarray:
    if seeds is not None:
        return np.stack([Rng(int(s), stream=0xD0).normal(size=shape[1:]) for s in seeds])
    if rng is None:
        raise ValueError("flow-mode sampling needs an rng or per-item seeds")
    return rng.normal(size=shape)


def predict_duration_mean(model: DurationModel, ys, l_ctxs, masks, n_samples: int = 20, solver=None, seed: int = 0):
    """Point estimate: the mean over ``n_samples`` draws (flow), or the regression output."""
    if model.mode == "regression":
        out = predict_durations(model, ys, l_ctxs, masks)
        return [o.astype(np.float64) for o in out] if isinstance(out, list) else out.astype(np.float64)
    draws = [
        predict_durations(model, ys, l_ctxs, masks, solver=solver, rng=Rng(seed, stream=k))
        for k in range(n_samples)
    ]
    if isinstance(draws[0], list):
        return [np.mean([d[i] for d in draws], axis=0) for i in range(len(draws[0]))]
    return np.mean(draws, axis=0)
