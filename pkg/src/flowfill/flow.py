"""Optimal-transport conditional paths, the CFM objectives and guidance.

The OT path shrinks a standard-normal prior toward a data point ``x1``::

    mu_t    = t * x1
    sigma_t = 1 - (1 - sigma_min) * t
    phi_t(x0) = sigma_t * x0 + t * x1

and its conditional field is constant along each straight trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .numeric import autodiff as ad
from .numeric.rng import Rng

SIGMA_MIN = 1e-5


@dataclass(frozen=True)
class OtPathConfig:
    sigma_min: float = SIGMA_MIN

    def __post_init__(self):
        if not 0.0 <= self.sigma_min < 1.0:
            raise ValueError(f"sigma_min must lie in [0, 1), got {self.sigma_min}")


def _check_t(t) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0.0) or np.any(t > 1.0) or not np.all(np.isfinite(t)):
        raise ValueError(f"flow time must lie in [0, 1], got {t}")
    return t


def _same_shape(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise ad.ShapeError(f"{what}: shapes {a.shape} and {b.shape} differ")


def _per_item(t: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Broadcast a scalar or per-batch-item ``t`` against ``x``."""
    if t.ndim == 0:
        return t
    return t.reshape(t.shape + (1,) * (x.ndim - t.ndim))


def ot_mean_std(t, x1, sigma_min: float = SIGMA_MIN):
    t = _check_t(t)
    x1 = np.asarray(x1, dtype=np.float64)
    return _per_item(t, x1) * x1, 1.0 - (1.0 - sigma_min) * t


def conditional_flow(t, x0, x1, sigma_min: float = SIGMA_MIN) -> np.ndarray:
    t = _check_t(t)
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    _same_shape(x0, x1, "conditional_flow")
    tt = _per_item(t, x0)
    return (1.0 - (1.0 - sigma_min) * tt) * x0 + tt * x1


def conditional_vector_field(t, x, x1, sigma_min: float = SIGMA_MIN) -> np.ndarray:
    t = _check_t(t)
    x = np.asarray(x, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    _same_shape(x, x1, "conditional_vector_field")
    denom = 1.0 - (1.0 - sigma_min) * _per_item(t, x)
    if np.any(denom <= 1e-12):
        raise ZeroDivisionError(f"conditional field is singular at t={t} with sigma_min={sigma_min}")
    return (x1 - (1.0 - sigma_min) * x) / denom


def cfm_regression_target(x0, x1, sigma_min: float = SIGMA_MIN) -> np.ndarray:
    """Constant-in-time regression target ``x1 - (1 - sigma_min) x0``."""
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    _same_shape(x0, x1, "cfm_regression_target")
    return x1 - (1.0 - sigma_min) * x0


@dataclass
class CfmBatch:
    """One training batch for a conditional field.

    Arrays are ``(B, N, F)`` except ``t`` (``(B,)``), ``z`` (``(B, N)`` ints) and
    ``m`` (``(B, N)`` in {0, 1}).  ``valid`` marks real (non-padding) frames.
    """

    x1: np.ndarray
    x0: np.ndarray
    t: np.ndarray
    x_ctx: np.ndarray
    z: np.ndarray
    m: np.ndarray
    valid: np.ndarray | None = None

    def __post_init__(self):
        n_shape = self.x1.shape
        for name in ("x0", "x_ctx"):
            _same_shape(getattr(self, name), self.x1, f"CfmBatch.{name}")
        if self.m.shape != n_shape[:-1] or self.z.shape != n_shape[:-1]:
            raise ad.ShapeError(
                f"CfmBatch: mask {self.m.shape} / transcript {self.z.shape} do not match frames {n_shape}"
            )
        if self.valid is None:
            self.valid = np.ones(n_shape[:-1], dtype=bool)

    def check_context(self) -> None:
        if np.any(self.x_ctx[self.m.astype(bool)] != 0.0):
            raise ValueError("x_ctx must be zero on masked frames")

    def flow_input(self, sigma_min: float = SIGMA_MIN) -> np.ndarray:
        return conditional_flow(self.t, self.x0, self.x1, sigma_min)

    def target(self, sigma_min: float = SIGMA_MIN) -> np.ndarray:
        return cfm_regression_target(self.x0, self.x1, sigma_min)


def masked_mse(pred, target: np.ndarray, weights: np.ndarray) -> ad.Tensor:
    """Squared error summed over entries with weight 1, divided by their count.

    ``weights`` has the frame shape ``(B, N)``; it is expanded over features.
    """
    weights = np.asarray(weights, dtype=np.float64)
    count = weights.sum() * target.shape[-1]
    if count == 0:
        raise ValueError("loss has no supervised frames (mask is all zero)")
    err = ad.square(ad.sub(pred, target))
    return ad.mul(ad.sum_(ad.mul(err, weights[..., None])), 1.0 / count)


def loss_audio_cfm(model, batch: CfmBatch, masked: bool = True, sigma_min: float = SIGMA_MIN) -> ad.Tensor:
    """CFM loss over all valid frames, or only over masked frames when ``masked``."""
    w = batch.flow_input(sigma_min)
    pred = model(w, batch.x_ctx, batch.z, batch.t, valid=batch.valid)
    weights = batch.valid.astype(np.float64)
    if masked:
        weights = weights * batch.m
    return masked_mse(pred, batch.target(sigma_min), weights)


def cfg_combine(v_cond, v_uncond, alpha: float) -> np.ndarray:
    """Guided field ``(1 + alpha) v_cond - alpha v_uncond``; exact identity at ``alpha == 0``."""
    v_cond = np.asarray(v_cond, dtype=np.float64)
    if alpha == 0:
        return v_cond
    v_uncond = np.asarray(v_uncond, dtype=np.float64)
    _same_shape(v_cond, v_uncond, "cfg_combine")
    return (1.0 + alpha) * v_cond - alpha * v_uncond


def drop_conditioning(batch: CfmBatch, p_uncond: float, rng: Rng, null_id: int) -> tuple[CfmBatch, np.ndarray]:
    """Independently per item, zero ``x_ctx`` and replace ``z`` by ``null_id`` with probability ``p_uncond``.

    Returns the new batch and the boolean drop decisions.
    """
    if not 0.0 <= p_uncond <= 1.0:
        raise ValueError(f"p_uncond must lie in [0, 1], got {p_uncond}")
    n_items = batch.x1.shape[0]
    dropped = rng.random(n_items) < p_uncond
    if not dropped.any():
        return batch, dropped
    x_ctx = batch.x_ctx.copy()
    z = batch.z.copy()
    x_ctx[dropped] = 0.0
    z[dropped] = null_id
    return replace(batch, x_ctx=x_ctx, z=z), dropped
