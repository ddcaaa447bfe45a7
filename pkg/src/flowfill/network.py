"""Transformer parameterization of the conditional vector field.

Per frame, the noisy sample ``w``, the audio context ``x_ctx`` and the phone
embedding of ``z`` are concatenated and projected to the model width.  The
sinusoidal embedding of the flow time is appended as one extra element along
the time axis; its output slot is dropped before the output projection.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .numeric import autodiff as ad
from .numeric.autodiff import Tensor
from .numeric.nn import Embedding, Linear, Module, TransformerStack, sinusoidal_embed
from .numeric.rng import Rng

CHECKPOINT_MAGIC = b"FLOWFILL-CKPT"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class NetConfig:
    feat_dim: int = 8  # F
    vocab: int = 50  # K, including SIL and the null id
    phone_dim: int = 16  # H
    dim: int = 64  # D
    layers: int = 4
    heads: int = 4
    ffn_width: int = 128
    skips: bool = True
    streams: int = 2  # 2: (w, context) ; 1: context only (regression)
    use_time: bool = True
    max_positions: int = 2048
    null_id: int | None = None

    def __post_init__(self):
        if self.skips and self.layers % 2:
            raise ValueError("skip connections need an even number of layers")
        if self.dim % self.heads:
            raise ValueError(f"dim {self.dim} not divisible by {self.heads} heads")
        if self.streams not in (1, 2):
            raise ValueError("streams must be 1 or 2")

    @property
    def input_width(self) -> int:
        return self.streams * self.feat_dim + self.phone_dim


class FieldNet(Module):
    """``v_t(w, x_ctx, z)`` (or ``g(l_ctx, y)`` with one stream and no time token)."""

    def __init__(self, config: NetConfig, seed: int = 0):
        self.config = config
        rng = Rng(seed, stream=0xF1E1D)
        self.phone_lookup = Embedding(config.vocab, config.phone_dim, rng)
        self.input_projection = Linear(config.input_width, config.dim, rng, bias=False)
        self.stack = TransformerStack(config.dim, config.layers, config.heads, config.ffn_width, rng, config.skips)
        self.output_projection = Linear(config.dim, config.feat_dim, rng, init_scale=0.02)

    @property
    def null_id(self) -> int:
        return self.config.vocab - 1 if self.config.null_id is None else self.config.null_id

    def _positions(self, n: int) -> np.ndarray:
        if n >= self.config.max_positions:
            raise ValueError(f"sequence of {n} frames exceeds max_positions={self.config.max_positions}")
        return sinusoidal_embed(np.arange(n), self.config.dim, scale=1.0)

    def __call__(self, w, x_ctx, z, t=None, valid=None, ablate: int | None = None) -> Tensor:
        return self.forward(w, x_ctx, z, t, valid, ablate)

    def forward(self, w, x_ctx, z, t=None, valid=None, ablate: int | None = None) -> Tensor:
        cfg = self.config
        z = np.asarray(z)
        if z.ndim == 1:
            return self._unbatched(w, x_ctx, z, t, valid, ablate)
        b, n = z.shape
        if z.size and (z.min() < 0 or z.max() >= cfg.vocab):
            raise ValueError(f"unknown phone id outside [0, {cfg.vocab})")
        ctx_shape = ad._value(x_ctx).shape
        if ctx_shape != (b, n, cfg.feat_dim):
            raise ad.ShapeError(f"context shape {ctx_shape} does not match transcript {(b, n)} x F={cfg.feat_dim}")
        parts = []
        if cfg.streams == 2:
            w_shape = ad._value(w).shape
            if w_shape != ctx_shape:
                raise ad.ShapeError(f"sample shape {w_shape} differs from context shape {ctx_shape}")
            parts.append(w)
        parts += [x_ctx, self.phone_lookup(z)]
        h = self.input_projection(ad.concat(parts, axis=-1))
        h = ad.add(h, self._positions(n))
        key_mask = None if valid is None else np.asarray(valid, dtype=bool)
        if cfg.use_time:
            if t is None:
                raise ValueError("this network needs a flow time t")
            t = np.broadcast_to(np.asarray(t, dtype=np.float64), (b,))
            if np.any(t < 0) or np.any(t > 1):
                raise ValueError("flow time must lie in [0, 1]")
            token = sinusoidal_embed(t, cfg.dim) + sinusoidal_embed(cfg.max_positions, cfg.dim, scale=1.0)
            h = ad.concat([h, token[:, None, :]], axis=1)
            if key_mask is not None:
                key_mask = np.concatenate([key_mask, np.ones((b, 1), dtype=bool)], axis=1)
        h = self.stack(h, key_mask, ablate=ablate)
        if cfg.use_time:
            h = h[:, :n]
        return self.output_projection(h)

    def _unbatched(self, w, x_ctx, z, t, valid, ablate) -> Tensor:
        def lift(a):
            return None if a is None else ad.reshape(a, (1,) + ad._value(a).shape)

        out = self.forward(
            lift(w) if w is not None else None,
            lift(x_ctx),
            z[None],
            None if t is None else np.reshape(t, (1,)),
            None if valid is None else np.asarray(valid)[None],
            ablate,
        )
        return ad.reshape(out, out.shape[1:])

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for name, p in self.named_parameters():
            if state[name].shape != p.shape:
                raise ValueError(f"parameter {name}: checkpoint shape {state[name].shape} != {p.shape}")
            p.data = np.array(state[name], dtype=np.float64)


# alias used by callers that think of it as the audio model
VectorFieldModel = FieldNet


def parameter_summary(model: FieldNet) -> dict[str, int]:
    counts = {
        "phone_lookup": model.phone_lookup.num_parameters(),
        "input_projection": model.input_projection.num_parameters(),
        "stack": model.stack.num_parameters(),
        "output_projection": model.output_projection.num_parameters(),
    }
    counts["total"] = sum(counts.values())
    return counts


def save_checkpoint(path, model: FieldNet, header: dict | None = None) -> None:
    """One binary file: magic, version, JSON header, then float64 little-endian blobs."""
    state = model.state_dict()
    layout, offset = [], 0
    for name, arr in state.items():
        layout.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size
    meta = {"version": CHECKPOINT_VERSION, "config": asdict(model.config), "params": layout, **(header or {})}
    blob = json.dumps(meta, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC + b"\n")
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        for arr in state.values():
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    magic = CHECKPOINT_MAGIC + b"\n"
    if not raw.startswith(magic):
        raise ValueError(f"{path}: not a checkpoint (bad magic)")
    pos = len(magic)
    (size,) = struct.unpack("<Q", raw[pos : pos + 8])
    meta = json.loads(raw[pos + 8 : pos + 8 + size])
    if meta.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {meta.get('version')}")
    data = np.frombuffer(raw[pos + 8 + size :], dtype="<f8")
    state = {}
    for entry in meta["params"]:
        n = int(np.prod(entry["shape"], dtype=np.int64))
        state[entry["name"]] = data[entry["offset"] : entry["offset"] + n].reshape(entry["shape"]).copy()
    return meta, state


def load_checkpoint(path) -> tuple[FieldNet, dict]:
    meta, state = read_checkpoint(path)
    model = FieldNet(NetConfig(**meta["config"]))
    model.load_state_dict(state)
    return model, meta
