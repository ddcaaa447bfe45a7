"""Integrating a learned vector field from t=0 to t=1."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .flow import cfg_combine

Field = Callable[[float, np.ndarray], np.ndarray]

METHODS = ("euler", "midpoint", "adaptive")
EVALS_PER_STEP = {"euler": 1, "midpoint": 2}


class NonFiniteStateError(FloatingPointError):
    def __init__(self, step: int, t: float):
        super().__init__(f"non-finite state at step {step} (t={t:.6g})")
        self.step = step
        self.t = t


@dataclass(frozen=True)
class SolverConfig:
    method: str = "midpoint"
    step_size: float = 0.0625
    atol: float = 1e-5
    rtol: float = 1e-5
    cfg_alpha: float = 0.0
    keep_states: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown solver method {self.method!r}; choose from {METHODS}")
        if self.method != "adaptive":
            n = self.num_steps
            if n < 1 or abs(n * self.step_size - 1.0) > 1e-12:
                raise ValueError(f"step size {self.step_size} does not divide [0, 1] into whole steps")
        if self.atol <= 0 or self.rtol <= 0:
            raise ValueError("tolerances must be positive")

    @property
    def num_steps(self) -> int:
        return int(round(1.0 / self.step_size))

    @classmethod
    def for_nfe(cls, nfe: int, cfg_alpha: float = 0.0, **kwargs) -> "SolverConfig":
        """Fixed-step config spending exactly ``nfe`` field evaluations.

        Midpoint is preferred; Euler covers budgets too small for it.
        """
        per_point = 2 if cfg_alpha != 0 else 1
        for method in ("midpoint", "euler"):
            evals = EVALS_PER_STEP[method] * per_point
            if nfe % evals == 0 and nfe >= evals:
                steps = nfe // evals
                return cls(method=method, step_size=1.0 / steps, cfg_alpha=cfg_alpha, **kwargs)
        raise ValueError(f"NFE {nfe} is not reachable with fixed-step solvers (alpha={cfg_alpha})")


@dataclass
class SolveTrace:
    nfe: int
    endpoint: np.ndarray
    times: list[float] = field(default_factory=list)
    states: list[np.ndarray] = field(default_factory=list)
    wall_time: float = 0.0


class _Counted:
    def __init__(self, fn: Field, evals_per_call: int = 1):
        self.fn = fn
        self.per_call = evals_per_call
        self.nfe = 0

    def __call__(self, t: float, w: np.ndarray) -> np.ndarray:
        self.nfe += self.per_call
        return self.fn(t, w)


def _grid(n: int) -> list[float]:
    # exact rationals so the final point is exactly 1.0
    return [float(Fraction(i, n)) for i in range(n + 1)]


def solve(field_fn: Field, x0, config: SolverConfig = SolverConfig(), evals_per_call: int = 1) -> SolveTrace:
    """Integrate ``dw/dt = field_fn(t, w)`` from ``w(0) = x0`` to ``t = 1``.

    ``evals_per_call`` lets a guided field count as two evaluations per call.
    """
    w = np.array(x0, dtype=np.float64, copy=True)
    if not np.all(np.isfinite(w)):
        raise NonFiniteStateError(0, 0.0)
    f = _Counted(field_fn, evals_per_call)
    trace = SolveTrace(nfe=0, endpoint=w)
    start = time.perf_counter()
    if config.method == "adaptive":
        w = _solve_adaptive(f, w, config, trace)
    else:
        grid = _grid(config.num_steps)
        if config.keep_states:
            trace.times.append(0.0)
            trace.states.append(w.copy())
        for i in range(config.num_steps):
            t0, t1 = grid[i], grid[i + 1]
            h = t1 - t0
            if config.method == "euler":
                w = w + h * f(t0, w)
            else:
                mid = w + 0.5 * h * f(t0, w)
                w = w + h * f(t0 + 0.5 * h, mid)
            if not np.all(np.isfinite(w)):
                raise NonFiniteStateError(i + 1, t1)
            if config.keep_states:
                trace.times.append(t1)
                trace.states.append(w.copy())
    trace.wall_time = time.perf_counter() - start
    trace.nfe = f.nfe
    trace.endpoint = w
    return trace


def _solve_adaptive(f: _Counted, w: np.ndarray, config: SolverConfig, trace: SolveTrace) -> np.ndarray:
    shape = w.shape

    def rhs(t, y):
        out = f(t, y.reshape(shape))
        if not np.all(np.isfinite(out)):
            raise NonFiniteStateError(f.nfe, t)
        return np.asarray(out, dtype=np.float64).reshape(-1)

    sol = solve_ivp(rhs, (0.0, 1.0), w.reshape(-1), method="RK45", rtol=config.rtol, atol=config.atol)
    if not sol.success:
        raise RuntimeError(f"adaptive solve failed: {sol.message}")
    if config.keep_states:
        trace.times.extend(float(t) for t in sol.t)
        trace.states.extend(sol.y[:, i].reshape(shape) for i in range(sol.y.shape[1]))
    return sol.y[:, -1].reshape(shape)


def guided_field(model, x_ctx, z, alpha: float, null_id: int, valid=None) -> Field:
    """The CFG field over a conditional model; unconditional branch skipped at ``alpha == 0``."""
    x_ctx = np.asarray(x_ctx, dtype=np.float64)
    null_ctx = np.zeros_like(x_ctx)
    null_z = np.full_like(np.asarray(z), null_id)

    def fn(t, w):
        tt = np.full(w.shape[0], t)
        v_cond = np.asarray(model(w, x_ctx, z, tt, valid=valid).data)
        if alpha == 0:
            return v_cond
        v_uncond = np.asarray(model(w, null_ctx, null_z, tt, valid=valid).data)
        return cfg_combine(v_cond, v_uncond, alpha)

    return fn


def solve_guided(model, x_ctx, z, config: SolverConfig, x0, valid=None, null_id: int | None = None) -> SolveTrace:
    """Sample by integrating the guided field of ``model`` from noise ``x0``.

    Inputs are batched: ``x_ctx``/``x0`` are ``(B, N, F)``, ``z`` is ``(B, N)``.
    """
    null_id = model.null_id if null_id is None else null_id
    fn = guided_field(model, x_ctx, z, config.cfg_alpha, null_id, valid)
    return solve(fn, x0, config, evals_per_call=2 if config.cfg_alpha != 0 else 1)


SWEEP_HEADER = ("nfe", "alpha", "metric", "value", "wall_time_ms")


def nfe_sweep(
    generate: Callable[[SolverConfig], object],
    nfe_list: Sequence[int],
    alpha_list: Sequence[float],
    metrics: dict[str, Callable[[object], float]],
) -> list[dict]:
    """Run ``generate`` at every (NFE, alpha) cell and score its output.

    ``generate(config)`` produces samples for the task inputs; wall-time covers
    that call only and is reported per sample when the output has a length.
    """
    rows = []
    for nfe in nfe_list:
        for alpha in alpha_list:
            config = SolverConfig.for_nfe(int(nfe), cfg_alpha=float(alpha))
            start = time.perf_counter()
            out = generate(config)
            elapsed = time.perf_counter() - start
            n = len(out) if hasattr(out, "__len__") and len(out) else 1
            for name, fn in metrics.items():
                rows.append(
                    {
                        "nfe": int(nfe),
                        "alpha": float(alpha),
                        "metric": name,
                        "value": float(fn(out)),
                        "wall_time_ms": 1000.0 * elapsed / n,
                    }
                )
    return rows


def sweep_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SWEEP_HEADER, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()
