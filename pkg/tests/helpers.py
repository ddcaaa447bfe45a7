"""Shared test utilities: central finite differences and small batches."""

import numpy as np

from flowfill.numeric.autodiff import Tape


def gradcheck(build, params, n_probes, rng, eps=1e-5):
    """Compare tape gradients with central differences at random parameter entries.

    ``build()`` must return a scalar Tensor that depends on ``params``.
    Returns the list of relative errors.  The denominator is floored at the
    resolution of the difference quotient, ``1e-6 * max(1, |loss|)``, so entries
    whose exact gradient is zero (e.g. attention key biases) are judged against
    roundoff rather than divided by it.
    """
    with Tape() as tape:
        loss = build()
    floor = 1e-6 * max(1.0, abs(loss.item()))
    grads = tape.backward(loss, params)
    sizes = np.array([p.size for p in params], dtype=float)
    errors = []
    for _ in range(n_probes):
        k = int(rng.choice(len(params), p=sizes / sizes.sum()))
        p = params[k]
        idx = tuple(int(rng.integers(0, s)) for s in p.shape)
        saved = p.data[idx]
        p.data[idx] = saved + eps
        up = build().item()
        p.data[idx] = saved - eps
        down = build().item()
        p.data[idx] = saved
        numeric = (up - down) / (2 * eps)
        analytic = float(grads[p][idx])
        scale = max(abs(numeric), abs(analytic), floor)
        errors.append(abs(numeric - analytic) / scale)
    return errors
