"""Distribution and duration metrics, style similarity and the toy phone recognizer."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .synth import Normalizer, ToyProcess

MIN_FSD_SET = 32


@dataclass(frozen=True)
class GaussianFit:
    mean: np.ndarray
    cov: np.ndarray
    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("a Gaussian fit needs at least two samples")


def fit_gaussian(features) -> GaussianFit:
    """Mean and (population) covariance of row vectors; 1-D input gives a 1x1 covariance."""
    f = np.asarray(features, dtype=np.float64)
    if f.ndim == 1:
        f = f[:, None]
    mu = f.mean(axis=0)
    centered = f - mu
    return GaussianFit(mu, centered.T @ centered / len(f), len(f))


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(mat)
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def frechet_gaussian(a: GaussianFit, b: GaussianFit, eps: float = 1e-6) -> float:
    """``|mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2)``.

    ``eps * I`` is added to both covariances only if the plain computation is
    numerically unusable.
    """
    if a.mean.shape != b.mean.shape:
        raise ValueError(f"dimension mismatch: {a.mean.shape} vs {b.mean.shape}")
    sa = 0.5 * (a.cov + a.cov.T)
    sb = 0.5 * (b.cov + b.cov.T)
    for s in (sa, sb):
        vals = np.linalg.eigvalsh(s)
        if vals.min() < -1e-8 * max(1.0, abs(vals.max())):
            raise ValueError("covariance is not positive semidefinite")
    diff = a.mean - b.mean
    for reg in (0.0, eps):
        ra = sa + reg * np.eye(len(sa))
        rb = sb + reg * np.eye(len(sb))
        root = _psd_sqrt(ra)
        cross = np.linalg.eigvalsh(0.5 * ((root @ rb @ root) + (root @ rb @ root).T))
        if np.all(np.isfinite(cross)):
            break
    value = float(diff @ diff + np.trace(ra) + np.trace(rb) - 2.0 * np.sqrt(np.clip(cross, 0.0, None)).sum())
    return max(value, 0.0)


def utterance_features(x: np.ndarray) -> np.ndarray:
    """Mean and standard deviation over frames, concatenated."""
    x = np.asarray(x, dtype=np.float64)
    return np.concatenate([x.mean(axis=0), x.std(axis=0)])


def fsd_analog(generated: Sequence[np.ndarray], reference: Sequence[np.ndarray]) -> float:
    if len(generated) < MIN_FSD_SET or len(reference) < MIN_FSD_SET:
        raise ValueError(f"each set needs at least {MIN_FSD_SET} utterances")
    fa = fit_gaussian(np.stack([utterance_features(x) for x in generated]))
    fb = fit_gaussian(np.stack([utterance_features(x) for x in reference]))
    return frechet_gaussian(fa, fb)


def fdd(sampled, reference) -> float:
    """1-D Fréchet distance between moment-matched Gaussians of two duration multisets."""
    a = np.asarray(sampled, dtype=np.float64).ravel()
    b = np.asarray(reference, dtype=np.float64).ravel()
    if a.size < 2 or b.size < 2:
        raise ValueError("each multiset needs at least two values")
    mu, s = a.mean(), a.var()
    mu2, s2 = b.mean(), b.var()
    return float((mu - mu2) ** 2 + s + s2 - 2.0 * math.sqrt(s * s2))


def ms_mae(predictions, targets, masks) -> float:
    """Masked absolute error summed over utterances / masked-phone count summed over utterances."""
    err = total = 0.0
    for p, l, m in zip(predictions, targets, masks, strict=True):
        p, l, m = (np.asarray(v, dtype=np.float64) for v in (p, l, m))
        if not p.shape == l.shape == m.shape:
            raise ValueError("prediction, target and mask lengths differ")
        err += float(np.abs(m * (l - p)).sum())
        total += float(m.sum())
    if total == 0:
        raise ValueError("no masked phones")
    return err / total


def ms_corr(predictions, contexts, masks) -> float:
    """Pearson correlation, across utterances, of mean masked prediction vs mean unmasked context.

    Returns ``nan`` when either side has zero variance.
    """
    pm, cm = [], []
    for p, c, m in zip(predictions, contexts, masks, strict=True):
        m = np.asarray(m).astype(bool)
        if m.all() or not m.any():
            raise ValueError("every utterance needs both masked and unmasked phones")
        pm.append(float(np.mean(np.asarray(p, dtype=np.float64)[m])))
        cm.append(float(np.mean(np.asarray(c, dtype=np.float64)[~m])))
    if len(pm) < 3:
        raise ValueError("need at least three utterances")
    pm, cm = np.array(pm), np.array(cm)
    if pm.std() == 0 or cm.std() == 0:
        return float("nan")
    return float(np.corrcoef(pm, cm)[0, 1])


def style_embedding(x: np.ndarray) -> np.ndarray:
    """Unit-normalized mean frame."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or len(x) == 0:
        raise ValueError("style embedding needs a nonempty (frames, features) array")
    v = x.mean(axis=0)
    n = np.linalg.norm(v)
    return v / n if n > 0 else v


def style_similarity(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.clip(style_embedding(a) @ style_embedding(b), -1.0, 1.0))


class PhoneRecognizer:
    """Per-frame maximum-likelihood phone classes under the toy emission model.

    The utterance style offset is unknown to the recognizer, so it is fitted
    jointly with the frame labels by alternating maximization.
    """

    def __init__(self, process: ToyProcess, normalizer: Normalizer, max_iter: int = 50):
        self.process = process
        self.normalizer = normalizer
        self.max_iter = max_iter

    def classify(self, x: np.ndarray) -> np.ndarray:
        raw = self.normalizer.inverse(x)
        means = self.process.means
        offset = raw.mean(axis=0) - means.mean(axis=0)
        labels = None
        for _ in range(self.max_iter):
            d = ((raw[:, None, :] - offset - means[None]) ** 2).sum(-1)
            new = d.argmin(axis=1)
            if labels is not None and np.array_equal(new, labels):
                break
            labels = new
            offset = (raw - means[labels]).mean(axis=0)
        return labels

    def error_rate(self, x: np.ndarray, z_ids) -> float:
        target = self.process.phones.base_index(np.asarray(z_ids))
        if np.any(target < 0) or np.asarray(z_ids).max(initial=0) >= self.process.phones.size:
            raise ValueError("transcript contains an unknown phone id")
        if len(target) != len(x):
            raise ValueError(f"{len(x)} frames but {len(target)} labels")
        return float(np.mean(self.classify(x) != target))


def phone_error_rate(x, z_ids, process: ToyProcess, normalizer: Normalizer) -> float:
    return PhoneRecognizer(process, normalizer).error_rate(x, z_ids)


METRIC_HEADER = ("metric", "split", "value", "n")


def metrics_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=METRIC_HEADER, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()
