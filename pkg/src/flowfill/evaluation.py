"""Evaluation protocols on held-out toy data."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .duration import DurationModel, predict_duration_mean, predict_durations
from .metrics import PhoneRecognizer, fdd, fsd_analog, ms_corr, ms_mae, style_similarity
from .numeric.rng import Rng
from .ode import SolverConfig
from .sequence import SIL
from .synth import Dataset, bare_words
from .tasks import Infiller, TaskRequest, TaskResult


@dataclass
class TtsTrials:
    results: list[TaskResult]
    prompts: list[int]
    others: list[int]
    sim_prompt: np.ndarray
    sim_other: np.ndarray
    phone_errors: np.ndarray

    @property
    def win_rate(self) -> float:
        return float(np.mean(self.sim_prompt > self.sim_other))

    @property
    def phone_error_rate(self) -> float:
        return float(np.mean(self.phone_errors))


def tts_trials(
    infiller: Infiller,
    test: Dataset,
    n: int,
    alpha: float = 0.7,
    solver: SolverConfig | None = None,
    seed: int = 0,
) -> TtsTrials:
    """Zero-shot TTS with utterance ``i`` as prompt and the text of utterance ``i+1``.

    Each output is scored against its prompt and against a random utterance
    from the other style family.
    """
    if len(test) < 2:
        raise ValueError("need at least two held-out utterances")
    families = np.array([rec.family for rec in test.records])
    pick = Rng(seed, stream=0x7E57)
    prompts, others, requests = [], [], []
    for k in range(n):
        i = k % len(test)
        pool = np.nonzero(families != families[i])[0]
        if len(pool) == 0:
            raise ValueError("held-out set has a single style family")
        prompts.append(i)
        others.append(int(pool[pick.integers(0, len(pool))]))
        requests.append(
            TaskRequest(
                "zs_tts",
                reference_x=test[i].x,
                reference=test[i].alignment,
                target_text=bare_words(test[(i + 1) % len(test)].alignment),
                solver=solver,
                alpha=alpha,
                seed=seed * 100_003 + k,
            )
        )
    results = infiller.run(requests)
    recognizer = PhoneRecognizer(test.process, test.normalizer)
    sim_p = np.array([style_similarity(r.x, test[i].x) for r, i in zip(results, prompts)])
    sim_o = np.array([style_similarity(r.x, test[j].x) for r, j in zip(results, others)])
    errors = np.array([recognizer.error_rate(r.x, r.z) for r in results])
    return TtsTrials(results, prompts, others, sim_p, sim_o, errors)


def second_half_masks(test: Dataset) -> list[np.ndarray]:
    """Mask the second half of every utterance's phones."""
    out = []
    for rec in test.records:
        m = np.zeros(rec.alignment.num_phones, dtype=np.int64)
        m[rec.alignment.num_phones // 2 :] = 1
        out.append(m)
    return out


def duration_scores(model: DurationModel, test: Dataset, masks=None, n_samples: int = 20, seed: int = 0) -> dict:
    """MS-MAE and MS-Corr of point estimates; FDD of one sampled draw, for spoken phones and silences separately."""
    masks = second_half_masks(test) if masks is None else masks
    ys = [rec.phone_ids(test.phones) for rec in test.records]
    ls = [rec.alignment.l for rec in test.records]
    point = predict_duration_mean(model, ys, ls, masks, n_samples=n_samples, seed=seed)
    if model.mode == "flow":
        sampled = predict_durations(model, ys, ls, masks, rng=Rng(seed, stream=0xFDD))
    else:
        sampled = [np.rint(p) for p in point]
    silent = [np.array([p == SIL for p in rec.alignment.y]) for rec in test.records]

    def masked_fdd(kind):
        keep = [m.astype(bool) & k for m, k in zip(masks, kind)]
        return fdd(np.concatenate([s[k] for s, k in zip(sampled, keep)]), np.concatenate([l[k] for l, k in zip(ls, keep)]))

    spoken = [~s for s in silent]
    return {
        "ms_mae": ms_mae(point, ls, masks),
        "ms_corr": ms_corr(point, ls, masks),
        "fdd_phone": masked_fdd(spoken),
        "fdd_silence": masked_fdd(silent),
    }


def sample_fsd(infiller: Infiller, test: Dataset, n: int, alpha: float = 0.0, seed: int = 0) -> float:
    """FSD analog of whole-utterance samples for held-out texts vs the held-out frames."""
    reqs = [
        TaskRequest("sample", target_text=bare_words(test[k % len(test)].alignment), alpha=alpha, seed=seed * 100_003 + k)
        for k in range(n)
    ]
    results = infiller.run(reqs)
    return fsd_analog([r.x for r in results], [rec.x for rec in test.records])
