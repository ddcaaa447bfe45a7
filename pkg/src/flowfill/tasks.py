"""In-context applications built from the audio and duration models.

Every task reduces to the same move: build a frame-level transcript ``z`` and
an audio context ``x_ctx`` (zeros wherever frames must be generated), then
integrate the guided field from noise.  Requests are prepared individually and
sampled together in padded batches.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .duration import DurationModel, predict_durations
from .network import FieldNet
from .numeric.rng import Rng
from .ode import SolverConfig, solve_guided
from .sequence import SIL, PhoneAlignment, PhoneSet, build_context, cat, rep, trim_end_silences, word_position_postfix
from .synth import FRAME_RATE, text_alignment

KINDS = ("zs_tts", "style_transfer", "denoise", "edit", "sample", "style_shuffle")
DEFAULT_ALPHA = {"zs_tts": 0.7, "style_transfer": 0.7, "denoise": 0.7, "edit": 0.7, "sample": 0.0, "style_shuffle": 0.0}


@dataclass(frozen=True)
class EditSpec:
    """Replace phones ``[start, end)`` of the original transcript by ``new_words``."""

    start: int
    end: int
    new_words: tuple[tuple[str, ...], ...]

    @classmethod
    def for_words(cls, alignment: PhoneAlignment, first: int, last: int, new_words) -> "EditSpec":
        """Span covering words ``first..last`` (inclusive) of ``alignment``."""
        spans = alignment.word_spans()
        return cls(spans[first][0], spans[last][1], tuple(tuple(w) for w in new_words))


@dataclass
class TaskRequest:
    kind: str
    reference_x: np.ndarray | None = None
    reference: PhoneAlignment | None = None
    target_text: Sequence[Sequence[str]] | None = None
    target_z: np.ndarray | None = None  # frame-level phone ids
    edit: EditSpec | None = None
    noise_span: tuple[int, int] | None = None
    solver: SolverConfig | None = None
    alpha: float | None = None
    seed: int = 0
    condition_durations: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown task kind {self.kind!r}; choose from {KINDS}")
        need = {
            "zs_tts": ("target_text",),
            "style_transfer": ("reference_x", "reference", "target_z"),
            "denoise": ("reference_x", "reference", "noise_span"),
            "edit": ("reference_x", "reference", "edit"),
            "sample": ("target_text",),
            "style_shuffle": ("target_z",),
        }[self.kind]
        missing = [name for name in need if getattr(self, name) is None]
        if missing:
            raise ValueError(f"{self.kind} request is missing {', '.join(missing)}")
        if (self.reference_x is None) != (self.reference is None):
            raise ValueError("reference frames and reference alignment must be given together")
        if self.reference is not None and self.reference.num_frames != len(self.reference_x):
            raise ValueError("reference alignment does not cover the reference frames")
        if self.noise_span is not None:
            a, b = self.noise_span
            if not 0 <= a < b <= len(self.reference_x):
                raise ValueError(f"noise span {self.noise_span} is empty or out of bounds")

    @property
    def guidance(self) -> float:
        return DEFAULT_ALPHA[self.kind] if self.alpha is None else self.alpha


@dataclass
class TaskResult:
    x: np.ndarray  # returned frames (generated suffix or full spliced utterance)
    z: np.ndarray  # frame-level phone ids for x
    durations: np.ndarray | None = None  # per-phone frame counts for x, when known
    phones: np.ndarray | None = None
    nfe: int = 0


@dataclass
class _Job:
    x_ctx: np.ndarray
    z: np.ndarray
    seed: int
    alpha: float
    solver: SolverConfig
    finish: Callable[[np.ndarray], TaskResult]
    nfe: int = 0
    endpoint: np.ndarray | None = None


@dataclass
class Infiller:
    """Trained audio model, duration model and the phone inventory they share."""

    audio: FieldNet
    duration: DurationModel | None
    phones: PhoneSet
    solver: SolverConfig = field(default_factory=SolverConfig)
    duration_solver: SolverConfig = field(default_factory=SolverConfig)
    duration_alpha: float = 0.0
    frame_rate: int = FRAME_RATE
    batch_size: int = 32

    @property
    def max_edge_silence(self) -> int:
        return max(1, int(round(0.1 * self.frame_rate)))

    # -- public API ------------------------------------------------------

    def run(self, requests: Sequence[TaskRequest]) -> list[TaskResult]:
        jobs = [self._prepare(r) for r in requests]
        self._sample(jobs)
        results = []
        for job in jobs:
            res = job.finish(job.endpoint)
            res.nfe = job.nfe
            results.append(res)
        return results

    def zero_shot_tts(self, request: TaskRequest) -> TaskResult:
        return self.run([_as(request, "zs_tts")])[0]

    def style_transfer(self, request: TaskRequest) -> TaskResult:
        return self.run([_as(request, "style_transfer")])[0]

    def denoise(self, request: TaskRequest) -> TaskResult:
        return self.run([_as(request, "denoise")])[0]

    def content_edit(self, request: TaskRequest) -> TaskResult:
        return self.run([_as(request, "edit")])[0]

    def diverse_sample(self, request: TaskRequest) -> TaskResult:
        return self.run([_as(request, "sample")])[0]

    def style_shuffle(self, request: TaskRequest) -> TaskResult:
        return self.run([_as(request, "style_shuffle")])[0]

    # -- durations -------------------------------------------------------

    def _durations(self, y: list[str], l_ctx: np.ndarray, m_phone: np.ndarray, seed: int) -> np.ndarray:
        if self.duration is None:
            raise ValueError("this task needs a duration model")
        ids = self.phones.ids(y)
        solver = SolverConfig(
            method=self.duration_solver.method,
            step_size=self.duration_solver.step_size,
            cfg_alpha=self.duration_alpha,
        )
        l_hat = predict_durations(self.duration, ids, l_ctx, m_phone, solver=solver, seeds=seed if self.duration.mode == "flow" else None)
        l_hat = np.asarray(l_hat, dtype=np.int64)
        nonsil = np.array([p != SIL for p in y])
        # a spoken phone always takes at least one frame
        return np.where(m_phone.astype(bool) & nonsil, np.maximum(l_hat, 1), l_hat)

    def _text(self, words) -> PhoneAlignment:
        ali = text_alignment(words)
        self.phones.ids(ali.y)
        return ali

    # -- preparation -----------------------------------------------------

    def _prepare(self, req: TaskRequest) -> _Job:
        return getattr(self, f"_prep_{req.kind}")(req)

    def _job(self, req, x_ctx, z, finish) -> _Job:
        solver = req.solver or self.solver
        return _Job(x_ctx, np.asarray(z, dtype=np.int64), req.seed, req.guidance, solver, finish)

    def _prep_zs_tts(self, req: TaskRequest) -> _Job:
        target = self._text(req.target_text)
        m_tgt = len(target.y)
        if req.reference is None:
            ref_y, ref_l, ref_x = [], np.zeros(0, np.int64), np.zeros((0, self.audio.config.feat_dim))
        else:
            ref_y, ref_l, ref_x = req.reference.y, req.reference.l, np.asarray(req.reference_x)
            self.phones.ids(ref_y)
        y = cat(ref_y, target.y)
        if req.condition_durations:
            l_ctx = np.concatenate([ref_l, np.zeros(m_tgt, np.int64)])
            m_phone = np.concatenate([np.zeros(len(ref_y), np.int64), np.ones(m_tgt, np.int64)])
        else:
            l_ctx = np.zeros(len(y), np.int64)
            m_phone = np.ones(len(y), np.int64)
        l_hat = self._durations(y, l_ctx, m_phone, req.seed)
        l_tgt = trim_end_silences(target.y, l_hat[len(ref_y) :], self.max_edge_silence)
        tgt_ids = self.phones.ids(target.y)
        z_tgt = rep(tgt_ids, l_tgt)
        n_ref = len(ref_x)
        z = np.concatenate([rep(self.phones.ids(ref_y), ref_l) if n_ref else np.zeros(0, np.int64), z_tgt])
        x_ctx = np.concatenate([ref_x, np.zeros((len(z_tgt), self.audio.config.feat_dim))])

        def finish(x):
            return TaskResult(x[n_ref:], z_tgt, l_tgt, tgt_ids)

        return self._job(req, x_ctx, z, finish)

    def _prep_style_transfer(self, req: TaskRequest) -> _Job:
        z_ref = self.phones.ids(req.reference.z())
        z_bar = np.asarray(req.target_z, dtype=np.int64)
        self.phones.to_names(z_bar)
        n_ref = len(z_ref)
        x_ctx = np.concatenate([req.reference_x, np.zeros((len(z_bar), req.reference_x.shape[1]))])

        def finish(x):
            return TaskResult(x[n_ref:], z_bar)

        return self._job(req, x_ctx, np.concatenate([z_ref, z_bar]), finish)

    def _prep_style_shuffle(self, req: TaskRequest) -> _Job:
        z_bar = np.asarray(req.target_z, dtype=np.int64)
        self.phones.to_names(z_bar)
        x_ctx = np.zeros((len(z_bar), self.audio.config.feat_dim))
        return self._job(req, x_ctx, z_bar, lambda x: TaskResult(x, z_bar))

    def _prep_sample(self, req: TaskRequest) -> _Job:
        target = self._text(req.target_text)
        m = len(target.y)
        l_hat = self._durations(target.y, np.zeros(m, np.int64), np.ones(m, np.int64), req.seed)
        l_hat = trim_end_silences(target.y, l_hat, self.max_edge_silence)
        ids = self.phones.ids(target.y)
        z = rep(ids, l_hat)
        x_ctx = np.zeros((len(z), self.audio.config.feat_dim))
        return self._job(req, x_ctx, z, lambda x: TaskResult(x, z, l_hat, ids))

    def _prep_denoise(self, req: TaskRequest) -> _Job:
        x = np.asarray(req.reference_x, dtype=np.float64)
        a, b = req.noise_span
        m = np.zeros(len(x), dtype=np.int64)
        m[a:b] = 1
        x_ctx = build_context(x, m)
        z = self.phones.ids(req.reference.z())
        ids = self.phones.ids(req.reference.y)

        def finish(x_hat):
            return TaskResult(_splice(x_hat, x_ctx, m), z, req.reference.l.copy(), ids)

        return self._job(req, x_ctx, z, finish)

    def _prep_edit(self, req: TaskRequest) -> _Job:
        ali, spec = req.reference, req.edit
        x = np.asarray(req.reference_x, dtype=np.float64)
        spans = ali.word_spans()
        starts = {s for s, _ in spans}
        ends = {e for _, e in spans}
        if spec.start not in starts or spec.end not in ends or spec.start >= spec.end:
            raise ValueError(f"edit span [{spec.start}, {spec.end}) is not on word boundaries")
        if not spec.new_words or any(len(w) == 0 for w in spec.new_words):
            raise ValueError("replacement words must be nonempty")
        new_y, new_w = [], []
        for k, word in enumerate(spec.new_words):
            if k > 0:
                new_y.append(SIL)
                new_w.append(-1)
            new_y.extend(word)
            new_w.extend([k] * len(word))
        new_y = word_position_postfix(new_y, new_w)
        y_hat = ali.y[: spec.start] + new_y + ali.y[spec.end :]
        n_new = len(new_y)
        keep_l = np.concatenate([ali.l[: spec.start], np.zeros(n_new, np.int64), ali.l[spec.end :]])
        m_phone = np.zeros(len(y_hat), np.int64)
        m_phone[spec.start : spec.start + n_new] = 1
        l_hat = self._durations(y_hat, keep_l, m_phone, req.seed)
        ids = self.phones.ids(y_hat)
        z_hat = rep(ids, l_hat)
        f_before = int(ali.l[: spec.start].sum())
        f_after = int(ali.l[spec.end :].sum())
        n_gen = int(l_hat[spec.start : spec.start + n_new].sum())
        x_ctx = np.concatenate([x[:f_before], np.zeros((n_gen, x.shape[1])), x[len(x) - f_after :]])
        m = rep(m_phone, l_hat)

        def finish(x_gen):
            return TaskResult(_splice(x_gen, x_ctx, m), z_hat, l_hat, ids)

        return self._job(req, x_ctx, z_hat, finish)

    # -- sampling --------------------------------------------------------

    def _sample(self, jobs: list[_Job]) -> None:
        groups: dict[tuple, list[_Job]] = {}
        for job in jobs:
            groups.setdefault((job.alpha, job.solver), []).append(job)
        for (alpha, solver), members in groups.items():
            config = SolverConfig(
                method=solver.method,
                step_size=solver.step_size,
                atol=solver.atol,
                rtol=solver.rtol,
                cfg_alpha=alpha,
            )
            for i in range(0, len(members), self.batch_size):
                self._sample_batch(members[i : i + self.batch_size], config)

    def _sample_batch(self, jobs: list[_Job], config: SolverConfig) -> None:
        feat = self.audio.config.feat_dim
        n = max(len(j.z) for j in jobs)
        b = len(jobs)
        x_ctx = np.zeros((b, n, feat))
        z = np.full((b, n), self.audio.null_id, dtype=np.int64)
        x0 = np.zeros((b, n, feat))
        valid = np.zeros((b, n), dtype=bool)
        for i, job in enumerate(jobs):
            k = len(job.z)
            x_ctx[i, :k] = job.x_ctx
            z[i, :k] = job.z
            x0[i, :k] = sample_noise(job.seed, k, feat)
            valid[i, :k] = True
        trace = solve_guided(self.audio, x_ctx, z, config, x0, valid=valid)
        for i, job in enumerate(jobs):
            job.endpoint = trace.endpoint[i, : len(job.z)]
            job.nfe = trace.nfe


def sample_noise(seed: int, n_frames: int, feat_dim: int) -> np.ndarray:
    """Prior draw for one utterance, independent of batch composition."""
    return Rng(seed, stream=0xA0D).normal(size=(n_frames, feat_dim))


def corrupt_span(x: np.ndarray, span: tuple[int, int], snr_db: float, seed: int) -> np.ndarray:
    """Add white noise to frames ``[a, b)`` at the given signal-to-noise ratio.

    Signal power is the mean square of the clean span.
    """
    x = np.array(x, dtype=np.float64)
    a, b = span
    if not 0 <= a < b <= len(x):
        raise ValueError(f"span {span} is empty or out of bounds")
    power = float(np.mean(x[a:b] ** 2))
    scale = np.sqrt(power / 10.0 ** (snr_db / 10.0))
    x[a:b] += scale * Rng(seed, stream=0x5A1).normal(size=x[a:b].shape)
    return x


def _splice(x_gen: np.ndarray, x_ctx: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Generated frames where ``m`` is set, context frames (bitwise) elsewhere."""
    return np.where(np.asarray(m)[:, None].astype(bool), x_gen, x_ctx)


def _as(request: TaskRequest, kind: str) -> TaskRequest:
    if request.kind != kind:
        raise ValueError(f"expected a {kind} request, got {request.kind}")
    return request
