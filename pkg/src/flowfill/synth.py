"""Toy speech: a generative process with known ground truth.

Each utterance is a word sequence over a small phone alphabet.  Phone
durations follow a shifted geometric law scaled by a per-utterance speaking
rate.  Frames are Gaussian around a per-phone mean plus a per-utterance style
vector drawn from a mixture of style clusters; clusters are split into
families (the stand-in for languages).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .numeric.rng import Rng
from .sequence import SIL, PhoneAlignment, PhoneSet, base_phone, insert_ghost_silence, word_position_postfix

DATASET_MAGIC = "FLOWFILL-DATASET"
DATASET_VERSION = 1

# global mean and std of real 80-bin log-Mel features, the default normalizer
LOGMEL_NORM_MEAN = -5.8843
LOGMEL_NORM_STD = 2.2615

FRAME_RATE = 50  # toy frames per second


@dataclass(frozen=True)
class ToyProcessSpec:
    num_phones: int = 12
    feat_dim: int = 8
    emission_scale: float = 0.2
    phone_mean_scale: float = 1.0
    min_separation: float = 6.0  # in units of emission_scale
    families: int = 2
    clusters_per_family: int = 4
    style_scale: float = 2.0
    style_jitter: float = 0.25
    duration_extra_range: tuple[float, float] = (1.0, 4.0)
    rate_log_std: float = 0.5
    pause_prob: float = 0.4
    pause_mean: float = 5.0
    edge_sil_mean: float = 3.0
    words_range: tuple[int, int] = (3, 10)
    word_len_range: tuple[int, int] = (1, 4)
    frames_range: tuple[int, int] = (40, 200)
    noise_level: float = 0.0
    raw_offset: float = -5.0
    process_seed: int = 1234

    def __post_init__(self):
        if self.min_separation < 4.0:
            raise ValueError("phone means must be separated by at least 4 emission scales")


class ToyProcess:
    """Materialized parameters of a :class:`ToyProcessSpec`."""

    def __init__(self, spec: ToyProcessSpec = ToyProcessSpec()):
        self.spec = spec
        self.phones = PhoneSet(spec.num_phones)
        rng = Rng(spec.process_seed, stream=1)
        n_classes = spec.num_phones + 1  # SIL is class 0
        gap = spec.min_separation * spec.emission_scale
        for _ in range(10000):
            means = rng.normal(0.0, spec.phone_mean_scale, size=(n_classes, spec.feat_dim))
            means -= means.mean(axis=0)
            d = np.linalg.norm(means[:, None] - means[None], axis=-1)
            if d[np.triu_indices(n_classes, 1)].min() >= gap:
                break
        else:
            raise RuntimeError("could not place phone means with the requested separation")
        self.means = means + spec.raw_offset
        n_clusters = spec.families * spec.clusters_per_family
        centers = rng.normal(size=(n_clusters, spec.feat_dim))
        centers -= centers.mean(axis=0)
        self.centers = spec.style_scale * centers / np.linalg.norm(centers, axis=1, keepdims=True)
        self.duration_extra = rng.uniform(*spec.duration_extra_range, size=spec.num_phones + 1)
        self.duration_extra[0] = spec.pause_mean

    @property
    def num_clusters(self) -> int:
        return len(self.centers)

    def family_of(self, cluster: int) -> int:
        return cluster // self.spec.clusters_per_family

    def draw_style(self, rng: Rng, cluster: int | None = None) -> tuple[np.ndarray, int]:
        if cluster is None:
            cluster = int(rng.integers(0, self.num_clusters))
        return self.centers[cluster] + rng.normal(0.0, self.spec.style_jitter, self.spec.feat_dim), cluster

    def draw_words(self, rng: Rng) -> list[list[str]]:
        spec = self.spec
        n_words = int(rng.integers(spec.words_range[0], spec.words_range[1] + 1))
        base = self.phones.base
        words = []
        for _ in range(n_words):
            n = int(rng.integers(spec.word_len_range[0], spec.word_len_range[1] + 1))
            words.append([base[int(k)] for k in rng.integers(0, len(base), n)])
        return words

    def draw_durations(self, rng: Rng, words: list[list[str]], rate: float) -> tuple[list[str], list[int]]:
        """Aligned phones and positive durations, as a forced aligner would report them."""
        spec = self.spec
        y, l = [], []

        def phone_len(extra_mean):
            p = 1.0 / (1.0 + extra_mean * rate)
            return 1 + int(rng.geometric(p))

        y.append(SIL)
        l.append(1 + int(rng.geometric(1.0 / (1.0 + spec.edge_sil_mean * rate))))
        for wi, word in enumerate(words):
            if wi > 0 and rng.random() < spec.pause_prob:
                y.append(SIL)
                l.append(phone_len(self.duration_extra[0]))
            for phone in word:
                y.append(phone)
                l.append(phone_len(self.duration_extra[1 + self.phones.base.index(phone)]))
        y.append(SIL)
        l.append(1 + int(rng.geometric(1.0 / (1.0 + spec.edge_sil_mean * rate))))
        return y, l

    def emit(self, rng: Rng, classes: np.ndarray, style: np.ndarray, noise: float | None = None) -> np.ndarray:
        spec = self.spec
        x = self.means[classes] + style + rng.normal(0.0, spec.emission_scale, (len(classes), spec.feat_dim))
        noise = spec.noise_level if noise is None else noise
        if noise > 0:
            x = x + rng.normal(0.0, noise, x.shape)
        return x

    def classes(self, alignment: PhoneAlignment) -> np.ndarray:
        return self.phones.base_index(self.phones.ids(alignment.z()))


@dataclass(frozen=True)
class Normalizer:
    mean: float = LOGMEL_NORM_MEAN
    std: float = LOGMEL_NORM_STD

    def __post_init__(self):
        if not self.std > 0:
            raise ValueError(f"normalization std must be positive, got {self.std}")

    def __call__(self, x):
        return normalize_features(x, self.mean, self.std)

    def inverse(self, x):
        return denormalize_features(x, self.mean, self.std)


def normalize_features(x, mean: float, std: float) -> np.ndarray:
    if not std > 0:
        raise ValueError(f"normalization std must be positive, got {std}")
    return (np.asarray(x, dtype=np.float64) - mean) / std


def denormalize_features(x, mean: float, std: float) -> np.ndarray:
    if not std > 0:
        raise ValueError(f"normalization std must be positive, got {std}")
    return np.asarray(x, dtype=np.float64) * std + mean


@dataclass
class DatasetRecord:
    uid: str
    x: np.ndarray  # (N, F), normalized
    alignment: PhoneAlignment
    style: np.ndarray | None = None
    rate: float | None = None
    cluster: int | None = None
    family: int | None = None

    @property
    def num_frames(self) -> int:
        return self.x.shape[0]

    def phone_ids(self, phones: PhoneSet) -> np.ndarray:
        return phones.ids(self.alignment.y)

    def frame_ids(self, phones: PhoneSet) -> np.ndarray:
        return phones.ids(self.alignment.z())

    def validate(self) -> None:
        if self.x.ndim != 2 or not np.all(np.isfinite(self.x)):
            raise ValueError(f"record {self.uid}: frames must be a finite 2-D array")
        self.alignment.validate(num_frames=self.x.shape[0])


@dataclass
class Dataset:
    process: ToyProcess
    normalizer: Normalizer
    records: list[DatasetRecord] = field(default_factory=list)
    seed: int = 0

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, i) -> DatasetRecord:
        return self.records[i]

    @property
    def phones(self) -> PhoneSet:
        return self.process.phones


def make_utterance(
    process: ToyProcess,
    rng: Rng,
    uid: str,
    normalizer: Normalizer | None = None,
    cluster: int | None = None,
    style: np.ndarray | None = None,
    words: list[list[str]] | None = None,
) -> DatasetRecord:
    spec = process.spec
    while True:
        if style is None:
            s, c = process.draw_style(rng, cluster)
        else:
            s, c = np.asarray(style, dtype=np.float64), cluster
        rate = float(np.exp(rng.normal(0.0, spec.rate_log_std)))
        w = process.draw_words(rng) if words is None else words
        y, l = process.draw_durations(rng, w, rate)
        n = sum(l)
        if words is not None or spec.frames_range[0] <= n <= spec.frames_range[1]:
            break
    ali = insert_ghost_silence(y, l, w)
    ali = PhoneAlignment(word_position_postfix(ali.y, ali.words), ali.l, ali.words)
    x = process.emit(rng, process.classes(ali), s)
    if normalizer is not None:
        x = normalizer(x)
    family = None if c is None else process.family_of(c)
    return DatasetRecord(uid, x, ali, s, rate, c, family)


def compute_norm_stats(process: ToyProcess, seed: int, n_frames: int = 30000) -> Normalizer:
    """Global scalar mean/std over about ``n_frames`` freshly drawn raw frames."""
    chunks, total, i = [], 0, 0
    base = Rng(seed, stream=0xA0A0)
    while total < n_frames:
        rec = make_utterance(process, base.child(i), f"norm-{i}")
        chunks.append(rec.x)
        total += rec.num_frames
        i += 1
    frames = np.concatenate(chunks)[:n_frames]
    return Normalizer(float(frames.mean()), float(frames.std()))


def generate_dataset(
    spec: ToyProcessSpec,
    n_utterances: int,
    seed: int,
    normalizer: Normalizer | None = None,
    clusters: Sequence[int] | None = None,
) -> Dataset:
    """Reproducible dataset; record ``i`` draws from its own stream keyed by ``i``."""
    process = ToyProcess(spec)
    if normalizer is None:
        normalizer = compute_norm_stats(process, seed)
    root = Rng(seed, stream=0xDA7A)
    records = []
    for i in range(n_utterances):
        cluster = None if clusters is None else int(clusters[i % len(clusters)])
        records.append(make_utterance(process, root.child(i), f"utt-{seed}-{i:06d}", normalizer, cluster))
    return Dataset(process, normalizer, records, seed)


def language_upsample_weights(hours: Sequence[float], beta: float) -> np.ndarray:
    """Sampling probabilities ``p_s ~ (n_s / N) ** beta`` renormalized to sum to one."""
    hours = np.asarray(hours, dtype=np.float64)
    if hours.size == 0:
        raise ValueError("need at least one language")
    if np.any(hours <= 0):
        raise ValueError("hours must be positive")
    if not 0.0 < beta <= 1.0:
        raise ValueError(f"beta must lie in (0, 1], got {beta}")
    p = (hours / hours.sum()) ** beta
    return p / p.sum()


# -- persistence ---------------------------------------------------------


def _pack(arr: np.ndarray) -> dict:
    arr = np.ascontiguousarray(arr, dtype="<f8")
    return {"shape": list(arr.shape), "hex": arr.tobytes().hex()}


def _unpack(obj: dict) -> np.ndarray:
    return np.frombuffer(bytes.fromhex(obj["hex"]), dtype="<f8").reshape(obj["shape"]).copy()


def save_dataset(path, dataset: Dataset, config: dict | None = None) -> None:
    """Line-delimited records; arrays carried as base-16 float64 payloads."""
    header = {
        "magic": DATASET_MAGIC,
        "version": DATASET_VERSION,
        "seed": dataset.seed,
        "spec": asdict(dataset.process.spec),
        "normalizer": asdict(dataset.normalizer),
        "phone_names": dataset.phones.names,
        "config": config or {},
    }
    with open(path, "w") as f:
        f.write(json.dumps(header, sort_keys=True) + "\n")
        for rec in dataset.records:
            row = {
                "uid": rec.uid,
                "x": _pack(rec.x),
                "y": rec.alignment.y,
                "l": rec.alignment.l.tolist(),
                "words": rec.alignment.words,
                "style": None if rec.style is None else _pack(rec.style),
                "rate": rec.rate,
                "cluster": rec.cluster,
                "family": rec.family,
            }
            f.write(json.dumps(row, sort_keys=True) + "\n")


def _spec_from_dict(d: dict) -> ToyProcessSpec:
    d = dict(d)
    for key, value in d.items():
        if isinstance(value, list):
            d[key] = tuple(value)
    return ToyProcessSpec(**d)


def load_dataset(path) -> Dataset:
    """Load and re-validate every record."""
    with open(path) as f:
        header = json.loads(f.readline())
        if header.get("magic") != DATASET_MAGIC:
            raise ValueError(f"{path}: not a dataset file")
        if header.get("version") != DATASET_VERSION:
            raise ValueError(f"{path}: unsupported dataset version {header.get('version')}")
        process = ToyProcess(_spec_from_dict(header["spec"]))
        if header["phone_names"] != process.phones.names:
            raise ValueError(f"{path}: phone table does not match the process spec")
        records = []
        for line in f:
            row = json.loads(line)
            ali = PhoneAlignment(row["y"], np.array(row["l"], dtype=np.int64), row["words"])
            rec = DatasetRecord(
                row["uid"],
                _unpack(row["x"]),
                ali,
                None if row["style"] is None else _unpack(row["style"]),
                row["rate"],
                row["cluster"],
                row["family"],
            )
            rec.validate()
            records.append(rec)
    return Dataset(process, Normalizer(**header["normalizer"]), records, header["seed"])


def bare_words(alignment: PhoneAlignment) -> list[list[str]]:
    """Word groups of base phones, e.g. as a target text for synthesis."""
    out: dict[int, list[str]] = {}
    for phone, w in zip(alignment.y, alignment.words):
        if w >= 0:
            out.setdefault(w, []).append(base_phone(phone))
    return [out[k] for k in sorted(out)]


def text_alignment(words: Iterable[Sequence[str]]) -> PhoneAlignment:
    """Phones for a text with a (ghost) SIL at every boundary and zero durations throughout."""
    y, wi = [SIL], [-1]
    for i, word in enumerate(words):
        if i > 0:
            y.append(SIL)
            wi.append(-1)
        for phone in word:
            y.append(phone)
            wi.append(i)
    y.append(SIL)
    wi.append(-1)
    y = word_position_postfix(y, wi)
    return PhoneAlignment(y, np.zeros(len(y), dtype=np.int64), wi)
