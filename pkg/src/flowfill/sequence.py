"""Phone, duration and frame bookkeeping shared by training and every task."""

from __future__ import annotations

import string
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .numeric.rng import Rng

SIL = "SIL"
POSTFIXES = ("B", "I", "E", "S")

# (p_drop, r_low %, r_high %) per model kind
MASK_POLICY = {"audio": (0.3, 70.0, 100.0), "duration": (0.2, 10.0, 100.0)}


def rep(y: Sequence, l: Sequence[int]):
    """Repeat ``y[j]`` ``l[j]`` times.  Returns an array for array input, else a list."""
    l = np.asarray(l)
    if len(y) != len(l):
        raise ValueError(f"rep: {len(y)} phones but {len(l)} durations")
    if l.size and l.min() < 0:
        raise ValueError(f"rep: negative duration {int(l.min())}")
    if isinstance(y, np.ndarray):
        return np.repeat(y, l.astype(np.int64))
    out = []
    for token, n in zip(y, l):
        out.extend([token] * int(n))
    return out


def cat(a: Sequence, b: Sequence):
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        return np.concatenate([np.asarray(a), np.asarray(b)])
    return list(a) + list(b)


def base_phone(name: str) -> str:
    return name if name == SIL else name.split("_")[0]


def word_position_postfix(y: Sequence[str], words: Sequence[int]) -> list[str]:
    """Append ``_B/_I/_E/_S`` by position inside each word; ``SIL`` is left alone.

    ``words[j]`` is the word index of ``y[j]`` or ``-1`` for silence.
    """
    if len(y) != len(words):
        raise ValueError("word grouping must cover every phone")
    sizes: dict[int, int] = {}
    for w in words:
        if w >= 0:
            sizes[w] = sizes.get(w, 0) + 1
    if sizes and sorted(sizes) != list(range(max(sizes) + 1)):
        raise ValueError("empty word in grouping")
    seen: dict[int, int] = {}
    out = []
    for phone, w in zip(y, words):
        if w < 0:
            if phone != SIL:
                raise ValueError(f"phone {phone!r} is outside every word")
            out.append(phone)
            continue
        if phone == SIL:
            raise ValueError("SIL inside a word")
        k = seen.get(w, 0)
        seen[w] = k + 1
        n = sizes[w]
        pos = "S" if n == 1 else "B" if k == 0 else "E" if k == n - 1 else "I"
        out.append(f"{base_phone(phone)}_{pos}")
    return out


@dataclass
class PhoneAlignment:
    """Phones ``y``, per-phone frame counts ``l`` and word index per phone (-1 for SIL)."""

    y: list[str]
    l: np.ndarray
    words: list[int]

    def __post_init__(self):
        self.y = list(self.y)
        self.l = np.asarray(self.l, dtype=np.int64)
        self.words = list(self.words)

    @property
    def num_frames(self) -> int:
        return int(self.l.sum())

    @property
    def num_phones(self) -> int:
        return len(self.y)

    def z(self) -> list[str]:
        return rep(self.y, self.l)

    def word_spans(self) -> list[tuple[int, int]]:
        """``[start, end)`` phone-index span of every word."""
        spans: dict[int, list[int]] = {}
        for j, w in enumerate(self.words):
            if w >= 0:
                spans.setdefault(w, []).append(j)
        return [(min(v), max(v) + 1) for _, v in sorted(spans.items())]

    def validate(self, num_frames: int | None = None, postfixed: bool = True) -> None:
        if not (len(self.y) == len(self.l) == len(self.words)):
            raise ValueError("alignment fields have different lengths")
        if self.l.size and self.l.min() < 0:
            raise ValueError("negative duration in alignment")
        if num_frames is not None and self.num_frames != num_frames:
            raise ValueError(f"durations sum to {self.num_frames} but utterance has {num_frames} frames")
        for j, (phone, n) in enumerate(zip(self.y, self.l)):
            if n == 0 and phone != SIL:
                raise ValueError(f"non-silence phone {phone!r} at {j} has zero duration")
            if (phone == SIL) != (self.words[j] < 0):
                raise ValueError(f"phone {phone!r} at {j} disagrees with its word grouping")
        if postfixed:
            bare = [base_phone(p) for p in self.y]
            if word_position_postfix(bare, self.words) != self.y:
                raise ValueError("word-position postfixes disagree with the word grouping")


def insert_ghost_silence(y_aligned: Sequence[str], l_aligned: Sequence[int], words: Sequence[Sequence[str]]) -> PhoneAlignment:
    """Make every word boundary and both utterance ends carry a ``SIL``.

    ``words`` lists each word's phones in order.  Missing silences are added
    with zero duration; frame totals are unchanged.
    """
    l_aligned = [int(n) for n in l_aligned]
    if len(y_aligned) != len(l_aligned):
        raise ValueError("phones and durations differ in length")
    if any(n <= 0 for n in l_aligned):
        raise ValueError("aligned input must not contain zero durations")
    y_out: list[str] = []
    l_out: list[int] = []
    w_out: list[int] = []
    j = 0

    def take_silences():
        found = False
        nonlocal j
        while j < len(y_aligned) and y_aligned[j] == SIL:
            y_out.append(SIL)
            l_out.append(l_aligned[j])
            w_out.append(-1)
            j += 1
            found = True
        if not found:
            y_out.append(SIL)
            l_out.append(0)
            w_out.append(-1)

    take_silences()
    for wi, word in enumerate(words):
        if not word:
            raise ValueError(f"word {wi} is empty")
        if wi > 0:
            take_silences()
        for phone in word:
            if j >= len(y_aligned):
                raise ValueError("alignment ends before the last word")
            if y_aligned[j] == SIL:
                raise ValueError(f"SIL inside word {wi}")
            if y_aligned[j] != phone:
                raise ValueError(f"expected phone {phone!r} at position {j}, found {y_aligned[j]!r}")
            y_out.append(phone)
            l_out.append(l_aligned[j])
            w_out.append(wi)
            j += 1
    take_silences()
    if j != len(y_aligned):
        raise ValueError("alignment has phones beyond the last word")
    return PhoneAlignment(y_out, np.array(l_out, dtype=np.int64), w_out)


@dataclass
class MaskPair:
    m: np.ndarray
    m_phone: np.ndarray

    def check(self, l: np.ndarray) -> None:
        if not np.array_equal(rep(self.m_phone, l), self.m):
            raise ValueError("frame mask is not rep(phone mask, durations)")


def phone_span_mask(l: np.ndarray, start: int, end: int) -> MaskPair:
    m_phone = np.zeros(len(l), dtype=np.int64)
    m_phone[start:end] = 1
    return MaskPair(rep(m_phone, l), m_phone)


def sample_training_mask(
    alignment: PhoneAlignment,
    kind: str,
    rng: Rng,
    p_drop: float | None = None,
    r_range: tuple[float, float] | None = None,
) -> MaskPair:
    """Draw a training mask: the whole sequence with probability ``p_drop``,
    otherwise one contiguous phone-aligned segment covering ``r%`` of the sequence.

    The audio policy measures ``r%`` in frames; the duration policy in phones.
    """
    default_drop, lo, hi = MASK_POLICY[kind]
    p_drop = default_drop if p_drop is None else p_drop
    lo, hi = r_range if r_range is not None else (lo, hi)
    l = alignment.l
    n_phones = len(l)
    if rng.random() < p_drop:
        return phone_span_mask(l, 0, n_phones)
    r = rng.uniform(lo, hi) / 100.0
    if kind == "duration":
        width = max(1, int(np.ceil(r * n_phones - 1e-9)))
        start = int(rng.integers(0, n_phones - width + 1))
        return phone_span_mask(l, start, start + width)
    need = r * alignment.num_frames
    cum = np.concatenate([[0], np.cumsum(l)])
    # smallest end per start such that the span covers at least `need` frames
    ends = np.searchsorted(cum, cum[:-1] + need - 1e-9, side="left")
    starts = np.nonzero(ends <= n_phones)[0]
    start = int(starts[rng.integers(0, len(starts))])
    return phone_span_mask(l, start, max(int(ends[start]), start + 1))


def build_context(x: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Frames with masked rows replaced by exact zeros."""
    x = np.asarray(x, dtype=np.float64)
    m = np.asarray(m)
    if m.shape != x.shape[:-1]:
        raise ValueError(f"mask shape {m.shape} does not match frames {x.shape}")
    return np.where(m[..., None].astype(bool), 0.0, x)


def trim_end_silences(y: Sequence[str], l: np.ndarray, max_frames: int) -> np.ndarray:
    """Clip leading/trailing SIL durations to ``max_frames``."""
    l = np.array(l, dtype=np.int64)
    for j in range(len(y)):
        if y[j] != SIL:
            break
        l[j] = min(l[j], max_frames)
    for j in range(len(y) - 1, -1, -1):
        if y[j] != SIL:
            break
        l[j] = min(l[j], max_frames)
    return l


def random_chunk(n_frames: int, cap: int, rng: Rng) -> slice:
    """Contiguous window of at most ``cap`` frames, placed uniformly."""
    if n_frames <= cap:
        return slice(0, n_frames)
    start = int(rng.integers(0, n_frames - cap + 1))
    return slice(start, start + cap)


@dataclass
class PhoneSet:
    """Integer ids for ``SIL``, every base phone with each word-position postfix, and a null id."""

    num_base: int
    names: list[str] = field(init=False)

    def __post_init__(self):
        letters = string.ascii_uppercase
        if self.num_base > len(letters):
            raise ValueError("at most 26 base phones")
        self.base = [letters[k] for k in range(self.num_base)]
        self.names = [SIL] + [f"{b}_{p}" for b in self.base for p in POSTFIXES] + ["<null>"]
        self._ids = {name: i for i, name in enumerate(self.names)}

    @property
    def size(self) -> int:
        return len(self.names)

    @property
    def null_id(self) -> int:
        return len(self.names) - 1

    @property
    def sil_id(self) -> int:
        return 0

    def ids(self, names: Sequence[str]) -> np.ndarray:
        try:
            return np.array([self._ids[n] for n in names], dtype=np.int64)
        except KeyError as e:
            raise ValueError(f"unknown phone {e.args[0]!r}") from None

    def to_names(self, ids: Sequence[int]) -> list[str]:
        return [self.names[int(i)] for i in ids]

    def base_index(self, ids) -> np.ndarray:
        """Emission class per id: 0 for SIL, 1+k for base phone k, -1 for null."""
        ids = np.asarray(ids)
        out = np.where(ids == 0, 0, (ids - 1) // 4 + 1)
        return np.where(ids == self.null_id, -1, out)
