import numpy as np
import pytest

from flowfill.numeric.rng import Rng
from flowfill.sequence import (
    SIL,
    PhoneAlignment,
    PhoneSet,
    build_context,
    cat,
    insert_ghost_silence,
    phone_span_mask,
    random_chunk,
    rep,
    sample_training_mask,
    trim_end_silences,
    word_position_postfix,
)

HEY_WORDS = [["A", "B"], ["C"], ["D", "E", "F"]]


def test_rep_and_cat_basics():
    assert rep(["A", "B"], [2, 3]) == ["A", "A", "B", "B", "B"]
    assert rep(["A", "B"], [0, 0]) == []
    assert np.array_equal(rep(np.array([4, 7]), [1, 2]), [4, 7, 7])
    with pytest.raises(ValueError):
        rep(["A"], [-1])
    with pytest.raises(ValueError):
        rep(["A", "B"], [1])
    assert cat(["A"], ["B", "C"]) == ["A", "B", "C"]
    assert cat([], ["X"]) == ["X"]


def test_ghost_silence_between_unpaused_words():
    y = [SIL, "A", "B", SIL, "C", "D", "E", "F", SIL]
    l = [1, 1, 2, 1, 1, 3, 2, 1, 2]
    al = insert_ghost_silence(y, l, HEY_WORDS)
    assert al.y == [SIL, "A", "B", SIL, "C", SIL, "D", "E", "F", SIL]
    assert list(al.l) == [1, 1, 2, 1, 1, 0, 3, 2, 1, 2]
    assert al.num_frames == sum(l)
    assert al.z() == [SIL, "A", "B", "B", SIL, "C", "D", "D", "D", "E", "E", "F", SIL, SIL]


def test_ghost_silence_is_idempotent_and_covers_ends():
    y = [SIL, "A", "B", SIL, "C", SIL]
    once = insert_ghost_silence(y, [1, 2, 2, 1, 3, 1], [["A", "B"], ["C"]])
    assert once.y == y
    single = insert_ghost_silence(["A", "B"], [2, 2], [["A", "B"]])
    assert single.y == [SIL, "A", "B", SIL] and list(single.l) == [0, 2, 2, 0]


def test_ghost_silence_rejects_silence_inside_word():
    with pytest.raises(ValueError):
        insert_ghost_silence([SIL, "A", SIL, "B", SIL], [1, 1, 1, 1, 1], [["A", "B"]])


def test_word_position_postfixes():
    y = [SIL, "A", "B", SIL, "C", SIL, "D", "E", "F", SIL]
    words = [-1, 0, 0, -1, 1, -1, 2, 2, 2, -1]
    assert word_position_postfix(y, words) == [SIL, "A_B", "B_E", SIL, "C_S", SIL, "D_B", "E_I", "F_E", SIL]
    with pytest.raises(ValueError):
        word_position_postfix(["A", "B"], [0, 2])


def test_alignment_validation():
    good = PhoneAlignment([SIL, "A_S", SIL], [0, 3, 1], [-1, 0, -1])
    good.validate(num_frames=4)
    with pytest.raises(ValueError):
        good.validate(num_frames=5)
    with pytest.raises(ValueError):
        PhoneAlignment([SIL, "A_S", SIL], [1, 0, 1], [-1, 0, -1]).validate()
    with pytest.raises(ValueError):
        PhoneAlignment([SIL, "A_B", SIL], [1, 2, 1], [-1, 0, -1]).validate()
    assert good.word_spans() == [(1, 2)]


def _alignment(n_phones=20, seed=0):
    rng = np.random.default_rng(seed)
    return PhoneAlignment(["A_S"] * n_phones, rng.integers(1, 8, size=n_phones), list(range(n_phones)))


def test_audio_masks_are_phone_aligned_and_sized():
    al = _alignment()
    rng = Rng(1)
    for _ in range(10000):
        pair = sample_training_mask(al, "audio", rng)
        pair.check(al.l)
        frac = pair.m.mean()
        if not pair.m_phone.all():
            idx = np.nonzero(pair.m_phone)[0]
            assert np.array_equal(idx, np.arange(idx[0], idx[-1] + 1))
            assert frac >= 0.7 - 1e-9
    # segments can reach 100%, so count whole-sequence drops where they cannot
    even = PhoneAlignment(["A_S"] * 100, np.ones(100), list(range(100)))
    drops = sum(sample_training_mask(even, "audio", rng, r_range=(70, 95)).m_phone.all() for _ in range(10000))
    assert 0.28 <= drops / 10000 <= 0.32


def test_duration_masks_count_phones():
    al = _alignment(40)
    rng = Rng(2)
    widths = []
    for _ in range(2000):
        pair = sample_training_mask(al, "duration", rng, p_drop=0.0)
        widths.append(pair.m_phone.sum())
    widths = np.array(widths)
    assert widths.min() >= 4 and widths.max() <= 40
    assert 0.5 < widths.mean() / 40 < 0.6


def test_build_context_zeroes_masked_rows_only():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(6, 4))
    assert np.array_equal(build_context(x, np.zeros(6)), x)
    assert not build_context(x, np.ones(6)).any()
    m = np.array([0, 1, 1, 0, 0, 1])
    ctx = build_context(x, m)
    assert not ctx[m == 1].any()
    assert np.array_equal(ctx[m == 0], x[m == 0])
    with pytest.raises(ValueError):
        build_context(x, np.zeros(5))


def test_phone_span_mask_and_end_trim():
    pair = phone_span_mask(np.array([2, 0, 3]), 1, 3)
    assert list(pair.m) == [0, 0, 1, 1, 1]
    assert list(trim_end_silences([SIL, "A_S", SIL, "B_S", SIL], [9, 2, 7, 1, 4], 5)) == [5, 2, 7, 1, 4]


def test_phone_set_ids():
    ps = PhoneSet(12)
    assert ps.size == 1 + 48 + 1
    assert ps.ids([SIL, "A_B", "L_S"]).tolist() == [0, 1, 48]
    assert ps.to_names([0, 2]) == [SIL, "A_I"]
    assert ps.base_index([0, 1, 4, 5, ps.null_id]).tolist() == [0, 1, 1, 2, -1]
    with pytest.raises(ValueError):
        ps.ids(["Z_B"])


def test_random_chunk_is_contiguous_and_capped():
    rng = Rng(4)
    assert random_chunk(50, 80, rng) == slice(0, 50)
    starts = set()
    for _ in range(200):
        window = random_chunk(300, 64, rng)
        assert window.stop - window.start == 64 and 0 <= window.start and window.stop <= 300
        starts.add(window.start)
    assert len(starts) > 50
