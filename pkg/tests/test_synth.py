import numpy as np
import pytest

from flowfill.sequence import SIL
from flowfill.synth import (
    Normalizer,
    ToyProcessSpec,
    bare_words,
    compute_norm_stats,
    denormalize_features,
    generate_dataset,
    language_upsample_weights,
    load_dataset,
    normalize_features,
    save_dataset,
    text_alignment,
)


@pytest.fixture(scope="module")
def data():
    return generate_dataset(ToyProcessSpec(), 150, seed=11)


def test_same_seed_same_dataset(data):
    again = generate_dataset(ToyProcessSpec(), 150, seed=11)
    for a, b in zip(data.records, again.records):
        assert np.array_equal(a.x, b.x) and np.array_equal(a.alignment.l, b.alignment.l)
    other = generate_dataset(ToyProcessSpec(), 3, seed=12)
    assert not np.array_equal(other[0].x[:5], data[0].x[:5])


def test_records_are_valid_with_ghost_silences(data):
    ghosts = 0
    for rec in data.records:
        rec.validate()
        al = rec.alignment
        assert al.y[0] == SIL and al.y[-1] == SIL
        for j in range(1, len(al.y) - 1):
            if al.words[j - 1] >= 0 and al.words[j + 1] >= 0 and al.words[j - 1] != al.words[j + 1]:
                assert al.y[j] == SIL
        ghosts += int(np.sum((al.l == 0)))
        assert all(al.y[j] == SIL for j in np.nonzero(al.l == 0)[0])
    assert ghosts > 0


def test_per_phone_means_within_clt_bound(data):
    proc = data.process
    sums = np.zeros_like(proc.means)
    counts = np.zeros(len(proc.means))
    for rec in data.records:
        resid = data.normalizer.inverse(rec.x) - rec.style
        cls = proc.classes(rec.alignment)
        np.add.at(sums, cls, resid)
        np.add.at(counts, cls, 1)
    assert counts.sum() > 10000
    seen = counts > 0
    err = np.abs(sums[seen] / counts[seen, None] - proc.means[seen])
    bound = 3 * proc.spec.emission_scale / np.sqrt(counts[seen])[:, None]
    # 3-sigma per coordinate; allow the rare excursion among ~100 coordinates
    assert np.mean(err <= bound) > 0.97
    assert np.all(err <= 1.5 * bound)


def test_normalization():
    assert normalize_features(-5.8843, -5.8843, 2.2615) == 0.0
    assert Normalizer()(-5.8843) == 0.0
    x = np.random.default_rng(0).normal(size=(7, 3))
    np.testing.assert_allclose(denormalize_features(normalize_features(x, 1.5, 0.3), 1.5, 0.3), x, atol=1e-12)
    with pytest.raises(ValueError):
        normalize_features(x, 0.0, 0.0)


def test_norm_stats_standardize_training_frames(data):
    frames = np.concatenate([rec.x for rec in data.records])
    assert abs(frames.mean()) < 0.05 and abs(frames.std() - 1) < 0.05
    stats = compute_norm_stats(data.process, seed=11)
    assert stats == data.normalizer


def test_upsample_weights():
    np.testing.assert_allclose(language_upsample_weights([30, 10, 60], 1.0), [0.3, 0.1, 0.6])
    np.testing.assert_allclose(language_upsample_weights([90, 10], 0.25), [0.634, 0.366], atol=1e-3)
    np.testing.assert_allclose(language_upsample_weights([5, 5, 5], 0.3), [1 / 3] * 3)
    with pytest.raises(ValueError):
        language_upsample_weights([], 0.5)


def test_save_load_roundtrip(tmp_path, data):
    path = tmp_path / "d.jsonl"
    save_dataset(path, data, {"seed": 11})
    back = load_dataset(path)
    assert back.normalizer == data.normalizer and len(back) == len(data)
    for a, b in zip(data.records, back.records):
        assert np.array_equal(a.x, b.x) and a.alignment.y == b.alignment.y and a.family == b.family
    (tmp_path / "bad.jsonl").write_text('{"magic": "x"}\n')
    with pytest.raises(ValueError):
        load_dataset(tmp_path / "bad.jsonl")


def test_text_alignment_reproduces_word_structure(data):
    al = data[0].alignment
    text = text_alignment(bare_words(al))
    # both carry a SIL at every boundary, so only the durations differ
    assert text.y == al.y and text.words == al.words
    assert not text.l.any()
