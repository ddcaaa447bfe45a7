import numpy as np
import pytest

from flowfill.duration import DurationModel
from flowfill.network import FieldNet, NetConfig
from flowfill.ode import SolverConfig
from flowfill.sequence import rep
from flowfill.synth import ToyProcessSpec, bare_words, generate_dataset
from flowfill.tasks import EditSpec, Infiller, TaskRequest, corrupt_span

COARSE = SolverConfig(step_size=0.25)


@pytest.fixture(scope="module")
def data():
    return generate_dataset(ToyProcessSpec(), 6, seed=8)


@pytest.fixture(scope="module")
def infiller(data):
    vocab = data.phones.size
    audio = FieldNet(NetConfig(feat_dim=8, vocab=vocab, phone_dim=8, dim=16, layers=2, heads=2, ffn_width=32), seed=0)
    duration = DurationModel.create("regression", vocab, seed=1, dim=16, heads=2, ffn_width=32)
    return Infiller(audio, duration, data.phones, solver=COARSE, duration_solver=COARSE)


def test_request_validation(data):
    rec = data[0]
    with pytest.raises(ValueError):
        TaskRequest("karaoke")
    with pytest.raises(ValueError):
        TaskRequest("denoise", reference_x=rec.x, reference=rec.alignment)
    with pytest.raises(ValueError):
        TaskRequest("denoise", reference_x=rec.x, reference=rec.alignment, noise_span=(5, 5))
    with pytest.raises(ValueError):
        TaskRequest("zs_tts", reference_x=rec.x[:-1], reference=rec.alignment, target_text=[["A"]])
    assert TaskRequest("sample", target_text=[["A"]]).guidance == 0.0
    assert TaskRequest("zs_tts", target_text=[["A"]]).guidance == 0.7


def test_zero_shot_tts_durations_cover_output(infiller, data):
    ref, tgt = data[0], data[1]
    req = TaskRequest("zs_tts", reference_x=ref.x, reference=ref.alignment, target_text=bare_words(tgt.alignment), seed=3)
    res = infiller.run([req])[0]
    assert res.durations.sum() == len(res.x) == len(res.z)
    assert np.array_equal(rep(res.phones, res.durations), res.z)
    assert res.nfe == 16  # guided midpoint at h=0.25
    assert res.durations[0] <= infiller.max_edge_silence and res.durations[-1] <= infiller.max_edge_silence


def test_style_transfer_keeps_target_alignment(infiller, data):
    ref, tgt = data[0], data[2]
    z_bar = tgt.frame_ids(data.phones)
    res = infiller.style_transfer(TaskRequest("style_transfer", reference_x=ref.x, reference=ref.alignment, target_z=z_bar))
    assert len(res.x) == len(z_bar) and np.array_equal(res.z, z_bar)


def test_denoise_preserves_frames_outside_span(infiller, data):
    rec = data[3]
    span = (10, 30)
    noisy = corrupt_span(rec.x, span, 0.0, seed=1)
    assert np.array_equal(noisy[: span[0]], rec.x[: span[0]]) and not np.array_equal(noisy[10:30], rec.x[10:30])
    res = infiller.denoise(TaskRequest("denoise", reference_x=noisy, reference=rec.alignment, noise_span=span))
    outside = np.ones(len(rec.x), bool)
    outside[span[0] : span[1]] = False
    assert np.array_equal(res.x[outside], noisy[outside])


def test_identity_edit_preserves_kept_frames(infiller, data):
    rec = data[4]
    ali = rec.alignment
    words = bare_words(ali)
    edit = EditSpec.for_words(ali, 1, 1, [words[1]])
    res = infiller.content_edit(TaskRequest("edit", reference_x=rec.x, reference=ali, edit=edit))
    before = int(ali.l[: edit.start].sum())
    after = int(ali.l[edit.end :].sum())
    assert np.array_equal(res.x[:before], rec.x[:before])
    assert np.array_equal(res.x[len(res.x) - after :], rec.x[len(rec.x) - after :])
    assert res.durations.sum() == len(res.x)
    assert np.array_equal(res.durations[: edit.start], ali.l[: edit.start])


def test_edit_rejects_span_off_word_boundaries(infiller, data):
    rec = data[4]
    start, end = rec.alignment.word_spans()[1]
    bad = EditSpec(start, end - 1, (("A",),)) if end - start > 1 else EditSpec(start + 1, end + 1, (("A",),))
    with pytest.raises(ValueError):
        infiller.content_edit(TaskRequest("edit", reference_x=rec.x, reference=rec.alignment, edit=bad))


def test_sampling_seeds_give_different_outputs(infiller, data):
    text = bare_words(data[5].alignment)
    a, b = infiller.run([TaskRequest("sample", target_text=text, seed=s) for s in (1, 2)])
    assert np.array_equal(a.z, b.z)  # regression durations are deterministic
    assert np.linalg.norm(a.x - b.x) > 0
    z_bar = data[5].frame_ids(data.phones)
    c, d = infiller.run([TaskRequest("style_shuffle", target_z=z_bar, seed=s) for s in (1, 2)])
    assert len(c.x) == len(z_bar) and not np.allclose(c.x.mean(0), d.x.mean(0))


def test_batching_does_not_change_results(infiller, data):
    text = bare_words(data[5].alignment)
    reqs = [TaskRequest("sample", target_text=text, seed=9), TaskRequest("sample", target_text=bare_words(data[1].alignment), seed=4)]
    together = infiller.run(reqs)
    alone = infiller.run(reqs[:1])
    np.testing.assert_allclose(together[0].x, alone[0].x, rtol=1e-12, atol=1e-12)
