import numpy as np
import pytest
from helpers import gradcheck

from flowfill.numeric import autodiff as ad
from flowfill.numeric.autodiff import ShapeError, Tape, Tensor
from flowfill.numeric.nn import sinusoidal_embed
from flowfill.numeric.optim import Adam, clip_grad_norm, warmup_linear
from flowfill.numeric.rng import Rng


def leaf(rng, *shape):
    return Tensor(rng.normal(size=shape), requires_grad=True)


@pytest.mark.parametrize(
    "name, build",
    [
        ("add_broadcast", lambda a, b: ad.add(a, b[0])),
        ("sub", lambda a, b: ad.sub(a, b)),
        ("mul", lambda a, b: ad.mul(a, b)),
        ("square", lambda a, b: ad.square(a)),
        ("abs", lambda a, b: ad.abs_(a)),
        ("tanh", lambda a, b: ad.tanh(a)),
        ("relu", lambda a, b: ad.relu(a)),
        ("gelu", lambda a, b: ad.gelu(a)),
        ("softmax", lambda a, b: ad.softmax(a, axis=-1)),
        ("matmul", lambda a, b: ad.matmul(a, ad.transpose(b, (0, 2, 1)))),
        ("sum_axis", lambda a, b: ad.sum_(a, axis=1, keepdims=True)),
        ("mean", lambda a, b: ad.mean(a, axis=-1)),
        ("reshape", lambda a, b: ad.reshape(a, (3, 20))),
        ("concat", lambda a, b: ad.concat([a, b], axis=-1)),
        ("slice", lambda a, b: a[:, 1:3]),
    ],
)
def test_primitive_gradients_match_central_differences(name, build):
    rng = np.random.default_rng(0)
    a, b = leaf(rng, 3, 4, 5), leaf(rng, 3, 4, 5)
    a.data += np.sign(a.data) * 0.05  # keep |.| and relu away from their kinks
    weights = rng.normal(size=build(a, b).shape)
    errors = gradcheck(lambda: ad.sum_(ad.mul(build(a, b), weights)), [a, b], 40, rng)
    assert max(errors) < 1e-6


def test_layer_norm_and_gather_gradients():
    rng = np.random.default_rng(1)
    x, g, s = leaf(rng, 2, 3, 6), leaf(rng, 6), leaf(rng, 6)
    table = leaf(rng, 5, 4)
    ids = np.array([[0, 4, 4], [2, 1, 0]])
    w1, w2 = rng.normal(size=(2, 3, 6)), rng.normal(size=(2, 3, 4))

    def build():
        return ad.add(ad.sum_(ad.mul(ad.layer_norm(x, g, s), w1)), ad.sum_(ad.mul(ad.gather(table, ids), w2)))

    assert max(gradcheck(build, [x, g, s, table], 60, rng)) < 1e-6


def test_backward_is_linear_in_the_loss():
    rng = np.random.default_rng(2)
    p = leaf(rng, 4, 3)
    x = rng.normal(size=(5, 4))

    def grads(scale):
        with Tape() as tape:
            loss = ad.mul(ad.sum_(ad.tanh(ad.matmul(x, p))), scale)
        return tape.backward(loss, [p])[p]

    np.testing.assert_allclose(grads(3.0), 3.0 * grads(1.0), rtol=1e-13)


def test_shared_subexpression_accumulates():
    p = Tensor(np.array([2.0]), requires_grad=True)
    with Tape() as tape:
        y = ad.mul(p, p)
        loss = ad.sum_(ad.add(y, y))
    assert tape.backward(loss, [p])[p][0] == pytest.approx(8.0)


def test_unreached_parameter_gets_zeros_and_graph_is_released():
    rng = np.random.default_rng(3)
    used, unused = leaf(rng, 3), leaf(rng, 2)
    with Tape() as tape:
        loss = ad.sum_(ad.square(used))
    grads = tape.backward(loss, [used, unused])
    assert np.array_equal(grads[unused], np.zeros(2))
    assert len(tape) == 0


def test_backward_rejects_nonscalar_loss():
    rng = np.random.default_rng(4)
    p = leaf(rng, 3)
    with Tape() as tape:
        out = ad.square(p)
    with pytest.raises(ShapeError):
        tape.backward(out, [p])


def test_shape_errors_name_both_shapes():
    a = Tensor(np.zeros((2, 3)))
    b = Tensor(np.zeros((4, 5)))
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 5\)"):
        ad.matmul(a, b)
    with pytest.raises(ShapeError):
        ad.add(a, Tensor(np.zeros((3, 2))))


def test_gather_rejects_out_of_range_ids():
    with pytest.raises((IndexError, ValueError)):
        ad.gather(Tensor(np.zeros((3, 2))), np.array([0, 3]))


def test_rng_streams_are_deterministic_and_distinct():
    a = Rng(5, stream=1).normal(size=8)
    assert np.array_equal(a, Rng(5, stream=1).normal(size=8))
    assert not np.array_equal(a, Rng(5, stream=2).normal(size=8))
    assert not np.array_equal(a, Rng(6, stream=1).normal(size=8))


def test_geometric_support_starts_at_zero():
    draws = Rng(0).geometric(0.5, size=20000)
    assert draws.min() == 0
    assert draws.mean() == pytest.approx(1.0, abs=0.05)


def test_clip_grad_norm_caps_global_norm():
    p, q = Tensor(np.zeros(3), requires_grad=True), Tensor(np.zeros(2), requires_grad=True)
    grads = {p: np.array([3.0, 0.0, 0.0]), q: np.array([0.0, 4.0])}
    before, after = clip_grad_norm(grads, 0.2)
    assert before == pytest.approx(5.0)
    assert after == pytest.approx(0.2)
    total = np.sqrt(sum((g**2).sum() for g in grads.values()))
    assert total <= 0.2 + 1e-12


def test_warmup_then_linear_decay():
    lrs = [warmup_linear(s, 1e-4, 10, 100) for s in range(100)]
    assert lrs[0] < lrs[5] < lrs[9] <= 1e-4
    assert max(lrs) == pytest.approx(1e-4)
    assert all(a >= b for a, b in zip(lrs[10:], lrs[11:]))
    assert lrs[-1] < 1e-5


def test_adam_descends_a_quadratic():
    p = Tensor(np.array([3.0, -2.0]), requires_grad=True)
    opt = Adam([p])
    for _ in range(300):
        opt.step({p: 2 * p.data}, 0.05)
    assert np.abs(p.data).max() < 0.05


def test_sinusoidal_embedding_shape_and_parity():
    e = sinusoidal_embed(np.array([0.0, 0.5]), 16)
    assert e.shape == (2, 16)
    assert np.all(np.abs(e) <= 1.0)
    with pytest.raises(ValueError):
        sinusoidal_embed(np.array([0.1]), 7)
