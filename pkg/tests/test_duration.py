import numpy as np
import pytest

from flowfill.duration import (
    DurationModel,
    duration_forward_transform,
    duration_inverse_transform,
    loss_duration_cfm,
    loss_duration_regression,
    make_duration_batch,
    predict_durations,
)
from flowfill.numeric.autodiff import Tensor
from flowfill.numeric.rng import Rng


class FixedRegressor(DurationModel):
    """A regression-mode model whose output is pinned."""

    def __init__(self, out):
        super().__init__("regression", DurationModel.create("regression", 5, dim=8, heads=2, ffn_width=8).net)
        self.out = out

    def regress(self, l_ctx_tf, y, valid=None):
        return Tensor(self.out)


def test_transform_values_and_roundtrip():
    assert duration_forward_transform(3) == pytest.approx(1.386294, abs=1e-6)
    assert duration_forward_transform(0) == 0.0
    assert duration_inverse_transform(np.log(4.0)) == 3
    assert duration_inverse_transform(-5.0) == 0
    l = np.arange(501)
    assert np.array_equal(duration_inverse_transform(duration_forward_transform(l)), l)
    with pytest.raises(ValueError):
        duration_forward_transform([-1])


def test_dequantized_values_are_uniform_around_the_integer():
    pre = np.expm1(duration_forward_transform(np.full(10000, 3), Rng(0), dequantize=True))
    assert pre.min() >= 2.5 and pre.max() <= 3.5
    assert 2.98 <= pre.mean() <= 3.02


def test_regression_loss_examples():
    l = duration_forward_transform(np.array([[2, 3]]))
    batch = make_duration_batch(l, np.array([[1, 2]]), np.array([[0, 1]]))
    assert loss_duration_regression(FixedRegressor(l[..., None]), batch).item() == 0.0
    off = l[..., None].copy()
    off[0, 1, 0] += 0.25
    off[0, 0, 0] -= 7.0  # unmasked phone: ignored
    assert loss_duration_regression(FixedRegressor(off), batch).item() == pytest.approx(0.25)
    empty = make_duration_batch(l, np.array([[1, 2]]), np.array([[0, 0]]))
    with pytest.raises(ValueError):
        loss_duration_regression(FixedRegressor(off), empty)


def test_flow_loss_zero_for_exact_field():
    model = DurationModel.create("flow", 6, seed=1, dim=8, heads=2, ffn_width=8)
    rng = np.random.default_rng(1)
    l = duration_forward_transform(rng.integers(0, 9, size=(2, 5)))
    batch = make_duration_batch(l, rng.integers(0, 5, size=(2, 5)), np.ones((2, 5), np.int64))
    x0, t = rng.normal(size=(2, 5, 1)), rng.uniform(size=2)
    target = batch.l[..., None] - (1 - 1e-5) * x0

    class Exact:
        null_id = 5

        def __call__(self, w, ctx, y, t, valid=None):
                return Tensor(target)

    assert loss_duration_cfm(Exact(), batch, x0, t).item() == pytest.approx(0.0, abs=1e-24)
    assert loss_duration_cfm(model, batch, x0, t).item() > 0


def test_prediction_contracts():
    reg = DurationModel.create("regression", 6, seed=2, dim=8, heads=2, ffn_width=8)
    y = np.array([0, 1, 2, 3, 0])
    l = np.array([2, 3, 4, 5, 1])
    assert np.array_equal(predict_durations(reg, y, l, np.zeros(5, np.int64)), l)
    m = np.array([0, 1, 1, 0, 0])
    a = predict_durations(reg, y, l, m)
    assert np.array_equal(a, predict_durations(reg, y, l, m))
    assert np.array_equal(a[m == 0], l[m == 0])
    flow_model = DurationModel.create("flow", 6, seed=3, dim=8, heads=2, ffn_width=8)
    draws = [predict_durations(flow_model, y, l, m, rng=Rng(s)) for s in (0, 1)]
    for d in draws:
        assert d.dtype.kind == "i" and d.min() >= 0
        assert np.array_equal(d[m == 0], l[m == 0])


def test_mode_mismatch_errors():
    reg = DurationModel.create("regression", 6, dim=8, heads=2, ffn_width=8)
    with pytest.raises(ValueError):
        reg(np.zeros((1, 2, 1)), np.zeros((1, 2, 1)), np.zeros((1, 2), np.int64), np.zeros(1))
    with pytest.raises(ValueError):
        DurationModel("flow", reg.net)
    with pytest.raises(ValueError):
        DurationModel.create("lstm", 6)
