import numpy as np
import pytest

from flowfill import flow
from flowfill.numeric import autodiff as ad
from flowfill.numeric.rng import Rng


def test_mean_std_at_path_ends():
    x1 = np.array([1.5, -2.0])
    mu, sigma = flow.ot_mean_std(0.0, x1)
    assert np.array_equal(mu, np.zeros(2)) and sigma == 1.0
    mu, sigma = flow.ot_mean_std(1.0, x1)
    assert np.array_equal(mu, x1) and sigma == pytest.approx(1e-5, rel=1e-9)
    mu, sigma = flow.ot_mean_std(0.5, np.array([2.0]), sigma_min=0.0)
    assert mu[0] == 1.0 and sigma == 0.5


def test_time_outside_unit_interval_is_rejected():
    with pytest.raises(ValueError):
        flow.ot_mean_std(1.2, np.zeros(2))
    with pytest.raises(ValueError):
        flow.conditional_flow(-0.1, np.zeros(2), np.zeros(2))


def test_conditional_flow_values():
    x0, x1 = np.array([3.0]), np.array([-1.0])
    assert np.array_equal(flow.conditional_flow(0.0, x0, x1), x0)
    assert flow.conditional_flow(1.0, x0, x1)[0] == pytest.approx(-0.99997, abs=1e-15)
    assert flow.conditional_flow(0.5, np.zeros(1), np.array([2.0]), sigma_min=0.0)[0] == 1.0
    with pytest.raises(ad.ShapeError):
        flow.conditional_flow(0.3, np.zeros(2), np.zeros(3))


def test_endpoint_law_is_exact():
    rng = np.random.default_rng(0)
    x0, x1 = rng.normal(size=(5, 3)), rng.normal(size=(5, 3))
    np.testing.assert_allclose(flow.conditional_flow(1.0, x0, x1), flow.SIGMA_MIN * x0 + x1, rtol=0, atol=1e-15)


def test_vector_field_values_and_singularity():
    x0, x1 = np.array([0.7]), np.array([2.0])
    assert flow.conditional_vector_field(0.0, x0, x1)[0] == pytest.approx(2.0 - (1 - 1e-5) * 0.7, rel=1e-15)
    assert flow.conditional_vector_field(0.5, np.array([1.0]), x1, sigma_min=0.0)[0] == 2.0
    with pytest.raises(ZeroDivisionError):
        flow.conditional_vector_field(1.0, np.array([1.0]), x1, sigma_min=0.0)


def test_regression_target_values():
    assert flow.cfm_regression_target(np.array([1.0]), np.array([3.0]), sigma_min=0.0)[0] == 2.0
    assert flow.cfm_regression_target(np.array([1.0]), np.array([3.0]))[0] == pytest.approx(2.00001, abs=1e-14)
    x1 = np.array([1.0, -4.0])
    assert np.allclose(flow.cfm_regression_target(x1 / (1 - 1e-5), x1), 0.0, atol=1e-15)


class TargetModel:
    """Returns a fixed array, ignoring its inputs."""

    def __init__(self, out):
        self.out = out

    def __call__(self, w, x_ctx, z, t, valid=None):
        return ad.Tensor(self.out)


def _batch(rng, b=2, n=5, f=3, mask=None):
    x1 = rng.normal(size=(b, n, f))
    m = np.ones((b, n), dtype=np.int64) if mask is None else mask
    return flow.CfmBatch(x1=x1, x0=rng.normal(size=x1.shape), t=rng.uniform(size=b), x_ctx=np.zeros_like(x1), z=np.zeros((b, n), np.int64), m=m)


def test_loss_zero_at_exact_solution_and_full_mask_identity():
    rng = np.random.default_rng(1)
    batch = _batch(rng)
    assert flow.loss_audio_cfm(TargetModel(batch.target()), batch).item() == 0.0
    noise = TargetModel(rng.normal(size=batch.x1.shape))
    assert flow.loss_audio_cfm(noise, batch, masked=True).item() == flow.loss_audio_cfm(noise, batch, masked=False).item()


def test_single_frame_squared_error():
    batch = flow.CfmBatch(
        x1=np.array([[[2.0]]]), x0=np.zeros((1, 1, 1)), t=np.array([0.4]), x_ctx=np.zeros((1, 1, 1)), z=np.zeros((1, 1), np.int64), m=np.ones((1, 1), np.int64)
    )
    assert flow.loss_audio_cfm(TargetModel(np.zeros((1, 1, 1))), batch, sigma_min=0.0).item() == 4.0


def test_masked_loss_ignores_unmasked_frames():
    rng = np.random.default_rng(2)
    m = np.zeros((2, 5), dtype=np.int64)
    m[:, 2:4] = 1
    batch = _batch(rng, mask=m)
    pred = batch.target().copy()
    pred[:, :2] += 10.0
    assert flow.loss_audio_cfm(TargetModel(pred), batch).item() == 0.0
    assert flow.loss_audio_cfm(TargetModel(pred), batch, masked=False).item() > 0.0


def test_all_zero_mask_is_an_error():
    rng = np.random.default_rng(3)
    batch = _batch(rng, mask=np.zeros((2, 5), dtype=np.int64))
    with pytest.raises(ValueError):
        flow.loss_audio_cfm(TargetModel(batch.target()), batch)


def test_cfg_combine_identities():
    rng = np.random.default_rng(4)
    vc, vu = rng.normal(size=6), rng.normal(size=6)
    assert flow.cfg_combine(vc, vu, 0.0) is not None
    assert np.array_equal(flow.cfg_combine(vc, vu, 0.0), vc)
    assert np.allclose(flow.cfg_combine(vc, vc, 0.37), vc, rtol=1e-15, atol=0)
    assert flow.cfg_combine(np.array([1.0]), np.array([0.0]), 0.7)[0] == pytest.approx(1.7)
    a, b = flow.cfg_combine(vc, vu, 0.2), flow.cfg_combine(vc, vu, 0.6)
    assert np.allclose(flow.cfg_combine(vc, vu, 0.4), 0.5 * (a + b), rtol=1e-13)


def test_drop_conditioning_rates():
    rng = np.random.default_rng(5)
    batch = _batch(rng, b=10000, n=1, f=1)
    batch = flow.CfmBatch(batch.x1, batch.x0, batch.t, batch.x1.copy(), batch.z, np.zeros_like(batch.m))
    same, dropped = flow.drop_conditioning(batch, 0.0, Rng(0), null_id=9)
    assert same is batch and not dropped.any()
    out, dropped = flow.drop_conditioning(batch, 1.0, Rng(0), null_id=9)
    assert dropped.all() and not out.x_ctx.any() and (out.z == 9).all()
    out, dropped = flow.drop_conditioning(batch, 0.2, Rng(1), null_id=9)
    assert 0.19 <= dropped.mean() <= 0.21
    # context and transcript are dropped together
    assert np.array_equal(out.z[:, 0] == 9, ~out.x_ctx[:, 0, 0].astype(bool) | dropped)
    with pytest.raises(ValueError):
        flow.drop_conditioning(batch, 1.5, Rng(0), null_id=9)
