import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mvrecon.cfg import (
    CfgSchedule,
    angular_distance,
    base_weight,
    guided_prediction,
    noise_levels,
    sample_loop,
    schedule_table,
    timesteps,
    view_tau,
    view_weight,
    weight_map,
)
from mvrecon.errors import DomainError, SizeError


def test_base_weight_values():
    assert base_weight(0) == 2.0
    assert base_weight(1000) == 18.0
    assert base_weight(500) == pytest.approx(2.5, abs=1e-12)
    with pytest.raises(DomainError):
        base_weight(-1)
    with pytest.raises(DomainError):
        base_weight(1001)
    assert base_weight(250.5) == pytest.approx(2 + 16 * 0.2505**5)


def test_view_tau_linear_rule():
    assert view_tau(0) == 1.0
    assert view_tau(180) == 0.5
    assert view_tau(60) == pytest.approx(5 / 6)
    assert view_tau(300) == pytest.approx(5 / 6)
    assert view_tau(-60) == pytest.approx(5 / 6)


def test_cosine_rule_endpoints_and_monotone():
    s = CfgSchedule(tau_rule="cosine")
    assert view_tau(0, s) == 1.0 and view_tau(180, s) == pytest.approx(0.5)
    taus = [view_tau(a, s) for a in range(0, 181)]
    assert all(b <= a + 1e-15 for a, b in zip(taus, taus[1:]))


def test_view_weight_values():
    assert view_weight(1000, 180) == pytest.approx(9.0, abs=1e-12)
    assert view_weight(0, 0) == 2.0
    assert view_weight(1000, 120) == pytest.approx(12.0, abs=1e-12)


def test_weight_map_tile_order():
    np.testing.assert_allclose(weight_map(1000).as_list(), [18, 15, 12, 9, 12, 15], atol=1e-12)
    np.testing.assert_allclose(weight_map(0).as_list(), [2, 5 / 3, 4 / 3, 1, 4 / 3, 5 / 3], atol=1e-12)
    w = weight_map(0).weights
    assert w.shape == (3, 2) and np.all((w >= 1) & (w <= 2))


def test_schedule_validation():
    with pytest.raises(DomainError):
        CfgSchedule(tau_back=0.3)
    with pytest.raises(DomainError):
        CfgSchedule(tau_rule="step")
    fixed = CfgSchedule.fixed(7.5)
    assert weight_map(1000, fixed).as_list() == [7.5] * 6
    assert len(set(weight_map(700, CfgSchedule.time_only()).as_list())) == 1


@settings(max_examples=200, deadline=None)
@given(st.floats(-720, 720))
def test_angular_distance_range(a):
    d = angular_distance(a)
    assert 0 <= d <= 180
    assert d == pytest.approx(angular_distance(-a), abs=1e-9)


def test_guided_prediction_scalar_oracle():
    rng = np.random.default_rng(0)
    eu, ec = rng.normal(size=(2, 12, 8, 4))
    wm = weight_map(640)
    out = guided_prediction(eu, ec, wm)
    tile_h, tile_w = 4, 4
    for y in range(12):
        for x in range(8):
            w = wm.weights[y // tile_h, x // tile_w]
            for c in range(4):
                assert out[y, x, c] == pytest.approx(eu[y, x, c] + w * (ec[y, x, c] - eu[y, x, c]), abs=1e-12)


def test_guided_prediction_edge_cases():
    rng = np.random.default_rng(1)
    e = rng.normal(size=(6, 4))
    assert np.array_equal(guided_prediction(e, e, weight_map(1000)), e)
    ones = weight_map(0, CfgSchedule.fixed(1.0))
    ec = rng.normal(size=(6, 4))
    assert np.array_equal(guided_prediction(e, ec, ones), ec)
    two = weight_map(0, CfgSchedule.fixed(2.0))
    np.testing.assert_array_equal(guided_prediction(np.zeros((3, 2)), np.ones((3, 2)), two), 2.0)
    with pytest.raises(SizeError):
        guided_prediction(np.zeros((6, 4)), np.zeros((6, 2)), ones)
    with pytest.raises(SizeError):
        guided_prediction(np.zeros((5, 4)), np.zeros((5, 4)), ones)


def test_timesteps_descend_to_zero():
    ts = timesteps(50)
    assert ts[0] == 1000 and ts[-1] == 0 and len(ts) == 51
    assert np.all(np.diff(ts) < 0)
    with pytest.raises(DomainError):
        timesteps(0)


def test_sampler_zero_denoiser_keeps_latent():
    latent = np.random.default_rng(3).normal(size=(6, 4))
    zero = lambda x, t: (np.zeros_like(x), np.zeros_like(x))
    for steps in (1, 7, 50):
        assert np.array_equal(sample_loop(zero, latent=latent, steps=steps), latent)


def test_sampler_toy_target_closed_form():
    """eps = (x - y) / sigma_t: each step scales (x - y) by sigma_next / sigma_t."""
    rng = np.random.default_rng(4)
    target = rng.uniform(-1, 1, size=(6, 4))
    sig = noise_levels()

    def denoise(x, t):
        e = (x - target) / sig[t]
        return e, e

    out = sample_loop(denoise, target.shape, steps=50, seed=9)
    assert np.abs(out - target).max() <= 1e-3
    # closed form with guidance: per step factor 1 + w (s_next - s) / s
    x0 = np.random.default_rng(9).standard_normal(target.shape) * np.sqrt(1 + sig[1000] ** 2)
    np.testing.assert_allclose(out - target, (x0 - target) * (sig[0] / sig[1000]), atol=1e-12)
    assert np.array_equal(out, sample_loop(denoise, target.shape, steps=50, seed=9))


def test_sampler_guided_geometric_decay():
    sig = noise_levels()
    target, mean = 1.0, 0.25

    def denoise(x, t):
        return (x - target) / sig[t], (x - mean) / sig[t]

    x0 = np.full((3, 2), 3.0)
    out = sample_loop(denoise, latent=x0, steps=5)
    ts = timesteps(5)
    wm = [weight_map(t).weights for t in ts[:-1]]
    x = x0.copy()
    for w, t, tn in zip(wm, ts[:-1], ts[1:]):
        x = x + (sig[tn] - sig[t]) * ((x - mean) + w * (mean - target)) / sig[t]
    np.testing.assert_allclose(out, x, rtol=1e-12)


def test_schedule_table_rows():
    rows = schedule_table(ts=[0, 1000])
    assert len(rows) == 12
    assert rows[0] == (0, 0.0, 2.0)
    assert rows[9][2] == pytest.approx(9.0)
