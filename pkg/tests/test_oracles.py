"""Inverse transforms, field reconstruction, and log-based identities."""

import numpy as np
import pytest
from scipy.linalg import expm

from delaysafe.backstepping import actuator_input_jet, delta_jet
from delaysafe.oracles import (compute_w, delta_field, fit_log_slope,
                               inverse_x, inverse_y, target_residuals)


def test_logged_margins_invert_to_the_states(regulation_cfg, regulation_nominal):
    cfg, log = regulation_cfg, regulation_nominal
    gains = cfg.gains()
    traj = cfg.trajectory()
    order = cfg.plant.n + cfg.plant.m
    rng = np.random.default_rng(11)
    for i in rng.integers(0, len(log.t), size=12):
        s_jet = traj.jet(log.t[i], order)
        Y_back = inverse_y(log.z[i], s_jet, cfg.plant, gains.k)
        assert np.allclose(Y_back, log.Y[i], rtol=1e-9, atol=1e-11)


def test_logged_actuator_margins_invert(regulation_cfg, regulation_nominal):
    cfg, log = regulation_cfg, regulation_nominal
    gains = cfg.gains()
    traj = cfg.trajectory()
    order = cfg.plant.n + cfg.plant.m
    rng = np.random.default_rng(12)
    for i in rng.integers(0, len(log.t), size=12):
        s_ahead = traj.jet(log.t[i] + cfg.D_true, order)
        delta = delta_jet(log.P_true[i], s_ahead, cfg.plant, gains.k,
                          actuator_input_jet(log.X[i], cfg.plant))
        X_back = inverse_x(log.r[i], delta, cfg.plant, gains.c)
        assert np.allclose(X_back, log.X[i], rtol=1e-9, atol=1e-11)


def test_delta_field_starts_at_the_margin():
    x = np.linspace(0.0, 1.0, 51)
    Z = np.array([1.3, -0.4])
    out = delta_field(Z, np.sin(2 * np.pi * x), (2.0, 1.5), 0.8, x)
    assert out.shape == (51, 2)
    assert np.allclose(out[0], Z)


def test_delta_field_scalar_closed_form():
    # n = 1 with constant w: delta(x) = e^{-kDx} z + (w/k)(1 - e^{-kDx})
    k, D, z, w = 1.7, 0.9, 2.0, 0.6
    x = np.linspace(0.0, 1.0, 201)
    out = delta_field(np.array([z]), np.full_like(x, w), (k,), D, x)
    expect = np.exp(-k * D * x) * z + (w / k) * (1.0 - np.exp(-k * D * x))
    assert np.allclose(out[:, 0], expect, atol=5e-5)


def test_delta_field_homogeneous_matches_expm():
    Z = np.array([0.7, -1.1])
    k, D = (2.0, 1.2), 0.6
    x = np.linspace(0.0, 1.0, 11)
    A = np.array([[-k[0], 1.0], [0.0, -k[1]]])
    out = delta_field(Z, np.zeros_like(x), k, D, x)
    assert np.allclose(out[-1], expm(D * A) @ Z, atol=1e-12)


def test_delta_field_needs_a_uniform_grid():
    with pytest.raises(ValueError):
        delta_field(np.array([1.0]), np.zeros(3), (1.0,), 0.5,
                    np.array([0.0, 0.3, 1.0]))


def test_channel_boundary_equals_first_actuator_margin(regulation_cfg,
                                                       regulation_nominal):
    # w(1, t) carries the fresh sample b*x1(t); by construction that equals
    # r1(t) when paired with the true prediction and the shifted reference
    cfg, log = regulation_cfg, regulation_nominal
    gains = cfg.gains()
    traj = cfg.trajectory()
    order = cfg.plant.n + cfg.plant.m
    rng = np.random.default_rng(13)
    idx = rng.integers(0, len(log.t), size=20)
    s_jets = traj.jet(log.t[idx] + cfg.D_true, order)
    w1 = compute_w(cfg.plant.b * log.X[idx, 0], log.P_true[idx], s_jets,
                   cfg.plant, gains.k)
    assert np.allclose(w1, log.r[idx, 0], atol=1e-8)


def test_fit_log_slope_recovers_exponentials():
    t = np.linspace(0.0, 10.0, 501)
    assert fit_log_slope(t, 5.0 * np.exp(-2.0 * t), 1.0) == pytest.approx(-2.0)
    assert fit_log_slope(t, np.exp(t), 0.0, t_max=5.0) == pytest.approx(1.0)
    assert fit_log_slope(t, np.zeros_like(t), 0.0) is None


def test_target_residuals_small_on_a_nominal_run(regulation_cfg,
                                                 regulation_nominal):
    res = target_residuals(regulation_nominal, regulation_cfg.plant,
                           regulation_cfg.gains())
    assert set(res) == {"z1", "z2", "r1"}
    # first-order integration leaves defects on the scale of dt
    assert all(v <= 10 * regulation_cfg.dt for v in res.values())
