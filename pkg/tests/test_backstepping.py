"""Cascade transforms, nominal command, and gain selection.

Frozen reference values come from an independent dense-grid computation
done before this module existed; INIT_TOL covers the first-order
node-placement offset between that oracle and the production predictor
(both schemes are O(d) at d = 0.001).
"""

import numpy as np
import pytest

from delaysafe.backstepping import (GainSet, GainSelectionError, forward_r,
                                    forward_z, delta_jet, actuator_input_jet,
                                    filter_direction, nominal_terms, u_star,
                                    uncompensated_control, select_gains,
                                    validate_gains)
from delaysafe.jets import constant
from delaysafe.platoon import platoon_configs
from delaysafe.scenario import build_bank

INIT_TOL = 5e-4


def _close(got, frozen):
    return abs(got - frozen) <= INIT_TOL * max(1.0, abs(frozen))


@pytest.fixture(scope="module")
def lead():
    cfg1, _ = platoon_configs()
    bank = build_bank(cfg1, [cfg1.D_true])
    order = cfg1.plant.n + cfg1.plant.m
    s_jet = cfg1.trajectory().jet(cfg1.D_true, order)
    gains = GainSet(cfg1.k, cfg1.c, c_bar=cfg1.c_bar)
    return cfg1, bank.values()[0], s_jet, gains


def test_margin_at_start(lead):
    # d1(0) = 10.5 m against the 0.5 m floor: z1(0) = 4.5 exactly
    cfg1, _, _, gains = lead
    order = cfg1.plant.n + cfg1.plant.m
    z = forward_z(cfg1.Y0, cfg1.trajectory().jet(0.0, order), cfg1.plant,
                  gains.k)
    assert z[0] == pytest.approx(4.5)


def test_frozen_delta_and_r(lead):
    cfg1, P0, s_jet, gains = lead
    delta = delta_jet(P0, s_jet, cfg1.plant, gains.k,
                      actuator_input_jet(cfg1.X0, cfg1.plant))
    assert _close(delta.value, -115.35815112689446)
    r, _ = forward_r(cfg1.X0, delta, cfg1.plant, gains.c)
    assert _close(r[0], 114.85815112689446)
    # r1 = b*x1 - Delta by construction
    assert r[0] == pytest.approx(cfg1.plant.b * cfg1.X0[0] - delta.value)


def test_frozen_nominal_command(lead):
    cfg1, P0, s_jet, gains = lead
    U, r_m, tau_m, delta = nominal_terms(P0, cfg1.X0, s_jet, cfg1.plant, gains)
    assert _close(U, 1203.602668788041)
    assert U == pytest.approx((tau_m + delta.d(cfg1.plant.m)) / cfg1.plant.b)


def test_u_star_offset(lead):
    # U* differs from the nominal command by (c_m - c_bar) r_m / b
    cfg1, P0, s_jet, gains = lead
    U, r_m, _, _ = nominal_terms(P0, cfg1.X0, s_jet, cfg1.plant, gains)
    star = u_star(P0, cfg1.X0, s_jet, cfg1.plant, gains)
    assert star == pytest.approx(U + (gains.c[-1] - gains.c_bar) * r_m / cfg1.plant.b)


def test_candidate_ratio_grid_range():
    # the data-dependent k1 floor probe, swept over all 381 candidates
    cfg1, _ = platoon_configs()
    grid = cfg1.candidate_grid()
    bank = build_bank(cfg1, grid)
    order = cfg1.plant.n + cfg1.plant.m
    s_jets = cfg1.trajectory().jet(grid, order)
    z = forward_z(bank.values(), s_jets, cfg1.plant, (0.0, 0.0))
    ratio = -z[..., 1] / z[..., 0]
    assert ratio.min() == pytest.approx(-0.666, abs=1e-3)
    assert ratio.max() == pytest.approx(-0.151, abs=1e-3)


def test_table_gains_clear_their_floors():
    cfg1, _ = platoon_configs()
    grid = cfg1.candidate_grid()
    bank = build_bank(cfg1, grid)
    s_jets = cfg1.trajectory().jet(grid, cfg1.plant.n + cfg1.plant.m)
    check = validate_gains(GainSet(cfg1.k, cfg1.c), bank.values(), cfg1.X0,
                           s_jets, cfg1.plant)
    assert check.ok
    assert check.k_floors == (2.0,)


def test_gain_set_validation():
    g = GainSet([3, 2], [2])
    assert g.k == (3.0, 2.0)
    assert g.c == (2.0,)
    with pytest.raises(ValueError):
        GainSet((3, -2), (2,))
    with pytest.raises(ValueError):
        GainSet((3, 2), (2,), c_bar=0.0)


def test_select_gains_structure(regulation_cfg):
    gains = regulation_cfg.gains()
    n, m = regulation_cfg.plant.n, regulation_cfg.plant.m
    assert len(gains.k) == n and len(gains.c) == m
    # top gains sit at 1 + slack, intermediate ones clear both 2 and the floor
    assert gains.k[-1] == pytest.approx(1.0 + regulation_cfg.slack)
    assert gains.c[-1] == pytest.approx(1.0 + regulation_cfg.slack)
    assert all(v >= 2.0 for v in gains.k[:-1])


def test_select_gains_rejects_violated_margins(regulation_cfg):
    plant = regulation_cfg.plant
    s_jet = regulation_cfg.trajectory().jet(1.0, plant.n + plant.m)
    # a negative initial margin breaks the positivity precondition
    with pytest.raises(GainSelectionError):
        select_gains(np.array([-2.0, 0.5]), np.array([0.0]), s_jet, plant)


def test_filter_direction_is_gain_only(lead):
    cfg1, _, _, gains = lead
    d1 = filter_direction(cfg1.plant, gains)
    assert d1.shape == (cfg1.plant.n + cfg1.plant.m + 1,)
    assert np.all(np.isfinite(d1))


def test_uncompensated_control_is_finite(lead):
    cfg1, P0, _, gains = lead
    order = cfg1.plant.n + cfg1.plant.m
    s_now = cfg1.trajectory().jet(0.0, order)
    u0 = constant(cfg1.plant.b * 0.0, order)  # quiescent pre-start input
    U = uncompensated_control(cfg1.Y0, cfg1.X0, s_now, cfg1.plant, gains, u0)
    assert np.isfinite(U)
