"""Two-vehicle scenario wiring and physical-unit views."""

import numpy as np
import pytest

from delaysafe.platoon import (CLEARANCE, VOLTAGE_GAIN, leader_position,
                               leader_velocity, platoon_configs,
                               result_columns, run_platoon)


def test_table_configuration():
    cfg1, cfg2 = platoon_configs()
    assert cfg1.plant.b == cfg2.plant.b == -0.25
    assert (cfg1.D_true, cfg2.D_true) == (2.5, 1.5)
    assert (cfg1.D_lo, cfg1.D_hi) == (0.2, 4.0)
    assert cfg1.d_D == cfg2.d_D == 0.01
    assert np.allclose(cfg1.Y0, [-5.0, -1.0])
    assert np.allclose(cfg1.X0, [2.0])
    assert np.allclose(cfg2.Y0, [0.0, -2.0])
    assert np.allclose(cfg2.X0, [1.0])
    assert cfg1.k == (3.0, 2.0) and cfg1.c == (2.0,)
    assert cfg1.t_final == 40.0


def test_overrides_propagate():
    cfg1, cfg2 = platoon_configs(dt=0.002, t_final=6.0, d_D=0.05)
    for cfg in (cfg1, cfg2):
        assert cfg.dt == 0.002
        assert cfg.t_final == 6.0
        assert cfg.d_D == 0.05
        # the predictor step follows a dt override so the stride stays integral
        assert cfg.d_pred == cfg.dt


def test_leader_path():
    assert leader_position(0.0) == pytest.approx(10.0)
    assert leader_velocity(0.0) == pytest.approx(4.0)
    t = np.linspace(0.0, 5.0, 11)
    dp = (leader_position(t + 1e-6) - leader_position(t - 1e-6)) / 2e-6
    assert np.allclose(dp, leader_velocity(t), atol=1e-5)
    # the lead reference keeps the gap at the clearance when tracked exactly
    cfg1, _ = platoon_configs()
    s1 = cfg1.trajectory().eval(t, 0)
    assert np.allclose(leader_position(t) + s1, CLEARANCE)


def test_voltage_scale():
    assert VOLTAGE_GAIN == pytest.approx(160.0)  # k_t/(r*L) = 0.8/(0.1*0.05)


def test_result_columns_identities(platoon_adaptive):
    res = platoon_adaptive.value
    cols = result_columns(res)
    t = cols["t"]
    assert np.array_equal(cols["d1"], leader_position(t) + res.e1.Y[:, 0])
    assert np.array_equal(cols["d2"], res.e2.Y[:, 0] - res.e1.Y[:, 0])
    assert np.array_equal(cols["v1"], -res.e1.Y[:, 1])
    assert np.array_equal(cols["V1"], res.e1.U_applied / VOLTAGE_GAIN)
    # the lead vehicle's safety margin is exactly the spacing above clearance
    assert np.allclose(cols["d1"] - CLEARANCE, res.e1.margin, atol=1e-9)


def test_result_columns_align_on_divergence(platoon_uncompensated):
    res = platoon_uncompensated.value
    assert res.diverged
    cols = result_columns(res)
    L = len(cols["t"])
    assert L == min(len(res.e1.t), len(res.e2.t))
    for key in ("d1", "d2", "v1", "v2", "F1", "F2", "V1", "V2",
                "Dhat1", "Dhat2"):
        assert len(cols[key]) == L


def test_uncompensated_breaches_and_diverges(platoon_uncompensated):
    res = platoon_uncompensated.value
    cols = result_columns(res)
    assert min(cols["d1"].min(), cols["d2"].min()) < CLEARANCE
    assert res.e1.diverged or res.e2.diverged


def test_rejects_unknown_mode():
    with pytest.raises(ValueError):
        run_platoon(mode="sideways")
