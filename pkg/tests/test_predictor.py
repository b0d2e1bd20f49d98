"""Delay-candidate predictor bank.

The two platoon initialization values were frozen from an independent
dense-grid integration written before this module; the comparison
tolerance covers first-order node-placement differences between the two
schemes (both are O(d) accurate with d = 0.001).
"""

import numpy as np
import pytest

from delaysafe.exprs import compile_expression
from delaysafe.plant import PlantDefinition
from delaysafe.platoon import platoon_configs
from delaysafe.predictor import PredictorBank, PredictorDivergence
from delaysafe.scenario import build_bank

INIT_TOL = 5e-4


def _integrator_plant():
    zero = compile_expression("0", ("y1",))
    phi = compile_expression("0", ("x1",))
    return PlantDefinition(n=1, m=1, b=2.0, psi=(zero,), phi=(phi,),
                           psi_exprs=("0",), phi_exprs=("0",))


def test_platoon_lead_vehicle_init():
    cfg1, _ = platoon_configs()
    bank = build_bank(cfg1, [cfg1.D_true])
    frozen = np.array([-5.74713235, -0.04193159])
    err = np.abs(bank.values()[0] - frozen)
    assert np.all(err <= INIT_TOL * np.maximum(1.0, np.abs(frozen)))


def test_platoon_follower_init():
    _, cfg2 = platoon_configs()
    bank = build_bank(cfg2, [cfg2.D_true])
    frozen = np.array([-1.30033403, -0.28276575])
    err = np.abs(bank.values()[0] - frozen)
    assert np.all(err <= INIT_TOL * np.maximum(1.0, np.abs(frozen)))


def test_rest_state_predicts_itself():
    # zero input and zero nonlinearity: the prediction is the current state
    plant = _integrator_plant()
    bank = PredictorBank.single(plant, 0.7, 0.01)
    bank.init_history(np.array([3.0]), lambda t: np.zeros(np.shape(t)))
    assert bank.values()[0] == pytest.approx(3.0)
    for _ in range(25):
        bank.advance(np.array([3.0]), 0.0)
    assert bank.values()[0] == pytest.approx(3.0)


def test_integrator_matches_closed_form():
    # dy/dt = b*x1(t - D) with x1(t) = t: the D-ahead prediction is
    # y(t) + b * int_{t-D}^{t} s ds, reproduced to quadrature accuracy
    plant = _integrator_plant()
    D, d, b = 0.5, 0.001, 2.0
    bank = PredictorBank.single(plant, D, d)
    bank.init_history(np.array([0.0]), lambda t: np.clip(t, None, 0.0))
    y = 0.0
    t = 0.0
    for _ in range(1000):
        y += d * b * max(t - D, 0.0)  # plant sees the delayed ramp
        t += d
        bank.advance(np.array([y]), t)
    exact = y + b * (t**2 - (t - D) ** 2) / 2.0
    assert bank.values()[0, 0] == pytest.approx(exact, rel=1e-2)


def test_predict_equals_values_after_advance():
    plant = _integrator_plant()
    bank = PredictorBank.single(plant, 0.3, 0.01)
    bank.init_history(np.array([1.0]), lambda t: 0.5 + 0.0 * np.asarray(t))
    P = bank.predict(np.array([1.2]))
    bank.advance(np.array([1.2]), 0.5)
    assert np.allclose(P[0], bank.values()[0])


def test_row_queries_and_extraction():
    plant = _integrator_plant()
    bank = PredictorBank(plant, [0.5, 1.0, 1.5], 0.01)
    bank.init_history(np.array([1.0]), lambda t: np.zeros(np.shape(t)))
    for i in range(40):
        bank.advance(np.array([1.0 + 0.01 * i]), 0.0)
    assert bank.closest_row(1.02) == 1
    times, vals = bank.node_history(2)
    assert len(times) == bank.N[2] + 1
    assert times[-1] == pytest.approx(bank.t_now)
    # interpolated queries agree with the stored nodes on the nodes
    assert np.allclose(bank.row_values(2, times), vals)
    # gather with a constant row matches row_values
    g = bank.gather(np.full(5, 1), times[:5])
    assert np.allclose(g, bank.row_values(1, times[:5]))
    # an extracted row keeps its node history
    solo = bank.extract_row(1)
    t1, v1 = bank.node_history(1)
    t2, v2 = solo.node_history(0)
    assert np.allclose(t1, t2)
    assert np.allclose(v1, v2)
    assert np.allclose(solo.values()[0], bank.value(1))


def test_aux_field_endpoints():
    plant = _integrator_plant()
    bank = PredictorBank.single(plant, 1.0, 0.01)
    bank.init_history(np.array([2.0]), lambda t: np.zeros(np.shape(t)))
    x = np.linspace(0.0, 1.0, 11)
    p = bank.aux_field(0, x)
    # x = 1 is the newest prediction, x = 0 the delay-old one
    assert np.allclose(p[-1], bank.values()[0])
    assert np.allclose(p[0], bank.row_values(0, bank.t_now - 1.0))


def test_divergence_guard():
    plant = _integrator_plant()
    bank = PredictorBank.single(plant, 0.5, 0.01)
    bank.init_history(np.array([0.0]), lambda t: np.zeros(np.shape(t)))
    with pytest.raises(PredictorDivergence):
        bank.advance(np.array([1.0e13]), 0.0)
    with pytest.raises(PredictorDivergence):
        bank.predict(np.array([np.nan]))


def test_rejects_bad_construction():
    plant = _integrator_plant()
    with pytest.raises(ValueError):
        PredictorBank(plant, [-0.5], 0.01)
    with pytest.raises(ValueError):
        PredictorBank(plant, [0.5], 0.0)
