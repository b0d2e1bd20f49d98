"""Strict-feedback chain evaluation and derivative expansion.

The reference values here were worked out by hand from the vehicle
nonlinearities psi2 = (-5*y2 + 0.25*y2**2)/4 and phi1 = -100*x1 - 0.125*x1**2
before the evaluators existed.
"""

import numpy as np
import pytest

from delaysafe.jets import JetOrderError, constant, variable
from delaysafe.plant import (eval_x_rhs, eval_y_rhs, expand_y_chain,
                             nonlinearity_jet)
from delaysafe.platoon import platoon_configs


@pytest.fixture(scope="module")
def plant():
    cfg1, _ = platoon_configs()
    return cfg1.plant


def test_y_rhs_value(plant):
    rhs = eval_y_rhs(np.array([-1.0, -1.0]), 0.0, plant)
    assert np.allclose(rhs, [-1.0, 1.3125])


def test_x_rhs_value(plant):
    rhs = eval_x_rhs(np.array([2.0]), 0.0, plant)
    assert np.allclose(rhs, [-200.5])


def test_y_rhs_batched(plant):
    Y = np.array([[-1.0, -1.0], [0.0, 2.0]])
    rhs = eval_y_rhs(Y, 0.0, plant)
    assert rhs.shape == Y.shape
    assert np.allclose(rhs[0], [-1.0, 1.3125])
    assert np.allclose(rhs[1], [2.0, -2.25])


def test_nonlinearity_partials(plant):
    value, partials = nonlinearity_jet(plant, "psi", 2, (-1.0, -1.0), 1)
    assert value == pytest.approx(1.3125)
    # psi2 ignores y1; d psi2/d y2 = (-5 + 0.5*y2)/4
    assert np.allclose(partials[0], [0.0, -1.375])


def test_nonlinearity_budget_refusal(plant):
    # with a single actuator state phi1 is only ever evaluated, and the
    # budget machinery refuses derivative requests beyond what the design
    # is entitled to
    with pytest.raises(JetOrderError):
        nonlinearity_jet(plant, "phi", 1, (2.0,), 1)


def test_phi_expression_derivative(plant):
    # the raw closure still differentiates: phi1' = -100 - 0.25*x1
    j = plant.phi[0](variable(2.0, 1))
    assert j.value == pytest.approx(-200.5)
    assert j.d(1) == pytest.approx(-100.5)


def test_expand_y_chain_follows_the_flow(plant):
    jets = expand_y_chain(np.array([-1.0, -1.0]), plant, 1,
                          input_jet=constant(0.5, 1))
    # dy1/dt = y2 + psi1 = -1, dy2/dt = psi2 + u0
    assert jets[0].d(1) == pytest.approx(-1.0)
    assert jets[1].d(1) == pytest.approx(1.3125 + 0.5)


def test_expand_y_chain_without_input(plant):
    jets = expand_y_chain(np.array([-1.0, -1.0]), plant, 2)
    # the last state has no driving information and stays at order 0
    assert jets[-1].order == 0
    assert jets[0].d(1) == pytest.approx(-1.0)


def test_expand_y_chain_batched(plant):
    Y = np.array([[-1.0, -1.0], [0.0, 2.0]])
    jets = expand_y_chain(Y, plant, 1, input_jet=constant(0.0, 1))
    assert np.allclose(jets[0].d(1), [-1.0, 2.0])
