"""Candidate-wise command clipping."""

import numpy as np
import pytest

from delaysafe.safetyfilter import FilterDecision, safe_command


def test_passes_safe_commands_through():
    # b > 0: bounds act from below in U
    d = safe_command(5.0, [1.0, 2.0, 3.0], b=1.0)
    assert not d.limited
    assert d.U == 5.0
    assert d.U_bound == 3.0


def test_clips_to_the_worst_candidate():
    d = safe_command(1.5, [1.0, 2.0, 3.0], b=1.0)
    assert d.limited
    assert d.U == 3.0
    assert d.U_desired == 1.5


def test_negative_gain_flips_the_active_side():
    # b < 0: v = b*U, so large positive U is the risky direction
    b = -0.25
    grid = np.array([4.0, 6.0, 10.0])
    # v_bound = max(b*grid) = b*min(grid): the binding candidate is U* = 4
    d = safe_command(12.0, grid, b=b)
    assert d.limited
    assert d.U == pytest.approx(4.0)
    d2 = safe_command(-3.0, grid, b=b)
    assert not d2.limited
    assert d2.U == -3.0
    assert d2.U_bound == pytest.approx(4.0)


def test_boundary_command_is_not_limited():
    d = safe_command(2.0, [2.0], b=1.0)
    assert not d.limited
    assert d.U == 2.0


def test_non_finite_bounds_raise():
    with pytest.raises(FloatingPointError):
        safe_command(1.0, [np.nan], b=1.0)
    with pytest.raises(FloatingPointError):
        safe_command(np.inf, [1.0], b=1.0)


def test_decision_is_immutable():
    d = safe_command(1.0, [0.0], b=1.0)
    assert isinstance(d, FilterDecision)
    with pytest.raises(AttributeError):
        d.U = 7.0
