"""Scenario files: parsing, validation, derived grids, feasibility."""

import dataclasses

import numpy as np
import pytest

from conftest import packaged_scenario
from delaysafe.scenario import (ScenarioConfig, ScenarioError, check_assumptions,
                                load_scenario, save_scenario)


def test_packaged_regulation_demo(regulation_cfg):
    cfg = regulation_cfg
    assert (cfg.plant.n, cfg.plant.m) == (2, 1)
    assert cfg.plant.b == -0.25
    assert (cfg.D_lo, cfg.D_hi, cfg.d_D) == (0.2, 2.0, 0.02)
    assert cfg.D_true == 1.0
    assert cfg.s_src.strip() == "0"
    assert cfg.k is None and cfg.c is None  # gains come from selection


def test_packaged_vehicle_e1():
    cfg = packaged_scenario("vehicle-e1")
    assert cfg.D_true == 2.5
    assert cfg.k == (3.0, 2.0)
    assert cfg.c == (2.0,)
    assert np.allclose(cfg.Y0, [-5.0, -1.0])
    assert np.allclose(cfg.X0, [2.0])
    assert cfg.d_pred == pytest.approx(0.001)


def test_candidate_grid_count(regulation_cfg):
    grid = regulation_cfg.candidate_grid()
    assert len(grid) == 91
    assert grid[0] == 0.2 and grid[-1] == 2.0
    e1 = packaged_scenario("vehicle-e1")
    assert len(e1.candidate_grid()) == 381


def test_x_grid(regulation_cfg):
    x = regulation_cfg.x_grid()
    assert len(x) == 51
    assert x[0] == 0.0 and x[-1] == 1.0


def test_d_pred_must_sit_on_the_step_grid(regulation_cfg):
    with pytest.raises(ScenarioError):
        dataclasses.replace(regulation_cfg, d_pred=0.0015)
    cfg = dataclasses.replace(regulation_cfg, d_pred=None)
    assert cfg.d_pred == cfg.dt
    assert cfg.pred_stride == 1


def test_rejects_inconsistent_shapes(regulation_cfg):
    with pytest.raises(ScenarioError):
        dataclasses.replace(regulation_cfg, Y0=np.array([1.0]))
    with pytest.raises(ScenarioError):
        dataclasses.replace(regulation_cfg, D_lo=2.5)  # above D_hi
    with pytest.raises(ScenarioError):
        dataclasses.replace(regulation_cfg, D_true=3.0)  # outside bounds


def test_round_trip_through_a_file(tmp_path, regulation_cfg):
    path = tmp_path / "copy.scn"
    save_scenario(regulation_cfg, path)
    back = load_scenario(path)
    assert back.plant.b == regulation_cfg.plant.b
    assert back.D_true == regulation_cfg.D_true
    assert np.allclose(back.Y0, regulation_cfg.Y0)
    assert back.s_src == regulation_cfg.s_src
    assert back.dt == regulation_cfg.dt
    assert back.t_final == regulation_cfg.t_final


def test_load_missing_file_raises(tmp_path):
    with pytest.raises(ScenarioError):
        load_scenario(tmp_path / "nope.scn")


def test_load_rejects_malicious_expressions(tmp_path, regulation_cfg):
    path = tmp_path / "bad.scn"
    save_scenario(regulation_cfg, path)
    text = path.read_text().replace("psi1 = 0",
                                    "psi1 = __import__('os').system('true')")
    path.write_text(text)
    with pytest.raises(ScenarioError):
        load_scenario(path)


def test_gain_pinning_must_be_complete(regulation_cfg):
    cfg = dataclasses.replace(regulation_cfg, k=(3.0, 2.0))
    with pytest.raises(ScenarioError):
        cfg.gains()


def test_assumption_report_passes_for_packaged(regulation_cfg):
    report = check_assumptions(regulation_cfg)
    assert report.ok
    assert report.margin_window > 0
    assert report.margin_actuator > 0
    assert str(report).startswith("feasible: yes")


def test_assumption_report_flags_bad_margins(regulation_cfg):
    cfg = dataclasses.replace(regulation_cfg, Y0=np.array([-2.0, 0.0]))
    report = check_assumptions(cfg)
    assert not report.ok
    assert report.messages
