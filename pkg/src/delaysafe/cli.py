"""Command line front end: run one controller variant, or compare all three.

Artifacts land in --out (or $DELAYSAFE_OUT, or the working directory):
per-vehicle CSV telemetry, a gnuplot-ready column file with the figure
quantities, rendered PNG panels, and a text summary that is also printed
to standard output.  Exit status: 0 for a clean run, where divergence
counts as clean only for the uncompensated variant (there it is the
expected verdict); 2 for infeasible initial data without --force or a
bad request; 1 for unexpected divergence or a failed post-hoc check.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import report
from .backstepping import GainSet, actuator_input_jet, delta_jet, forward_r, forward_z
from .engine import VehicleSim
from .oracles import compute_w, fit_log_slope, inverse_x, inverse_y, target_residuals
from .platoon import platoon_configs, result_columns, run_platoon
from .scenario import ScenarioError, check_assumptions, load_scenario

PLATOON = "platoon-table1"
PACKAGED = ("vehicle-e1", "regulation-demo")
MODES = ("nominal", "adaptive", "uncompensated")
CHECKS = ("roundtrip", "residuals", "field", "decay")

# quantities carried into comparison files, per scenario kind
PLATOON_KEYS = ("d1", "d2", "v1", "v2", "F1", "F2", "V1", "V2", "Dhat1", "Dhat2")
VEHICLE_KEYS = ("margin", "U_a", "D_hat")


def _build_parser():
    ap = argparse.ArgumentParser(
        prog="delaysafe",
        description="safe delay-adaptive tracking of strict-feedback plants")
    sub = ap.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one controller variant")
    p_cmp = sub.add_parser("compare",
                           help="run all three variants and merge the results")
    for p in (p_run, p_cmp):
        p.add_argument("--scenario", default=PLATOON,
                       help=f"{PLATOON}, {', '.join(PACKAGED)}, or a scenario file path")
        p.add_argument("--dt", type=float, help="integration step override")
        p.add_argument("--dx", type=float, help="channel grid step override")
        p.add_argument("--dD", type=float, dest="d_D",
                       help="candidate delay spacing override")
        p.add_argument("--tfinal", type=float, dest="t_final",
                       help="horizon override")
        p.add_argument("--out", help="output directory (default $DELAYSAFE_OUT or .)")
        p.add_argument("--checks", default="",
                       help=f"comma-separated post-hoc suites: {', '.join(CHECKS)}, or all")
        p.add_argument("--force", action="store_true",
                       help="run even if the feasibility check fails")
    p_run.add_argument("--controller", default="adaptive", choices=MODES)
    return ap


def _outdir(args) -> Path:
    out = args.out or os.environ.get("DELAYSAFE_OUT") or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _overrides(args) -> dict:
    return {key: val for key in ("dt", "dx", "d_D", "t_final")
            if (val := getattr(args, key)) is not None}


def _parse_checks(spec: str):
    names = [s.strip() for s in spec.split(",") if s.strip()]
    if "all" in names:
        return list(CHECKS)
    for name in names:
        if name not in CHECKS:
            raise ScenarioError(f"unknown check suite {name!r}; pick from "
                                f"{', '.join(CHECKS)} or all")
    return names


def _load_single(name: str):
    if name in PACKAGED:
        path = resources.files("delaysafe") / "scenarios" / f"{name}.scn"
    else:
        path = Path(name)
        if not path.exists():
            raise ScenarioError(
                f"unknown scenario {name!r}: expected {PLATOON}, "
                f"{', '.join(PACKAGED)}, or an existing file")
    return load_scenario(path)


# -- post-hoc check suites ----------------------------------------------------

def _rel_err(a, b) -> float:
    return float(np.max(np.abs(a - b) / (1.0 + np.abs(b))))


def _check_roundtrip(log, cfg, gains, samples: int = 50, tol: float = 1e-8):
    """Transform both state ladders and invert them on sampled records."""
    plant = cfg.plant
    traj = cfg.trajectory()
    order = plant.n + plant.m
    take = np.unique(np.linspace(0, len(log.t) - 1, samples).astype(int))
    t = log.t[take]
    s_now = traj.jet(t, order)
    z = forward_z(log.Y[take], s_now, plant, gains.k)
    worst = _rel_err(inverse_y(z, s_now, plant, gains.k), log.Y[take])
    s_ahead = traj.jet(t + cfg.D_true, order)
    delta = delta_jet(log.P_true[take], s_ahead, plant, gains.k,
                      actuator_input_jet(log.X[take], plant))
    r, _ = forward_r(log.X[take], delta, plant, gains.c)
    worst = max(worst, _rel_err(inverse_x(r, delta, plant, gains.c), log.X[take]))
    return worst <= tol, f"worst relative error {worst:.3g} (tol {tol:g})"


def _check_residuals(log, cfg, gains, settle: float | None = None):
    """Cascade identities on the logged transforms, after transients flush.

    Central differences of the logged z and r rows against the target
    dynamics.  settle is the total delay along the reference chain (the
    vehicle's own plus any vehicle it follows); the window starts two
    settle times after t_f (or after the start for the non-adaptive
    variants) so the comparison only sees the settled command.
    """
    settle = cfg.D_true if settle is None else settle
    t_min = 2.0 * settle if log.t_f is None else log.t_f + 2.0 * settle
    if t_min >= log.t[-1] - 2.0 * log.dt:
        return None, f"horizon ends before the settled window t >= {t_min:g}"
    res = target_residuals(log, cfg.plant, gains, t_min=t_min)
    thr = 10.0 * log.dt
    worst = max(res.values())
    detail = ", ".join(f"{k} {v:.2e}" for k, v in res.items())
    return worst <= thr, f"{detail} (tol {thr:g}, window t >= {t_min:g})"


def _check_field(log, cfg, gains, tol: float = 1e-8):
    """Channel-transform boundary identity w(1, t) = r_1(t)."""
    plant = cfg.plant
    traj = cfg.trajectory()
    s_ahead = traj.jet(log.t + cfg.D_true, plant.n + plant.m)
    w1 = compute_w(plant.b * log.X[:, 0], log.P_true, s_ahead, plant, gains.k)
    worst = _rel_err(w1, log.r[:, 0])
    return worst <= tol, f"worst relative error {worst:.3g} (tol {tol:g})"


def _check_decay(log, cfg, check_psi: bool):
    """Fitted log-slope of the closed-loop size over the settled tail."""
    t_min = log.t_f if log.t_f is not None else cfg.D_true
    slope = fit_log_slope(log.t, log.Omega, t_min)
    ok = slope is not None and slope < 0.0
    detail = "no finite tail samples" if slope is None else f"Omega slope {slope:.4g}"
    if check_psi:
        pslope = fit_log_slope(log.t, log.Psi, t_min)
        ok = ok and pslope is not None and pslope < 0.0
        detail += ", no Psi tail" if pslope is None else f", Psi slope {pslope:.4g}"
    return ok, detail


def _run_checks(names, log, cfg, gains, analytic_ref: bool, check_psi: bool,
                settle: float | None = None):
    """Run the requested suites on one vehicle log; returns (lines, ok)."""
    lines, all_ok = [], True
    for name in names:
        if log.diverged:
            lines.append(f"check {name} [{log.label}]: SKIP (run diverged)")
            continue
        if name in ("roundtrip", "field") and not analytic_ref:
            lines.append(f"check {name} [{log.label}]: SKIP "
                         "(reference is another vehicle, not analytic)")
            continue
        if name == "roundtrip":
            ok, detail = _check_roundtrip(log, cfg, gains)
        elif name == "residuals":
            ok, detail = _check_residuals(log, cfg, gains, settle)
        elif name == "field":
            ok, detail = _check_field(log, cfg, gains)
        else:
            ok, detail = _check_decay(log, cfg, check_psi)
        if ok is None:
            lines.append(f"check {name} [{log.label}]: SKIP ({detail})")
            continue
        all_ok &= ok
        lines.append(f"check {name} [{log.label}]: "
                     f"{'PASS' if ok else 'FAIL'} ({detail})")
    return lines, all_ok


# -- run command ---------------------------------------------------------------

def _verdict(log_or_res, mode: str):
    """Text verdict and exit status for one finished run."""
    if not log_or_res.diverged:
        return "completed", 0
    if mode == "uncompensated":
        return "diverged, the expected verdict for the uncompensated variant", 0
    return "diverged unexpectedly", 1


def cmd_run(args) -> int:
    checks = _parse_checks(args.checks)
    out = _outdir(args)
    mode = args.controller
    stem = f"{Path(args.scenario).stem}_{mode}"

    if args.scenario == PLATOON:
        res = run_platoon(mode, skip_checks=args.force, **_overrides(args))
        cfg1, cfg2 = platoon_configs(**_overrides(args))
        gains = GainSet(cfg1.k, cfg1.c, cfg1.c_bar)
        report.write_log_csv(res.e1, out / f"{stem}_E1.csv")
        report.write_log_csv(res.e2, out / f"{stem}_E2.csv")
        cols = report.write_platoon_data(res, out / f"{stem}_columns.dat")
        report.save_platoon_figures(cols, out, stem,
                                    D_true=(cfg1.D_true, cfg2.D_true))
        blocks = [report.format_summary(s, label)
                  for label, s in res.summaries().items()]
        verdict, status = _verdict(res, mode)
        chain = cfg1.D_true + cfg2.D_true  # E2's reference flows through E1
        for log, cfg, analytic, settle in ((res.e1, cfg1, True, None),
                                           (res.e2, cfg2, False, chain)):
            lines, ok = _run_checks(checks, log, cfg, gains, analytic, False,
                                    settle)
            blocks.extend(lines)
            status = status or (0 if ok else 1)
    else:
        cfg = _load_single(args.scenario)
        if _overrides(args):
            cfg = replace(cfg, **_overrides(args))
        if not args.force:
            rep = check_assumptions(cfg)
            if not rep.ok:
                print("infeasible initial data (use --force to run anyway):",
                      file=sys.stderr)
                print(str(rep), file=sys.stderr)
                return 2
        sim = VehicleSim(cfg, mode=mode, label=Path(args.scenario).stem)
        log = sim.run()
        report.write_log_csv(log, out / f"{stem}.csv")
        report.save_vehicle_figures(log, out, stem)
        blocks = [report.format_summary(log.summary())]
        verdict, status = _verdict(log, mode)
        lines, ok = _run_checks(checks, log, cfg, sim.gains, True,
                                check_psi=cfg.s_src.strip() == "0")
        blocks.extend(lines)
        status = status or (0 if ok else 1)

    blocks.append(f"verdict: {verdict}")
    text = "\n\n".join(blocks)
    print(text)
    report.write_text(out / f"{stem}_summary.txt", text)
    return status


# -- compare command -------------------------------------------------------------

def _merge_columns(cols_by_mode: dict, keys):
    """One wide table keyed by t; shorter runs pad with nan."""
    base = max(cols_by_mode.values(), key=lambda c: len(c["t"]))
    t = base["t"]
    names, data = ["t"], [t]
    for mode, cols in cols_by_mode.items():
        for key in keys:
            col = np.full(len(t), np.nan)
            col[: len(cols[key])] = cols[key]
            names.append(f"{key}_{mode}")
            data.append(col)
    return names, np.column_stack(data)


def _metric_rows(summaries_by_mode: dict) -> dict:
    rows = {}
    for mode, summ in summaries_by_mode.items():
        for key, val in summ.items():
            if key in ("label", "mode"):
                continue
            rows.setdefault(key, {})[mode] = val
    return rows


def cmd_compare(args) -> int:
    checks = _parse_checks(args.checks)
    out = _outdir(args)
    stem = f"{Path(args.scenario).stem}_compare"
    status = 0
    cols_by_mode, tables, check_lines = {}, {}, []

    if args.scenario == PLATOON:
        cfg1, cfg2 = platoon_configs(**_overrides(args))
        gains = GainSet(cfg1.k, cfg1.c, cfg1.c_bar)
        for mode in MODES:
            res = run_platoon(mode, skip_checks=args.force, **_overrides(args))
            cols_by_mode[mode] = result_columns(res)
            for label, summ in res.summaries().items():
                tables.setdefault(label, {})[mode] = summ
            verdict, st = _verdict(res, mode)
            check_lines.append(f"{mode}: {verdict}")
            status = status or st
            chain = cfg1.D_true + cfg2.D_true
            for log, cfg, analytic, settle in ((res.e1, cfg1, True, None),
                                               (res.e2, cfg2, False, chain)):
                lines, ok = _run_checks(checks, log, cfg, gains, analytic,
                                        False, settle)
                check_lines.extend(f"{mode} {line}" for line in lines)
                status = status or (0 if ok else 1)
        names, data = _merge_columns(cols_by_mode, PLATOON_KEYS)
        report.save_compare_figures(cols_by_mode, out, f"{stem}_distances",
                                    [("d1", "d1 [m]", 0.5), ("d2", "d2 [m]", 0.5)])
        report.save_compare_figures(cols_by_mode, out, f"{stem}_velocities",
                                    [("v1", "v1 [m/s]"), ("v2", "v2 [m/s]")])
        report.save_compare_figures(cols_by_mode, out, f"{stem}_delays",
                                    [("Dhat1", "estimate 1 [s]"),
                                     ("Dhat2", "estimate 2 [s]")])
    else:
        cfg0 = _load_single(args.scenario)
        if _overrides(args):
            cfg0 = replace(cfg0, **_overrides(args))
        if not args.force:
            rep = check_assumptions(cfg0)
            if not rep.ok:
                print("infeasible initial data (use --force to run anyway):",
                      file=sys.stderr)
                print(str(rep), file=sys.stderr)
                return 2
        label = Path(args.scenario).stem
        for mode in MODES:
            sim = VehicleSim(cfg0, mode=mode, label=label)
            log = sim.run()
            cols_by_mode[mode] = {"t": log.t, "margin": log.margin,
                                  "U_a": log.U_applied, "D_hat": log.D_hat}
            tables.setdefault(label, {})[mode] = log.summary()
            verdict, st = _verdict(log, mode)
            check_lines.append(f"{mode}: {verdict}")
            status = status or st
            lines, ok = _run_checks(checks, log, cfg0, sim.gains, True,
                                    check_psi=cfg0.s_src.strip() == "0")
            check_lines.extend(f"{mode} {line}" for line in lines)
            status = status or (0 if ok else 1)
        names, data = _merge_columns(cols_by_mode, VEHICLE_KEYS)
        report.save_compare_figures(cols_by_mode, out, f"{stem}_margin",
                                    [("margin", "safety margin", 0.0),
                                     ("D_hat", "delay estimate [s]")])

    report.write_delimited(out / f"{stem}.csv", names, data, ",")
    blocks = []
    for label, by_mode in tables.items():
        rows = _metric_rows(by_mode)
        blocks.append(f"== {label} ==\n" + report.format_table(rows, list(MODES)))
    blocks.append("\n".join(check_lines))
    text = "\n\n".join(blocks)
    print(text)
    report.write_text(out / f"{stem}_metrics.txt", text)
    return status


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        return cmd_compare(args)
    except ScenarioError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
