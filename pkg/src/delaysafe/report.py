"""Run output: delimited telemetry, text summaries, and figure files.

Telemetry is one CSV per vehicle with a fixed header so downstream tools
can key on column names.  Figure quantities additionally go to a
whitespace-delimited column file that gnuplot reads as-is, and the same
quantities are rendered to PNG.  Matplotlib is imported lazily and only
inside the figure writers, so the simulation path never needs it.
"""

from __future__ import annotations

import os
import sys

import numpy as np

from .platoon import CLEARANCE, PlatoonResult, leader_velocity, result_columns

__all__ = [
    "log_columns",
    "write_delimited",
    "write_log_csv",
    "write_platoon_data",
    "format_summary",
    "format_table",
    "write_text",
    "save_platoon_figures",
    "save_vehicle_figures",
    "save_compare_figures",
]


def log_columns(log):
    """Header names and the matching value matrix for one vehicle log."""
    n = log.Y.shape[1]
    m = log.X.shape[1]
    names = ["t"]
    names += [f"y{i + 1}" for i in range(n)]
    names += [f"x{j + 1}" for j in range(m)]
    names += ["U_a", "U_d", "D_hat"]
    names += [f"z{i + 1}" for i in range(n)]
    names += [f"r{j + 1}" for j in range(m)]
    names += ["gamma", "gamma_bar", "Omega", "margin"]
    cols = [log.t]
    cols += [log.Y[:, i] for i in range(n)]
    cols += [log.X[:, j] for j in range(m)]
    cols += [log.U_applied, log.U_desired, log.D_hat]
    cols += [log.z[:, i] for i in range(n)]
    cols += [log.r[:, j] for j in range(m)]
    cols += [log.gamma, log.gamma_bar, log.Omega, log.margin]
    return names, np.column_stack(cols)


def write_delimited(path, names, data, delim: str, comment: str = "") -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(comment + delim.join(names) + "\n")
        np.savetxt(fh, data, fmt="%.12g", delimiter=delim)


def write_log_csv(log, path) -> None:
    names, data = log_columns(log)
    write_delimited(path, names, data, ",")


def write_platoon_data(res: PlatoonResult, path) -> dict:
    """Figure quantities as a gnuplot-ready column file; returns them too."""
    cols = result_columns(res)
    names = list(cols)
    data = np.column_stack([cols[k] for k in names])
    write_delimited(path, names, data, " ", comment="# ")
    return cols


def format_summary(summary: dict, label: str | None = None) -> str:
    """One run's metrics as an aligned key/value block."""
    head = label or summary.get("label") or "run"
    lines = [f"== {head} [{summary.get('mode')}] =="]
    for key, val in summary.items():
        if key in ("label", "mode"):
            continue
        lines.append(f"  {key:<18} {_fmt(val)}")
    return "\n".join(lines)


def _fmt(val) -> str:
    if isinstance(val, bool):
        return "yes" if val else "no"
    if val is None:
        return "n/a"
    if isinstance(val, float):
        return f"{val:.6g}"
    return str(val)


def format_table(rows: dict, columns) -> str:
    """Metrics side by side: one row per metric, one column per variant.

    rows maps metric name -> {column -> value}; missing cells print n/a.
    """
    width = max(len(name) for name in rows) if rows else 10
    widths = [max(12, len(c) + 2) for c in columns]
    out = [" " * width + "".join(c.rjust(w) for c, w in zip(columns, widths))]
    for name, cells in rows.items():
        line = name.ljust(width)
        for col, w in zip(columns, widths):
            line += _fmt(cells.get(col)).rjust(w)
        out.append(line)
    return "\n".join(out)


def write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text if text.endswith("\n") else text + "\n")


# -- figures -----------------------------------------------------------------

def _pyplot():
    # keep headless runs working without a display
    if "matplotlib.pyplot" not in sys.modules:
        import matplotlib
        matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def _save(fig, outdir, name) -> str:
    path = os.path.join(str(outdir), name)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    _pyplot().close(fig)
    return path


def save_platoon_figures(cols: dict, outdir, stem: str, D_true=None) -> list:
    """Render the standard platoon panels; returns the written paths."""
    plt = _pyplot()
    t = cols["t"]
    paths = []

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(t, cols["d1"], label="d1")
    ax.plot(t, cols["d2"], label="d2")
    ax.axhline(CLEARANCE, color="k", linestyle="--", linewidth=1, label="floor")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("spacing [m]")
    ax.legend()
    paths.append(_save(fig, outdir, f"{stem}_distances.png"))

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(t, leader_velocity(t), "k--", linewidth=1, label="leader")
    ax.plot(t, cols["v1"], label="v1")
    ax.plot(t, cols["v2"], label="v2")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("velocity [m/s]")
    ax.legend()
    paths.append(_save(fig, outdir, f"{stem}_velocities.png"))

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(t, cols["F1"], label="F1")
    ax.plot(t, cols["F2"], label="F2")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("drive force [N]")
    ax.legend()
    paths.append(_save(fig, outdir, f"{stem}_forces.png"))

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(t, cols["V1"], label="V1")
    ax.plot(t, cols["V2"], label="V2")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("motor voltage [V]")
    ax.legend()
    paths.append(_save(fig, outdir, f"{stem}_voltages.png"))

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(t, cols["Dhat1"], label="estimate 1")
    ax.plot(t, cols["Dhat2"], label="estimate 2")
    if D_true is not None:
        for D in D_true:
            ax.axhline(D, color="k", linestyle=":", linewidth=1)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("delay estimate [s]")
    ax.legend()
    paths.append(_save(fig, outdir, f"{stem}_delays.png"))
    return paths


def save_vehicle_figures(log, outdir, stem: str) -> list:
    """Margin, command, and estimate traces for a single-vehicle run."""
    plt = _pyplot()
    t = log.t
    paths = []

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(t, log.margin, label="z1")
    ax.axhline(0.0, color="k", linestyle="--", linewidth=1)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("safety margin")
    ax.legend()
    paths.append(_save(fig, outdir, f"{stem}_margin.png"))

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(t, log.U_desired, label="desired", linewidth=1)
    ax.plot(t, log.U_applied, label="applied", linewidth=1)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("command")
    ax.legend()
    paths.append(_save(fig, outdir, f"{stem}_command.png"))

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(t, log.D_hat, label="estimate")
    if log.D_true:
        ax.axhline(log.D_true, color="k", linestyle=":", linewidth=1)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("delay estimate [s]")
    ax.legend()
    paths.append(_save(fig, outdir, f"{stem}_delay.png"))
    return paths


def save_compare_figures(series_by_mode: dict, outdir, stem: str, panels) -> str:
    """Overlay one quantity per panel across controller variants.

    series_by_mode maps mode -> {"t": ..., quantity: ...}; panels is a
    list of (key, ylabel) or (key, ylabel, floor) tuples, where a floor
    draws a dashed horizontal guide line.
    """
    plt = _pyplot()
    fig, axes = plt.subplots(len(panels), 1, figsize=(7, 3 * len(panels)),
                             sharex=True, squeeze=False)
    for ax, panel in zip(axes[:, 0], panels):
        key, ylabel = panel[0], panel[1]
        for mode, cols in series_by_mode.items():
            if key in cols:
                ax.plot(cols["t"], cols[key], label=mode, linewidth=1)
        if len(panel) > 2 and panel[2] is not None:
            ax.axhline(panel[2], color="k", linestyle="--", linewidth=1)
        ax.set_ylabel(ylabel)
        ax.legend()
    axes[-1, 0].set_xlabel("t [s]")
    return _save(fig, outdir, f"{stem}.png")
