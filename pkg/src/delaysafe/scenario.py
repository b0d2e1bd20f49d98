"""Plain-text scenario files and feasibility checks.

A scenario is an INI-style file describing one vehicle/plant: chain
dimensions and nonlinearities (as expressions), delay bounds and grid,
initial data, the reference trajectory, numerical steps, identifier and
filter settings, and optionally fixed gains.  The [oracle] section holds
simulator-only truth (the actual delay) that no controller code may read.

check_assumptions() verifies, per delay candidate, the structural
conditions the safe controller needs at t = 0: a finite predictor window,
a strictly positive initial tracking margin along the whole window, and
strictly positive actuator margins.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace

import numpy as np

from .backstepping import GainSet, actuator_input_jet, delta_jet, forward_r, select_gains
from .exprs import compile_expression
from .plant import PlantDefinition
from .predictor import PredictorBank, PredictorDivergence
from .trajectory import AnalyticTrajectory

__all__ = [
    "ScenarioConfig",
    "ScenarioError",
    "AssumptionReport",
    "load_scenario",
    "save_scenario",
    "check_assumptions",
    "build_bank",
]


class ScenarioError(ValueError):
    """Malformed or inconsistent scenario file."""


def _floats(text: str):
    return tuple(float(tok) for tok in text.split(","))


@dataclass
class ScenarioConfig:
    plant: PlantDefinition
    D_lo: float
    D_hi: float
    d_D: float
    Y0: np.ndarray
    X0: np.ndarray
    x1_history_src: str = "0"
    s_src: str = "0"
    dt: float = 0.001
    dx: float = 0.02
    d_pred: float | None = None  # None: same as dt
    t_final: float = 40.0
    T: float = 3.0
    N_tilde: int = 5
    n_max: int = 3
    plateau_frac: float = 0.02
    eps_exc: float = 1e-8
    c_bar: float = 2.0
    k: tuple | None = None
    c: tuple | None = None
    slack: float = 0.1
    D_true: float | None = None  # simulator-only truth
    name: str = "scenario"
    _s_fn: object = field(default=None, repr=False, compare=False, init=False)
    _hist_fn: object = field(default=None, repr=False, compare=False, init=False)

    def __post_init__(self):
        self.Y0 = np.asarray(self.Y0, dtype=float)
        self.X0 = np.asarray(self.X0, dtype=float)
        if self.Y0.shape != (self.plant.n,) or self.X0.shape != (self.plant.m,):
            raise ScenarioError("initial state sizes must match the chain dimensions")
        if not (0 < self.D_lo < self.D_hi):
            raise ScenarioError("need 0 < D_lo < D_hi")
        if self.d_D <= 0 or self.dt <= 0 or self.dx <= 0 or self.t_final <= 0:
            raise ScenarioError("steps and the horizon must be positive")
        if self.d_pred is None:
            self.d_pred = self.dt
        stride = self.d_pred / self.dt
        if abs(stride - round(stride)) > 1e-9 or round(stride) < 1:
            raise ScenarioError("d_pred must be a positive integer multiple of dt")
        if self.D_true is not None and not (self.D_lo <= self.D_true <= self.D_hi):
            raise ScenarioError("the oracle delay must respect the stated bounds")

    # -- derived pieces -------------------------------------------------------

    @property
    def pred_stride(self) -> int:
        return int(round(self.d_pred / self.dt))

    def candidate_grid(self) -> np.ndarray:
        count = int(round((self.D_hi - self.D_lo) / self.d_D)) + 1
        return np.linspace(self.D_lo, self.D_hi, count)

    def x_grid(self) -> np.ndarray:
        count = int(round(1.0 / self.dx)) + 1
        return np.linspace(0.0, 1.0, count)

    def trajectory(self) -> AnalyticTrajectory:
        if self._s_fn is None:
            fn = compile_expression(self.s_src, ("t",))
            self._s_fn = AnalyticTrajectory(fn, order_budget=self.plant.n + self.plant.m,
                                            source=self.s_src)
        return self._s_fn

    def history_fn(self):
        """Recorded x1(t) for t <= 0, as a vectorized callable."""
        if self._hist_fn is None:
            fn = compile_expression(self.x1_history_src, ("t",))
            self._hist_fn = lambda t: np.broadcast_to(
                np.asarray(fn(np.asarray(t, dtype=float)), dtype=float), np.shape(t)
            )
        return self._hist_fn

    def gains(self, grid=None) -> GainSet:
        """Fixed gains if the file pinned them, else data-driven selection."""
        if self.k is not None and self.c is not None:
            return GainSet(self.k, self.c, c_bar=self.c_bar)
        if self.k is not None or self.c is not None:
            raise ScenarioError("pin both k and c or neither")
        delays = self.candidate_grid() if grid is None else grid
        bank = build_bank(self, delays)
        s_jets = self.trajectory().jet(delays, self.plant.n + self.plant.m)
        return select_gains(bank.values(), self.X0, s_jets, self.plant,
                            slack=self.slack, c_bar=self.c_bar)


def build_bank(cfg: ScenarioConfig, delays) -> PredictorBank:
    """Predictor bank over the given delays, initialized from the history."""
    bank = PredictorBank(cfg.plant, delays, cfg.d_pred)
    hist = cfg.history_fn()
    x1_at = lambda t: np.where(np.asarray(t) >= -cfg.d_pred / 2, cfg.X0[0], hist(t))
    bank.init_history(cfg.Y0, x1_at)
    return bank


# -- file I/O ------------------------------------------------------------------


def _parser() -> configparser.RawConfigParser:
    p = configparser.RawConfigParser(inline_comment_prefixes=("#",))
    p.optionxform = str
    return p


def load_scenario(path) -> ScenarioConfig:
    p = _parser()
    read = p.read(path)
    if not read:
        raise ScenarioError(f"cannot read scenario file {path}")
    try:
        n = p.getint("plant", "n")
        m = p.getint("plant", "m")
        b = p.getfloat("plant", "b")
        psi_src = tuple(p.get("plant", f"psi{i}") for i in range(1, n + 1))
        phi_src = tuple(p.get("plant", f"phi{j}") for j in range(1, m + 1))
        psi = tuple(compile_expression(src, tuple(f"y{l}" for l in range(1, i + 1)))
                    for i, src in enumerate(psi_src, start=1))
        phi = tuple(compile_expression(src, tuple(f"x{l}" for l in range(1, j + 1)))
                    for j, src in enumerate(phi_src, start=1))
        plant = PlantDefinition(n=n, m=m, b=b, psi=psi, phi=phi,
                                psi_exprs=psi_src, phi_exprs=phi_src)
        cfg = ScenarioConfig(
            plant=plant,
            D_lo=p.getfloat("delay", "D_lo"),
            D_hi=p.getfloat("delay", "D_hi"),
            d_D=p.getfloat("delay", "d_D"),
            Y0=_floats(p.get("initial", "Y0")),
            X0=_floats(p.get("initial", "X0")),
            x1_history_src=p.get("initial", "x1_history", fallback="0"),
            s_src=p.get("trajectory", "s", fallback="0"),
            dt=p.getfloat("numerics", "dt", fallback=0.001),
            dx=p.getfloat("numerics", "dx", fallback=0.02),
            d_pred=p.getfloat("numerics", "d_pred", fallback=None),
            t_final=p.getfloat("numerics", "t_final", fallback=40.0),
            T=p.getfloat("identifier", "T", fallback=3.0),
            N_tilde=p.getint("identifier", "N_tilde", fallback=5),
            n_max=p.getint("identifier", "n_max", fallback=3),
            plateau_frac=p.getfloat("identifier", "plateau_frac", fallback=0.02),
            eps_exc=p.getfloat("identifier", "eps_exc", fallback=1e-8),
            c_bar=p.getfloat("filter", "c_bar", fallback=2.0),
            k=_floats(p.get("gains", "k")) if p.has_option("gains", "k") else None,
            c=_floats(p.get("gains", "c")) if p.has_option("gains", "c") else None,
            slack=p.getfloat("gains", "slack", fallback=0.1),
            D_true=p.getfloat("oracle", "D_true", fallback=None)
            if p.has_section("oracle") else None,
        )
    except (configparser.Error, ValueError) as e:
        raise ScenarioError(f"bad scenario file {path}: {e}") from e
    cfg.name = str(path)
    return cfg


def save_scenario(cfg: ScenarioConfig, path) -> None:
    """Write a scenario back out; loading the result reproduces cfg."""
    p = _parser()
    p.add_section("plant")
    p.set("plant", "n", str(cfg.plant.n))
    p.set("plant", "m", str(cfg.plant.m))
    p.set("plant", "b", repr(cfg.plant.b))
    srcs = cfg.plant.psi_exprs or tuple(getattr(f, "source", None) for f in cfg.plant.psi)
    for i, src in enumerate(srcs, start=1):
        if src is None:
            raise ScenarioError("plant nonlinearities lack expression sources")
        p.set("plant", f"psi{i}", src)
    srcs = cfg.plant.phi_exprs or tuple(getattr(f, "source", None) for f in cfg.plant.phi)
    for j, src in enumerate(srcs, start=1):
        if src is None:
            raise ScenarioError("plant nonlinearities lack expression sources")
        p.set("plant", f"phi{j}", src)
    p.add_section("delay")
    p.set("delay", "D_lo", repr(cfg.D_lo))
    p.set("delay", "D_hi", repr(cfg.D_hi))
    p.set("delay", "d_D", repr(cfg.d_D))
    if cfg.D_true is not None:
        p.add_section("oracle")
        p.set("oracle", "D_true", repr(cfg.D_true))
    p.add_section("initial")
    p.set("initial", "Y0", ", ".join(repr(v) for v in cfg.Y0))
    p.set("initial", "X0", ", ".join(repr(v) for v in cfg.X0))
    p.set("initial", "x1_history", cfg.x1_history_src)
    p.add_section("trajectory")
    p.set("trajectory", "s", cfg.s_src)
    p.add_section("numerics")
    p.set("numerics", "dt", repr(cfg.dt))
    p.set("numerics", "dx", repr(cfg.dx))
    p.set("numerics", "d_pred", repr(cfg.d_pred))
    p.set("numerics", "t_final", repr(cfg.t_final))
    p.add_section("identifier")
    p.set("identifier", "T", repr(cfg.T))
    p.set("identifier", "N_tilde", str(cfg.N_tilde))
    p.set("identifier", "n_max", str(cfg.n_max))
    p.set("identifier", "plateau_frac", repr(cfg.plateau_frac))
    p.set("identifier", "eps_exc", repr(cfg.eps_exc))
    p.add_section("filter")
    p.set("filter", "c_bar", repr(cfg.c_bar))
    p.add_section("gains")
    if cfg.k is not None:
        p.set("gains", "k", ", ".join(repr(v) for v in cfg.k))
    if cfg.c is not None:
        p.set("gains", "c", ", ".join(repr(v) for v in cfg.c))
    p.set("gains", "slack", repr(cfg.slack))
    with open(path, "w") as fh:
        p.write(fh)


# -- feasibility ----------------------------------------------------------------


@dataclass(frozen=True)
class AssumptionReport:
    ok: bool
    finite: bool
    margin_window: float   # min over candidates/window of e1 P(theta) - s(theta + D)
    margin_actuator: float  # min over candidates/stages of r_j(0)
    messages: tuple

    def __str__(self):
        lines = [f"feasible: {'yes' if self.ok else 'no'}",
                 f"window margin:   {self.margin_window:.6g}",
                 f"actuator margin: {self.margin_actuator:.6g}"]
        lines += [f"  - {m}" for m in self.messages]
        return "\n".join(lines)


def check_assumptions(cfg: ScenarioConfig, gains: GainSet | None = None,
                      delays=None) -> AssumptionReport:
    """Structural feasibility of the initial data over the candidate grid."""
    delays = cfg.candidate_grid() if delays is None else np.atleast_1d(delays)
    msgs = []
    try:
        bank = build_bank(cfg, delays)
    except PredictorDivergence as e:
        return AssumptionReport(False, False, float("nan"), float("nan"),
                                (f"predictor window diverged: {e}",))
    traj = cfg.trajectory()
    worst_w = np.inf
    for r in range(bank.R):
        times, vals = bank.node_history(r)
        margin = vals[:, 0] - traj.eval(times + delays[r], 0)
        worst_w = min(worst_w, float(margin.min()))
    if not worst_w > 0:
        msgs.append("the predicted tracking margin is not strictly positive "
                    "over the initial window for some candidate delay")

    if gains is None:
        try:
            gains = cfg.gains(grid=delays)
        except Exception as e:
            msgs.append(f"gain selection failed: {e}")
            return AssumptionReport(False, True, worst_w, float("nan"), tuple(msgs))
    s_jets = traj.jet(delays, cfg.plant.n + cfg.plant.m)
    delta = delta_jet(bank.values(), s_jets, cfg.plant, gains.k,
                      actuator_input_jet(cfg.X0, cfg.plant))
    r0, _ = forward_r(cfg.X0, delta, cfg.plant, gains.c)
    worst_r = float(np.min(r0))
    if not worst_r > 0:
        msgs.append("an actuator margin r_j(0) is not strictly positive "
                    "for some candidate delay")
    return AssumptionReport(not msgs, True, worst_w, worst_r, tuple(msgs))
