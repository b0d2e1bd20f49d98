"""Closed-loop simulation of one vehicle with a delayed, actuated input.

The plant is integrated with explicit Euler on the controller step dt.
Each step has two phases so that several vehicles can run in lockstep
against consistent snapshots of each other:

    step_controls(): identifier trigger (and predictor freeze at the
        settling time), command computation for the configured variant,
        and the log record for the current instant;
    step_advance(): plant Euler step, channel push, predictor advance,
        identifier accumulation at the new instant.

Oracle quantities (margins in transformed coordinates, command gaps
against the exact-delay law, transformed channel state) are not computed
inside the loop: finalize_log() fills them afterwards in one vectorized
pass over the stored trajectory and the true-delay predictor record.

Controller variants:

    adaptive       predictor bank over the whole candidate grid, safety
                   filter until the identifier settles, then the single
                   row nearest the estimate;
    nominal        exact-delay predictor feedback (needs the oracle delay);
    uncompensated  the nominal formula pretending there is no delay,
                   driven by the measured delayed signal.  Kept as the
                   baseline that is expected to blow up.

The true-delay predictor row feeding the oracle pass is separate and no
controller variant reads it.
"""

from __future__ import annotations

import time

import numpy as np

from .backstepping import (GainSet, forward_r, forward_z, h_n_value, nominal_terms,
                           uncompensated_control, u_star)
from .delayline import DelayLine
from .identifier import DelayIdentifier
from .jets import Jet, constant
from .plant import eval_x_rhs, eval_y_rhs
from .predictor import PredictorDivergence
from .safetyfilter import safe_command
from .scenario import ScenarioConfig, ScenarioError, build_bank

__all__ = ["VehicleSim", "SimLog", "AnalyticReference", "DIVERGENCE_GUARD",
           "run_scenario", "finalize_log"]

# plant states beyond this magnitude end the run with a divergence verdict
DIVERGENCE_GUARD = 1.0e9

_CONTROL_FAILURES = (PredictorDivergence, FloatingPointError, OverflowError)


class AnalyticReference:
    """Adapter giving an analytic trajectory the reference-provider shape.

    Multi-vehicle scenarios substitute providers whose future values come
    from another vehicle's predictor; the engine only ever asks these
    four questions.
    """

    def __init__(self, traj):
        self.traj = traj

    def jet_sweep(self, t, horizons, order) -> Jet:
        """Reference jets at t + horizon, one per delay candidate."""
        return self.traj.jet(t + np.asarray(horizons), order)

    def jet_desired(self, t, q, order) -> Jet:
        """Reference jet at the absolute instant q = t + D_hat."""
        return self.traj.jet(q, order)

    def jet_now(self, t, order) -> Jet:
        return self.traj.jet(t, order)

    def jet_true(self, t, q, order) -> Jet:
        """Oracle-side query, q in [t, t + D_true]; q may be an array."""
        return self.traj.jet(q, order)


class SimLog:
    """Column store of one run; arrays are truncated to the steps taken."""

    _SCALARS = ("u0", "U_applied", "U_desired", "U_bound", "D_hat",
                "gamma", "gamma_bar", "Omega", "Psi", "w0")

    def __init__(self, steps: int, n: int, m: int):
        L = steps + 1
        self.t = np.zeros(L)
        self.Y = np.zeros((L, n))
        self.X = np.zeros((L, m))
        self.P_true = np.zeros((L, n))
        self.z = np.zeros((L, n))
        self.r = np.zeros((L, m))
        self.limited = np.zeros(L, dtype=bool)
        for name in self._SCALARS:
            setattr(self, name, np.full(L, np.nan))
        self.t_f = None
        self.D_true = None
        self.mode = None
        self.label = None
        self.dt = None
        self.diverged = False
        self.divergence_time = None
        self.duration_s = None
        self.updates = []
        self._truth_done = False

    @property
    def margin(self) -> np.ndarray:
        """First transformed coordinate: the quantity that must stay >= 0."""
        return self.z[:, 0]

    def _truncate(self, length: int) -> None:
        for name in ("t", "Y", "X", "P_true", "z", "r", "limited", *self._SCALARS):
            setattr(self, name, getattr(self, name)[:length])

    def summary(self) -> dict:
        out = {
            "label": self.label,
            "mode": self.mode,
            "t_end": float(self.t[-1]) if len(self.t) else 0.0,
            "diverged": self.diverged,
            "margin_min": float(np.min(self.margin)) if len(self.t) else float("nan"),
            "t_f": self.t_f,
            "D_true": self.D_true,
            "D_hat_final": float(self.D_hat[-1]) if len(self.t) else float("nan"),
            "filter_steps": int(np.count_nonzero(self.limited)),
            "duration_s": self.duration_s,
        }
        if self.diverged:
            out["divergence_time"] = self.divergence_time
        else:
            out["tracking_final"] = float(abs(self.margin[-1])) if len(self.t) else float("nan")
            if self.D_true and np.isfinite(out["D_hat_final"]):
                out["D_hat_rel_err"] = abs(out["D_hat_final"] - self.D_true) / self.D_true
            from .oracles import fit_log_slope
            t_tail = self.t_f if self.t_f is not None else (self.D_true or 0.0)
            out["omega_slope"] = fit_log_slope(self.t, self.Omega, t_tail)
            out["psi_slope"] = fit_log_slope(self.t, self.Psi, t_tail)
        tail = self.t >= 30.0
        if np.any(tail) and not self.diverged:
            out["tracking_tail_max"] = float(np.max(np.abs(self.margin[tail])))
        return out


class VehicleSim:
    """One vehicle's closed loop; see the module docstring for phases."""

    MODES = ("adaptive", "nominal", "uncompensated")

    def __init__(self, cfg: ScenarioConfig, mode: str = "adaptive", reference=None,
                 gains: GainSet | None = None, diagnostics: bool = True,
                 label: str = "vehicle"):
        if mode not in self.MODES:
            raise ValueError(f"unknown mode {mode!r}")
        if cfg.D_true is None:
            raise ScenarioError("simulation requires the [oracle] delay")
        self.cfg = cfg
        self.mode = mode
        self.label = label
        self.plant = cfg.plant
        self.order = cfg.plant.n + cfg.plant.m
        self.diagnostics = diagnostics
        self.gains = gains if gains is not None else cfg.gains()
        self.reference = reference if reference is not None else AnalyticReference(cfg.trajectory())

        self.dt = cfg.dt
        self.steps = int(round(cfg.t_final / cfg.dt))
        self.stride = cfg.pred_stride
        self.t = 0.0
        self.step = 0
        self.Y = cfg.Y0.astype(float).copy()
        self.X = cfg.X0.astype(float).copy()
        self.line = DelayLine(cfg.dt, cfg.D_hi, cfg.plant.b,
                              history=cfg.history_fn(), x1_now=cfg.X0[0])
        self.x_grid = cfg.x_grid()
        self.grid = cfg.candidate_grid()

        self.true_bank = build_bank(cfg, [cfg.D_true])
        # the oracle pass needs the prediction record before t = 0 too
        self._window0 = self.true_bank.node_history(0)
        self.frozen = None
        if mode == "adaptive":
            self.bank = build_bank(cfg, self.grid)
            self.ident = DelayIdentifier(self.x_grid, cfg.dt, cfg.T, cfg.D_lo, cfg.D_hi,
                                         n_max=cfg.n_max, N_tilde=cfg.N_tilde,
                                         plateau_frac=cfg.plateau_frac, eps_exc=cfg.eps_exc)
            self.D_hat = cfg.D_lo
        elif mode == "nominal":
            self.bank = self.true_bank
            self.ident = None
            self.D_hat = cfg.D_true
        else:
            self.bank = None
            self.ident = None
            self.D_hat = float("nan")

        self.log = SimLog(self.steps, cfg.plant.n, cfg.plant.m)
        self.log.mode = mode
        self.log.label = label
        self.log.dt = cfg.dt
        self.log.D_true = cfg.D_true
        self.done = False
        self._U_applied = 0.0
        if self.ident is not None:
            self.ident.accumulate(0, self.line.sample_u(cfg.D_true, self.x_grid))

    # -- cross-vehicle views ----------------------------------------------------

    def active_bank(self):
        """(bank, delay) the controller currently trusts, or None pre-settling."""
        if self.mode == "nominal":
            return self.true_bank, self.cfg.D_true
        if self.frozen is not None:
            return self.frozen, self.D_hat
        return None

    @property
    def t_f(self):
        return self.ident.t_f if self.ident is not None else None

    # -- phase A: triggers, command, record --------------------------------------

    def step_controls(self) -> None:
        if self.done:
            return
        i, t = self.step, self.t
        if self.ident is not None:
            self.ident.maybe_update(i)
            self.D_hat = self.ident.D_hat
            if self.ident.t_f is not None and self.frozen is None:
                row = self.bank.closest_row(self.ident.D_hat)
                self.frozen = self.bank.extract_row(row)
                self.bank = None  # the sweep is over; release the grid rows
        state_mag = max(np.max(np.abs(self.Y)), np.max(np.abs(self.X)))
        if not np.isfinite(state_mag) or state_mag > DIVERGENCE_GUARD:
            self._mark_diverged()
            return
        try:
            self._compute_and_record(i, t)
        except _CONTROL_FAILURES:
            self._mark_diverged()

    def _compute_and_record(self, i: int, t: float) -> None:
        plant, gains, ref, order = self.plant, self.gains, self.reference, self.order
        U_desired = U_bound = float("nan")
        limited = False
        if self.mode == "uncompensated":
            sj = ref.jet_now(t, order)
            U_applied = float(uncompensated_control(
                self.Y, self.X, sj, plant, gains, self._measured_input_jet(t)))
            U_desired = U_applied
        elif self.mode == "nominal" or self.frozen is not None:
            bank, D = self.active_bank()
            P = bank.predict(self.Y)[0]
            sj = ref.jet_desired(t, t + D, order)
            U_desired, _, _, _ = nominal_terms(P, self.X, sj, plant, gains)
            U_desired = float(U_desired)
            U_applied = U_desired
        else:
            P_rows = self.bank.predict(self.Y)
            sweep = u_star(P_rows, self.X, ref.jet_sweep(t, self.grid, order), plant, gains)
            row = self.bank.closest_row(self.D_hat)
            sj = ref.jet_desired(t, t + self.D_hat, order)
            U_desired, _, _, _ = nominal_terms(P_rows[row], self.X, sj, plant, gains)
            decision = safe_command(float(U_desired), sweep, plant.b)
            U_applied, U_desired = decision.U, decision.U_desired
            U_bound, limited = decision.U_bound, decision.limited
        if not np.isfinite(U_applied):
            raise FloatingPointError("command is not finite")
        self._U_applied = U_applied
        self._record(i, t, U_applied, U_desired, U_bound, limited)

    def _record(self, i, t, U_applied, U_desired, U_bound, limited) -> None:
        log = self.log
        log.t[i] = t
        log.Y[i] = self.Y
        log.X[i] = self.X
        log.u0[i] = self.line.delayed_input(self.cfg.D_true)
        log.U_applied[i] = U_applied
        log.U_desired[i] = U_desired
        log.U_bound[i] = U_bound
        log.limited[i] = limited
        log.D_hat[i] = self.D_hat
        log.P_true[i] = self.true_bank.predict(self.Y)[0]

    def _measured_input_jet(self, t: float) -> Jet:
        """Series of the delayed signal at the plant inlet, from samples.

        Backward differences on the channel history; only orders up to
        m-1 are ever consumed.
        """
        D = self.cfg.D_true
        levels = self.plant.m
        if levels == 1:
            return constant(self.line.delayed_input(D), 0)
        ts = t - D - self.dt * np.arange(levels)
        vals = self.plant.b * self.line.x1_at(ts)
        coeffs = []
        fact = 1.0
        for kd in range(levels):
            coeffs.append(vals[0] / fact)
            vals = np.diff(vals) / -self.dt  # samples run backwards in time
            fact *= kd + 1.0
        return Jet(coeffs)

    # -- phase B: physics --------------------------------------------------------

    def step_advance(self) -> None:
        if self.done or self.step >= self.steps:
            return
        D = self.cfg.D_true
        u0 = self.line.delayed_input(D)
        self.Y = self.Y + self.dt * eval_y_rhs(self.Y, u0, self.plant)
        self.X = self.X + self.dt * eval_x_rhs(self.X, self._U_applied, self.plant)
        self.line.push(self.X[0])
        self.step += 1
        self.t = self.step * self.dt
        if self.step % self.stride == 0:
            try:
                if self.bank is not None and self.bank is not self.true_bank:
                    self.bank.advance(self.Y, self.X[0])
                if self.frozen is not None:
                    self.frozen.advance(self.Y, self.X[0])
                self.true_bank.advance(self.Y, self.X[0])
            except PredictorDivergence:
                self._mark_diverged()
                return
        if self.ident is not None:
            self.ident.accumulate(self.step, self.line.sample_u(D, self.x_grid))

    def _mark_diverged(self) -> None:
        self.log.diverged = True
        self.log.divergence_time = self.t
        self._finish(length=self.step)  # the diverging step has no valid record

    def _finish(self, length: int | None = None) -> None:
        self.log._truncate(self.step + 1 if length is None else length)
        self.log.t_f = self.t_f
        self.log.updates = list(self.ident.updates) if self.ident is not None else []
        self.done = True

    # -- driver -------------------------------------------------------------------

    def run(self) -> SimLog:
        started = time.perf_counter()
        with np.errstate(all="ignore"):
            while not self.done:
                self.step_controls()
                if self.done:
                    break
                if self.step >= self.steps:
                    self._finish()
                    break
                self.step_advance()
        finalize_log(self)
        self.log.duration_s = time.perf_counter() - started
        return self.log


def run_scenario(cfg: ScenarioConfig, mode: str = "adaptive", **kw) -> SimLog:
    return VehicleSim(cfg, mode=mode, **kw).run()


def finalize_log(sim: VehicleSim, s_query=None, diag_stride: int = 1) -> SimLog:
    """Fill the oracle columns of a finished run in one vectorized pass.

    s_query(q, order) must return the reference jet at absolute times q;
    the default reads the simulation's own provider at its true delay,
    which is exact for analytic references.  Runs whose reference is
    another vehicle pass a closure over that vehicle's finished log.
    """
    log = sim.log
    if log._truth_done:
        return log
    log._truth_done = True
    if len(log.t) == 0:
        return log
    plant, gains, order = sim.plant, sim.gains, sim.order
    D = sim.cfg.D_true
    if s_query is None:
        s_query = lambda q, o: sim.reference.jet_true(0.0, q, o)
    ts = log.t
    with np.errstate(all="ignore"):
        log.z[:] = forward_z(log.Y, s_query(ts, order), plant, gains.k)
        U_nom, r_m, _, delta = nominal_terms(
            log.P_true, log.X, s_query(ts + D, order), plant, gains)
        r, _ = forward_r(log.X, delta, plant, gains.c)
        log.r[:] = r
        ustar = U_nom + (gains.c[-1] - gains.c_bar) * r_m / plant.b
        log.gamma[:] = plant.b * (log.U_applied - U_nom)
        log.gamma_bar[:] = plant.b * (log.U_applied - ustar)
        if sim.diagnostics:
            _field_diagnostics(sim, log, s_query, max(1, int(diag_stride)))
    return log


def _field_diagnostics(sim: VehicleSim, log: SimLog, s_query, stride: int) -> None:
    """Transformed channel state w(x, t), its norms, and the raw sizes.

    Sampled every `stride` records; the skipped rows keep their NaN fill.
    """
    plant, gains = sim.plant, sim.gains
    D = sim.cfg.D_true
    x_grid = sim.x_grid
    idx = np.arange(0, len(log.t), stride)
    q = log.t[idx][:, None] - D + D * x_grid[None, :]
    # channel state u(x, t) = b x1(t - D + D x); before the start the
    # samples come from the configured pre-history
    x1 = np.interp(q, log.t, log.X[:, 0])
    neg = q < -0.5 * sim.dt
    if np.any(neg):
        x1 = np.where(neg, sim.cfg.history_fn()(q), x1)
    u = plant.b * x1
    # prediction record at the true delay, stitched so that times before
    # the start resolve against the initial window
    t0, v0 = sim._window0
    tP = np.concatenate([t0[:-1], log.t])
    vP = np.concatenate([v0[:-1], log.P_true])
    p = np.stack([np.interp(q, tP, vP[:, j]) for j in range(plant.n)], axis=-1)
    # the channel sample b x1(q) meets the state q + D later, so the
    # reference for the pairing lives at q + D = t + D x
    s_jets = s_query((q + D).ravel(), sim.order)
    h = np.asarray(h_n_value(p.reshape(-1, plant.n), s_jets, plant, gains.k))
    sn = np.asarray(s_jets.dn(plant.n).value)
    w = u - (h + sn).reshape(q.shape)
    # the x = 0 boundary of the prediction field is the measured state, so
    # that column gets the exact value instead of the stitched record
    s0 = s_query(log.t[idx], sim.order)
    h0 = np.asarray(h_n_value(log.Y[idx], s0, plant, gains.k))
    w[:, 0] = u[:, 0] - h0 - np.asarray(s0.dn(plant.n).value)
    log.w0[idx] = w[:, 0]
    dx = x_grid[1] - x_grid[0]
    omega = np.sum(log.z[idx] ** 2, axis=1) + np.sum(log.r[idx] ** 2, axis=1)
    deriv = w
    for _ in range(plant.m + 1):
        omega += np.trapezoid(deriv * deriv, dx=dx, axis=1)
        deriv = np.gradient(deriv, dx, axis=1)
    log.Omega[idx] = omega
    window = np.sqrt(D * np.trapezoid((u / plant.b) ** 2, dx=dx, axis=1))
    log.Psi[idx] = (np.linalg.norm(log.Y[idx], axis=1)
                    + np.linalg.norm(log.X[idx], axis=1)
                    + np.max(np.abs(p), axis=(1, 2)) + window)
