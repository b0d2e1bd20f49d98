"""Two-vehicle platoon behind a leader, each with its own unknown delay.

The chain is leader -> E1 -> E2.  E1 tracks the leader's known motion at
a 0.5 m clearance; its scenario file carries that reference analytically.
E2 tracks E1 at the same clearance, and there is no analytic expression
for E1's future positions, so E2's reference provider answers every
future query from E1's own predictors:

    y11 at t + h  while both delays are unknown  ->  E1's delay is just as
        uncertain as E2's, so each sweep horizon h is paired with every
        candidate row of E1 and the pairing that maximizes the filter
        bound wins.  b*U* is affine in the reference series coefficients
        (see filter_direction), so the inner maximum costs one dot
        product per pairing and is exact, and the bound dominates in
        particular the pairing at the true delays;
    y11 at t + h  once E1 trusts an estimate  ->  E1's settled predictor
        row evaluated h - D1_hat into its node window;
    reference derivatives  ->  E1's chain expanded along its own flow,
        driven by E1's delayed input b1*x11 and published command U1.

E2 reads E1 through in-step snapshots: E1 computes its command first and
broadcasts it, E2 then computes its own against that fresh picture, and
both advance together.  A query at time tau therefore pairs E1's state
sample with the command segment in force from tau onward, which is the
pairing a forward Taylor expansion needs.

Truth-side queries (diagnostics only) use E1's true-delay predictor row
and true delayed input, never the candidate machinery.

The oracle delays must satisfy D1 >= D2: E2 never needs E1's position
further ahead than E1 itself can predict.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from importlib import resources

import numpy as np

from .backstepping import GainSet, filter_direction, validate_gains
from .delayline import SampleHistory
from .engine import SimLog, VehicleSim, finalize_log
from .jets import Jet
from .plant import expand_y_chain
from .scenario import ScenarioConfig, ScenarioError, check_assumptions, load_scenario

__all__ = ["FollowerReference", "PlatoonResult", "platoon_configs", "run_platoon",
           "leader_position", "leader_velocity", "result_columns",
           "CLEARANCE", "VOLTAGE_GAIN"]

# inter-vehicle safety clearance (m); the margin is the gap minus this
CLEARANCE = 0.5
# command units per volt of motor input, k_t / (r * L)
VOLTAGE_GAIN = 160.0


def leader_position(t):
    """Leader trajectory implied by the E1 reference: l0(0) = 10, dl0 = v0."""
    return 11.0 + 4.0 * t - np.cos(t)


def leader_velocity(t):
    return 4.0 + np.sin(t)


def _packaged(name: str):
    return resources.files("delaysafe") / "scenarios" / name


def platoon_configs(dt: float | None = None, d_D: float | None = None,
                    t_final: float | None = None, d_pred: float | None = None,
                    dx: float | None = None) -> tuple[ScenarioConfig, ScenarioConfig]:
    """Benchmark scenario pair (E1, E2); keyword overrides apply to both."""
    cfg1 = load_scenario(_packaged("vehicle-e1.scn"))
    kw = {}
    if dt is not None:
        kw["dt"] = dt
    if d_D is not None:
        kw["d_D"] = d_D
    if t_final is not None:
        kw["t_final"] = t_final
    if dx is not None:
        kw["dx"] = dx
    kw["d_pred"] = d_pred if d_pred is not None else (dt if dt is not None else None)
    cfg1 = replace(cfg1, **kw)
    cfg1.name = "platoon-table1:E1"
    cfg2 = replace(cfg1, Y0=np.array([0.0, -2.0]), X0=np.array([1.0]),
                   D_true=1.5, s_src="0")
    cfg2.name = "platoon-table1:E2"
    return cfg1, cfg2


def _leader_jet(plant, d_off: float, y_pair, x1d, U1d, order: int) -> Jet:
    """Series of y11 + clearance along the leader's flow at the query point.

    y_pair is the leader state there, x1d its actuator state a leader
    delay earlier, U1d the command in force at that same moment.
    """
    u0 = plant.b * np.asarray(x1d, dtype=float)
    u1 = plant.b * (plant.phi[0](x1d) + U1d)
    y_jets = expand_y_chain(y_pair, plant, order, input_jet=Jet([u0, u1]))
    return (y_jets[0] + d_off).truncate(order)


class FollowerReference:
    """E2's reference s2(t) = y11(t) + clearance, served from E1's data.

    filter_direction ranks the competing E1 delay hypotheses inside
    jet_sweep; it must come from the follower's own plant and gains.

    E1 publishes each command the moment it is computed, before E2's
    controls run, so a query at time tau pairs the sample with the
    command segment actually driving x1 from tau onward; the replayed
    oracle in _follower_truth keeps the same convention.
    """

    def __init__(self, leader: VehicleSim, d_off: float = CLEARANCE,
                 filter_direction=None):
        if leader.plant.m != 1:
            raise ScenarioError("the follower reference needs a single-stage "
                                "leader actuator to reconstruct input derivatives")
        self.e1 = leader
        self.d_off = float(d_off)
        self.fdir = None if filter_direction is None else np.asarray(filter_direction, dtype=float)
        cfg = leader.cfg
        self.u_ring = SampleHistory(cfg.dt, cfg.D_hi + 2 * cfg.dt, t0=-cfg.dt, fill=0.0)
        # per-node sweep scores, aligned with the ring layout of e1.bank,
        # plus the cached depth lattice of the (row, horizon) pairings
        self._score = None
        self._score_mark = 0
        self._srows = None
        self._lat_h = None
        self._idx_head = None

    def publish(self, U1: float) -> None:
        """Record the command E1 applies over the step about to run."""
        self.u_ring.push(float(U1))

    # -- jet construction --------------------------------------------------------

    def _jet(self, y_pair, x1d, U1d, order: int) -> Jet:
        return _leader_jet(self.e1.plant, self.d_off, y_pair, x1d, U1d, order)

    def _snapshot_u(self) -> float:
        return float(self.u_ring.at(self.e1.t))

    def _settled(self, q, order: int) -> Jet:
        bank, Dh = self.e1.active_bank()
        q = np.asarray(q, dtype=float)
        y_pair = bank.row_values(0, q - Dh)
        x1d = self.e1.line.x1_at(q - Dh)
        U1d = self.u_ring.at(q - Dh)
        return self._jet(y_pair, x1d, U1d, order)

    def _refresh_scores(self, order: int) -> None:
        """Score ring columns appended since the last call.

        Nodes are immutable once written, so each (row, node) pairing is
        chained and scored exactly once; the full window is scored on
        first use.  Lanes deeper than a row's own window hold stale data,
        but the query side clamps depths before ever reading them.
        """
        bank = self.e1.bank
        head, cap = bank._head, bank._cap
        if self._score is None:
            self._score = np.full((bank.R, cap), -np.inf)
            self._score_mark = head - cap
            self._srows = np.arange(bank.R)[:, None]
        fresh = min(head - self._score_mark, cap)
        self._score_mark = head
        n_pairs_cols = 128
        for start in range(0, fresh, n_pairs_cols):
            deps = np.arange(start, min(start + n_pairs_cols, fresh))
            cols = (head - deps) % cap
            tau = bank.t_now - deps * bank.d
            y = bank._hist[:, cols]
            x1d = np.broadcast_to(self.e1.line.x1_at(tau), (bank.R, deps.size))
            U1d = np.broadcast_to(self.u_ring.at(tau), (bank.R, deps.size))
            jets = self._jet(y.reshape(-1, y.shape[-1]), x1d.ravel(), U1d.ravel(), order)
            shape = (bank.R * deps.size,)
            score = sum(a * np.broadcast_to(np.asarray(c, dtype=float), shape)
                        for a, c in zip(self.fdir, jets.c))
            self._score[:, cols] = score.reshape(bank.R, deps.size)

    def _build_lattice(self, bank, h) -> None:
        """Depth lattice of the (row, horizon) pairings for one horizon set.

        Row i holds y1(t + h_j) at depth (d1_i - h_j)/d plus the phase of
        t against the node clock.  When both grids sit on the node step
        the depths are integers and the per-step selection reduces to two
        cached gathers; otherwise the float matrix is kept and walked
        each step.
        """
        Kb = (bank.delays[:, None] - h[None, :]) / bank.d
        Ki = np.rint(Kb).astype(int)
        self._lat_h = h
        self._lat_int = bool(np.max(np.abs(Kb - Ki)) < 1e-6)
        if not self._lat_int:
            self._lat_Kb = Kb
            return
        Nc = bank.N[:, None]
        edge = (Ki <= 0) | (Ki > Nc)
        Mc1 = np.clip(Ki, 0, Nc)
        self._lat_Ki = Ki
        self._lat_M = (np.where(edge, Mc1, Ki - 1), Mc1)
        self._idx_head = None

    # -- provider interface --------------------------------------------------------

    def jet_sweep(self, t, horizons, order: int) -> Jet:
        if self.e1.active_bank() is not None:
            self._score = None  # the hypothesis sweep is over
            return self._settled(t + np.asarray(horizons), order)
        if self.fdir is None:
            raise ScenarioError("sweeping the follower with both delays unknown "
                                "needs the filter direction of its plant and gains")
        self._refresh_scores(order)
        bank = self.e1.bank
        h = np.asarray(horizons, dtype=float)
        if self._lat_h is not horizons and not np.array_equal(self._lat_h, h):
            self._build_lattice(bank, h)
        # E1's row for delay d1 places y1(t + h) at node time t + h - d1;
        # horizons beyond a row's reach clamp to its newest node.  b*U* is
        # affine in the reference coefficients, so the cached dot-product
        # scores rank the pairings; between nodes the score is interpolated
        # and only the winner's jet is rebuilt on the actual data.
        if self._lat_int:
            head, cap = bank._head, bank._cap
            if self._idx_head != head:
                base = self._srows * cap
                Mc0, Mc1 = self._lat_M
                self._idx0 = (base + (head - Mc0) % cap).ravel()
                self._idx1 = (base + (head - Mc1) % cap).ravel()
                self._idx_head = head
            phi = (t - bank.t_now) / bank.d
            Sf = self._score.ravel()
            if phi <= 1e-9:
                scores = Sf[self._idx1]
            else:
                scores = phi * Sf[self._idx0] + (1.0 - phi) * Sf[self._idx1]
            pick = np.argmax(scores.reshape(bank.R, h.size), axis=0)
            k_sel = np.clip(self._lat_Ki[pick, np.arange(h.size)] - phi,
                            0.0, bank.N[pick].astype(float))
        else:
            k = np.clip(self._lat_Kb - (t - bank.t_now) / bank.d,
                        0.0, bank.N[:, None].astype(float))
            k0 = np.floor(k).astype(int)
            frac = k - k0
            k1 = np.minimum(k0 + 1, bank.N[:, None])
            head, cap = bank._head, bank._cap
            S = self._score
            scores = ((1.0 - frac) * S[self._srows, (head - k0) % cap]
                      + frac * S[self._srows, (head - k1) % cap])
            pick = np.argmax(scores, axis=0)
            k_sel = k[pick, np.arange(h.size)]
        tau_sel = bank.t_now - k_sel * bank.d
        y_sel = bank.gather(pick, tau_sel)
        x1d = self.e1.line.x1_at(tau_sel)
        U1d = self.u_ring.at(tau_sel)
        return self._jet(y_sel, x1d, U1d, order)

    def jet_desired(self, t, q, order: int) -> Jet:
        if self.e1.active_bank() is not None:
            return self._settled(q, order)
        row = self.e1.bank.closest_row(q - t)
        y_pair = self.e1.bank.predict(self.e1.Y)[row]
        return self._jet(y_pair, self.e1.X[0], self._snapshot_u(), order)

    def jet_now(self, t, order: int) -> Jet:
        D1 = self.e1.cfg.D_true
        return self._jet(self.e1.Y, float(self.e1.line.x1_at(t - D1)),
                         float(self.u_ring.at(t - D1)), order)

    def jet_true(self, t, q, order: int) -> Jet:
        D1 = self.e1.cfg.D_true
        q = np.asarray(q, dtype=float)
        y_pair = self.e1.true_bank.row_values(0, q - D1)
        return self._jet(y_pair, self.e1.line.x1_at(q - D1),
                         self.u_ring.at(q - D1), order)


def _follower_truth(e1: VehicleSim, ref: FollowerReference):
    """Follower reference oracle replayed from the leader's finished log.

    Returns s_query(q, order) for finalize_log.  Interpolates the same
    records the live true-delay queries saw: the node-clock window of
    the true predictor row, the per-step x1 samples (pre-history before
    the start), and the commands published at the top of each step.
    """
    log = e1.log
    D1, dt, plant = e1.cfg.D_true, e1.dt, e1.plant
    t0, v0 = e1._window0
    tP = np.concatenate([t0[:-1], log.t[::e1.stride]])
    vP = np.concatenate([v0[:-1], log.P_true[::e1.stride]])
    K = int(round(e1.cfg.D_hi / dt)) + 2
    t_pre = -dt * np.arange(K, 0, -1)
    tX = np.concatenate([t_pre, log.t])
    vX = np.concatenate([e1.cfg.history_fn()(t_pre), log.X[:, 0]])
    tU = np.concatenate([[-dt], log.t])
    vU = np.concatenate([[0.0], log.U_applied])
    d_off = ref.d_off

    def jets(q, order: int) -> Jet:
        tau = np.asarray(q, dtype=float) - D1
        y_pair = np.stack([np.interp(tau, tP, vP[:, j]) for j in range(plant.n)],
                          axis=-1)
        return _leader_jet(plant, d_off, y_pair, np.interp(tau, tX, vX),
                           np.interp(tau, tU, vU), order)

    return jets


@dataclass
class PlatoonResult:
    mode: str
    e1: SimLog
    e2: SimLog
    duration_s: float

    @property
    def diverged(self) -> bool:
        return self.e1.diverged or self.e2.diverged

    def summaries(self):
        return {"E1": self.e1.summary(), "E2": self.e2.summary()}


def result_columns(res: PlatoonResult) -> dict:
    """Physical traces of a platoon run, keyed by figure quantity.

    Distances come from the raw positions, not the transform margins, so
    they stay meaningful even when a run diverges.  Logs are aligned to
    the shorter vehicle when one stopped early.
    """
    e1, e2 = res.e1, res.e2
    L = min(len(e1.t), len(e2.t))
    t = e1.t[:L]
    return {
        "t": t,
        "d1": leader_position(t) + e1.Y[:L, 0],
        "d2": e2.Y[:L, 0] - e1.Y[:L, 0],
        "v1": -e1.Y[:L, 1],
        "v2": -e2.Y[:L, 1],
        "F1": e1.X[:L, 0],
        "F2": e2.X[:L, 0],
        "V1": e1.U_applied[:L] / VOLTAGE_GAIN,
        "V2": e2.U_applied[:L] / VOLTAGE_GAIN,
        "Dhat1": e1.D_hat[:L],
        "Dhat2": e2.D_hat[:L],
    }


def _check_follower(e2_cfg: ScenarioConfig, e2: VehicleSim, ref: FollowerReference) -> None:
    """Feasibility of E2's initial data against E1's true-delay window.

    Mirrors the analytic-scenario checks: the true gap margin must be
    strictly positive over the whole initial window, and the fixed gains
    must clear their data-dependent floors on the sweep data.
    """
    theta, v2 = e2.true_bank.node_history(0)
    s_vals = ref.jet_true(0.0, theta + e2_cfg.D_true, 0).value
    worst = float(np.min(v2[:, 0] - np.asarray(s_vals)))
    if not worst > 0:
        raise ScenarioError("the follower's predicted gap margin is not strictly "
                            f"positive over the initial window (worst {worst:.4g})")
    bank2 = e2.bank or e2.true_bank
    s_jets = ref.jet_sweep(0.0, bank2.delays, e2.order)
    chk = validate_gains(e2.gains, bank2.values(), e2_cfg.X0, s_jets, e2_cfg.plant)
    if not chk.ok:
        raise ScenarioError("follower gains fail their floors: " + "; ".join(chk.messages))


def run_platoon(mode: str = "adaptive", diagnostics: bool = True,
                dt: float | None = None, d_D: float | None = None,
                t_final: float | None = None, d_pred: float | None = None,
                dx: float | None = None, skip_checks: bool = False) -> PlatoonResult:
    """Run the benchmark pair in lockstep under one controller variant."""
    cfg1, cfg2 = platoon_configs(dt=dt, d_D=d_D, t_final=t_final, d_pred=d_pred,
                                 dx=dx)
    if cfg2.D_true > cfg1.D_true:
        raise ScenarioError("the follower's delay must not exceed the leader's")
    if not skip_checks:
        rep = check_assumptions(cfg1, gains=GainSet(cfg1.k, cfg1.c, cfg1.c_bar))
        if not rep.ok:
            raise ScenarioError("E1 initial data is infeasible:\n" + str(rep))
    e1 = VehicleSim(cfg1, mode=mode, diagnostics=diagnostics, label="E1")
    gains2 = GainSet(cfg2.k, cfg2.c, cfg2.c_bar)
    ref2 = FollowerReference(e1, filter_direction=filter_direction(cfg2.plant, gains2))
    e2 = VehicleSim(cfg2, mode=mode, reference=ref2, gains=gains2,
                    diagnostics=diagnostics, label="E2")
    if not skip_checks and mode != "uncompensated":
        _check_follower(cfg2, e2, ref2)

    started = time.perf_counter()
    with np.errstate(all="ignore"):
        while not (e1.done or e2.done):
            e1.step_controls()
            ref2.publish(e1._U_applied)
            e2.step_controls()
            if e1.done or e2.done:
                break
            if e1.step >= e1.steps:
                e1._finish()
                e2._finish()
                break
            e1.step_advance()
            e2.step_advance()
    for sim in (e1, e2):
        if not sim.done:
            sim._finish()
    finalize_log(e1)
    finalize_log(e2, s_query=_follower_truth(e1, ref2))
    duration = time.perf_counter() - started
    e1.log.duration_s = e2.log.duration_s = duration
    return PlatoonResult(mode=mode, e1=e1.log, e2=e2.log, duration_s=duration)
