"""Finite-horizon predictors of the distal state, one row per delay guess.

The controller cannot act on Y(t): its command only reaches the distal
chain a delay D later, so every control quantity is evaluated on the
predicted state P(t) ~ Y(t + D).  With the delayed input known from the
x_1 history, the prediction is the plain integral form

    P(t) = Y(t) + integral_{t-D}^{t} f(P(s), b*x_1(s)) ds,

discretized with left rectangles on a step d: advancing a row costs one
evaluation of f because the window sum is maintained incrementally.  The
initial window P(theta), theta in [-D, 0], is built the same way from the
recorded input history, starting from Y(0) at the horizon edge.

A :class:`PredictorBank` advances many rows (one per candidate delay) in
lockstep: the per-row node histories live in shared ring arrays and the
chain right-hand side is evaluated once per step on the whole batch.  A
row for delay D keeps ceil(D/d) trailing intervals.  When the identifier
settles, the row nearest the estimate is extracted into its own
single-row bank and the remaining rows freeze, keeping their last values
for diagnostics.
"""

from __future__ import annotations

import numpy as np

from .plant import PlantDefinition, eval_y_rhs

__all__ = ["PredictorBank", "PredictorDivergence", "FINITE_GUARD"]

# beyond this magnitude a predicted state is treated as numerically divergent,
# which in practice means the open-loop flow blew up inside the horizon
FINITE_GUARD = 1.0e12


class PredictorDivergence(RuntimeError):
    """Predicted state left the finite range during initialization/advance."""


class PredictorBank:
    """Batch of delay-candidate predictors sharing one ring layout."""

    def __init__(self, plant: PlantDefinition, delays, d: float, t0: float = 0.0):
        delays = np.atleast_1d(np.asarray(delays, dtype=float))
        if np.any(delays <= 0):
            raise ValueError("candidate delays must be positive")
        if d <= 0:
            raise ValueError("predictor step d must be positive")
        self.plant = plant
        self.delays = delays
        self.d = float(d)
        self.R = len(delays)
        self.N = np.ceil(delays / d - 1e-9).astype(int)
        self.N_max = int(self.N.max())
        self._cap = self.N_max + 1
        self._hist = np.zeros((self.R, self._cap, plant.n))
        self._fbuf = np.zeros((self.R, self._cap, plant.n))
        self._fsum = np.zeros((self.R, plant.n))
        self._head = 0
        self.t_now = float(t0)
        self._rows = np.arange(self.R)

    @classmethod
    def single(cls, plant: PlantDefinition, D: float, d: float, t0: float = 0.0) -> "PredictorBank":
        return cls(plant, [D], d, t0=t0)

    # -- initialization ------------------------------------------------------

    def init_history(self, Y0, x1_at) -> None:
        """Integrate the initial window from the recorded input history.

        x1_at(t) must return the measured first actuator state for times in
        [t0 - N_max*d, t0].  Row r starts from Y0 at its own horizon edge
        and accumulates forward to t0; afterwards the bank is ready to
        advance step by step.
        """
        Y0 = np.asarray(Y0, dtype=float)
        b = self.plant.b
        P = np.tile(Y0, (self.R, 1))
        node_js = np.arange(self.N_max + 1)
        u_nodes = b * np.atleast_1d(
            np.asarray(x1_at(self.t_now - node_js * self.d), dtype=float)
        )
        for j in range(self.N_max, 0, -1):
            starting = self.N == j
            if np.any(starting):
                self._hist[starting, (self._head - j) % self._cap] = Y0
            live = self.N >= j
            P[live] += self.d * eval_y_rhs(P[live], u_nodes[j], self.plant)
            self._hist[live, (self._head - (j - 1)) % self._cap] = P[live]
        if not np.all(np.isfinite(P)) or np.max(np.abs(P)) > FINITE_GUARD:
            raise PredictorDivergence(
                "predicted state exceeded the finite guard while integrating the initial window"
            )
        # rolling sums over the trailing window: newest node in, oldest out
        for j in range(self.N_max - 1, -1, -1):
            live = j <= self.N - 1
            if not np.any(live):
                continue
            col = (self._head - j) % self._cap
            vals = self._hist[live, col]
            fv = self.d * eval_y_rhs(vals, u_nodes[j], self.plant)
            self._fbuf[live, col] = fv
            self._fsum[live] += fv

    # -- stepping -------------------------------------------------------------

    def advance(self, Y_now, x1_now: float) -> None:
        """Append the node at t_now + d given the fresh measurements there."""
        self._head += 1
        self.t_now += self.d
        col = self._head % self._cap
        P_new = np.asarray(Y_now, dtype=float)[None, :] + self._fsum
        if not np.all(np.isfinite(P_new)) or np.max(np.abs(P_new)) > FINITE_GUARD:
            raise PredictorDivergence("predicted state exceeded the finite guard")
        self._hist[:, col] = P_new
        f_new = self.d * eval_y_rhs(P_new, self.plant.b * x1_now, self.plant)
        # the slot being dropped can alias the one being written (full-length
        # rows wrap around exactly), so read it before storing the new value
        dropped = self._fbuf[self._rows, (self._head - self.N) % self._cap].copy()
        self._fbuf[:, col] = f_new
        self._fsum += f_new - dropped

    # -- queries ---------------------------------------------------------------

    def values(self) -> np.ndarray:
        """Newest predicted state per row, shape (R, n)."""
        return self._hist[:, self._head % self._cap]

    def predict(self, Y_now) -> np.ndarray:
        """Window sum applied to a fresh measurement, without advancing.

        Lets the controller run on a finer step than the predictor nodes:
        the integral term is held between node updates while the measured
        state stays current.  Equals values() right after an advance with
        the same measurement.
        """
        P = np.asarray(Y_now, dtype=float)[None, :] + self._fsum
        if not np.all(np.isfinite(P)) or np.max(np.abs(P)) > FINITE_GUARD:
            raise PredictorDivergence("predicted state exceeded the finite guard")
        return P

    def value(self, row: int = 0) -> np.ndarray:
        return self._hist[row, self._head % self._cap]

    def row_values(self, row: int, t_query) -> np.ndarray:
        """Node-interpolated predictor values of one row at past times.

        Times clamp to the retained window [t_now - N_row*d, t_now].
        Result shape is (len(t_query), n) for array input, (n,) for scalar.
        """
        scalar = np.ndim(t_query) == 0
        t = np.atleast_1d(np.asarray(t_query, dtype=float))
        j = (self.t_now - t) / self.d
        j = np.clip(j, 0.0, float(self.N[row]))
        j0 = np.floor(j).astype(int)
        frac = j - j0
        j1 = np.minimum(j0 + 1, self.N[row])
        lo = self._hist[row, (self._head - j0) % self._cap]
        hi = self._hist[row, (self._head - j1) % self._cap]
        out = (1.0 - frac)[:, None] * lo + frac[:, None] * hi
        return out[0] if scalar else out

    def gather(self, rows, t_query) -> np.ndarray:
        """Node-interpolated values of selected rows at matching times.

        rows picks the row per query point; each time clamps to its own
        row's retained window.  Result shape is t_query.shape + (n,).
        """
        rows = np.asarray(rows)
        t = np.asarray(t_query, dtype=float)
        j = (self.t_now - t) / self.d
        j = np.clip(j, 0.0, self.N[rows].astype(float))
        j0 = np.floor(j).astype(int)
        frac = (j - j0)[..., None]
        j1 = np.minimum(j0 + 1, self.N[rows])
        lo = self._hist[rows, (self._head - j0) % self._cap]
        hi = self._hist[rows, (self._head - j1) % self._cap]
        return (1.0 - frac) * lo + frac * hi

    def node_history(self, row: int):
        """(times, values) of a row's retained nodes, oldest first."""
        js = np.arange(self.N[row], -1, -1)
        times = self.t_now - js * self.d
        vals = self._hist[row, (self._head - js) % self._cap]
        return times, vals

    def aux_field(self, row: int, x_grid) -> np.ndarray:
        """p(x, t) = P(t - D + D*x) on the given x grid, shape (len(x), n)."""
        D = self.delays[row]
        t = self.t_now - D + D * np.asarray(x_grid, dtype=float)
        return self.row_values(row, t)

    def closest_row(self, D: float) -> int:
        return int(np.argmin(np.abs(self.delays - D)))

    def extract_row(self, row: int) -> "PredictorBank":
        """Clone one row into an independent single-row bank."""
        out = PredictorBank(self.plant, [self.delays[row]], self.d, t0=self.t_now)
        js = np.arange(out.N_max, -1, -1)
        src = (self._head - js) % self._cap
        dst = (out._head - js) % out._cap
        out._hist[0, dst] = self._hist[row, src]
        out._fbuf[0, dst] = self._fbuf[row, src]
        out._fsum[0] = self._fsum[row]
        return out
