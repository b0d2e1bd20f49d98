"""History buffers for the delayed actuator channel.

The plant feeds the distal chain through a pure transport delay: what
arrives at time t is b*x_1(t - D).  Equivalently the channel carries a
distributed field

    u(x, t) = b * x_1(t - D + D*x),   x in [0, 1],

with u(1, t) the fresh boundary value b*x_1(t) and u(0, t) the value
emerging after the full delay.  The simulator keeps x_1 samples on the
fixed step grid and reconstructs any of these quantities by linear
interpolation, for every delay up to the configured upper bound D_hi, so
one buffer serves the true plant, the candidate sweep and the identifier.
"""

from __future__ import annotations

import numpy as np

__all__ = ["SampleHistory", "DelayLine"]


class SampleHistory:
    """Ring of scalar samples on a uniform dt grid with linear interpolation."""

    def __init__(self, dt: float, span: float, t0: float = 0.0, fill: float = 0.0):
        if dt <= 0 or span <= 0:
            raise ValueError("dt and span must be positive")
        self.dt = float(dt)
        self.capacity = int(np.ceil(span / dt)) + 2
        self._buf = np.full(self.capacity, float(fill))
        # absolute index of the newest sample; sample i lives at time i*dt + t0
        self._newest = 0
        self._t0 = float(t0)
        self._count = 1

    @property
    def t_newest(self) -> float:
        return self._t0 + self._newest * self.dt

    @property
    def t_oldest(self) -> float:
        return self._t0 + (self._newest - self._count + 1) * self.dt

    def prefill(self, fn) -> None:
        """Fill the whole retained window from fn(t), newest sample included."""
        idx = self._newest - np.arange(self.capacity)
        times = self._t0 + idx * self.dt
        self._buf[idx % self.capacity] = np.asarray(fn(times), dtype=float)
        self._count = self.capacity

    def push(self, value: float) -> None:
        self._newest += 1
        self._buf[self._newest % self.capacity] = value
        self._count = min(self._count + 1, self.capacity)

    def at(self, t):
        """Linearly interpolated sample value(s) at time(s) t."""
        pos = (np.asarray(t, dtype=float) - self._t0) / self.dt
        lo = np.clip(np.floor(pos).astype(int), self._newest - self._count + 1, self._newest)
        frac = np.clip(pos - lo, 0.0, 1.0)
        hi = np.minimum(lo + 1, self._newest)
        out = (1.0 - frac) * self._buf[lo % self.capacity] + frac * self._buf[hi % self.capacity]
        return out if np.ndim(t) else float(out)


class DelayLine:
    """x_1 history plus transport-field views of it.

    Retains at least [t - D_hi - dt, t] so any delay in the candidate range
    can be reconstructed.  ``history`` prefills times <= t0 (defaults to a
    zero pre-start record).
    """

    def __init__(self, dt: float, D_hi: float, b: float, t0: float = 0.0,
                 history=None, x1_now: float = 0.0):
        self.b = float(b)
        self.D_hi = float(D_hi)
        self._hist = SampleHistory(dt, D_hi + dt, t0=t0)
        if history is None:
            history = lambda t: np.zeros(np.shape(t))
        fn = lambda t: np.where(np.asarray(t) >= t0 - 0.5 * dt, x1_now, history(np.asarray(t, dtype=float)))
        self._hist.prefill(fn)

    @property
    def dt(self) -> float:
        return self._hist.dt

    @property
    def t_now(self) -> float:
        return self._hist.t_newest

    def push(self, x1: float) -> None:
        """Append the sample for time t_now + dt."""
        self._hist.push(x1)

    def x1_at(self, t):
        """Raw x_1 value(s) at past time(s) t (linear interpolation)."""
        return self._hist.at(t)

    def delayed_input(self, D: float) -> float:
        """b * x_1(t - D), the signal entering the distal chain now."""
        return self.b * self._hist.at(self.t_now - D)

    def sample_u(self, D: float, x_grid):
        """Transport field u(x, t) = b*x_1(t - D + D*x) on the given x grid."""
        x = np.asarray(x_grid, dtype=float)
        if x.size == 0 or x[0] != 0.0 or x[-1] != 1.0 or np.any(np.diff(x) <= 0):
            raise ValueError("x grid must increase from 0 to 1")
        if not 0.0 < D <= self.D_hi + 1e-12:
            raise ValueError(f"delay {D} outside the retained range (0, {self.D_hi}]")
        return self.b * self._hist.at(self.t_now - D + D * x)
