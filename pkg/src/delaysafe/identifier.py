"""Event-triggered batch least-squares estimation of the input delay.

The delayed channel is a transport state u(x,t) = b*x1(t - D + D*x) on
x in [0,1], built from the actuator history the controller itself
generated.  Projecting onto sine modes,

    g_n(t) = -int_0^1 sin(n pi x) u(x,t) dx
    f_n(t) = n pi int_0^t int_0^1 cos(n pi x) u(x,tau) dx dtau

every transport solution satisfies f_n(t) = D (g_n(t) - g_n(0)), because
d/dt g_n = (n pi / D) int cos(n pi x) u dx after one integration by parts
(the sine weight kills both boundary terms).  The delay is therefore the
slope of f against g, available from measured data alone.

At every trigger instant t_i = i*T the window [max(0, t_i - Ntilde*T), t_i)
is compressed to per-mode moments G_n = int g~^2, F_n = int g~ f (g~ is
g with its initial value removed) and the slope estimate

    ell = sum_n G_n F_n / sum_n G_n^2

is projected onto [D_lo, D_hi].  A deadband of plateau_frac * D_hat
suppresses updates that would barely move the estimate, so only finitely
many updates ever happen.  Windows whose every G_n is below eps_exc^2
carry no excitation and leave the estimate alone.  The first excited
trigger is the settling time t_f; from then on the closed loop trusts
the estimate.
"""

from __future__ import annotations

import numpy as np

__all__ = ["DelayIdentifier"]


def _trapezoid_weights(x_grid: np.ndarray) -> np.ndarray:
    w = np.zeros_like(x_grid)
    dx = np.diff(x_grid)
    w[:-1] += 0.5 * dx
    w[1:] += 0.5 * dx
    return w


class DelayIdentifier:
    """Accumulates mode integrals step by step and updates D_hat on triggers.

    accumulate(step, u_grid) must be called once per step in order,
    starting at step 0, with u_grid the transport state sampled on
    x_grid.  maybe_update(step) is called once per step as well and does
    the trigger bookkeeping; it returns True when a trigger fired.
    """

    def __init__(self, x_grid, dt: float, T: float, D_lo: float, D_hi: float,
                 n_max: int = 3, N_tilde: int = 5, plateau_frac: float = 0.02,
                 eps_exc: float = 1e-8):
        if not (0 < D_lo < D_hi):
            raise ValueError("need 0 < D_lo < D_hi")
        if T <= 0 or dt <= 0 or n_max < 1 or N_tilde < 1:
            raise ValueError("T, dt, n_max, N_tilde must be positive")
        self.x_grid = np.asarray(x_grid, dtype=float)
        self.dt = float(dt)
        self.T = float(T)
        self.D_lo = float(D_lo)
        self.D_hi = float(D_hi)
        self.n_max = int(n_max)
        self.N_tilde = int(N_tilde)
        self.plateau_frac = float(plateau_frac)
        self.eps_exc = float(eps_exc)

        self.period_steps = int(round(self.T / self.dt))
        if abs(self.period_steps * self.dt - self.T) > 1e-9 * self.T:
            raise ValueError("trigger period T must be a multiple of dt")

        modes = np.arange(1, self.n_max + 1, dtype=float)
        wq = _trapezoid_weights(self.x_grid)
        # weighted mode rows: I_sin @ u_grid gives the quadratures at once
        self._sin_w = np.sin(np.outer(modes, np.pi * self.x_grid)) * wq
        self._cos_w = np.cos(np.outer(modes, np.pi * self.x_grid)) * wq
        self._mode_pi = np.pi * modes

        self._window_steps = self.N_tilde * self.period_steps
        cap = self._window_steps + 2
        self._gbuf = np.zeros((cap, self.n_max))
        self._fbuf = np.zeros((cap, self.n_max))
        self._cap = cap
        self._f_acc = np.zeros(self.n_max)
        self._g0 = None
        self._last_step = -1

        self.D_hat = self.D_lo
        self.t_f = None
        self.updates = []  # (t, D_hat) after each accepted update
        self.last_window = None

    # -- per-step data path ---------------------------------------------------

    def accumulate(self, step: int, u_grid) -> None:
        """Record mode data for time step*dt, then extend the f integrals.

        The stored f value is the integral up to this instant (left
        rectangle rule), so the increment from this sample lands on the
        next record.
        """
        if step != self._last_step + 1:
            raise ValueError(f"accumulate called out of order (step {step})")
        self._last_step = step
        u = np.asarray(u_grid, dtype=float)
        g = -(self._sin_w @ u)
        if self._g0 is None:
            self._g0 = g.copy()
        slot = step % self._cap
        self._gbuf[slot] = g - self._g0
        self._fbuf[slot] = self._f_acc
        self._f_acc = self._f_acc + self.dt * self._mode_pi * (self._cos_w @ u)

    # -- trigger path ----------------------------------------------------------

    def maybe_update(self, step: int) -> bool:
        """Run the least-squares update if step is a trigger instant."""
        if step <= 0 or step % self.period_steps != 0:
            return False
        if step != self._last_step:
            raise ValueError("trigger processed before this step's data")
        lo = max(0, step - self._window_steps)
        idx = np.arange(lo, step) % self._cap  # strictly before the trigger
        gs = self._gbuf[idx]
        fs = self._fbuf[idx]
        G = self.dt * np.sum(gs * gs, axis=0)
        F = self.dt * np.sum(gs * fs, axis=0)
        excited = bool(np.any(G >= self.eps_exc ** 2))
        t_trig = (step // self.period_steps) * self.T
        info = {"t": t_trig, "G": G, "F": F, "excited": excited, "ell": None}
        if excited:
            ell = float(np.dot(G, F) / np.dot(G, G))
            info["ell"] = ell
            candidate = min(max(ell, self.D_lo), self.D_hi)
            if abs(candidate - self.D_hat) >= self.plateau_frac * self.D_hat:
                self.D_hat = candidate
                self.updates.append((t_trig, candidate))
            if self.t_f is None:
                self.t_f = t_trig
        self.last_window = info
        return True
