"""Executable checks of the design's mathematical structure.

The forward transforms in :mod:`backstepping` define the virtual
controls so that the margin coordinates obey linear cascades,

    dz_i/dt = -k_i z_i + z_{i+1}        dr_j/dt = -c_j r_j + r_{j+1}

as pointwise identities, not merely along solutions.  That gives an
inverse map: regenerate the margin jets from bare values through the
cascade, then climb the strict-feedback ladder

    y_{i+1} = dy_i/dt - psi_i(y_1..y_i)

to recover the state.  Round-tripping forward and inverse is the main
correctness oracle for the transform algebra.

The remaining helpers reconstruct the distributed quantities (the
channel margin w and the shifted-margin field it generates), measure how
well a finished log satisfies its own target dynamics, and fit decay
rates to the logged Lyapunov-style norms.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import expm

from .backstepping import GainSet, h_n_value
from .jets import Jet
from .plant import PlantDefinition

__all__ = [
    "cascade_jets",
    "inverse_y",
    "inverse_x",
    "compute_w",
    "delta_field",
    "target_residuals",
    "fit_log_slope",
]


def cascade_jets(values, gains, top_order: int):
    """Margin jets regenerated from values via dv_i/dt = -g_i v_i + v_{i+1}.

    values has the chain along its last axis; entry i comes back as a jet
    of order top_order - i, which is exactly what one ladder climb eats.
    The chain is closed with v_{n+1} = 0: the inverse map is defined on
    the homogeneous cascade.
    """
    V = np.asarray(values, dtype=float)
    n = V.shape[-1]
    jets = [None] * n
    for i in range(n - 1, -1, -1):
        coeffs = [V[..., i]]
        for p in range(top_order - i):
            above = jets[i + 1].c[p] if i + 1 < n else 0.0
            coeffs.append((-gains[i] * coeffs[p] + above) / (p + 1))
        jets[i] = Jet(coeffs)
    return jets


def _climb(first: Jet, nonlin, count: int):
    """Ladder from the first reconstructed jet up the strict-feedback chain."""
    out = [first]
    for i in range(1, count):
        out.append(out[-1].dot() - nonlin(i, out))
    return out


def inverse_y(Z, s_jet: Jet, plant: PlantDefinition, k) -> np.ndarray:
    """Distal state Y from margin values and the reference jet at t."""
    z_jets = cascade_jets(Z, k, plant.n - 1)
    y1 = z_jets[0] + s_jet.truncate(plant.n - 1)
    y_jets = _climb(y1, lambda i, ys: plant.psi_jet(i, ys), plant.n)
    return np.stack(np.broadcast_arrays(*[np.asarray(y.value) for y in y_jets]), axis=-1)


def inverse_x(R, delta: Jet, plant: PlantDefinition, c) -> np.ndarray:
    """Actuator state X from margin values and the Delta jet."""
    r_jets = cascade_jets(R, c, plant.m - 1)
    x1 = (r_jets[0] + delta.truncate(plant.m - 1)) / plant.b
    x_jets = _climb(x1, lambda j, xs: plant.phi_jet(j, xs), plant.m)
    return np.stack(np.broadcast_arrays(*[np.asarray(x.value) for x in x_jets]), axis=-1)


def compute_w(u_row, p_row, s_jets: Jet, plant: PlantDefinition, k):
    """Channel margin w = u - h_n(p, sbar) - s^(n) on aligned grids.

    u_row holds the transport samples, p_row the matching predictions
    (..., n), s_jets the reference jet batched over the same points.
    """
    h = np.asarray(h_n_value(p_row, s_jets, plant, k))
    return np.asarray(u_row, dtype=float) - h - np.asarray(s_jets.dn(plant.n).value)


def delta_field(Z, w_row, k, D: float, x_grid) -> np.ndarray:
    """Shifted-margin field on the x grid from margins and channel state.

    delta(x) = e^{DAx} Z + D * int_0^x e^{DA(x-y)} B w(y) dy with A the
    cascade matrix (-k_i on the diagonal, ones above) and B the last
    basis vector.  The grid must be uniform so the kernel values reuse
    across the convolution; quadrature is trapezoid.
    """
    x = np.asarray(x_grid, dtype=float)
    G = x.size
    steps = np.diff(x)
    if G < 2 or not np.allclose(steps, steps[0]):
        raise ValueError("delta_field needs a uniform x grid")
    k = np.asarray(k, dtype=float)
    n = k.size
    A = np.diag(-k) + np.diag(np.ones(n - 1), 1)
    E = np.stack([expm(D * A * xi) for xi in x])
    Z = np.asarray(Z, dtype=float)
    w = np.asarray(w_row, dtype=float)
    Mb = E[:, :, -1]  # e^{DAx} B columns
    out = E @ Z
    dx = float(steps[0])
    for j in range(1, G):
        kern = Mb[j::-1] * w[: j + 1, None]
        out[j] += D * dx * (kern.sum(axis=0) - 0.5 * (kern[0] + kern[-1]))
    return out


def target_residuals(log, plant: PlantDefinition, gains: GainSet, t_min=None):
    """Max-norm defect of each target-cascade row over the settled window.

    Central differences of the logged margins against their design
    right-hand sides; the last actuator row is checked against the
    command-mismatch channel gamma, which the nominal law keeps at zero.
    Rows whose distributed term was not logged (diagnostics off or
    strided) are evaluated where data exists.
    """
    t = log.t
    dt = t[1] - t[0]
    if t_min is None:
        t_min = 2.0 * (log.D_true or 0.0)
    mid = slice(1, -1)
    keep = t[mid] >= t_min

    def fd(a):
        return (a[2:] - a[:-2]) / (2.0 * dt)

    out = {}
    z, r = log.z, log.r
    for i in range(plant.n):
        drive = z[mid, i + 1] if i + 1 < plant.n else log.w0[mid]
        res = fd(z[:, i]) + gains.k[i] * z[mid, i] - drive
        ok = keep & np.isfinite(res)
        out[f"z{i + 1}"] = float(np.max(np.abs(res[ok]))) if ok.any() else np.nan
    for j in range(plant.m):
        drive = r[mid, j + 1] if j + 1 < plant.m else log.gamma[mid]
        res = fd(r[:, j]) + gains.c[j] * r[mid, j] - drive
        ok = keep & np.isfinite(res)
        out[f"r{j + 1}"] = float(np.max(np.abs(res[ok]))) if ok.any() else np.nan
    return out


def fit_log_slope(t, series, t_min, t_max=None):
    """Least-squares slope of log(series) on [t_min, t_max].

    Returns None when the window holds fewer than two positive finite
    samples (an identically zero norm decays trivially).
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(series, dtype=float)
    keep = (t >= t_min) & np.isfinite(v) & (v > 0.0)
    if t_max is not None:
        keep &= t <= t_max
    if keep.sum() < 2:
        return None
    return float(np.polyfit(t[keep], np.log(v[keep]), 1)[0])
