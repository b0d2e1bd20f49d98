"""Nonovershooting backstepping through the delay, on predictor states.

Two cascaded coordinate changes turn the plant into a stable target system
whose first coordinates are the safety margins:

  distal chain:     z_i = y_i - h_{i-1}(ybar, sbar) - s^(i-1)(t)
  actuator chain:   r_j = b*x_j - tau_{j-1}(xbar, ...) - Delta^(j-1)(t)

The virtual controls satisfy the recursions

  h_i  = -k_i z_i - psi_i + d/dt h_{i-1}
  tau_j = -c_j r_j - b*phi_j + d/dt tau_{j-1}

where every total time derivative is taken along the plant's own flow.
That is exactly what jet arithmetic computes, so the implementation
expands the chain states as truncated Taylor series and runs the
recursions on series instead of deriving partial-derivative formulas.

Delta(t) is the virtual control the distal chain wants at the far end of
the delay, evaluated on the predictor: Delta = h_n(P(t), sbar(t+D)) +
s^(n)(t+D).  The actuator chain then backsteps b*x_1 toward it.  The
nominal command is U = (tau_m + Delta^(m))/b.

All entry points accept batched states (leading candidate axis) because
the safe filter sweeps every delay candidate each step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .jets import Jet, constant
from .plant import PlantDefinition, expand_x_chain, expand_y_chain

__all__ = [
    "GainSet",
    "GainSelectionError",
    "forward_z",
    "z_transform",
    "actuator_input_jet",
    "delta_jet",
    "forward_r",
    "r_transform",
    "nominal_terms",
    "u_star",
    "filter_direction",
    "uncompensated_control",
    "select_gains",
    "validate_gains",
]

# relative floor below which a transform denominator counts as vanishing
_DENOM_TOL = 1e-9


@dataclass(frozen=True)
class GainSet:
    """Backstepping gains plus the safe filter's decay rate c_bar."""

    k: tuple
    c: tuple
    c_bar: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "k", tuple(float(v) for v in self.k))
        object.__setattr__(self, "c", tuple(float(v) for v in self.c))
        if any(v <= 0 for v in self.k) or any(v <= 0 for v in self.c):
            raise ValueError("gains must be positive")
        if self.c_bar <= 0:
            raise ValueError("c_bar must be positive")


class GainSelectionError(RuntimeError):
    """Gain selection hit a vanishing or wrong-signed margin."""


def z_transform(y_jets, s_jet: Jet, k, plant: PlantDefinition):
    """Margin and virtual-control jets along the distal chain.

    y_jets come from :func:`expand_y_chain`; s_jet is the reference jet at
    the matching instant.  Returns (z_jets, h_jets) with h_jets[0] the
    zero jet h_0 and h_jets[i] = h_i.
    """
    n = plant.n
    h_prev = constant(0.0, s_jet.order)
    h_jets = [h_prev]
    z_jets = []
    for i in range(1, n + 1):
        z_i = y_jets[i - 1] - h_prev - s_jet.dn(i - 1)
        h_i = -k[i - 1] * z_i - plant.psi_jet(i, y_jets[:i]) + h_prev.dot()
        z_jets.append(z_i)
        h_jets.append(h_i)
        h_prev = h_i
    return z_jets, h_jets


def forward_z(Y, s_jet: Jet, plant: PlantDefinition, k) -> np.ndarray:
    """Margin coordinates z_1..z_n from measured/predicted distal state."""
    y_jets = expand_y_chain(Y, plant, plant.n - 1)
    z_jets, _ = z_transform(y_jets, s_jet, k, plant)
    return np.stack(np.broadcast_arrays(*[np.asarray(z.value) for z in z_jets]), axis=-1)


def h_n_value(Y, s_jet: Jet, plant: PlantDefinition, k):
    """Value of the top virtual control h_n at the given point."""
    y_jets = expand_y_chain(Y, plant, plant.n - 1)
    _, h_jets = z_transform(y_jets, s_jet, k, plant)
    return h_jets[plant.n].value


def actuator_input_jet(X, plant: PlantDefinition) -> Jet:
    """Series of the channel boundary signal b*x_1(t) along the actuator flow.

    Trusted to order m-1, which is all the Delta jet ever needs; the
    control input never has to be differentiated.
    """
    x_jets = expand_x_chain(X, plant, plant.m - 1)
    return plant.b * x_jets[0]


def delta_jet(P, s_jet_ahead: Jet, plant: PlantDefinition, k, y_input_jet: Jet) -> Jet:
    """Jet of Delta(t) = h_n(P(t), sbar(t+D)) + s^(n)(t+D), order m.

    P is the predicted distal state (optionally batched), s_jet_ahead the
    reference jet already shifted to t+D, and y_input_jet the series of
    the signal entering dy_n/dt (b*x_1 for predictor flows, the measured
    delayed input for the delay-ignoring variant).

    h_n at order m needs y_i at order n+m-i, so the chain is expanded to
    n+m-1; the input series (order m-1) caps y_n at exactly order m.
    """
    y_jets = expand_y_chain(P, plant, plant.n + plant.m - 1, input_jet=y_input_jet)
    _, h_jets = z_transform(y_jets, s_jet_ahead, k, plant)
    return h_jets[plant.n] + s_jet_ahead.dn(plant.n)


def r_transform(x_jets, delta: Jet, c, plant: PlantDefinition):
    """Actuator margin and virtual-control jets; returns (r_jets, tau_jets)."""
    m, b = plant.m, plant.b
    tau_prev = constant(0.0, delta.order + 1)
    tau_jets = [tau_prev]
    r_jets = []
    for j in range(1, m + 1):
        r_j = b * x_jets[j - 1] - tau_prev - delta.dn(j - 1)
        tau_j = -c[j - 1] * r_j - b * plant.phi_jet(j, x_jets[:j]) + tau_prev.dot()
        r_jets.append(r_j)
        tau_jets.append(tau_j)
        tau_prev = tau_j
    return r_jets, tau_jets


def forward_r(X, delta: Jet, plant: PlantDefinition, c):
    """Actuator margins r_1..r_m and the top virtual control value tau_m."""
    x_jets = expand_x_chain(X, plant, plant.m - 1)
    r_jets, tau_jets = r_transform(x_jets, delta, c, plant)
    r = np.stack(np.broadcast_arrays(*[np.asarray(rj.value) for rj in r_jets]), axis=-1)
    return r, tau_jets[plant.m].value


def nominal_terms(P, X, s_jet_ahead: Jet, plant: PlantDefinition, gains: GainSet):
    """Everything the command and the filter need at one (t, delay) point.

    Returns (U, r_m, tau_m, delta) where U = (tau_m + Delta^(m))/b is the
    exact-cancellation command and delta is the full Delta jet.
    """
    delta = delta_jet(P, s_jet_ahead, plant, gains.k, actuator_input_jet(X, plant))
    r, tau_m = forward_r(X, delta, plant, gains.c)
    r_m = r[..., -1]
    U = (tau_m + delta.d(plant.m)) / plant.b
    return U, r_m, tau_m, delta


def u_star(P, X, s_jet_ahead: Jet, plant: PlantDefinition, gains: GainSet):
    """Largest command keeping the actuator margin decaying no faster than c_bar.

    U*(t, D) = ((c_m - c_bar) r_m + tau_m + Delta^(m))/b, the boundary of
    the safe set for one hypothesized delay.
    """
    U, r_m, _, _ = nominal_terms(P, X, s_jet_ahead, plant, gains)
    return U + (gains.c[-1] - gains.c_bar) * r_m / plant.b


def filter_direction(plant: PlantDefinition, gains: GainSet) -> np.ndarray:
    """Sensitivity of b*U* to the reference series coefficients.

    The transforms are linear in the reference: psi and phi only ever see
    flow jets of P and X, so b*U* is affine in the s-jet coefficients and
    the slopes depend on the gains alone.  Recovered by probing with unit
    jets; callers rank competing reference hypotheses by the dot product
    of these slopes with the candidate coefficients.
    """
    order = plant.n + plant.m
    P = np.zeros(plant.n)
    X = np.zeros(plant.m)
    base = u_star(P, X, Jet(np.zeros(order + 1)), plant, gains)
    out = np.empty(order + 1)
    for k in range(order + 1):
        e = np.zeros(order + 1)
        e[k] = 1.0
        out[k] = u_star(P, X, Jet(e), plant, gains) - base
    return plant.b * out


def uncompensated_control(Y, X, s_jet_now: Jet, plant: PlantDefinition,
                          gains: GainSet, u0_jet: Jet):
    """Delay-ignoring baseline: the nominal formula with P replaced by Y.

    The reference is taken at the current time instead of t+D and the
    distal chain's input series comes from the measured delayed signal
    (u0_jet), since the baseline has no delay knowledge to shift with.
    """
    delta = delta_jet(Y, s_jet_now, plant, gains.k, u0_jet)
    _, tau_m = forward_r(X, delta, plant, gains.c)
    return (tau_m + delta.d(plant.m)) / plant.b


# -- gain selection -----------------------------------------------------------


def _check_margin(name: str, idx: int, value) -> None:
    v = np.atleast_1d(np.asarray(value, dtype=float))
    if np.any(~np.isfinite(v)) or np.any(v <= _DENOM_TOL * (1.0 + np.abs(v))):
        raise GainSelectionError(
            f"initial margin {name}_{idx} is not strictly positive; "
            "the positivity assumptions fail for this data"
        )


def _k_floors(P0, s_jet_D: Jet, plant: PlantDefinition, k_fixed):
    """Required lower bounds for k_1..k_{n-1}, maximized over candidates.

    k_fixed supplies already-chosen lower gains; entry i is ignored (a
    placeholder zero is substituted to expose the floor).
    """
    n = plant.n
    y_jets = expand_y_chain(P0, plant, n - 1)
    floors = []
    for i in range(1, n):
        k_probe = list(k_fixed[: i - 1]) + [0.0] * (n - i + 1)
        z_jets, _ = z_transform(y_jets, s_jet_D, k_probe, plant)
        _check_margin("z", i, z_jets[i - 1].value)
        ratio = -np.asarray(z_jets[i].value) / np.asarray(z_jets[i - 1].value)
        floors.append(float(np.max(ratio)))
    return floors


def _c_floors(P0, X0, s_jet_D: Jet, plant: PlantDefinition, k, c_fixed):
    """Required lower bounds for c_1..c_{m-1}, maximized over candidates."""
    m = plant.m
    delta = delta_jet(P0, s_jet_D, plant, k, actuator_input_jet(X0, plant))
    x_jets = expand_x_chain(X0, plant, m - 1)
    floors = []
    for j in range(1, m):
        c_probe = list(c_fixed[: j - 1]) + [0.0] * (m - j + 1)
        r_jets, _ = r_transform(x_jets, delta, c_probe, plant)
        _check_margin("r", j, r_jets[j - 1].value)
        ratio = -np.asarray(r_jets[j].value) / np.asarray(r_jets[j - 1].value)
        floors.append(float(np.max(ratio)))
    return floors


def _final_margins(P0, X0, s_jet_D: Jet, plant: PlantDefinition, gains: GainSet):
    """z_i at the delay horizon and r_j at time zero under chosen gains."""
    z = forward_z(P0, s_jet_D, plant, gains.k)
    delta = delta_jet(P0, s_jet_D, plant, gains.k, actuator_input_jet(X0, plant))
    r, _ = forward_r(X0, delta, plant, gains.c)
    return z, r


def select_gains(P0, X0, s_jet_D: Jet, plant: PlantDefinition,
                 slack: float = 0.1, c_bar: float = 2.0) -> GainSet:
    """Pick gains meeting the nonovershooting floors with the given slack.

    P0 holds the initial predictor value(s) (batched over the candidate
    grid in the adaptive case) and s_jet_D the reference jet at the
    matching delay horizon(s).  Intermediate gains must clear both 2 and
    the data-dependent floor; the top gains only need to exceed 1.
    """
    if slack <= 0:
        raise ValueError("slack must be positive")
    n, m = plant.n, plant.m
    k = []
    for i in range(1, n):
        floor = _k_floors(P0, s_jet_D, plant, k)[i - 1]
        k.append(max(2.0, floor) + slack)
    k.append(1.0 + slack)
    c = []
    for j in range(1, m):
        floor = _c_floors(P0, X0, s_jet_D, plant, k, c)[j - 1]
        c.append(max(2.0, floor) + slack)
    c.append(1.0 + slack)
    gains = GainSet(tuple(k), tuple(c), c_bar=c_bar)
    z, r = _final_margins(P0, X0, s_jet_D, plant, gains)
    _check_margin("z", n, z[..., -1])
    _check_margin("r", m, r[..., -1])
    return gains


@dataclass(frozen=True)
class GainCheck:
    ok: bool
    k_floors: tuple
    c_floors: tuple
    messages: tuple


def validate_gains(gains: GainSet, P0, X0, s_jet_D: Jet,
                   plant: PlantDefinition) -> GainCheck:
    """Check a user-supplied gain set against the data-dependent floors."""
    n, m = plant.n, plant.m
    msgs = []
    k_floors = []
    for i in range(1, n):
        floor = max(2.0, _k_floors(P0, s_jet_D, plant, gains.k)[i - 1])
        k_floors.append(floor)
        if not gains.k[i - 1] > floor:
            msgs.append(f"k_{i} = {gains.k[i - 1]} does not exceed its floor {floor}")
    if not gains.k[n - 1] > 1.0:
        msgs.append(f"k_{n} = {gains.k[n - 1]} must exceed 1")
    c_floors = []
    for j in range(1, m):
        floor = max(2.0, _c_floors(P0, X0, s_jet_D, plant, gains.k, gains.c)[j - 1])
        c_floors.append(floor)
        if not gains.c[j - 1] > floor:
            msgs.append(f"c_{j} = {gains.c[j - 1]} does not exceed its floor {floor}")
    if not gains.c[m - 1] > 1.0:
        msgs.append(f"c_{m} = {gains.c[m - 1]} must exceed 1")
    try:
        z, r = _final_margins(P0, X0, s_jet_D, plant, gains)
        _check_margin("z", n, z[..., -1])
        _check_margin("r", m, r[..., -1])
    except GainSelectionError as e:
        msgs.append(str(e))
    return GainCheck(not msgs, tuple(k_floors), tuple(c_floors), tuple(msgs))
