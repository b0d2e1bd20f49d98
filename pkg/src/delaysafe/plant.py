"""Strict-feedback plant model split around an unknown input delay.

The controlled system is a cascade

    dy_i/dt = y_{i+1} + psi_i(y_1..y_i),   i = 1..n-1
    dy_n/dt = psi_n(y_1..y_n) + b*x_1(t - D)

    dx_j/dt = x_{j+1} + phi_j(x_1..x_j),   j = 1..m-1
    dx_m/dt = phi_m(x_1..x_m) + U(t)

where the distal y-chain only sees the first actuator state through a
transport (pure delay) channel of unknown length D.  Nonlinearities are
plain Python callables built from arithmetic and sin/cos/exp, so they can
be evaluated on floats, numpy arrays and :class:`~delaysafe.jets.Jet`
objects alike.

Each psi_i must vanish at the origin and be n+m-i times differentiable;
each phi_j must be m-j times differentiable.  Those budgets are exactly
what the control recursions consume, and they are enforced: evaluating a
nonlinearity on jets truncates the result to the budget, so downstream
requests for deeper derivatives fail loudly instead of lying.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .jets import Jet, constant

__all__ = [
    "PlantDefinition",
    "eval_y_rhs",
    "eval_x_rhs",
    "expand_y_chain",
    "expand_x_chain",
    "nonlinearity_jet",
]


@dataclass(frozen=True)
class PlantDefinition:
    """Orders, input gain and nonlinearities of one strict-feedback plant.

    psi[i] takes i+1 positional arguments (y_1..y_{i+1}); phi likewise for
    the actuator chain.  ``b`` is the nonzero gain of the delayed channel.
    ``psi_exprs``/``phi_exprs`` optionally keep the source text the
    callables were parsed from, for scenario round-trips.
    """

    n: int
    m: int
    b: float
    psi: tuple
    phi: tuple
    psi_exprs: tuple = field(default=None, compare=False)
    phi_exprs: tuple = field(default=None, compare=False)

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ValueError("chain orders n and m must be at least 1")
        if self.b == 0.0:
            raise ValueError("input gain b must be nonzero")
        if len(self.psi) != self.n:
            raise ValueError(f"expected {self.n} psi nonlinearities, got {len(self.psi)}")
        if len(self.phi) != self.m:
            raise ValueError(f"expected {self.m} phi nonlinearities, got {len(self.phi)}")

    def psi_budget(self, i: int) -> int:
        """Smoothness budget of psi_i (1-based): n + m - i derivatives."""
        return self.n + self.m - i

    def phi_budget(self, j: int) -> int:
        """Smoothness budget of phi_j (1-based): m - j derivatives."""
        return self.m - j

    def psi_jet(self, i: int, args: Sequence) -> Jet:
        """Evaluate psi_i on jets, truncated to its smoothness budget."""
        return _eval_budgeted(self.psi[i - 1], args, self.psi_budget(i))

    def phi_jet(self, j: int, args: Sequence) -> Jet:
        return _eval_budgeted(self.phi[j - 1], args, self.phi_budget(j))


def _eval_budgeted(func: Callable, args: Sequence, budget: int) -> Jet:
    capped = [a.truncate(min(a.order, budget)) if isinstance(a, Jet) else a for a in args]
    out = func(*capped)
    if not isinstance(out, Jet):
        # constant or state-independent nonlinearity
        order = min(
            [budget] + [a.order for a in capped if isinstance(a, Jet)]
        )
        out = constant(out, order)
    return out


def eval_y_rhs(Y, u0, plant: PlantDefinition):
    """Right-hand side of the distal chain driven by the delayed input u0.

    Y may be a length-n sequence or an (..., n) array; the result matches.
    """
    Y = np.asarray(Y, dtype=float)
    ys = [Y[..., i] for i in range(plant.n)]
    out = []
    for i in range(plant.n - 1):
        out.append(ys[i + 1] + plant.psi[i](*ys[: i + 1]))
    out.append(plant.psi[plant.n - 1](*ys) + u0)
    return np.stack(np.broadcast_arrays(*out), axis=-1)


def eval_x_rhs(X, u_cmd, plant: PlantDefinition):
    """Right-hand side of the actuator chain driven by the control U."""
    X = np.asarray(X, dtype=float)
    xs = [X[..., j] for j in range(plant.m)]
    out = []
    for j in range(plant.m - 1):
        out.append(xs[j + 1] + plant.phi[j](*xs[: j + 1]))
    out.append(plant.phi[plant.m - 1](*xs) + u_cmd)
    return np.stack(np.broadcast_arrays(*out), axis=-1)


def _expand_chain(values, nonlin, input_jet, order: int):
    """Taylor-expand a strict-feedback chain along its own flow.

    values: length-L state (floats or arrays); nonlin(i, jets) evaluates the
    i-th (1-based) nonlinearity on jet arguments with budget enforcement;
    input_jet drives the last equation (None leaves the last state at order
    0, which is all the recursions below ever need of it).

    Returns a list of jets.  State i (0-based) reaches the largest order its
    dependencies support, capped at ``order``.
    """
    L = len(values)
    jets = [Jet([v]) for v in values]
    for target in range(1, order + 1):
        grew = False
        for i in range(L):
            if jets[i].order >= target:
                continue
            f = nonlin(i + 1, jets[: i + 1])
            if i < L - 1:
                rhs = jets[i + 1] + f
            elif input_jet is not None:
                rhs = f + input_jet
            else:
                continue
            if rhs.order >= target - 1:
                c = list(jets[i].c)
                c.append(rhs.c[target - 1] / target)
                jets[i] = Jet(c)
                grew = True
        if not grew:
            break
    return jets


def _components(state, count: int):
    """Split a state into component scalars/arrays along the last axis."""
    arr = np.asarray(state, dtype=float)
    if arr.ndim == 1:
        return [float(arr[i]) for i in range(count)]
    return [arr[..., i] for i in range(count)]


def expand_y_chain(Y, plant: PlantDefinition, order: int, input_jet: Jet | None = None):
    """Jets of y_1..y_n along the distal flow.

    Without an input jet, y_n stays at order 0 and lower states reach the
    order the cascade supports; with an input jet the whole chain deepens
    accordingly.  Y may carry a leading batch axis.
    """
    return _expand_chain(_components(Y, plant.n), plant.psi_jet, input_jet, order)


def expand_x_chain(X, plant: PlantDefinition, order: int, input_jet: Jet | None = None):
    """Jets of x_1..x_m along the actuator flow (input = control channel)."""
    return _expand_chain(_components(X, plant.m), plant.phi_jet, input_jet, order)


def nonlinearity_jet(plant: PlantDefinition, which: str, index: int, point, order: int):
    """Value and coordinate partial derivatives of one nonlinearity.

    which: "psi" or "phi"; index is 1-based; point holds the arguments
    (y_1..y_i or x_1..x_j).  Returns (value, [grad, pure_2nd, ...]) where
    entry k-1 of the list holds the pure k-th partials d^k f / d a_j^k for
    every argument j.  Orders beyond the smoothness budget are refused.
    """
    if which == "psi":
        budget, func = plant.psi_budget(index), plant.psi[index - 1]
    elif which == "phi":
        budget, func = plant.phi_budget(index), plant.phi[index - 1]
    else:
        raise ValueError("which must be 'psi' or 'phi'")
    if order > budget:
        from .jets import JetOrderError

        raise JetOrderError(
            f"{which}_{index} supports derivatives up to order {budget}, got {order}"
        )
    point = [float(p) for p in point]
    value = func(*point)
    if isinstance(value, Jet):  # constant-returning closures never hit this
        value = value.value
    partials = []
    for k in range(1, order + 1):
        row = []
        for j in range(len(point)):
            args = [
                Jet([p] + [1.0 if jj == j else 0.0] + [0.0] * (k - 1))
                for jj, p in enumerate(point)
            ]
            out = func(*args)
            row.append(out.d(k) if isinstance(out, Jet) else 0.0)
        partials.append(np.array(row))
    return float(value), partials
