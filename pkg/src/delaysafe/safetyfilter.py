"""Safe command selection over the whole delay-candidate set.

Until the identifier settles, the true delay could be any candidate in
the admissible grid.  For each candidate D the backstepping law yields
U*(t, D), the command at which the actuator margin r_m(t; D) would decay
exactly at the relaxed rate c_bar.  In the b-weighted input units
v = b*U the safe side is v >= v*(D) for every candidate, so the filter
applies

    v_a = max(v_desired, max_D v*(t, D))

which in raw units is min(U_d, min U*) when b < 0 and max(U_d, max U*)
when b > 0: the least deviation from the desired command that is safe
against every delay the data has not yet excluded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["FilterDecision", "safe_command"]


@dataclass(frozen=True)
class FilterDecision:
    U: float          # applied command
    U_desired: float  # what the adaptive law wanted
    U_bound: float    # extremal U* over the candidate set
    limited: bool     # True when the bound overrode the desired command


def safe_command(U_desired: float, u_star_grid, b: float) -> FilterDecision:
    """Clip the desired command against the candidate-wise safety bounds."""
    grid = np.asarray(u_star_grid, dtype=float)
    if not np.all(np.isfinite(grid)) or not np.isfinite(U_desired):
        raise FloatingPointError("safety bound evaluation produced non-finite values")
    v_d = b * float(U_desired)
    v_bound = float(np.max(b * grid))
    if v_bound > v_d:
        return FilterDecision(U=v_bound / b, U_desired=float(U_desired),
                              U_bound=v_bound / b, limited=True)
    return FilterDecision(U=float(U_desired), U_desired=float(U_desired),
                          U_bound=v_bound / b, limited=False)
