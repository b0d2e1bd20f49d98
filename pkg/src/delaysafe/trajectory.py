"""Reference trajectories exposed as time jets.

The control recursions never want just s(t); they want the local Taylor
data of the reference up to order n+m (value through the (n+m)-th
derivative).  A trajectory object therefore hands out jets: ``jet(t, k)``
returns the expansion of s about t trusted to order k.  Time may be a
float or an array of query instants; the jet coefficients then carry the
same shape, which is how candidate-delay sweeps evaluate the reference at
hundreds of shifted times in one call.
"""

from __future__ import annotations

import numpy as np

from .jets import Jet, JetOrderError, constant, variable

__all__ = ["AnalyticTrajectory", "ZeroTrajectory"]


class AnalyticTrajectory:
    """Trajectory backed by a closed-form callable of time.

    ``order_budget`` is the deepest derivative the consumer is entitled to
    (n+m for a plant of chain orders n, m); deeper requests raise
    :class:`JetOrderError` rather than returning untrusted numbers.
    """

    def __init__(self, fn, order_budget: int, source: str | None = None):
        self._fn = fn
        self.order_budget = int(order_budget)
        self.source = source if source is not None else getattr(fn, "source", None)

    def jet(self, t, order: int) -> Jet:
        if order > self.order_budget:
            raise JetOrderError(
                f"trajectory supports derivatives up to order {self.order_budget}, got {order}"
            )
        out = self._fn(variable(t, order))
        if not isinstance(out, Jet):
            base = out + (np.zeros(np.shape(t)) if np.ndim(t) else 0.0)
            out = constant(base, order)
        return out

    def eval(self, t, k: int):
        """k-th derivative value s^(k)(t)."""
        return self.jet(t, k).d(k)


class ZeroTrajectory(AnalyticTrajectory):
    """The regulation reference s identically zero."""

    def __init__(self, order_budget: int):
        super().__init__(lambda t: 0.0 * t, order_budget, source="0")
