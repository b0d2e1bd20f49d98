"""Truncated Taylor series ("jet") arithmetic in a single variable.

A :class:`Jet` holds the normalized Taylor coefficients ``a_k = f^(k)(t0)/k!``
of a smooth signal about some instant ``t0``.  Sums, products, quotients,
integer powers and the elementary functions sin/cos/exp propagate the
coefficients exactly, so evaluating a closed-form expression on
``variable(t0, order)`` yields the exact derivatives of that expression at
``t0`` up to ``order``.

Coefficients may be floats or numpy arrays of a common broadcastable shape,
which is how whole candidate-delay sweeps are differentiated in one pass.

The coefficient count is also a trust horizon: combining two jets truncates
to the shorter one, and asking for a derivative beyond the stored order
raises :class:`JetOrderError` instead of silently returning garbage.  The
backstepping recursions rely on this to enforce their smoothness budgets.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "Jet",
    "JetOrderError",
    "variable",
    "constant",
    "sin",
    "cos",
    "exp",
]


class JetOrderError(ValueError):
    """A derivative beyond the stored (or budgeted) order was requested."""


def _is_number(x) -> bool:
    return isinstance(x, (int, float, np.floating, np.integer, np.ndarray))


class Jet:
    """Taylor polynomial with normalized coefficients ``a_k = f^(k)/k!``."""

    __slots__ = ("c",)

    def __init__(self, coeffs):
        c = list(coeffs)
        if not c:
            raise ValueError("a Jet needs at least the order-0 coefficient")
        self.c = c

    # -- inspection ---------------------------------------------------------

    @property
    def order(self) -> int:
        """Highest trusted derivative order."""
        return len(self.c) - 1

    @property
    def value(self):
        """The order-0 coefficient, i.e. the value of the signal."""
        return self.c[0]

    def d(self, k: int):
        """k-th derivative value, ``f^(k)(t0)``."""
        if k > self.order:
            raise JetOrderError(
                f"derivative of order {k} requested from a jet of order {self.order}"
            )
        return self.c[k] * math.factorial(k)

    def dot(self) -> "Jet":
        """Series of the time derivative; trusted order drops by one."""
        if self.order < 1:
            raise JetOrderError("cannot differentiate an order-0 jet")
        return Jet([(k + 1) * self.c[k + 1] for k in range(self.order)])

    def dn(self, k: int) -> "Jet":
        """Series of the k-th time derivative."""
        j = self
        for _ in range(k):
            j = j.dot()
        return j

    def truncate(self, order: int) -> "Jet":
        if order >= self.order:
            return self
        if order < 0:
            raise JetOrderError("cannot truncate below order 0")
        return Jet(self.c[: order + 1])

    # -- coercion -----------------------------------------------------------

    def _pair(self, other):
        """Return aligned coefficient lists (min order) for self and other."""
        if isinstance(other, Jet):
            k = min(self.order, other.order)
            return self.c[: k + 1], other.c[: k + 1]
        if _is_number(other):
            oc = [other] + [0.0] * self.order
            return self.c, oc
        return None, None

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        a, b = self._pair(other)
        if a is None:
            return NotImplemented
        return Jet([x + y for x, y in zip(a, b)])

    __radd__ = __add__

    def __neg__(self):
        return Jet([-x for x in self.c])

    def __sub__(self, other):
        a, b = self._pair(other)
        if a is None:
            return NotImplemented
        return Jet([x - y for x, y in zip(a, b)])

    def __rsub__(self, other):
        a, b = self._pair(other)
        if a is None:
            return NotImplemented
        return Jet([y - x for x, y in zip(a, b)])

    def __mul__(self, other):
        if isinstance(other, Jet):
            k = min(self.order, other.order)
            a, b = self.c, other.c
            return Jet(
                [
                    sum(a[i] * b[j - i] for i in range(j + 1))
                    for j in range(k + 1)
                ]
            )
        if _is_number(other):
            return Jet([x * other for x in self.c])
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            k = min(self.order, other.order)
            a, b = self.c, other.c
            q = []
            for j in range(k + 1):
                acc = a[j]
                for i in range(j):
                    acc = acc - q[i] * b[j - i]
                q.append(acc / b[0])
            return Jet(q)
        if _is_number(other):
            return Jet([x / other for x in self.c])
        return NotImplemented

    def __rtruediv__(self, other):
        if _is_number(other):
            return Jet([other] + [0.0] * self.order) / self
        return NotImplemented

    def __pow__(self, p):
        if not isinstance(p, (int, np.integer)):
            return NotImplemented
        if p < 0:
            return 1.0 / self.__pow__(-p)
        out = Jet([1.0] + [0.0] * self.order)
        base = self
        p = int(p)
        while p:
            if p & 1:
                out = out * base
            base = base * base
            p >>= 1
        return out

    def __repr__(self):
        return f"Jet({self.c!r})"


def variable(t0, order: int) -> Jet:
    """The identity signal ``t`` expanded about ``t0``."""
    if order < 0:
        raise ValueError("order must be >= 0")
    c = [t0] + [0.0] * order
    if order >= 1:
        c[1] = 1.0
    return Jet(c)


def constant(value, order: int) -> Jet:
    return Jet([value] + [0.0] * order)


def exp(x):
    if not isinstance(x, Jet):
        return np.exp(x)
    a = x.c
    e = [np.exp(a[0])]
    for k in range(1, x.order + 1):
        acc = 0.0
        for j in range(1, k + 1):
            acc = acc + j * a[j] * e[k - j]
        e.append(acc / k)
    return Jet(e)


def _sincos(x: Jet):
    a = x.c
    s = [np.sin(a[0])]
    c = [np.cos(a[0])]
    for k in range(1, x.order + 1):
        sa = 0.0
        ca = 0.0
        for j in range(1, k + 1):
            sa = sa + j * a[j] * c[k - j]
            ca = ca + j * a[j] * s[k - j]
        s.append(sa / k)
        c.append(-ca / k)
    return Jet(s), Jet(c)


def sin(x):
    if not isinstance(x, Jet):
        return np.sin(x)
    return _sincos(x)[0]


def cos(x):
    if not isinstance(x, Jet):
        return np.cos(x)
    return _sincos(x)[1]
