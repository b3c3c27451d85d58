"""Small numeric helpers shared across modules."""

from __future__ import annotations

from typing import Callable

import numpy as np

_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0  # golden ratio conjugate

# Products like n*b*t routinely land a hair below an exact integer in
# floating point; the integer-part convention must not be derailed by
# that (e.g. floor(10 * 0.1 * 1) must be 1, not 0).
_DROOP = 1e-9


def int_part(x):
    """Integer part max{k in Z : k <= x}, guarded against float droop.

    Values within 1e-9 below an integer are snapped up to it.  Works on
    scalars and arrays; returns int / int64 array.
    """
    a = np.asarray(x, dtype=float)
    f = np.floor(a)
    out = np.where(a - f > 1.0 - _DROOP, f + 1.0, f).astype(np.int64)
    if np.isscalar(x) or np.ndim(x) == 0:
        return int(out)
    return out


def golden_max(f: Callable, lo, hi, tol: float = 1e-10):
    """Maximize a concave function on [lo, hi] by golden-section search.

    ``lo``/``hi`` may be arrays (elementwise independent searches); ``f``
    must then accept arrays of the same shape.  Returns (argmax, max).
    """
    a = np.asarray(lo, dtype=float).copy()
    b = np.asarray(hi, dtype=float).copy()
    span = float(np.max(b - a))
    n_iter = int(np.ceil(np.log(tol / max(span, tol)) / np.log(_INVPHI))) + 1
    for _ in range(max(n_iter, 1)):
        c = b - _INVPHI * (b - a)
        d = a + _INVPHI * (b - a)
        keep_left = f(c) > f(d)
        b = np.where(keep_left, d, b)
        a = np.where(keep_left, a, c)
    x = (a + b) / 2.0
    return x, f(x)


def golden_min_scalar(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-12) -> tuple[float, float]:
    """Minimize a unimodal scalar function on [lo, hi]; returns (x, f(x))."""
    a, b = float(lo), float(hi)
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    x = (a + b) / 2.0
    return x, f(x)


class NeumaierSum:
    """Compensated (Neumaier) summation over scalars or fixed-shape arrays.

    The running total is ``partial + comp``.  Merging two sums preserves
    the compensation, so merge order changes results only within
    floating-point summation tolerance; on integer-valued inputs whose
    running sums stay below 2**53 everything is exact and order-free.
    """

    __slots__ = ("partial", "comp")

    def __init__(self, shape=()):
        self.partial = np.zeros(shape)
        self.comp = np.zeros(shape)

    def add(self, x) -> None:
        x = np.asarray(x, dtype=float)
        t = self.partial + x
        self.comp += np.where(
            np.abs(self.partial) >= np.abs(x),
            (self.partial - t) + x,
            (x - t) + self.partial,
        )
        self.partial = t

    def merge(self, other: "NeumaierSum") -> None:
        self.add(other.partial)
        self.comp += other.comp

    def total(self) -> np.ndarray:
        return self.partial + self.comp

    def copy(self) -> "NeumaierSum":
        out = NeumaierSum(self.partial.shape)
        out.partial = self.partial.copy()
        out.comp = self.comp.copy()
        return out
