"""Random-walk jump kernels and their large-deviation machinery.

A walker jumps at rate 1; each jump displaces it by a step drawn from a
finitely supported probability kernel on the integers.  The displacement
over a time interval is therefore compound Poisson: a Poisson number of
i.i.d. steps.  Finite support makes every exponential moment finite, so
the cumulant generating function is exact and the Legendre-transform
rate function controls Chernoff tail bounds used to size simulation
windows.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .numutil import golden_max
from .rng import RngStream

_PROB_TOL = 1e-12
_THETA_RANGE = 50.0  # maximization interval for the Legendre transform
_TAIL_FLOOR = 1e-300  # stop summing truncation-tail terms below this


@dataclass(frozen=True)
class JumpKernel:
    """Finitely supported step distribution of a continuous-time walk.

    ``support`` is a tuple of (step, probability) pairs with distinct
    integer steps sorted increasingly.  Probabilities must be in (0, 1]
    and sum to 1 within 1e-12.
    """

    support: tuple[tuple[int, float], ...]

    def __post_init__(self):
        if not self.support:
            raise ValueError("kernel support is empty")
        steps = [s for s, _ in self.support]
        probs = [p for _, p in self.support]
        if any(int(s) != s for s in steps):
            raise ValueError("kernel steps must be integers")
        if sorted(set(steps)) != list(steps):
            raise ValueError("kernel steps must be distinct and sorted increasingly")
        if any(not (0.0 < p <= 1.0) for p in probs):
            raise ValueError("kernel probabilities must lie in (0, 1]")
        if abs(sum(probs) - 1.0) > _PROB_TOL:
            raise ValueError(f"kernel probabilities sum to {sum(probs)!r}, not 1")
        if all(s == 0 for s in steps):
            raise ValueError("kernel needs at least one nonzero step")

    @classmethod
    def from_pairs(cls, pairs: Iterable[Sequence]) -> "JumpKernel":
        """Build from (step, prob) pairs in any order, e.g. parsed config."""
        items = sorted((int(s), float(p)) for s, p in pairs)
        return cls(tuple(items))

    @cached_property
    def steps(self) -> np.ndarray:
        return np.array([s for s, _ in self.support], dtype=np.int64)

    @cached_property
    def probs(self) -> np.ndarray:
        return np.array([p for _, p in self.support], dtype=float)

    @cached_property
    def drift(self) -> float:
        """Mean step, the drift b of the walk (per unit time)."""
        return float(np.sum(self.steps * self.probs))

    @cached_property
    def second_moment(self) -> float:
        """Second moment of the step distribution (variance rate of the walk)."""
        return float(np.sum(self.steps.astype(float) ** 2 * self.probs))

    def log_mgf(self, theta):
        """Cumulant generating function of the time-1 displacement.

        For a compound Poisson displacement this is
        ``sum_x p(x) (exp(theta x) - 1)``, finite for all theta.
        Overflow at extreme theta probes saturates to +inf, which the
        Legendre maximization treats as an impossible direction.
        """
        th = np.asarray(theta, dtype=float)
        with np.errstate(over="ignore"):
            vals = np.exp(th[..., None] * self.steps) - 1.0
            out = vals @ self.probs
        return out if out.ndim else float(out)

    @property
    def one_sided_positive(self) -> bool:
        return bool(np.all(self.steps >= 0))

    @property
    def one_sided_negative(self) -> bool:
        return bool(np.all(self.steps <= 0))


def moments(kernel: JumpKernel) -> tuple[float, float]:
    """Exact (drift, second moment) of the step distribution."""
    return kernel.drift, kernel.second_moment


def sample_displacements(
    kernel: JumpKernel, duration: float, rng: RngStream, size: int
) -> np.ndarray:
    """Vectorized exact draws of the displacement over ``duration``.

    Draws jump counts K ~ Poisson(duration) and splits each count over
    the support by conditional binomials; for a two-point support this
    is exactly one binomial per walker.
    """
    if duration < 0:
        raise ValueError("duration must be >= 0")
    if duration == 0:
        return np.zeros(size, dtype=np.int64)
    remaining = rng.poisson(duration, size)
    steps = kernel.steps
    probs = kernel.probs
    disp = np.zeros(size, dtype=np.int64)
    tail = 1.0
    for j in range(len(steps) - 1):
        frac = min(max(probs[j] / tail, 0.0), 1.0)
        taken = rng.binomial(remaining, frac)
        disp += steps[j] * taken
        remaining -= taken
        tail -= probs[j]
    disp += steps[-1] * remaining
    return disp


def sample_displacement(kernel: JumpKernel, duration: float, rng: RngStream) -> int:
    """Exact draw of the net displacement of one walker over ``duration``."""
    return int(sample_displacements(kernel, duration, rng, 1)[0])


class RateFunction:
    """Legendre transform of the walk's cumulant generating function.

    ``I(z) = sup_theta (theta z - log_mgf(theta))`` computed by
    golden-section search on the concave objective.  ``I`` is convex,
    nonnegative, zero exactly at the drift, and +inf outside the
    reachable range of one-sided kernels.
    """

    def __init__(self, kernel: JumpKernel, theta_range: float = _THETA_RANGE, tol: float = 1e-10):
        self.kernel = kernel
        self.theta_range = float(theta_range)
        self.tol = float(tol)

    def __call__(self, z):
        zs = np.atleast_1d(np.asarray(z, dtype=float))
        out = self._evaluate(zs)
        if np.ndim(z) == 0:
            return float(out[0])
        return out

    def _evaluate(self, zs: np.ndarray) -> np.ndarray:
        kern = self.kernel
        nonzero = kern.steps[kern.steps != 0]
        infeasible = np.zeros(zs.shape, dtype=bool)
        if np.all(nonzero > 0):
            infeasible = zs < 0
        elif np.all(nonzero < 0):
            infeasible = zs > 0

        def objective(theta):
            return theta * zs - kern.log_mgf(theta)

        lo = np.full(zs.shape, -self.theta_range)
        hi = np.full(zs.shape, self.theta_range)
        _, best = golden_max(objective, lo, hi, tol=self.tol)
        out = np.maximum(np.asarray(best, dtype=float), 0.0)
        out[infeasible] = np.inf
        return out


def rate_function(kernel: JumpKernel, z: float) -> float:
    """Large-deviation rate of the time-averaged displacement at level z."""
    return RateFunction(kernel)(z)


def truncation_bias_bound(
    kernel: JumpKernel, n: int, horizon_t: float, window_w: int, block: int = 4096
) -> float:
    """Chernoff bound on leakage from outside a simulation window.

    Bounds the expected number of walkers starting more than ``window_w``
    sites from a base point that reach the moving level (base + drift *
    elapsed) by time ``n * horizon_t``:

        sum_{m > w} exp(-nT I(b - m/(nT))) + exp(-nT I(b + m/(nT)))

    The sum is evaluated with the numeric rate function, in blocks,
    stopping once terms fall below 1e-300.
    """
    if window_w < 1:
        raise ValueError("window_w must be >= 1")
    nt = float(n) * float(horizon_t)
    if nt <= 0:
        return 0.0
    rate = RateFunction(kernel)
    b = kernel.drift
    total = 0.0
    m0 = window_w + 1
    while True:
        m = np.arange(m0, m0 + block, dtype=float)
        u = m / nt
        exponents_lo = rate(b - u)
        exponents_hi = rate(b + u)
        with np.errstate(over="ignore"):
            terms = np.exp(-nt * exponents_lo) + np.exp(-nt * exponents_hi)
        total += float(np.sum(terms))
        if float(np.max(terms)) < _TAIL_FLOOR:
            break
        m0 += block
    return total
