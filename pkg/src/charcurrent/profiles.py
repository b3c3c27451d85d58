"""Macroscopic profiles and microscopic initial occupation generators.

A profile is a triple (u0, rho0, v0): a nondecreasing C^1 macroscopic
height u0 with density rho0 = u0', and a nonnegative variance profile
v0.  Profiles come as built-in parametric forms so that rho0 is the
exact derivative of u0 by construction.

Initial conditions place eta(m) >= 0 particles on each lattice site m of
a window; occupation laws are parametric integer families that hit a
requested (mean, variance) pair exactly per site, covering all three
regimes v0 < rho0, v0 = rho0 and v0 > rho0.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.special import erf

from .numutil import int_part
from .rng import RngStream

OCCUPATION_LAWS = ("poisson", "mixture", "binomial", "deterministic")

# Tolerated relative variance error of the rounded binomial-thinned family.
_BINOMIAL_VAR_TOL = 0.01
_REALIZE_TOL = 1e-9


@dataclass(frozen=True)
class Profile:
    """Macroscopic data (u0, rho0, v0); all callables accept numpy arrays.

    ``rho_max`` is an exact upper bound of rho0, used to size scan
    ranges and windows.  ``domain_sup`` marks the least y above which
    u0 is +inf (step-type data); +inf means u0 is finite everywhere.
    """

    u0: Callable
    rho0: Callable
    v0: Callable
    rho_max: float
    domain_sup: float = np.inf
    name: str = "profile"


def _const(c: float) -> Callable:
    return lambda y: np.full_like(np.asarray(y, dtype=float), c)


def _resolve_v0(v0, rho0: Callable) -> Callable:
    """None -> match rho0; float -> constant; callable -> as given."""
    if v0 is None:
        return rho0
    if callable(v0):
        return v0
    return _const(float(v0))


def flat(name: str = "flat") -> Profile:
    """Empty system: u0 = 0, rho0 = 0, v0 = 0."""
    return Profile(_const(0.0), _const(0.0), _const(0.0), rho_max=0.0, name=name)


def linear(slope: float, v0=None) -> Profile:
    """u0(y) = slope * y with constant density rho0 = slope >= 0."""
    if slope < 0:
        raise ValueError("linear profile needs slope >= 0")
    s = float(slope)
    return Profile(
        u0=lambda y: s * np.asarray(y, dtype=float),
        rho0=_const(s),
        v0=_resolve_v0(v0, _const(s)),
        rho_max=s,
        name=f"linear({s})",
    )


def smoothstep(y_lo: float = 0.0, y_hi: float = 1.0, height: float = 1.0, v0=None) -> Profile:
    """Height ramps smoothly from 0 to ``height`` over [y_lo, y_hi].

    u0 follows the cubic 3s^2 - 2s^3 on the ramp, so rho0 is continuous
    (C^1 height) and vanishes at the ramp edges.
    """
    if y_hi <= y_lo:
        raise ValueError("smoothstep needs y_lo < y_hi")
    if height < 0:
        raise ValueError("smoothstep needs height >= 0")
    width = float(y_hi - y_lo)
    h = float(height)

    def u0(y):
        s = np.clip((np.asarray(y, dtype=float) - y_lo) / width, 0.0, 1.0)
        return h * (3.0 * s**2 - 2.0 * s**3)

    def rho0(y):
        ya = np.asarray(y, dtype=float)
        s = (ya - y_lo) / width
        inside = (s > 0.0) & (s < 1.0)
        return np.where(inside, 6.0 * h / width * np.clip(s, 0.0, 1.0) * (1.0 - np.clip(s, 0.0, 1.0)), 0.0)

    base = u0(0.0)

    def u0_normalized(y):
        return u0(y) - base

    return Profile(
        u0=u0_normalized,
        rho0=rho0,
        v0=_resolve_v0(v0, rho0),
        rho_max=1.5 * h / width,
        name=f"smoothstep[{y_lo},{y_hi}]x{h}",
    )


def gaussian_bump(center: float = 0.0, width: float = 1.0, amplitude: float = 1.0, baseline: float = 0.0, v0=None) -> Profile:
    """Density is a Gaussian bump over a flat baseline; u0 is its exact integral."""
    if width <= 0 or amplitude < 0 or baseline < 0:
        raise ValueError("gaussian_bump needs width > 0 and nonnegative amplitude/baseline")
    c, w, a, b0 = float(center), float(width), float(amplitude), float(baseline)
    scale = a * w * np.sqrt(np.pi / 2.0)

    def rho0(y):
        ya = np.asarray(y, dtype=float)
        return b0 + a * np.exp(-((ya - c) ** 2) / (2.0 * w**2))

    def u0(y):
        ya = np.asarray(y, dtype=float)
        return b0 * ya + scale * (erf((ya - c) / (w * np.sqrt(2.0))) - erf((0.0 - c) / (w * np.sqrt(2.0))))

    return Profile(
        u0=u0,
        rho0=rho0,
        v0=_resolve_v0(v0, rho0),
        rho_max=b0 + a,
        name=f"bump(c={c},w={w},a={a},b={b0})",
    )


def packed_step() -> Profile:
    """Step data: u0 = 0 on y <= 0 and +inf beyond (all mass packed at 0+)."""

    def u0(y):
        ya = np.asarray(y, dtype=float)
        return np.where(ya <= 0.0, 0.0, np.inf)

    return Profile(u0=u0, rho0=_const(0.0), v0=_const(0.0), rho_max=0.0, domain_sup=0.0, name="packed-step")


@dataclass(frozen=True)
class InitialCondition:
    """Occupation counts on a contiguous site window [lo, lo + len - 1].

    Sites outside the window hold no particles.  Height partial sums are
    normalized to sigma0(0) = 0.
    """

    lo: int
    counts: np.ndarray  # int64, counts[i] = eta0(lo + i)

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 1 or counts.size == 0:
            raise ValueError("counts must be a nonempty 1-d integer array")
        if np.any(counts < 0):
            raise ValueError("occupation counts must be nonnegative")
        object.__setattr__(self, "counts", counts)

    @property
    def hi(self) -> int:
        return self.lo + len(self.counts) - 1

    @cached_property
    def _prefix(self) -> np.ndarray:
        # _prefix[i] = sum of counts[0..i-1]; length len(counts)+1
        return np.concatenate(([0], np.cumsum(self.counts)))

    def occupation(self, x: int) -> int:
        if not self.lo <= x <= self.hi:
            raise IndexError(f"site {x} outside window [{self.lo}, {self.hi}]")
        return int(self.counts[x - self.lo])

    def occupations(self) -> dict[int, int]:
        return {self.lo + i: int(c) for i, c in enumerate(self.counts) if c}

    def total(self) -> int:
        return int(self._prefix[-1])

    def _cum_through(self, x: int) -> int:
        """Sum of counts on window sites <= x, for any integer x."""
        idx = min(max(x - self.lo + 1, 0), len(self.counts))
        return int(self._prefix[idx])

    def sigma0_clamped(self, x: int) -> int:
        """sigma0 treating off-window sites as empty (no range check)."""
        return self._cum_through(x) - self._cum_through(0)

    def sigma0(self, x: int) -> int:
        """Height partial sum at site x, normalized to sigma0(0) = 0."""
        if not self.lo <= x <= self.hi:
            raise IndexError(f"site {x} outside window [{self.lo}, {self.hi}]")
        return self.sigma0_clamped(x)

    def particle_starts(self) -> np.ndarray:
        """One entry per particle: its starting site."""
        sites = np.arange(self.lo, self.hi + 1, dtype=np.int64)
        return np.repeat(sites, self.counts)

    def to_csv(self, path) -> None:
        sites = np.arange(self.lo, self.hi + 1, dtype=np.int64)
        with open(path, "w") as fh:
            fh.write("site,count\n")
            for s, c in zip(sites, self.counts):
                fh.write(f"{s},{c}\n")


def sigma0(ic: InitialCondition, x: int) -> int:
    """Height partial sum of an initial condition at site x."""
    return ic.sigma0(x)


def draw_family(law: str, means: np.ndarray, variances: np.ndarray, rng: RngStream) -> np.ndarray:
    """Independent nonnegative-integer draws with exact per-entry moments.

    Families: 'poisson' (var = mean), 'mixture' of two Poissons
    (var >= mean, var <= mean + mean^2), 'binomial' thinning
    (var < mean, rounded-N variance error <= 1%), 'deterministic'
    (var = 0, integer mean).  Raises on unrealizable combinations.
    """
    means = np.asarray(means, dtype=float)
    variances = np.asarray(variances, dtype=float)
    if np.any(means < 0) or np.any(variances < 0):
        raise ValueError("means and variances must be nonnegative")
    if law == "poisson":
        bad = np.abs(variances - means) > _REALIZE_TOL * np.maximum(means, 1.0)
        if np.any(bad):
            raise ValueError("poisson law requires v0 = rho0 at every site")
        return rng.poisson(means, means.shape).astype(np.int64)
    if law == "mixture":
        excess = variances - means
        if np.any(excess < -_REALIZE_TOL):
            raise ValueError("mixture law requires v0 >= rho0")
        d = np.sqrt(np.maximum(excess, 0.0))
        lam_hi = means + d
        lam_lo = means - d
        if np.any(lam_lo < -_REALIZE_TOL):
            raise ValueError("mixture law requires v0 <= rho0 + rho0^2")
        lam_lo = np.maximum(lam_lo, 0.0)
        pick_hi = rng.random(means.shape) < 0.5
        return rng.poisson(np.where(pick_hi, lam_hi, lam_lo)).astype(np.int64)
    if law == "binomial":
        out = np.zeros(means.shape, dtype=np.int64)
        pos = means > 0
        if np.any(variances[~pos] > _REALIZE_TOL):
            raise ValueError("sites with rho0 = 0 must have v0 = 0")
        if np.any(variances[pos] >= means[pos]):
            raise ValueError("binomial law requires v0 < rho0 where rho0 > 0")
        if np.any(pos):
            mu = means[pos]
            v = variances[pos]
            n_ideal = mu**2 / (mu - v)
            n_trials = np.ceil(n_ideal - _REALIZE_TOL).astype(np.int64)
            q = mu / n_trials
            achieved = mu * (1.0 - q)
            err = np.abs(achieved - v) / np.maximum(v, 1e-12)
            if np.any(err > _BINOMIAL_VAR_TOL):
                worst = float(np.max(err))
                raise ValueError(
                    f"binomial law cannot match variance within 1% (worst error {worst:.3%})"
                )
            out[pos] = rng.binomial(n_trials, q)
        return out
    if law == "deterministic":
        if np.any(variances > _REALIZE_TOL):
            raise ValueError("deterministic law requires v0 = 0")
        rounded = np.rint(means)
        if np.any(np.abs(means - rounded) > _REALIZE_TOL):
            raise ValueError("deterministic law requires integer rho0")
        return rounded.astype(np.int64)
    raise ValueError(f"unknown occupation law {law!r}; choose from {OCCUPATION_LAWS}")


def gen_random_ic(
    profile: Profile,
    n: int,
    window: tuple[int, int],
    law: str,
    rng: RngStream,
) -> InitialCondition:
    """Independent per-site draws with mean rho0(m/n) and variance v0(m/n)."""
    lo, hi = int(window[0]), int(window[1])
    if hi < lo:
        raise ValueError("window must satisfy lo <= hi")
    sites = np.arange(lo, hi + 1, dtype=np.int64)
    y = sites / float(n)
    means = np.asarray(profile.rho0(y), dtype=float)
    variances = np.asarray(profile.v0(y), dtype=float)
    counts = draw_family(law, means, variances, rng)
    return InitialCondition(lo, counts)


def gen_deterministic_ic(profile: Profile, n: int, window: tuple[int, int]) -> InitialCondition:
    """Staircase occupations eta(m) = [n u0(m/n)] - [n u0((m-1)/n)].

    Partial sums telescope exactly: sum_{m=1..x} eta(m) equals
    [n u0(x/n)] - [n u0(0)] whenever the range lies inside the window.
    """
    lo, hi = int(window[0]), int(window[1])
    if hi < lo:
        raise ValueError("window must satisfy lo <= hi")
    grid = np.arange(lo - 1, hi + 1, dtype=np.int64)
    u_vals = np.asarray(profile.u0(grid / float(n)), dtype=float)
    if not np.all(np.isfinite(u_vals)):
        raise ValueError("deterministic staircase needs finite u0 on the window")
    stair = int_part(float(n) * u_vals)
    counts = np.diff(stair)
    if np.any(counts < 0):
        raise ValueError("u0 must be nondecreasing")
    return InitialCondition(lo, counts)
