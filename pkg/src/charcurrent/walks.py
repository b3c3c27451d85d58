"""Exact simulation of the random-walk growth interface on a window.

One replicate places particles on an initial site window according to a
profile and occupation law, then moves every particle by independent
compound-Poisson displacements between macroscopic grid times.  Nothing
between grid times is needed: the current across a characteristic and
the interface height at a grid time are functions of particle positions
at times 0 and n*t only, so cost is O(particles x grid points).

The current value is computed twice per replicate, once as a signed
count of particles straddling the characteristic and once through
height-function differences; the two must agree exactly in every
replicate and the simulator enforces that.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .kernel import JumpKernel, sample_displacements, truncation_bias_bound
from .numutil import int_part
from .profiles import InitialCondition, Profile, gen_deterministic_ic, gen_random_ic
from .rng import RngStream

_WINDOW_FACTOR = 6.0
_BIAS_BUDGET = 1e-6

IC_LAWS = ("poisson", "mixture", "binomial", "deterministic", "floor")


class WindowError(ValueError):
    """A query reaches outside the simulated site window."""


def recommended_radius(kernel: JumpKernel, n: int, t_max: float) -> int:
    """Window radius making outside-window leakage negligible.

    Chernoff tails confine the walkers that can touch the characteristic
    by time n*t_max to a sqrt(kappa2 n T log) neighbourhood of the base
    point; the factor 6 leaves the reported truncation bias far below
    1e-6 at practical sizes.
    """
    nt = float(n) * float(t_max)
    w = math.ceil(_WINDOW_FACTOR * math.sqrt(kernel.second_moment * nt * math.log(nt + math.e)))
    return w + math.ceil(abs(kernel.drift))


@dataclass(frozen=True)
class SimConfig:
    """One replicate's full specification."""

    n: int
    kernel: JumpKernel
    profile: Profile
    ic_law: str
    time_grid: tuple[float, ...]
    base_points: tuple[float, ...]
    window_radius: int | None = None
    height_points: tuple[float, ...] = ()

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        grid = tuple(float(t) for t in self.time_grid)
        if not grid or any(t < 0 for t in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("time_grid must be nonempty, nonnegative, strictly increasing")
        if not self.base_points and not self.height_points:
            raise ValueError("need at least one base point or height point")
        if self.ic_law not in IC_LAWS:
            raise ValueError(f"ic_law must be one of {IC_LAWS}")
        object.__setattr__(self, "time_grid", grid)
        object.__setattr__(self, "base_points", tuple(float(y) for y in self.base_points))
        object.__setattr__(self, "height_points", tuple(float(x) for x in self.height_points))

    @cached_property
    def radius(self) -> int:
        if self.window_radius is not None:
            if self.window_radius < 1:
                raise ValueError("window_radius must be >= 1")
            return int(self.window_radius)
        return recommended_radius(self.kernel, self.n, self.time_grid[-1])

    @cached_property
    def window(self) -> tuple[int, int]:
        """Contiguous hull of all per-base-point windows.

        When heights are requested the hull additionally covers the
        origin (height sums are anchored at site 0) and the full
        transport range feeding each queried level.
        """
        n, b = self.n, self.kernel.drift
        t_max = self.time_grid[-1]
        anchors: list[int] = []
        for y in self.base_points:
            anchors.append(int_part(n * y))
        for x in self.height_points:
            level = int_part(n * x)
            anchors.extend([0, level, level - int_part(n * b * t_max)])
        if not anchors:
            anchors.append(0)
        return min(anchors) - self.radius, max(anchors) + self.radius

    def truncation_bias(self) -> float:
        """Chernoff bound on the expected current contribution lost to truncation."""
        return truncation_bias_bound(self.kernel, self.n, self.time_grid[-1], self.radius)

    def make_ic(self, rng: RngStream) -> InitialCondition:
        if self.ic_law == "floor":
            return gen_deterministic_ic(self.profile, self.n, self.window)
        return gen_random_ic(self.profile, self.n, self.window, self.ic_law, rng)


@dataclass(frozen=True)
class CurrentPath:
    """One replicate's current values; optionally height samples.

    ``currents[a, i]`` is the integer current statistic of base point
    ``base_points[a]`` at ``time_grid[i]``; ``heights[j, i]`` the
    interface height at level floor(n * height_points[j]) and time i.
    """

    base_points: tuple[float, ...]
    time_grid: tuple[float, ...]
    currents: np.ndarray
    height_points: tuple[float, ...] = ()
    heights: np.ndarray | None = None

    def current(self, base_index: int = 0) -> np.ndarray:
        return self.currents[base_index]


@dataclass(frozen=True)
class ReplicateState:
    """Particle positions of one replicate at every grid time."""

    cfg: SimConfig
    ic: InitialCondition
    starts: np.ndarray  # (P,) initial sites
    positions: np.ndarray  # (len(grid), P) sites at each grid time

    def positions_at(self, t: float) -> np.ndarray:
        try:
            i = self.cfg.time_grid.index(float(t))
        except ValueError:
            raise ValueError(f"time {t} is not on the simulated grid {self.cfg.time_grid}") from None
        return self.positions[i]


def run_replicate(cfg: SimConfig, rng: RngStream) -> ReplicateState:
    """Simulate all particle positions of one replicate."""
    ic = cfg.make_ic(rng)
    starts = ic.particle_starts()
    pos = starts.copy()
    snapshots = np.empty((len(cfg.time_grid), starts.size), dtype=np.int64)
    t_prev = 0.0
    for i, t in enumerate(cfg.time_grid):
        dt = cfg.n * (t - t_prev)
        if dt > 0 and starts.size:
            pos = pos + sample_displacements(cfg.kernel, dt, rng, starts.size)
        snapshots[i] = pos
        t_prev = t
    return ReplicateState(cfg, ic, starts, snapshots)


def _net_crossings(starts: np.ndarray, pos: np.ndarray, level: int) -> int:
    """Net number of particles moving from (-inf, level] to (level, inf)."""
    up = np.count_nonzero((starts <= level) & (pos > level))
    down = np.count_nonzero((pos <= level) & (starts > level))
    return int(up - down)


def current_path(state: ReplicateState) -> CurrentPath:
    """Extract current values (and heights), checking the dual identity."""
    cfg = state.cfg
    n, b = cfg.n, cfg.kernel.drift
    k, m = len(cfg.base_points), len(cfg.time_grid)
    currents = np.zeros((k, m), dtype=np.int64)
    for a, ybar in enumerate(cfg.base_points):
        l0 = int_part(n * ybar)
        for i, t in enumerate(cfg.time_grid):
            lt = l0 + int_part(n * b * t)
            pos = state.positions[i]
            slow = np.count_nonzero((state.starts >= l0 + 1) & (pos <= lt))
            fast = np.count_nonzero((state.starts <= l0) & (pos > lt))
            y_walk = int(slow - fast)
            # height route: occupation sum along the characteristic
            # minus the net crossing count of the far level
            occ_sum = state.ic.sigma0_clamped(lt) - state.ic.sigma0_clamped(l0)
            y_height = occ_sum - _net_crossings(state.starts, pos, lt)
            if y_walk != y_height:
                raise AssertionError(
                    f"current identity violated: particle count {y_walk} != height form {y_height}"
                )
            currents[a, i] = y_walk
    heights = None
    if cfg.height_points:
        heights = np.zeros((len(cfg.height_points), m), dtype=np.int64)
        for j, x in enumerate(cfg.height_points):
            for i, t in enumerate(cfg.time_grid):
                heights[j, i] = height_at(state, x, t)
    return CurrentPath(cfg.base_points, cfg.time_grid, currents, cfg.height_points, heights)


def simulate_replicate(cfg: SimConfig, rng: RngStream) -> CurrentPath:
    """Simulate one replicate and return its current path."""
    return current_path(run_replicate(cfg, rng))


def height_at(state: ReplicateState, x: float, t: float) -> int:
    """Interface height over site floor(n x) at grid time t.

    Requires the window to cover the origin-anchored height sum and the
    whole transport range feeding the queried level; refuses otherwise,
    since truncation bias there would be unbounded.
    """
    cfg = state.cfg
    n, b = cfg.n, cfg.kernel.drift
    level = int_part(n * x)
    pullback = level - int_part(n * b * t)
    need_lo = min(0, level, pullback) - cfg.radius
    need_hi = max(0, level, pullback) + cfg.radius
    lo, hi = cfg.window
    if need_lo < lo or need_hi > hi:
        raise WindowError(
            f"height query at site {level} needs window [{need_lo}, {need_hi}] "
            f"but simulation covers [{lo}, {hi}]"
        )
    pos = state.positions_at(t)
    return state.ic.sigma0_clamped(level) - _net_crossings(state.starts, pos, level)


def occupation_field(state: ReplicateState, t: float) -> dict[int, int]:
    """Histogram of particle positions at grid time t (conserves total count)."""
    pos = state.positions_at(t)
    sites, counts = np.unique(pos, return_counts=True)
    return {int(s): int(c) for s, c in zip(sites, counts)}


# --- Brownian analogue ---------------------------------------------------

def recommended_brownian_halfwidth(t_max: float) -> float:
    return 8.0 * math.sqrt(t_max) + 2.0


def simulate_brownian_current(
    lam: float,
    y: float,
    time_grid,
    window_halfwidth: float,
    rng: RngStream,
) -> CurrentPath:
    """Net rightward current of Brownian particles across the point y.

    Initial positions follow a rate-``lam`` Poisson point process on
    [y - w, y + w]; each particle evolves by independent Gaussian
    increments.  Only grid times are evaluated, so path regularity never
    enters.  Positive sign means net motion from (-inf, y] to (y, inf).
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    grid = tuple(float(t) for t in time_grid)
    if not grid or any(t < 0 for t in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("time_grid must be nonempty, nonnegative, strictly increasing")
    if window_halfwidth < 8.0 * math.sqrt(grid[-1]) + 1.0:
        raise ValueError(
            f"window_halfwidth {window_halfwidth} too small; need >= "
            f"{recommended_brownian_halfwidth(grid[-1])}"
        )
    count = rng.poisson(lam * 2.0 * window_halfwidth)
    starts = rng.uniform(y - window_halfwidth, y + window_halfwidth, count)
    pos = starts.copy()
    currents = np.zeros((1, len(grid)), dtype=np.int64)
    t_prev = 0.0
    for i, t in enumerate(grid):
        dt = t - t_prev
        if dt > 0 and count:
            pos = pos + rng.normal(0.0, math.sqrt(dt), count)
        up = np.count_nonzero((starts <= y) & (pos > y))
        down = np.count_nonzero((starts > y) & (pos <= y))
        currents[0, i] = up - down
        t_prev = t
    return CurrentPath((y,), grid, currents)
