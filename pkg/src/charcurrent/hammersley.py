"""Hammersley-type particle dynamics via increasing paths of Poisson points.

The particle locations at time t are an infimum, over starting labels,
of initial locations plus a growth term counting planar Poisson points
on increasing space-time paths.  This module samples the Poisson field
reproducibly, computes longest-increasing-path counts by patience
sorting, evaluates the variational formula exactly, solves the
macroscopic Hamilton-Jacobi equation by its Hopf-Lax representation,
and runs the second-order fluctuation experiment with the
n^{1/3} log n normalization.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass

import numpy as np

from .numutil import golden_min_scalar, int_part
from .profiles import Profile, draw_family
from .rng import TAG_FIELD, TAG_IC, stream, strip_tag

_VALUE_TOL = 1e-10  # minimizers within this of the optimum are reported
_MERGE_TOL = 1e-6  # minimizers closer than this are one shock location
_SCAN_POINTS = 10_000


class FieldExtentError(RuntimeError):
    """The sampled rectangle is too short; a taller one is required."""


class LabelWindowError(ValueError):
    """The variational infimum touched the label window boundary."""


class PoissonField:
    """Lazy unit-rate planar Poisson points on space strips.

    Space is cut into unit strips [k, k+1) x (0, t_max]; each strip is
    sampled once from a stream keyed by (seed key..., strip index), so
    enlarging the queried region reuses identical points and results are
    independent of how far the field ever gets extended.
    """

    def __init__(self, seed_key: tuple[int, ...], t_max: float, rate: float = 1.0, max_strips: int = 1_000_000):
        if t_max < 0 or rate <= 0:
            raise ValueError("need t_max >= 0 and rate > 0")
        self.seed_key = tuple(int(k) for k in seed_key)
        self.t_max = float(t_max)
        self.rate = float(rate)
        self.max_strips = int(max_strips)
        self._strips: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def strip(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Points of strip [k, k+1), sorted by space ordinate."""
        got = self._strips.get(k)
        if got is not None:
            return got
        if len(self._strips) >= self.max_strips:
            raise FieldExtentError(f"field strip budget {self.max_strips} exhausted")
        rng = stream(*self.seed_key, strip_tag(k))
        count = int(rng.poisson(self.rate * self.t_max))
        xs = np.sort(rng.uniform(k, k + 1.0, count))
        ts = rng.uniform(0.0, self.t_max, count)
        self._strips[k] = (xs, ts)
        return xs, ts

    def points_between(self, lo: float, hi: float, t: float | None = None) -> tuple[np.ndarray, np.ndarray]:
        """All points with space in (lo, hi] and time in (0, t], space-sorted."""
        t_hi = self.t_max if t is None else float(t)
        xs_all, ts_all = [], []
        for k in range(math.floor(lo), math.floor(hi) + 1):
            xs, ts = self.strip(k)
            mask = (xs > lo) & (xs <= hi) & (ts <= t_hi)
            xs_all.append(xs[mask])
            ts_all.append(ts[mask])
        return np.concatenate(xs_all or [np.empty(0)]), np.concatenate(ts_all or [np.empty(0)])


def lis_count(xs, ys=None) -> int:
    """Length of the longest chain strictly increasing in both coordinates.

    Accepts two coordinate arrays or one (N, 2) array.  Patience
    sorting, O(N log N).
    """
    if ys is None:
        pts = np.asarray(xs, dtype=float)
        if pts.size == 0:
            return 0
        xs, ys = pts[:, 0], pts[:, 1]
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size == 0:
        return 0
    order = np.lexsort((-ys, xs))  # x ascending; ties scanned y-descending for strictness
    piles: list[float] = []
    for y in ys[order].tolist():
        idx = bisect_left(piles, y)
        if idx == len(piles):
            piles.append(y)
        else:
            piles[idx] = y
    return len(piles)


def _climb(field: PoissonField, base: float, t: float, m_target: int, height_cap: float | None = None) -> list[float]:
    """Growth thresholds above ``base``: entry m-1 is the minimal ordinate h
    (relative to base) at which the rectangle (base, base+h] x (0, t]
    first carries m points on an increasing path.

    One incremental patience sweep in space order; a new pile appearing
    at a point fixes that count's threshold forever, so the sweep stops
    as soon as ``m_target`` piles exist.
    """
    if m_target <= 0:
        return []
    if t > field.t_max * (1.0 + 1e-12):
        raise ValueError(f"query time {t} exceeds the field's horizon {field.t_max}")
    piles: list[float] = []
    gammas: list[float] = []
    k = math.floor(base)
    while len(gammas) < m_target:
        if height_cap is not None and k > base + height_cap:
            raise FieldExtentError(
                f"needed {m_target} increasing-path points but rectangle height cap "
                f"{height_cap} reached at {len(gammas)} piles; sample a taller rectangle"
            )
        xs, ts = field.strip(k)
        for x, tt in zip(xs.tolist(), ts.tolist()):
            if x <= base or tt > t:
                continue
            idx = bisect_left(piles, tt)
            if idx == len(piles):
                piles.append(tt)
                gammas.append(x - base)
                if len(gammas) >= m_target:
                    break
            else:
                piles[idx] = tt
        k += 1
    return gammas


def gamma(field: PoissonField, base_height: float, t: float, m: int, height_cap: float | None = None) -> float:
    """Minimal rectangle height above ``base_height`` carrying an
    m-point increasing path by time t.

    The returned value is attained (the critical point sits exactly on
    the boundary ordinate); the open-rectangle infimum approaches it
    from above.  m = 0 gives 0.
    """
    if m < 0:
        raise ValueError("m must be >= 0")
    if m == 0:
        return 0.0
    if t <= 0:
        raise FieldExtentError("no points in an empty time interval; growth threshold is infinite")
    return _climb(field, base_height, t, m, height_cap)[m - 1]


@dataclass(frozen=True)
class HammersleyState:
    """Particle locations on a label window after one evolution step."""

    label_lo: int
    z: np.ndarray  # locations, nondecreasing in the label
    minimizers: np.ndarray  # minimal minimizing start label per output label

    @property
    def label_hi(self) -> int:
        return self.label_lo + len(self.z) - 1

    def location(self, k: int) -> float:
        return float(self.z[k - self.label_lo])

    def sticks(self) -> np.ndarray:
        return np.diff(self.z)


def evolve(
    z0: np.ndarray,
    label_lo: int,
    field: PoissonField,
    t: float,
    out_labels: tuple[int, int],
    height_cap: float | None = None,
) -> HammersleyState:
    """Exact variational evolution of initial locations through the field.

    ``z0[i - label_lo]`` is the start location of label i; +inf entries
    never win the infimum (packed-step data).  Output labels must leave
    the infimum strictly inside the label window, otherwise a
    LabelWindowError demands a wider window.
    """
    z0 = np.asarray(z0, dtype=float)
    k_lo, k_hi = int(out_labels[0]), int(out_labels[1])
    label_hi = label_lo + len(z0) - 1
    if not (label_lo <= k_lo <= k_hi <= label_hi):
        raise ValueError("output labels must lie inside the input label window")
    if np.any(np.diff(z0[np.isfinite(z0)]) < 0):
        raise ValueError("initial locations must be nondecreasing in the label")
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0:
        z = z0[k_lo - label_lo : k_hi - label_lo + 1].copy()
        return HammersleyState(k_lo, z, np.arange(k_lo, k_hi + 1, dtype=np.int64))

    labels = np.arange(label_lo, label_hi + 1, dtype=np.int64)
    finite = np.isfinite(z0)
    if not np.any(finite & (labels <= k_hi)):
        raise ValueError("no finite start location at or below the requested labels")

    # one growth profile per distinct base height
    profiles: dict[float, list[float]] = {}
    for v in np.unique(z0[finite]):
        group = labels[finite & (z0 == v)]
        m_max = k_hi - int(group.min())
        profiles[float(v)] = _climb(field, float(v), t, m_max, height_cap) if m_max > 0 else []

    z_out = np.empty(k_hi - k_lo + 1)
    argmins = np.empty(k_hi - k_lo + 1, dtype=np.int64)
    for idx, k in enumerate(range(k_lo, k_hi + 1)):
        best_val = np.inf
        best_label = None
        for i, zi in zip(labels.tolist(), z0.tolist()):
            if i > k:
                break
            if not np.isfinite(zi):
                continue
            m = k - i
            val = zi if m == 0 else zi + profiles[zi][m - 1]
            if val < best_val:
                best_val = val
                best_label = i
        if best_label is None:
            raise ValueError(f"label {k} has no finite candidate")
        if best_label == label_lo:
            raise LabelWindowError(
                f"infimum for label {k} attained at the window boundary {label_lo}; widen the window"
            )
        z_out[idx] = best_val
        argmins[idx] = best_label
    if np.any(np.diff(z_out) < 0):
        raise AssertionError("evolved locations lost label monotonicity")
    return HammersleyState(k_lo, z_out, argmins)


# --- Hopf-Lax solver -----------------------------------------------------

@dataclass(frozen=True)
class HopfLaxSolution:
    """Value and minimizer set of the Hopf-Lax variational formula."""

    x: float
    t: float
    u: float
    minimizers: tuple[float, ...]
    shock: bool

    def phi(self, y, profile: Profile):
        ya = np.asarray(y, dtype=float)
        return profile.u0(ya) + (self.x - ya) ** 2 / (4.0 * self.t)


def _phi(profile: Profile, x: float, t: float, y):
    ya = np.asarray(y, dtype=float)
    return profile.u0(ya) + (x - ya) ** 2 / (4.0 * t)


def _refine_min(f, lo_b: float, hi_b: float) -> tuple[float, float]:
    """Golden-section localization followed by a parabolic vertex polish.

    Golden section alone stops at the sqrt(eps) value-comparison noise
    plateau; the three-point parabola recovers the vertex to ~1e-10 for
    locally quadratic objectives (and is exact for true parabolas).
    """
    y0, v0 = golden_min_scalar(f, lo_b, hi_b, tol=1e-12)
    h = 1e-5 * max(abs(y0), 1.0)
    ym, yp = y0 - h, y0 + h
    if ym > lo_b and yp < hi_b:
        fm, f0, fp = f(ym), f(y0), f(yp)
        denom = fm - 2.0 * f0 + fp
        if denom > 0:
            shift = 0.5 * h * (fm - fp) / denom
            if abs(shift) <= h:
                y1 = y0 + shift
                v1 = f(y1)
                if v1 <= v0 + 1e-14 * (1.0 + abs(v0)):
                    return y1, min(v0, v1)
    return y0, v0


def hopf_lax(profile: Profile, x: float, t: float) -> HopfLaxSolution:
    """Minimize u0(y) + (x-y)^2 / (4t) over y <= x.

    Coarse scan over the bracket that provably contains every minimizer
    (the density bound rho_max caps how far left a minimizer can sit),
    then refinement inside each local basin.  Minimizers within 1e-10
    of the optimal value are reported; a shock is flagged when two of
    them are separated by more than 1e-6.
    """
    if t <= 0:
        raise ValueError("hopf_lax needs t > 0")
    hi = min(x, profile.domain_sup)
    span = 4.0 * t * profile.rho_max + 4.0 * math.sqrt(t) + 1.0
    lo = hi - span
    grid = np.linspace(lo, hi, _SCAN_POINTS + 1)
    vals = np.asarray(_phi(profile, x, t, grid), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ValueError("u0 must be finite below its domain_sup")

    def f(y):
        return float(_phi(profile, x, t, y))

    candidates: list[tuple[float, float]] = [(float(grid[0]), float(vals[0])), (float(grid[-1]), float(vals[-1]))]
    interior = np.flatnonzero((vals[1:-1] <= vals[:-2]) & (vals[1:-1] <= vals[2:])) + 1
    for i in interior.tolist():
        candidates.append(_refine_min(f, float(grid[i - 1]), float(grid[i + 1])))
    # monotone runs ending at the scan edges refine toward the edge
    candidates.append(_refine_min(f, float(grid[0]), float(grid[1])))
    candidates.append(_refine_min(f, float(grid[-2]), float(grid[-1])))

    u = min(v for _, v in candidates)
    near = sorted(y for y, v in candidates if v <= u + _VALUE_TOL)
    if near and abs(near[0] - lo) < 2.0 * span / _SCAN_POINTS:
        raise AssertionError("minimizer at scan boundary; density bound violated")
    merged: list[float] = []
    for y in near:
        if not merged or y - merged[-1] > _MERGE_TOL:
            merged.append(y)
    # a cluster hugging the feasible edge is the edge itself
    if merged and abs(merged[-1] - hi) < _MERGE_TOL and f(hi) <= u + _VALUE_TOL:
        merged[-1] = float(hi)
    return HopfLaxSolution(float(x), float(t), float(u), tuple(merged), len(merged) >= 2)


def check_assumption_e(
    profile: Profile,
    x: float,
    t: float,
    delta: float = 0.25,
    grid_points: int = 400,
    solution: HopfLaxSolution | None = None,
) -> tuple[float, bool]:
    """Uniform quadratic growth of the Hopf-Lax objective at its minimizers.

    Returns (c1, ok) where c1 is the infimum of
    (phi(y) - phi(ybar)) / (y - ybar)^2 over grid offsets up to delta
    around every minimizer ybar; ok means the infimum is positive.
    """
    sol = solution or hopf_lax(profile, x, t)
    offsets = np.linspace(delta / grid_points, delta, grid_points)
    offsets = np.concatenate([-offsets[::-1], offsets])
    c1 = np.inf
    for ybar in sol.minimizers:
        phi_bar = float(_phi(profile, x, t, ybar))
        ys = ybar + offsets
        with np.errstate(invalid="ignore"):
            ratios = (_phi(profile, x, t, ys) - phi_bar) / (ys - ybar) ** 2
        finite = ratios[np.isfinite(ratios)]
        if finite.size:
            c1 = min(c1, float(finite.min()))
    return c1, bool(np.isfinite(c1) and c1 > 0)


# --- second-order fluctuation experiment ---------------------------------

@dataclass(frozen=True)
class TightnessResult:
    ns: tuple[int, ...]
    x: float
    t: float
    values: tuple[np.ndarray, ...]  # raw second-order fluctuation per n
    normalizers: tuple[float, ...]  # n^{1/3} log n

    def sd_over_cube_root(self) -> tuple[float, ...]:
        return tuple(float(np.std(v)) / n ** (1.0 / 3.0) for n, v in zip(self.ns, self.values))

    def normalized_quantile(self, q: float) -> tuple[float, ...]:
        return tuple(
            float(np.quantile(np.abs(v) / norm, q))
            for v, norm in zip(self.values, self.normalizers)
        )


def build_initial_locations(
    profile: Profile, n: int, label_window: tuple[int, int], ic_law: str, rng
) -> np.ndarray:
    """Start locations z0 on a label window, normalized to z0(0) = 0.

    ``packed`` packs every particle at the origin (0 for labels <= 0, +inf
    above); the random laws draw independent stick lengths with mean
    n u0(i/n) - n u0((i-1)/n) and variance v0(i/n) per label.
    """
    i_lo, i_hi = int(label_window[0]), int(label_window[1])
    labels = np.arange(i_lo, i_hi + 1, dtype=np.int64)
    if ic_law == "packed":
        return np.where(labels <= 0, 0.0, np.inf)
    if i_lo > 0 or i_hi < 0:
        raise ValueError("random initial locations need the label window to contain 0")
    u_vals = np.asarray(profile.u0(labels / float(n)), dtype=float)
    means = float(n) * np.diff(np.concatenate([[profile.u0((i_lo - 1) / float(n))], u_vals]))
    variances = np.asarray(profile.v0(labels / float(n)), dtype=float)
    sticks = draw_family(ic_law, np.maximum(means, 0.0), variances, rng).astype(float)
    z0 = np.cumsum(sticks)
    return z0 - z0[0 - i_lo]


def tightness_replicate(
    profile: Profile,
    x: float,
    t: float,
    n: int,
    seed: int,
    replicate: int,
    solution: HopfLaxSolution,
    ic_law: str = "packed",
    margin: int | None = None,
) -> float:
    """One replicate's second-order fluctuation at (x, t) for size n.

    Computes the evolved location at label floor(n x), subtracts the
    macroscopic value n u(x, t) and the transported initial fluctuation
    inf over minimizers of (z0(floor(n y)) - n u0(y)).
    """
    k_target = int_part(n * x)
    if margin is None:
        margin = 16 if ic_law == "packed" else int(4 * n ** (2.0 / 3.0)) + 16
    i_lo = min(0, k_target, *(int_part(n * y) for y in solution.minimizers)) - margin
    field = PoissonField((seed, TAG_FIELD, n, replicate), t_max=float(n) * t)
    ic_rng = stream(seed, TAG_IC, n, replicate)
    z0 = build_initial_locations(profile, n, (i_lo, k_target), ic_law, ic_rng)
    state = evolve(z0, i_lo, field, float(n) * t, (k_target, k_target))
    z_val = state.location(k_target)
    inf_term = min(
        float(z0[int_part(n * y) - i_lo]) - float(n) * float(np.asarray(profile.u0(y), dtype=float))
        for y in solution.minimizers
    )
    return (z_val - n * solution.u) - inf_term


def second_order_experiment(
    profile: Profile,
    x: float,
    t: float,
    ns,
    replicates: int,
    seed: int,
    ic_law: str = "packed",
    margin: int | None = None,
) -> TightnessResult:
    """Distribution of the second-order fluctuation across sizes n.

    Random initial laws evaluate one growth profile per distinct start
    location, so they are only practical at modest n; the ``packed``
    data shares a single profile and scales to the acceptance sizes.
    """
    solution = hopf_lax(profile, x, t)
    if ic_law != "packed":
        c1, ok = check_assumption_e(profile, x, t, solution=solution)
        if not ok:
            raise ValueError(f"minimizers are not uniformly quadratic (c1={c1}); experiment undefined")
    values = []
    for n in ns:
        ys = np.array([
            tightness_replicate(profile, x, t, int(n), seed, r, solution, ic_law, margin)
            for r in range(replicates)
        ])
        values.append(ys)
    ns_t = tuple(int(n) for n in ns)
    return TightnessResult(
        ns_t, float(x), float(t), tuple(values),
        tuple(n ** (1.0 / 3.0) * math.log(n) for n in ns_t),
    )


def bootstrap_percentile_se(values: np.ndarray, q: float, rng, n_boot: int = 500) -> float:
    """Bootstrap standard error of a sample quantile."""
    values = np.asarray(values, dtype=float)
    idx = rng.integers(0, values.size, (n_boot, values.size))
    return float(np.std(np.quantile(values[idx], q, axis=1), ddof=1))
