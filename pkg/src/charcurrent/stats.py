"""Replicate-ensemble statistics and limit-law verification.

Replicate outcomes stream into mergeable moment accumulators
(compensated summation, so merge order is immaterial up to float
tolerance and exactly immaterial on integer inputs).  Raw per-replicate
vectors are retained for delete-1 jackknife standard errors, which are
needed because covariance entries of dependent time points have no
product-moment shortcut.

All acceptance thresholds downstream are expressed in multiples of
these standard errors, never as absolute tolerances, so runs at any
replicate count remain interpretable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .limits import CovKernel
from .numutil import NeumaierSum
from .walks import CurrentPath


class GridMismatchError(ValueError):
    """A path's grid does not match the summary it is accumulated into."""


class MomentAccumulator:
    """Streaming first/second moments of fixed-length replicate vectors.

    Covariance uses divisor R (not R - 1) so that merged accumulators
    agree exactly with sequential accumulation; the bias is negligible
    at the replicate counts used here.
    """

    def __init__(self, dim: int):
        self.dim = int(dim)
        self.count = 0
        self._s1 = NeumaierSum((self.dim,))
        self._s2 = NeumaierSum((self.dim, self.dim))
        self._raw: list[np.ndarray] = []

    def add(self, vec) -> None:
        x = np.asarray(vec, dtype=float).reshape(-1)
        if x.size != self.dim:
            raise GridMismatchError(f"expected vector of length {self.dim}, got {x.size}")
        self.count += 1
        self._s1.add(x)
        self._s2.add(np.outer(x, x))
        self._raw.append(x)

    def merge(self, other: "MomentAccumulator") -> None:
        if other.dim != self.dim:
            raise GridMismatchError("cannot merge accumulators of different dimension")
        self.count += other.count
        self._s1.merge(other._s1)
        self._s2.merge(other._s2)
        self._raw.extend(other._raw)

    def copy(self) -> "MomentAccumulator":
        out = MomentAccumulator(self.dim)
        out.count = self.count
        out._s1 = self._s1.copy()
        out._s2 = self._s2.copy()
        out._raw = list(self._raw)
        return out

    @property
    def raw(self) -> np.ndarray:
        return np.array(self._raw) if self._raw else np.empty((0, self.dim))

    def _require_data(self, minimum: int = 1) -> None:
        if self.count < minimum:
            raise ValueError(f"statistic undefined: have {self.count} replicates, need >= {minimum}")

    def mean(self) -> np.ndarray:
        self._require_data()
        return self._s1.total() / self.count

    def cov(self) -> np.ndarray:
        self._require_data()
        mu = self.mean()
        return self._s2.total() / self.count - np.outer(mu, mu)

    def mean_se(self) -> np.ndarray:
        self._require_data(2)
        return np.sqrt(np.maximum(np.diag(self.cov()), 0.0) / self.count)

    def cov_jackknife_se(self) -> np.ndarray:
        """Delete-1 jackknife standard error of every covariance entry."""
        self._require_data(3)
        x = self.raw
        r = self.count
        s1 = self._s1.total()
        s2 = self._s2.total()
        se = np.zeros((self.dim, self.dim))
        for a in range(self.dim):
            for b in range(a, self.dim):
                sxy = s2[a, b] - x[:, a] * x[:, b]
                sx = s1[a] - x[:, a]
                sy = s1[b] - x[:, b]
                theta_i = sxy / (r - 1) - sx * sy / (r - 1) ** 2
                se[a, b] = se[b, a] = np.sqrt(
                    (r - 1) / r * np.sum((theta_i - theta_i.mean()) ** 2)
                )
        return se

    def corr(self) -> np.ndarray:
        c = self.cov()
        d = np.sqrt(np.maximum(np.diag(c), 0.0))
        denom = np.outer(d, d)
        with np.errstate(invalid="ignore", divide="ignore"):
            rho = np.where(denom > 0, c / denom, 0.0)
        np.fill_diagonal(rho, 1.0)
        return rho

    def corr_jackknife_se(self) -> np.ndarray:
        """Delete-1 jackknife standard error of every correlation entry."""
        self._require_data(3)
        x = self.raw
        r = self.count
        s1 = self._s1.total()
        s2 = self._s2.total()
        se = np.zeros((self.dim, self.dim))
        for a in range(self.dim):
            for b in range(a + 1, self.dim):
                sxy = s2[a, b] - x[:, a] * x[:, b]
                sx = s1[a] - x[:, a]
                sy = s1[b] - x[:, b]
                sxx = s2[a, a] - x[:, a] ** 2
                syy = s2[b, b] - x[:, b] ** 2
                cov_i = sxy / (r - 1) - sx * sy / (r - 1) ** 2
                var_a = sxx / (r - 1) - (sx / (r - 1)) ** 2
                var_b = syy / (r - 1) - (sy / (r - 1)) ** 2
                denom = np.sqrt(np.maximum(var_a * var_b, 0.0))
                with np.errstate(invalid="ignore", divide="ignore"):
                    theta_i = np.where(denom > 0, cov_i / denom, 0.0)
                se[a, b] = se[b, a] = np.sqrt(
                    (r - 1) / r * np.sum((theta_i - theta_i.mean()) ** 2)
                )
        return se

    def batch_means_cov_se(self, n_batches: int = 0) -> np.ndarray:
        """Spread of per-batch covariance estimates; jackknife cross-check."""
        self._require_data(4)
        x = self.raw
        r = self.count
        nb = n_batches or max(int(np.sqrt(r)), 2)
        nb = min(nb, r // 2)
        cut = (r // nb) * nb
        batches = x[:cut].reshape(nb, -1, self.dim)
        covs = np.empty((nb, self.dim, self.dim))
        for i, bx in enumerate(batches):
            mu = bx.mean(axis=0)
            covs[i] = bx.T @ bx / bx.shape[0] - np.outer(mu, mu)
        return covs.std(axis=0, ddof=1) / np.sqrt(nb)


@dataclass
class EnsembleSummary:
    """Accumulated current statistics of one (n, ensemble) configuration.

    Cells are labeled (base_point, grid_time) in row-major order; raw
    integer current values go in, scaling by n^{-1/4} is applied at
    reporting time so integer accumulation stays exact.
    """

    n: int
    base_points: tuple[float, ...]
    time_grid: tuple[float, ...]
    acc: MomentAccumulator = field(init=False)

    def __post_init__(self):
        self.base_points = tuple(float(y) for y in self.base_points)
        self.time_grid = tuple(float(t) for t in self.time_grid)
        self.acc = MomentAccumulator(len(self.base_points) * len(self.time_grid))

    @property
    def replicates(self) -> int:
        return self.acc.count

    def cell(self, base_index: int, time_index: int) -> int:
        return base_index * len(self.time_grid) + time_index

    def accumulate(self, path: CurrentPath) -> "EnsembleSummary":
        if tuple(path.time_grid) != self.time_grid or tuple(path.base_points) != self.base_points:
            raise GridMismatchError("path grid/base points do not match summary")
        self.acc.add(path.currents.reshape(-1))
        return self

    def merge(self, other: "EnsembleSummary") -> "EnsembleSummary":
        if (other.n, other.base_points, other.time_grid) != (self.n, self.base_points, self.time_grid):
            raise GridMismatchError("cannot merge summaries of different configurations")
        self.acc.merge(other.acc)
        return self

    # statistics of the rescaled current n^{-1/4} Y
    def scaled_mean(self) -> np.ndarray:
        return self.acc.mean() * self.n ** (-0.25)

    def scaled_mean_se(self) -> np.ndarray:
        return self.acc.mean_se() * self.n ** (-0.25)

    def scaled_cov(self) -> np.ndarray:
        return self.acc.cov() * self.n ** (-0.5)

    def scaled_cov_se(self) -> np.ndarray:
        return self.acc.cov_jackknife_se() * self.n ** (-0.5)

    def scaled_sd(self, base_index: int, time_index: int) -> float:
        c = self.cell(base_index, time_index)
        return float(np.sqrt(max(self.scaled_cov()[c, c], 0.0)))


@dataclass(frozen=True)
class CovCheckRow:
    base_point: float
    s: float
    t: float
    empirical: float
    theoretical: float
    se: float
    z: float


def format_table(rows: list[CovCheckRow]) -> str:
    """Aligned-text rendering of a covariance check table."""
    header = f"{'y_bar':>8} {'s':>7} {'t':>7} {'empirical':>12} {'theoretical':>12} {'SE':>10} {'z':>7}"
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(
            f"{r.base_point:>8.3f} {r.s:>7.3f} {r.t:>7.3f} {r.empirical:>12.6f} "
            f"{r.theoretical:>12.6f} {r.se:>10.6f} {r.z:>7.2f}"
        )
    return "\n".join(lines)


def covariance_report(summary: EnsembleSummary, kern: CovKernel, base_index: int = 0) -> list[CovCheckRow]:
    """Empirical-vs-closed-form table over the upper-triangle time cells."""
    emp = summary.scaled_cov()
    se = summary.scaled_cov_se()
    rows = []
    times = summary.time_grid
    for i in range(len(times)):
        for j in range(i, len(times)):
            a, b = summary.cell(base_index, i), summary.cell(base_index, j)
            theo = kern.cov(times[i], times[j])
            e = emp[a, b]
            s = se[a, b]
            z = (e - theo) / s if s > 0 else np.inf * np.sign(e - theo) if e != theo else 0.0
            rows.append(CovCheckRow(summary.base_points[base_index], times[i], times[j], float(e), float(theo), float(s), float(z)))
    return rows


def scaling_exponent(ns: Sequence[float], sds: Sequence[float]) -> tuple[float, float]:
    """Least-squares slope of log SD against log n, with standard error."""
    ns = np.asarray(ns, dtype=float)
    sds = np.asarray(sds, dtype=float)
    if ns.size < 3 or len(set(ns.tolist())) < 3:
        raise ValueError("need at least 3 distinct n values")
    if np.any(sds <= 0):
        raise ValueError("standard deviations must be positive")
    x = np.log(ns)
    y = np.log(sds)
    xc = x - x.mean()
    slope = float(np.dot(xc, y) / np.dot(xc, xc))
    intercept = y.mean() - slope * x.mean()
    resid = y - intercept - slope * x
    dof = ns.size - 2
    s2 = float(np.dot(resid, resid) / dof) if dof > 0 else 0.0
    stderr = float(np.sqrt(s2 / np.dot(xc, xc)))
    return slope, stderr


@dataclass(frozen=True)
class IndependencePair:
    base_a: float
    base_b: float
    s: float
    t: float
    corr: float
    se: float


@dataclass(frozen=True)
class IndependenceReport:
    pairs: tuple[IndependencePair, ...]
    max_abs_corr: float
    max_abs_z: float


def independence_test(summary: EnsembleSummary) -> IndependenceReport:
    """Cross-base-point correlations (with SEs) from a shared ensemble."""
    if len(summary.base_points) < 2:
        raise ValueError("independence test needs at least two base points")
    rho = summary.acc.corr()
    se = summary.acc.corr_jackknife_se()
    nt = len(summary.time_grid)
    pairs = []
    max_c = 0.0
    max_z = 0.0
    for a in range(len(summary.base_points)):
        for b in range(a + 1, len(summary.base_points)):
            for i in range(nt):
                for j in range(nt):
                    ca, cb = summary.cell(a, i), summary.cell(b, j)
                    c = float(rho[ca, cb])
                    s = float(se[ca, cb])
                    pairs.append(
                        IndependencePair(
                            summary.base_points[a], summary.base_points[b],
                            summary.time_grid[i], summary.time_grid[j], c, s,
                        )
                    )
                    max_c = max(max_c, abs(c))
                    if s > 0:
                        max_z = max(max_z, abs(c) / s)
    return IndependenceReport(tuple(pairs), max_c, max_z)


def hydro_error(ns: Sequence[float], mean_abs_errors: Sequence[float]) -> tuple[float, float]:
    """Decay slope of the macroscopic height error against n (log-log)."""
    return scaling_exponent(ns, mean_abs_errors)


@dataclass(frozen=True)
class TransportedCheck:
    ns: tuple[int, ...]
    residual_sds: tuple[float, ...]
    ratios: tuple[float, ...]
    expected_ratios: tuple[float, ...]


def transported_fluctuation_check(
    summaries: Sequence[EnsembleSummary], t: float, base_index: int = 0
) -> TransportedCheck:
    """Residual SD of height fluctuation minus its transported initial part.

    The residual equals n^{-1/2} times the current statistic, so its SD
    must shrink like n^{-1/4}; consecutive-n ratios are compared against
    (n2/n1)^{-1/4}.
    """
    ordered = sorted(summaries, key=lambda s: s.n)
    sds = []
    for sm in ordered:
        ti = sm.time_grid.index(float(t))
        sd_y = np.sqrt(max(sm.acc.cov()[sm.cell(base_index, ti), sm.cell(base_index, ti)], 0.0))
        sds.append(float(sd_y) / np.sqrt(sm.n))
    ns = tuple(sm.n for sm in ordered)
    ratios = tuple(sds[i + 1] / sds[i] for i in range(len(sds) - 1)) if len(sds) > 1 else ()
    expected = tuple((ns[i + 1] / ns[i]) ** (-0.25) for i in range(len(ns) - 1))
    return TransportedCheck(ns, tuple(sds), ratios, expected)
