"""Closed-form limit objects and their quadrature cross-checks.

The limiting current fluctuation is a mean-zero Gaussian process whose
covariance has an explicit square-root form controlled by the local
density rho0, the local increment variance v0, and the walk's second
moment kappa2.  This module evaluates that covariance exactly, verifies
the underlying Gaussian integrals by adaptive quadrature, evaluates the
two half-line variance functionals that arise from slow and fast
walkers, solves the linear transport equation, and draws exact samples
of the limit process on a time grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import ndtr, owens_t

from .rng import RngStream

_SQRT_2PI = np.sqrt(2.0 * np.pi)
_QUAD_TOL = 1e-10
_EIG_CLAMP = 1e-9  # relative (to trace) tolerance for negative eigenvalues
_MAX_GRID = 4096


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to reach the requested tolerance."""


@dataclass(frozen=True)
class CovKernel:
    """Covariance of the limiting Gaussian current process.

    K(s, t) = sqrt(kappa2 / 2 pi) * ( rho0 (sqrt(s+t) - sqrt(|t-s|))
                                      + v0 (sqrt(s) + sqrt(t) - sqrt(s+t)) )

    Constructors cover the named special cases: ``equilibrium`` (v0 =
    rho0, fractional Brownian motion with Hurst index 1/4),
    ``deterministic_ic`` (v0 = 0) and ``brownian`` (unit-rate kappa2
    with density lambda).
    """

    rho0: float
    v0: float
    kappa2: float
    label: str = "general"

    def __post_init__(self):
        if self.rho0 < 0 or self.v0 < 0:
            raise ValueError("rho0 and v0 must be nonnegative")
        if self.kappa2 <= 0:
            raise ValueError("kappa2 must be positive")

    @classmethod
    def general(cls, rho0: float, v0: float, kappa2: float) -> "CovKernel":
        return cls(float(rho0), float(v0), float(kappa2), "general")

    @classmethod
    def equilibrium(cls, rho: float, kappa2: float) -> "CovKernel":
        return cls(float(rho), float(rho), float(kappa2), "equilibrium")

    @classmethod
    def deterministic_ic(cls, rho0: float, kappa2: float) -> "CovKernel":
        return cls(float(rho0), 0.0, float(kappa2), "deterministic_ic")

    @classmethod
    def brownian(cls, lam: float) -> "CovKernel":
        if lam <= 0:
            raise ValueError("brownian variant needs lambda > 0")
        return cls(float(lam), float(lam), 1.0, "brownian")

    def cov(self, s, t):
        """Exact covariance K(s, t); accepts scalars or arrays."""
        sa = np.asarray(s, dtype=float)
        ta = np.asarray(t, dtype=float)
        if np.any(sa < 0) or np.any(ta < 0):
            raise ValueError("times must be nonnegative")
        pref = np.sqrt(self.kappa2 / (2.0 * np.pi))
        val = pref * (
            self.rho0 * (np.sqrt(sa + ta) - np.sqrt(np.abs(ta - sa)))
            + self.v0 * (np.sqrt(sa) + np.sqrt(ta) - np.sqrt(sa + ta))
        )
        return float(val) if val.ndim == 0 else val

    def __call__(self, s, t):
        return self.cov(s, t)

    def gram(self, times) -> np.ndarray:
        ts = np.asarray(times, dtype=float)
        return self.cov(ts[:, None], ts[None, :])


def cov(kern: CovKernel, s, t):
    """Functional alias for :meth:`CovKernel.cov`."""
    return kern.cov(s, t)


# --- Gaussian integrals -------------------------------------------------

def bvn_upper(h: float, k: float, rho: float) -> float:
    """P(X > h, Y > k) for standard bivariate normal with correlation rho.

    Owen's T-function evaluation; only needs 0 <= rho <= 1 and (h, k) of
    equal sign or zero, which is what the Brownian straddle integrand
    produces.
    """
    if rho >= 1.0:
        return float(ndtr(-max(h, k)))
    if rho <= 0.0:
        return float(ndtr(-h) * ndtr(-k))
    if h == 0.0 and k == 0.0:
        cdf00 = 0.25 + np.arcsin(rho) / (2.0 * np.pi)
        return float(cdf00)  # by symmetry P(X>0,Y>0) = P(X<=0,Y<=0)
    if h * k < 0:
        raise ValueError("bvn_upper expects h, k of equal sign")
    denom = np.sqrt(1.0 - rho * rho)
    ah = (k - rho * h) / (h * denom)
    ak = (h - rho * k) / (k * denom)
    cdf = 0.5 * (ndtr(h) + ndtr(k)) - owens_t(h, ah) - owens_t(k, ak)
    return float(1.0 - ndtr(h) - ndtr(k) + cdf)


def straddle_prob(s: float, t: float, z) -> np.ndarray:
    """P(B_s > z >= B_t) for Brownian motion at times 0 < s <= t."""
    za = np.atleast_1d(np.asarray(z, dtype=float))
    if s == t:
        out = np.zeros_like(za)
    else:
        rho = np.sqrt(s / t)
        upper = np.array([bvn_upper(zi / np.sqrt(s), zi / np.sqrt(t), rho) for zi in za])
        out = ndtr(-za / np.sqrt(s)) - upper
    return out if np.ndim(z) else float(out[0])


def gaussian_level_integrals(s: float, t: float) -> tuple[float, float, float]:
    """Closed forms of the three Gaussian level integrals, 0 <= s <= t.

    Returns (full-line slow/fast product integral, positive half-line
    survival product integral, full-line straddle integral):

        int_R P(B_s > z) P(B_t <= z) dz          = sqrt(s+t) / sqrt(2 pi)
        int_0^inf P(B_s > z) P(B_t > z) dz       = (sqrt(s) + sqrt(t) - sqrt(s+t)) / (2 sqrt(2 pi))
        int_R P(B_s > z >= B_t) dz               = sqrt(t-s) / sqrt(2 pi)
    """
    if not 0 <= s <= t:
        raise ValueError("need 0 <= s <= t")
    i_full = np.sqrt(s + t) / _SQRT_2PI
    i_half = (np.sqrt(s) + np.sqrt(t) - np.sqrt(s + t)) / (2.0 * _SQRT_2PI)
    i_cross = np.sqrt(t - s) / _SQRT_2PI
    return float(i_full), float(i_half), float(i_cross)


def _quad_checked(f, lo, hi, scales=(), tol=_QUAD_TOL) -> float:
    # Integrands mix Gaussian factors of widely different widths; force
    # panel boundaries at multiples of each width so the narrow layer
    # cannot slip between quadrature nodes of a wide panel.
    pts = sorted(
        {
            sgn * mult * sc
            for sc in scales
            for mult in (0.5, 1.0, 2.0, 4.0, 8.0)
            for sgn in (-1.0, 1.0)
            if lo < sgn * mult * sc < hi
        }
    )
    val, err = quad(f, lo, hi, points=pts or None, epsabs=tol, epsrel=tol, limit=400)
    if err > 100 * tol:
        raise QuadratureError(f"achieved abs error {err:.3e} > tolerance {tol:.3e}")
    return val


def _cut(tmax: float) -> float:
    # Gaussian factors drop below 1e-16 well inside 9 standard deviations.
    return 9.0 * np.sqrt(max(tmax, 1e-12))


def gaussian_level_integrals_quadrature(s: float, t: float) -> tuple[float, float, float]:
    """Adaptive-quadrature companion of :func:`gaussian_level_integrals` (s > 0)."""
    if not 0 < s <= t:
        raise ValueError("quadrature companion needs 0 < s <= t")
    c = _cut(t)
    rs, rt = np.sqrt(s), np.sqrt(t)

    def f_full(z):
        return ndtr(-z / rs) * ndtr(z / rt)

    def f_half(z):
        return ndtr(-z / rs) * ndtr(-z / rt)

    def f_cross(z):
        return straddle_prob(s, t, z)

    sc = (rs, rt)
    i_full = _quad_checked(f_full, -c, 0.0, sc) + _quad_checked(f_full, 0.0, c, sc)
    i_half = _quad_checked(f_half, 0.0, c, sc)
    i_cross = _quad_checked(f_cross, -c, 0.0, sc) + _quad_checked(f_cross, 0.0, c, sc)
    return i_full, i_half, i_cross


def sigma_squares(theta, times, rho0: float, v0: float, kappa2: float) -> tuple[float, float]:
    """Half-line variance functionals of the slow- and fast-walker sums.

    For weights theta_i attached to times t_i, evaluates the two
    quadrature expressions (negative half-line for walkers starting
    right of the base point, positive half-line for those starting left)
    whose sum equals the quadratic form of the limit covariance:

        sigma1^2 + sigma2^2 = sum_{i,j} theta_i theta_j K(t_i, t_j).
    """
    th = np.asarray(theta, dtype=float)
    ts = np.asarray(times, dtype=float)
    if th.shape != ts.shape or th.ndim != 1:
        raise ValueError("theta and times must be 1-d arrays of equal length")
    if np.any(ts <= 0) or np.any(np.diff(ts) <= 0):
        raise ValueError("times must be positive and strictly increasing")
    sk = np.sqrt(kappa2)
    c = _cut(float(ts[-1]))
    n = len(ts)

    scales = tuple(np.sqrt(ts))

    def half_integral(f, side: str) -> float:
        if side == "neg":
            return _quad_checked(f, -c, 0.0, scales)
        return _quad_checked(f, 0.0, c, scales)

    sigma1 = 0.0
    sigma2 = 0.0
    for i in range(n):
        ti = float(ts[i])
        ri = np.sqrt(ti)
        w = th[i] ** 2 * sk
        sigma1 += w * rho0 * half_integral(lambda z: ndtr(-z / ri) * ndtr(z / ri), "neg")
        sigma1 += w * v0 * half_integral(lambda z: ndtr(z / ri) ** 2, "neg")
        sigma2 += w * rho0 * half_integral(lambda z: ndtr(-z / ri) * ndtr(z / ri), "pos")
        sigma2 += w * v0 * half_integral(lambda z: ndtr(-z / ri) ** 2, "pos")
    for i in range(n):
        for j in range(i + 1, n):
            ti, tj = float(ts[i]), float(ts[j])
            ri, rj = np.sqrt(ti), np.sqrt(tj)
            w = 2.0 * th[i] * th[j] * sk

            def rho_part(z):
                return ndtr(-z / ri) * ndtr(z / rj) - straddle_prob(ti, tj, z)

            sigma1 += w * rho0 * half_integral(rho_part, "neg")
            sigma1 += w * v0 * half_integral(lambda z: ndtr(z / ri) * ndtr(z / rj), "neg")
            sigma2 += w * rho0 * half_integral(rho_part, "pos")
            sigma2 += w * v0 * half_integral(lambda z: ndtr(-z / ri) * ndtr(-z / rj), "pos")
    return sigma1, sigma2


def transport_solution(profile, b: float, x, t):
    """Solution u(x, t) = u0(x - b t) of u_t + b u_x = 0."""
    val = profile.u0(np.asarray(x, dtype=float) - b * np.asarray(t, dtype=float))
    arr = np.asarray(val, dtype=float)
    return float(arr) if arr.ndim == 0 else arr


def limit_factor(kern: CovKernel, time_grid) -> np.ndarray:
    """Symmetric factor F with F F^T = Gram matrix of ``kern`` on the grid.

    Eigendecomposition, not Cholesky: the Gram matrix is singular at
    t = 0 and near-singular for close grid points.  Negative eigenvalues
    within -1e-9 * trace are clamped to zero; anything worse raises.
    """
    ts = np.asarray(time_grid, dtype=float)
    if ts.ndim != 1 or not 1 <= ts.size <= _MAX_GRID:
        raise ValueError(f"time grid must be 1-d with 1..{_MAX_GRID} points")
    gram = kern.gram(ts)
    vals, vecs = np.linalg.eigh(gram)
    floor = -_EIG_CLAMP * max(float(np.trace(gram)), np.finfo(float).tiny)
    if np.any(vals < floor):
        raise np.linalg.LinAlgError(
            f"Gram matrix indefinite beyond jitter budget (min eig {vals.min():.3e})"
        )
    vals = np.clip(vals, 0.0, None)
    return vecs * np.sqrt(vals)


def sample_limit_process(kern: CovKernel, time_grid, rng: RngStream, size: int | None = None) -> np.ndarray:
    """Exact mean-zero Gaussian draws of the limit process on a grid.

    Returns shape (len(grid),) for ``size=None`` else (size, len(grid)).
    """
    factor = limit_factor(kern, time_grid)
    d = factor.shape[0]
    if size is None:
        return factor @ rng.standard_normal(d)
    return rng.standard_normal((size, d)) @ factor.T
