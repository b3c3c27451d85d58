"""Acceptance suite: one test per criterion, printing PASS/FAIL lines.

Every Monte Carlo criterion runs with a pinned seed, so outcomes are
reproducible; tolerances are the stated ones (SE multiples where the
criterion is statistical, absolute where it is numeric).
"""

import math

import numpy as np
import pytest

from charcurrent.hammersley import (
    bootstrap_percentile_se,
    check_assumption_e,
    hopf_lax,
    lis_count,
    second_order_experiment,
)
from charcurrent.kernel import JumpKernel
from charcurrent.limits import (
    CovKernel,
    gaussian_level_integrals,
    gaussian_level_integrals_quadrature,
    sample_limit_process,
    sigma_squares,
)
from charcurrent.profiles import packed_step, gaussian_bump, linear, smoothstep
from charcurrent.rng import TAG_WALKS, stream
from charcurrent.stats import (
    EnsembleSummary,
    covariance_report,
    hydro_error,
    independence_test,
    scaling_exponent,
    transported_fluctuation_check,
)
from charcurrent.walks import SimConfig, simulate_brownian_current, simulate_replicate

KERNEL = JumpKernel.from_pairs([(1, 0.7), (-1, 0.3)])  # b = 0.4, kappa2 = 1


def report(num: int, name: str, ok: bool, details: str) -> None:
    print(f"ACCEPTANCE {num:02d} {name}: {'PASS' if ok else 'FAIL'} ({details})")
    assert ok, f"criterion {num} {name}: {details}"


def run_ensemble(cfg: SimConfig, seed: int, reps: int) -> tuple[EnsembleSummary, list]:
    summary = EnsembleSummary(cfg.n, cfg.base_points, cfg.time_grid)
    heights = []
    for r in range(reps):
        path = simulate_replicate(cfg, stream(seed, TAG_WALKS, cfg.n, r))
        summary.accumulate(path)
        if path.heights is not None:
            heights.append(path.heights)
    return summary, heights


def test_criterion_01_equilibrium_variance():
    # Poisson density 1, n = 1600, R = 10^4: Var(n^{-1/4} Y(1)) within 5%
    # of sqrt(2/pi)
    cfg = SimConfig(1600, KERNEL, linear(1.0), "poisson", (1.0,), (0.0,))
    summary, _ = run_ensemble(cfg, seed=101, reps=10_000)
    var = summary.scaled_cov()[0, 0]
    target = math.sqrt(2.0 / math.pi)
    rel = abs(var / target - 1.0)
    report(1, "equilibrium-variance", rel < 0.05,
           f"Var = {var:.4f}, target {target:.4f}, rel err {rel:.2%}, R = {summary.replicates}")


def test_criterion_02_full_covariance():
    # three increment-variance regimes, grid {0.5, 1, 2}: every covariance
    # cell within 3 jackknife SEs, at most 1 of 18 beyond
    grid = (0.5, 1.0, 2.0)
    regimes = (("binomial", 0.5), ("poisson", 1.0), ("mixture", 2.0))
    exceed, total, worst = 0, 0, 0.0
    for law, v0 in regimes:
        prof = linear(1.0, v0=v0)
        cfg = SimConfig(1600, KERNEL, prof, law, grid, (0.0,))
        summary, _ = run_ensemble(cfg, seed=102, reps=2500)
        kern = CovKernel.general(1.0, v0, KERNEL.second_moment)
        rows = covariance_report(summary, kern)
        total += len(rows)
        exceed += sum(1 for r in rows if abs(r.z) > 3.0)
        worst = max(worst, max(abs(r.z) for r in rows))
    report(2, "full-covariance", exceed <= 1 and total == 18,
           f"{exceed}/{total} cells beyond 3 SE, worst |z| = {worst:.2f}")


def test_criterion_03_deterministic_ic():
    # staircase data u0(y) = y at n = 1600: Var(n^{-1/4} Y(t)) within
    # 3 SE of sqrt(kappa2 / 2 pi) sqrt(2 t)
    grid = (0.5, 1.0, 2.0)
    cfg = SimConfig(1600, KERNEL, linear(1.0), "floor", grid, (0.0,))
    summary, _ = run_ensemble(cfg, seed=103, reps=3000)
    kern = CovKernel.deterministic_ic(1.0, KERNEL.second_moment)
    emp = summary.scaled_cov()
    se = summary.scaled_cov_se()
    zs = []
    for i, t in enumerate(grid):
        c = summary.cell(0, i)
        target = math.sqrt(KERNEL.second_moment / (2 * math.pi)) * math.sqrt(2 * t)
        assert target == pytest.approx(kern.cov(t, t), abs=1e-12)
        zs.append((emp[c, c] - target) / se[c, c])
    ok = all(abs(z) <= 3.0 for z in zs)
    report(3, "deterministic-ic-variance", ok,
           f"z-scores {[float(round(z, 2)) for z in zs]} at times {grid}")


def test_criterion_04_scaling_exponent():
    # log SD(Y_n(1)) against log n over {200, 800, 3200}, R = 4000 each:
    # slope in [0.22, 0.28]
    ns = (200, 800, 3200)
    sds = []
    for n in ns:
        cfg = SimConfig(n, KERNEL, linear(1.0), "poisson", (1.0,), (0.0,))
        summary, _ = run_ensemble(cfg, seed=104, reps=4000)
        sds.append(math.sqrt(summary.acc.cov()[0, 0]))
    slope, stderr = scaling_exponent(ns, sds)
    report(4, "scaling-exponent", 0.22 <= slope <= 0.28,
           f"slope = {slope:.4f} +- {stderr:.4f}, SDs = {[round(s, 2) for s in sds]}")


def test_criterion_05_independence():
    # base points 0 and 1 on one shared ensemble at n = 1600: all
    # cross-correlations within 3 SE of zero
    grid = (0.5, 1.0, 2.0)
    cfg = SimConfig(1600, KERNEL, linear(1.0), "poisson", grid, (0.0, 1.0))
    summary, _ = run_ensemble(cfg, seed=105, reps=3000)
    rep = independence_test(summary)
    report(5, "cross-characteristic-independence", rep.max_abs_z <= 3.0,
           f"max |corr| = {rep.max_abs_corr:.4f}, max |corr|/SE = {rep.max_abs_z:.2f} over {len(rep.pairs)} cells")


def test_criterion_06_hydrodynamic_limit():
    # smoothstep height, Poisson increments: height error decays with
    # slope <= -0.4 over n in {400, 1600, 6400}; transported residual SD
    # ratios within 20% of 4^{-1/4}
    x, t = 0.9, 1.0
    ybar = x - KERNEL.drift * t  # 0.5
    prof = smoothstep(0.0, 1.0, 1.0)
    u_val = float(np.asarray(prof.u0(ybar)))
    ns = (400, 1600, 6400)
    errors, summaries = [], []
    for n in ns:
        cfg = SimConfig(n, KERNEL, prof, "poisson", (t,), (ybar,), height_points=(x,))
        summary, heights = run_ensemble(cfg, seed=106, reps=500)
        errors.append(float(np.mean([abs(h[0, 0] / n - u_val) for h in heights])))
        summaries.append(summary)
    slope, stderr = hydro_error(ns, errors)
    check = transported_fluctuation_check(summaries, t)
    ratio_errs = [abs(r / e - 1.0) for r, e in zip(check.ratios, check.expected_ratios)]
    ok = slope <= -0.4 and all(err <= 0.2 for err in ratio_errs)
    report(6, "hydrodynamic-limit", ok,
           f"error slope = {slope:.3f} +- {stderr:.3f}, residual ratios "
           f"{[float(round(r, 3)) for r in check.ratios]} vs {[float(round(e, 3)) for e in check.expected_ratios]}")


def test_criterion_07_brownian_current():
    # lambda = 100, grid {1, 2}: covariance within 3 SE of
    # lambda (sqrt s + sqrt t - sqrt(t - s)) / sqrt(2 pi)
    lam, grid, reps = 100.0, (1.0, 2.0), 4000
    halfwidth = 8.0 * math.sqrt(grid[-1]) + 2.0
    summary = EnsembleSummary(1, (0.0,), grid)
    for r in range(reps):
        summary.accumulate(simulate_brownian_current(lam, 0.0, grid, halfwidth, stream(107, r)))
    kern = CovKernel.brownian(lam)
    emp, se = summary.acc.cov(), summary.acc.cov_jackknife_se()
    zs = []
    for i in range(2):
        for j in range(i, 2):
            zs.append((emp[i, j] - kern.cov(grid[i], grid[j])) / se[i, j])
    report(7, "brownian-current-covariance", all(abs(z) <= 3.0 for z in zs),
           f"z-scores {[float(round(z, 2)) for z in zs]}")


def test_criterion_08_closed_forms():
    # quadrature vs closed forms to 1e-8 on a 7x7 log grid; the two
    # variance functionals agree to 1e-6 on 5 random instances; Gram
    # matrices positive semidefinite on random grids
    grid = np.logspace(-3, 3, 7)
    worst_quad = 0.0
    for s in grid:
        for t in grid:
            a, b = min(s, t), max(s, t)
            cf = gaussian_level_integrals(a, b)
            qd = gaussian_level_integrals_quadrature(a, b)
            worst_quad = max(worst_quad, max(abs(u - v) for u, v in zip(cf, qd)))
    rng = stream(108)
    worst_eq = 0.0
    for _ in range(5):
        n = int(rng.integers(1, 4))
        theta = rng.normal(size=n)
        times = np.sort(rng.uniform(0.1, 3.0, n)) + np.arange(n) * 0.1
        s1, s2 = sigma_squares(theta, times, rng.uniform(0.2, 2), rng.uniform(0, 2), rng.uniform(0.5, 2))
        worst_eq = max(worst_eq, abs(s1 - s2))
    min_eig_rel = np.inf
    for _ in range(10):
        size = int(rng.integers(2, 64))
        times = np.sort(rng.uniform(0.0, 8.0, size))
        kern = CovKernel.general(rng.uniform(0, 2), rng.uniform(0, 2), rng.uniform(0.2, 3))
        gram = kern.gram(times)
        min_eig_rel = min(min_eig_rel, np.linalg.eigvalsh(gram).min() / max(np.trace(gram), 1e-30))
    ok = worst_quad < 1e-8 and worst_eq < 1e-6 and min_eig_rel >= -1e-9
    report(8, "closed-forms", ok,
           f"worst quad diff {worst_quad:.2e}, worst sigma1-sigma2 {worst_eq:.2e}, min eig/trace {min_eig_rel:.2e}")


def test_criterion_09_fbm_sampler():
    # 10^5 draws on an 8-point grid: covariance entrywise within 2%;
    # Var Z(4) / Var Z(1) within 3% of 2
    kern = CovKernel.equilibrium(1.0, 1.0)
    grid = (1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 5.0)
    draws = sample_limit_process(kern, grid, stream(109), size=100_000)
    emp = np.cov(draws, rowvar=False, bias=True)
    theo = kern.gram(grid)
    rel = np.abs(emp - theo) / theo
    i1, i4 = grid.index(1.0), grid.index(4.0)
    ratio = emp[i4, i4] / emp[i1, i1]
    ok = float(rel.max()) < 0.02 and abs(ratio / 2.0 - 1.0) < 0.03
    report(9, "fbm-sampler", ok,
           f"worst entry rel err {rel.max():.2%}, Var Z(4)/Var Z(1) = {ratio:.4f}")


def test_criterion_10_pathwise_identity():
    # particle-count and height-difference forms of the current agree
    # exactly in every replicate (the simulator raises on any violation);
    # 10^3 replicates across kernels, laws, base points and grids
    configs = [
        SimConfig(64, KERNEL, linear(1.0), "poisson", (0.3, 0.9, 1.7), (0.0, 0.5)),
        SimConfig(50, JumpKernel.from_pairs([(-2, 0.3), (1, 0.4), (3, 0.3)]),
                  gaussian_bump(0.2, 0.6, 1.5, 0.4), "mixture", (0.5, 1.5), (-0.4, 0.7)),
        SimConfig(80, JumpKernel.from_pairs([(-1, 0.8), (2, 0.2)]), linear(2.0), "floor", (1.0, 2.0), (0.2,)),
        SimConfig(64, KERNEL, linear(1.0, v0=0.5), "binomial", (0.25, 1.25), (0.0,)),
        SimConfig(40, JumpKernel.from_pairs([(-3, 0.5), (-1, 0.5)]), linear(1.5), "poisson", (0.8,), (0.1,)),
    ]
    count = 0
    for idx, cfg in enumerate(configs):
        for r in range(200):
            simulate_replicate(cfg, stream(110, idx, r))
            count += 1
    report(10, "pathwise-identity", count == 1000, f"{count} replicates, zero violations")


def test_criterion_11_hammersley_lis():
    # equality with the O(N^2) DP oracle on 10^3 random instances up to
    # N = 200; mean LIS / sqrt(N) within 3% of 2 at N = 10^6
    from test_hammersley import lis_dp

    rng = stream(111)
    mismatches = 0
    for _ in range(1000):
        n = int(rng.integers(0, 201))
        xs, ys = rng.random(n), rng.random(n)
        if lis_count(xs, ys) != lis_dp(xs, ys):
            mismatches += 1
    big = 1_000_000
    val = lis_count(rng.random(big), rng.random(big)) / math.sqrt(big)
    ok = mismatches == 0 and abs(val / 2.0 - 1.0) < 0.03
    report(11, "hammersley-lis", ok,
           f"{mismatches} oracle mismatches in 1000 instances; LIS/sqrt(N) = {val:.4f} at N = 10^6")


def test_criterion_12_hammersley_tightness():
    # packed-step data, n in {250, 500, 1000}, R = 500: SD(Y)/n^{1/3}
    # within factor 1.5 across n; 99th percentile of |Y|/(n^{1/3} log n)
    # non-increasing within 2 bootstrap SEs
    ns = (250, 500, 1000)
    res = second_order_experiment(packed_step(), 1.0, 1.0, ns, replicates=500, seed=112)
    sds = res.sd_over_cube_root()
    sd_ratio = max(sds) / min(sds)
    q = 0.99
    p99 = res.normalized_quantile(q)
    boot_rng = stream(112, 99)
    ses = [bootstrap_percentile_se(np.abs(v) / norm, q, boot_rng)
           for v, norm in zip(res.values, res.normalizers)]
    mono = all(p99[i + 1] <= p99[i] + 2.0 * math.hypot(ses[i], ses[i + 1]) for i in range(len(ns) - 1))
    ok = sd_ratio <= 1.5 and mono
    report(12, "hammersley-tightness", ok,
           f"SD/n^(1/3) = {[round(s, 3) for s in sds]} (ratio {sd_ratio:.2f}); "
           f"q99 = {[round(p, 3) for p in p99]} boot SEs {[round(s, 3) for s in ses]}")


def test_criterion_13_hopf_lax():
    # solver matches a dense-grid oracle to 1e-8 in value on 20 random
    # profiles; u0(y) = y gives u = x - t; the quadratic-growth constant
    # is 1/(4t) on exactly quadratic cases
    rng = stream(113)
    worst = 0.0
    for i in range(20):
        form = i % 3
        if form == 0:
            prof = linear(float(rng.uniform(0.1, 2.0)))
        elif form == 1:
            prof = smoothstep(float(rng.uniform(-1, 0)), float(rng.uniform(0.5, 2)), float(rng.uniform(0.5, 3)))
        else:
            prof = gaussian_bump(float(rng.uniform(-1, 1)), float(rng.uniform(0.3, 1)),
                                 float(rng.uniform(0.2, 2)), float(rng.uniform(0, 1)))
        x = float(rng.uniform(-1, 2))
        t = float(rng.uniform(0.1, 2.0))
        sol = hopf_lax(prof, x, t)
        span = 4 * t * prof.rho_max + 4 * math.sqrt(t) + 1
        ys = np.linspace(min(x, prof.domain_sup) - span, min(x, prof.domain_sup), 1_000_001)
        dense = float(np.min(np.asarray(prof.u0(ys)) + (x - ys) ** 2 / (4 * t)))
        worst = max(worst, abs(sol.u - dense))
    exact_errs = []
    c1_errs = []
    for x, t in ((1.0, 1.0), (0.3, 0.5), (2.0, 1.7)):
        sol = hopf_lax(linear(1.0), x, t)
        exact_errs.append(abs(sol.u - (x - t)))
        c1, ok_e = check_assumption_e(linear(1.0), x, t)
        assert ok_e
        c1_errs.append(abs(c1 - 1.0 / (4 * t)))
    ok = worst < 1e-8 and max(exact_errs) < 1e-10 and max(c1_errs) < 1e-6
    report(13, "hopf-lax", ok,
           f"worst oracle diff {worst:.2e}; linear-case u err {max(exact_errs):.2e}; c1 err {max(c1_errs):.2e}")
