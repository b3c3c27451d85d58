import numpy as np
import pytest

from charcurrent.profiles import (
    InitialCondition,
    packed_step,
    draw_family,
    flat,
    gaussian_bump,
    gen_deterministic_ic,
    gen_random_ic,
    linear,
    sigma0,
    smoothstep,
)
from charcurrent.rng import stream


class TestProfileForms:
    @pytest.mark.parametrize("prof", [linear(0.8), smoothstep(0.0, 1.0, 2.0), gaussian_bump(0.3, 0.5, 1.2, 0.1)])
    def test_u0_anchored_and_monotone(self, prof):
        ys = np.linspace(-2, 3, 501)
        u = np.asarray(prof.u0(ys))
        assert prof.u0(0.0) == pytest.approx(0.0, abs=1e-14)
        assert np.all(np.diff(u) >= -1e-12)

    @pytest.mark.parametrize("prof", [linear(0.8), smoothstep(0.0, 1.0, 2.0), gaussian_bump(0.3, 0.5, 1.2, 0.1)])
    def test_rho0_is_exact_derivative(self, prof):
        # centered differences of u0 reproduce rho0
        ys = np.linspace(-1.5, 2.5, 101)
        h = 1e-6
        numeric = (np.asarray(prof.u0(ys + h)) - np.asarray(prof.u0(ys - h))) / (2 * h)
        assert numeric == pytest.approx(np.asarray(prof.rho0(ys)), abs=1e-6)

    @pytest.mark.parametrize("prof", [linear(0.8), smoothstep(0.0, 1.0, 2.0), gaussian_bump(0.3, 0.5, 1.2, 0.1)])
    def test_rho_max_is_supremum(self, prof):
        ys = np.linspace(-5, 6, 20_001)
        assert np.max(np.asarray(prof.rho0(ys))) <= prof.rho_max + 1e-12

    def test_nonnegative_profiles(self):
        prof = gaussian_bump(0.0, 1.0, 2.0, 0.5)
        ys = np.linspace(-4, 4, 101)
        assert np.all(np.asarray(prof.rho0(ys)) >= 0)
        assert np.all(np.asarray(prof.v0(ys)) >= 0)

    def test_packed_step(self):
        prof = packed_step()
        assert prof.u0(0.0) == 0.0
        assert prof.u0(-3.0) == 0.0
        assert prof.u0(0.5) == np.inf
        assert prof.domain_sup == 0.0


class TestInitialCondition:
    def test_sigma0_normalization(self):
        ic = InitialCondition(1, np.array([1, 0, 2]))
        assert sigma0(ic, 1) == 1
        assert sigma0(ic, 3) == 3

    def test_sigma0_zero_at_origin(self):
        ic = InitialCondition(-2, np.array([4, 1, 1, 5]))
        assert ic.sigma0(0) == 0

    def test_sigma0_negative_side(self):
        ic = InitialCondition(-1, np.array([1, 1]))
        assert ic.sigma0(-1) - ic.sigma0(-1) == 0
        # occupations at sites -1, 0; sigma0(-2) = -(eta(-1)+eta(0)) = -2
        ic2 = InitialCondition(-2, np.array([0, 1, 1]))
        assert ic2.sigma0(-2) == -2

    def test_sigma0_out_of_window(self):
        ic = InitialCondition(0, np.array([1, 2]))
        with pytest.raises(IndexError):
            ic.sigma0(5)
        with pytest.raises(IndexError):
            ic.occupation(-1)

    def test_increment_reconstruction_exact(self):
        rng = stream(10)
        counts = rng.poisson(2.0, 50)
        ic = InitialCondition(-20, counts)
        for x in range(-19, 30):
            assert ic.sigma0(x) - ic.sigma0(x - 1) == ic.occupation(x)

    def test_rejects_negative_counts(self):
        with pytest.raises(ValueError):
            InitialCondition(0, np.array([1, -1]))

    def test_particle_starts(self):
        ic = InitialCondition(3, np.array([2, 0, 1]))
        assert ic.particle_starts().tolist() == [3, 3, 5]

    def test_csv_dump(self, tmp_path):
        ic = InitialCondition(0, np.array([1, 2]))
        path = tmp_path / "ic.csv"
        ic.to_csv(path)
        assert path.read_text() == "site,count\n0,1\n1,2\n"


class TestDeterministicIC:
    def test_unit_slope_staircase(self):
        ic = gen_deterministic_ic(linear(1.0), 10, (1, 10))
        assert ic.counts.tolist() == [1] * 10

    def test_flat_profile_empty(self):
        ic = gen_deterministic_ic(flat(), 10, (-5, 5))
        assert ic.total() == 0

    def test_half_slope_floor_pattern(self):
        # u0(y) = y/2, n = 10: occupations floor(m/2) - floor((m-1)/2)
        ic = gen_deterministic_ic(linear(0.5), 10, (1, 4))
        assert ic.counts.tolist() == [0, 1, 0, 1]

    def test_partial_sums_telescope(self):
        prof = smoothstep(0.0, 1.0, 3.0)
        n = 37
        ic = gen_deterministic_ic(prof, n, (1, 60))
        for x in (5, 20, 41, 60):
            stair = int(np.floor(n * float(prof.u0(x / n)) + 1e-9))
            assert ic.sigma0_clamped(x) == stair

    def test_window_decomposition_invariant(self):
        # generating on two half windows and concatenating equals one window
        prof = gaussian_bump(0.5, 0.4, 2.0, 0.3)
        n = 23
        whole = gen_deterministic_ic(prof, n, (-30, 30))
        left = gen_deterministic_ic(prof, n, (-30, 0))
        right = gen_deterministic_ic(prof, n, (1, 30))
        assert whole.counts.tolist() == left.counts.tolist() + right.counts.tolist()

    def test_rejects_decreasing_u0(self):
        from charcurrent.profiles import Profile

        bad = Profile(lambda y: -np.asarray(y, float), lambda y: np.full_like(np.asarray(y, float), -1.0),
                      lambda y: np.zeros_like(np.asarray(y, float)), rho_max=0.0)
        with pytest.raises(ValueError):
            gen_deterministic_ic(bad, 10, (0, 5))


class TestRandomIC:
    def test_poisson_family_moments(self):
        prof = linear(1.0)
        ic = gen_random_ic(prof, 100, (-50_000, 49_999), "poisson", stream(11))
        counts = ic.counts
        se_mean = 1.0 / np.sqrt(counts.size)
        assert abs(counts.mean() - 1.0) < 3 * se_mean
        assert counts.var() == pytest.approx(1.0, rel=0.05)

    def test_zero_density_all_empty(self):
        ic = gen_random_ic(flat(), 100, (0, 999), "poisson", stream(12))
        assert ic.total() == 0

    def test_mixture_family_moments(self):
        # mean 1, variance 2 via two-Poisson mixture
        prof = linear(1.0, v0=2.0)
        ic = gen_random_ic(prof, 100, (0, 99_999), "mixture", stream(13))
        counts = ic.counts
        assert abs(counts.mean() - 1.0) < 3 * np.sqrt(2.0 / counts.size)
        assert counts.var() == pytest.approx(2.0, rel=0.05)

    def test_binomial_family_moments(self):
        prof = linear(1.0, v0=0.5)
        ic = gen_random_ic(prof, 100, (0, 99_999), "binomial", stream(14))
        counts = ic.counts
        assert abs(counts.mean() - 1.0) < 3 * np.sqrt(0.5 / counts.size)
        assert counts.var() == pytest.approx(0.5, rel=0.05)
        assert counts.max() <= 2  # N = 2 trials exactly

    def test_deterministic_family(self):
        prof = linear(2.0, v0=0.0)
        ic = gen_random_ic(prof, 100, (0, 9), "deterministic", stream(15))
        assert ic.counts.tolist() == [2] * 10

    def test_poisson_rejects_mismatched_variance(self):
        prof = linear(1.0, v0=2.0)
        with pytest.raises(ValueError):
            gen_random_ic(prof, 100, (0, 9), "poisson", stream(16))

    def test_mixture_rejects_small_variance(self):
        with pytest.raises(ValueError):
            draw_family("mixture", np.array([1.0]), np.array([0.5]), stream(17))

    def test_binomial_rejects_large_variance(self):
        with pytest.raises(ValueError):
            draw_family("binomial", np.array([1.0]), np.array([1.5]), stream(18))

    def test_deterministic_rejects_fractional_mean(self):
        with pytest.raises(ValueError):
            draw_family("deterministic", np.array([0.5]), np.array([0.0]), stream(19))

    def test_unknown_law(self):
        with pytest.raises(ValueError):
            draw_family("zeta", np.array([1.0]), np.array([1.0]), stream(20))

    def test_regional_moments_track_profile(self):
        # empirical mean/variance per macroscopic region of width 0.1
        # match rho0/v0 at region centers within sampling error
        prof = smoothstep(0.0, 1.0, 1.0)
        n = 2000
        ic = gen_random_ic(prof, n, (0, n - 1), "poisson", stream(21))
        sites = np.arange(0, n)
        for lo in np.arange(0.2, 0.8, 0.1):
            sel = (sites / n >= lo) & (sites / n < lo + 0.1)
            region = ic.counts[sel]
            center = float(np.asarray(prof.rho0(lo + 0.05)))
            se = np.sqrt(max(center, 0.05) / region.size)
            # rho0 varies across the region; allow its spread plus 3 SE
            spread = abs(float(np.asarray(prof.rho0(lo + 0.1))) - float(np.asarray(prof.rho0(lo))))
            assert abs(region.mean() - center) < 3 * se + spread

    def test_sixth_moments_finite_families(self):
        # all families produce bounded sixth moments at desk scale
        rng = stream(22)
        for law, v in (("poisson", 1.0), ("mixture", 2.0), ("binomial", 0.5)):
            counts = draw_family(law, np.full(200_000, 1.0), np.full(200_000, v), rng)
            assert np.mean(counts.astype(float) ** 6) < 1e4
