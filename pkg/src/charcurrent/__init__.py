"""Simulation and verification toolkit for current fluctuations across
transport characteristics.

The package simulates two one-dimensional particle systems exactly:

* a growth interface whose height increments are carried by independent
  continuous-time random walks on the integer lattice, and
* Hammersley-type dynamics realized through increasing paths of planar
  Poisson points.

It measures the net particle current across characteristics of the
macroscopic transport equation, and checks the measured fluctuation
statistics (variances, covariances, scaling exponents, tail quantiles)
against closed-form Gaussian limit covariances, including the
fractional-Brownian-motion case with Hurst index 1/4.
"""

from .kernel import JumpKernel, RateFunction, moments, sample_displacement, truncation_bias_bound
from .profiles import (
    InitialCondition,
    Profile,
    packed_step,
    flat,
    gaussian_bump,
    gen_deterministic_ic,
    gen_random_ic,
    linear,
    sigma0,
    smoothstep,
)
from .limits import CovKernel, gaussian_level_integrals, sample_limit_process, sigma_squares, transport_solution
from .walks import (
    CurrentPath,
    ReplicateState,
    SimConfig,
    height_at,
    occupation_field,
    run_replicate,
    simulate_brownian_current,
    simulate_replicate,
)
from .stats import (
    EnsembleSummary,
    MomentAccumulator,
    hydro_error,
    independence_test,
    scaling_exponent,
    transported_fluctuation_check,
)
from .hammersley import (
    HammersleyState,
    HopfLaxSolution,
    PoissonField,
    check_assumption_e,
    evolve,
    gamma,
    hopf_lax,
    lis_count,
    second_order_experiment,
)
from .rng import stream

__all__ = [
    "JumpKernel",
    "RateFunction",
    "moments",
    "sample_displacement",
    "truncation_bias_bound",
    "Profile",
    "InitialCondition",
    "flat",
    "linear",
    "smoothstep",
    "gaussian_bump",
    "packed_step",
    "gen_random_ic",
    "gen_deterministic_ic",
    "sigma0",
    "CovKernel",
    "gaussian_level_integrals",
    "sigma_squares",
    "transport_solution",
    "sample_limit_process",
    "SimConfig",
    "CurrentPath",
    "ReplicateState",
    "run_replicate",
    "simulate_replicate",
    "height_at",
    "occupation_field",
    "simulate_brownian_current",
    "MomentAccumulator",
    "EnsembleSummary",
    "scaling_exponent",
    "independence_test",
    "hydro_error",
    "transported_fluctuation_check",
    "PoissonField",
    "HammersleyState",
    "HopfLaxSolution",
    "lis_count",
    "gamma",
    "evolve",
    "hopf_lax",
    "check_assumption_e",
    "second_order_experiment",
    "stream",
]

__version__ = "0.1.0"
