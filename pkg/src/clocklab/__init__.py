"""Simulation and analysis toolkit for feedback-disciplined clocks.

Modules
-------
noise       oscillator noise models and exact cycle-increment sampling
quantum     states, POVMs, quantum/classical Fisher information
estimation  priors, outcome families, single-shot estimation bounds
clockloop   synchronization-loop simulator and stationary statistics
analytic    exact Gaussian-model results, stationary bounds, optimizer
cli         config-driven experiment runner (`clocklab run <config>`)
"""

from . import analytic, cli, clockloop, estimation, noise, quantum
from .analytic import (
    GaussianClockParams,
    OptimizerInput,
    cwfrw_bound,
    gst_bound,
    optimal_interrogation_time,
    stationary_clock_diffusion,
    stationary_variance,
)
from .clockloop import (
    ClockSpec,
    GaussianReference,
    InstabilityError,
    RamseyReference,
    StationaryReport,
    Trajectory,
    derive_stream,
    pool_stats,
    run_ensemble,
    run_trajectory,
    stationary_stats,
)
from .estimation import (
    Estimator,
    GaussianPrior,
    GridPrior,
    cr_bound_correlated,
    cr_bound_unbiased,
    cr_bound_zeta,
    estimation_cost,
    fisher_information,
    optimal_estimator,
    van_trees_bound,
)
from .noise import Brownian, CycleIncrement, NoiseMoments, PowerLawAdditive
from .quantum import Povm, QuantumFamily, qfi, qfi_hamiltonian, ramsey_family

__version__ = "0.1.0"

__all__ = [
    "analytic",
    "cli",
    "clockloop",
    "estimation",
    "noise",
    "quantum",
    "GaussianClockParams",
    "OptimizerInput",
    "cwfrw_bound",
    "gst_bound",
    "optimal_interrogation_time",
    "stationary_clock_diffusion",
    "stationary_variance",
    "ClockSpec",
    "GaussianReference",
    "InstabilityError",
    "RamseyReference",
    "StationaryReport",
    "Trajectory",
    "derive_stream",
    "pool_stats",
    "run_ensemble",
    "run_trajectory",
    "stationary_stats",
    "Estimator",
    "GaussianPrior",
    "GridPrior",
    "cr_bound_correlated",
    "cr_bound_unbiased",
    "cr_bound_zeta",
    "estimation_cost",
    "fisher_information",
    "optimal_estimator",
    "van_trees_bound",
    "Brownian",
    "CycleIncrement",
    "NoiseMoments",
    "PowerLawAdditive",
    "Povm",
    "QuantumFamily",
    "qfi",
    "qfi_hamiltonian",
    "ramsey_family",
    "__version__",
]
