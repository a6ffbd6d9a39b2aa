"""Numerical lab for nonlinear p-sub-Laplacian heat problems on stratified groups."""

from .geometry import GroupSpec, Grid, make_euclidean, make_heisenberg, parse_group
from .solver import Outcome, ProblemError, ProblemSpec, SolverConfig, SolveTrace, solve
from .barriers import RegimeError, blowup_profile, certify_barrier, certify_profile
from .harness import (
    ExperimentConfig,
    ScenarioResult,
    check_ordering,
    lemma_gap,
    run_blowup,
    run_boundedness,
    run_energy_blowup,
    run_scenario,
)

__version__ = "0.1.0"
