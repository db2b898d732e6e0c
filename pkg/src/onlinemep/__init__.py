"""Online distributed mirror-descent primal-dual algorithms for mixed equilibrium problems."""

from .engine import RunTrace, StepSchedule, run_exact, run_stochastic
from .geometry import KL, Ball, Box, Euclidean, Mahalanobis, Product, Simplex, mirror_argmin
from .graph import GraphSequence, WeightedDigraph, mixing_certificate, transition_product
from .metrics import certificate_check, compute_metrics, dynamic_regret, violation
from .oracle import NoiseModel, SolutionPath, solve_instantaneous
from .problem import MepInstance, estimate_bounds, example1, example2

__all__ = [
    "Ball", "Box", "Euclidean", "GraphSequence", "KL", "Mahalanobis", "MepInstance",
    "NoiseModel", "Product", "RunTrace", "Simplex", "SolutionPath", "StepSchedule",
    "WeightedDigraph", "certificate_check", "compute_metrics", "dynamic_regret",
    "estimate_bounds", "example1", "example2", "mirror_argmin", "mixing_certificate",
    "run_exact", "run_stochastic", "solve_instantaneous", "transition_product", "violation",
]
