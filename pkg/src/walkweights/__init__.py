"""Occupation times of absorbing random walks on vertex-weighted graphs.

The library computes expected visit counts three independent ways
(Green's-function formula, fixed-point solve, seeded Monte Carlo),
reconstructs vertex weights from target occupation times by
analytic-gradient steepest descent, and decides/constructs exact solutions
on paths, complete graphs, and pendant/twin-reducible graphs.
"""

from . import errors
from .graph_core import (
    GraphInstance,
    GraphMetrics,
    WeightAssignment,
    build_graph,
    derived_weights,
    graph_metrics,
    instance_from_dict,
    instance_to_dict,
    laplacians,
    load_instance,
    save_instance,
    transition_matrix,
)
from .occupation import (
    OccupationVector,
    WalkTrace,
    empirical_occupation,
    expected_hitting_time,
    expected_occupation_fixed_point,
    expected_occupation_green,
    make_walk_trace,
    occupation_matrix,
    simulate_walk,
)
from .reconstruct import (
    Backtracking,
    FixedStep,
    GradientReport,
    ReconstructionConfig,
    ReconstructionResult,
    cost,
    expertise_correlation,
    finite_difference_gradient,
    green_derivative,
    occupation_gradient,
    reconstruct_weights,
    restrict_support,
    weight_jacobians,
)
from .solvability import (
    PathDecomposition,
    RelintResult,
    TraceHull,
    TwinSplit,
    detect_family,
    enumerate_proper_walks,
    extend_pendant,
    hull_dimension,
    path_decompose,
    reduce_twins,
    relint_membership,
    solve_complete,
    solve_path,
    solve_reducible,
    trace_hull,
    trace_vector,
)
from .spectral_green import (
    SpectralData,
    eigendecompose,
    greens_functions,
    pseudoinverse_derivative,
    spectral_data,
    symmetric_pseudoinverse,
)

__version__ = "0.1.0"
