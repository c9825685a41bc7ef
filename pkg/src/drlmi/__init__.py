"""Distributionally robust analysis and synthesis of discrete-time LTI systems.

The disturbance is only known to lie in a Gelbrich ball around a nominal
covariance.  Worst-case stationary output variance is computed by LMI
certificates (with the moment relaxation as dual), and dynamic
output-feedback controllers minimising it are designed by a convex change of
variables.

Modules
-------
matops     small dense linear algebra helpers
model      plants, controllers, closed loops, H2 norm, simulation
ambiguity  ambiguity sets and the Gelbrich distance
sdpcore    LMI modelling layer on top of Clarabel
analysis   worst-case analysis, duality and worst-case policies
synthesis  distributionally robust and H2 controller design
io         JSON problem, controller and result files
cli        the ``drlmi`` command
"""

from .ambiguity import AmbiguitySpec, Kind, gelbrich_distance, optimal_transport_plan
from .analysis import (
    analyze,
    duality_gap,
    extract_worst_case_policy,
    solve_moment_relaxation,
    worst_case_output_variances,
)
from .errors import (
    DrlmiError,
    IllConditioned,
    Infeasible,
    InvalidInput,
    NotPd,
    NotPsd,
    SolverFailure,
    UnstableSystem,
)
from .model import ClosedLoop, Controller, PlantRealization, close_loop, weighted_h2_norm_sq
from .sdpcore import SolverOptions
from .synthesis import synthesize, synthesize_h2

__version__ = "0.1.0"
