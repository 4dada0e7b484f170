"""Blow-up profiles for -Laplace u = lambda f u exp(u^2) in the plane.

Modules
-------
bubble   the standard bubble, the limit profile U and the corrector phi0
greenfn  Dirichlet Green functions and regular parts
config   the location system for concentration points
radial   radial solutions on the disk by shooting
"""

__version__ = "0.1.0"

from .bubble import (
    BubbleParams,
    BubbleSolution,
    KernelSolution,
    bubble_expansion,
    expansion_report,
    integrate_bubble,
    kernel_solve,
    limit_profile_U,
    limit_profile_mass,
    phi0,
    phi0_derivative,
    r_of_t,
    t_of_r,
)
from .config import (
    Configuration,
    ResidualReport,
    SolveOptions,
    WeightField,
    phi_functional,
    phi_gradient_check,
    random_configuration,
    residual,
    solve_configuration,
)
from .errors import *  # noqa: F401,F403
from .greenfn import (
    DomainSpec,
    GreenEvaluator,
    grad_diag_regular_part,
    grad_green,
    green_disk,
    near_boundary_asymptotics,
    parse_domain,
    regular_part,
)
from .profile import ProfileTable
from .radial import (
    BranchPoint,
    BranchTable,
    compare_to_bubble,
    eigenvalue_bound,
    predicted_mass_law,
    shoot_radial,
    solve_disk,
    trace_branch,
)
