"""Evolution inclusions with maximal monotone operators: simulation,
regularization, sensitivities and optimal control of loads."""

from .control import (
    OptimizeOptions,
    OptimizeReport,
    RegSchedule,
    continuation,
    evaluate_objective,
    growth_check,
    optimize,
    riesz_h1,
    ssc_verify,
)
from .errors import *  # noqa: F401,F403
from .evolution import (
    ProblemData,
    TimeGrid,
    Trajectory,
    cnorm,
    h1norm,
    h1seminorm,
    integrate_reference,
    integrate_smoothed,
    integrate_yosida,
    l2norm,
)
from .flow_rule import Box, Linear, RegParams, VonMises
from .homogenized import PlasticityData, assemble, make_toy_instance, recover_state
from .linalg import LinearMap, SymPosDefMap, min_eig_estimate, solve_tridiagonal
from .objective import ObjectiveSpec
from .sensitivity import (
    HessianForm,
    hessian_quadratic_form,
    reduced_gradient,
    solve_adjoint,
    solve_linearized,
    solve_second_order,
    value_and_gradient,
)

__version__ = "0.1.0"
