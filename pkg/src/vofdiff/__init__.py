"""Fast implicit finite-difference solvers for variable-order time-fractional
mobile-immobile diffusion, with L1, fast L1, and robust fast L1 time stepping.
"""

from .core import (
    OdeProblem,
    ProblemSpec,
    SolutionField,
    SpatialGrid,
    TimeGrid,
    VoOrderProfile,
    alpha_profile,
)
from .esa import EsaConfig, EsaDivergenceError, EsaQuadrature, build_quadrature, kernel_eval, step_weights
from .gammafn import gamma
from .operators import (
    FastL1Operator,
    KernelWeights,
    L1Operator,
    RobustFastL1Operator,
    discrete_kernel_weights,
    make_operator,
)
from .schemes import (
    SolveResult,
    SpatialOperator,
    StepSystem,
    ode_step,
    pde_step,
    solve_ode,
    solve_pde,
    thomas_solve,
)

__version__ = "0.1.0"

__all__ = [
    "gamma",
    "TimeGrid",
    "SpatialGrid",
    "alpha_profile",
    "VoOrderProfile",
    "ProblemSpec",
    "OdeProblem",
    "SolutionField",
    "EsaDivergenceError",
    "EsaConfig",
    "EsaQuadrature",
    "build_quadrature",
    "step_weights",
    "kernel_eval",
    "L1Operator",
    "FastL1Operator",
    "RobustFastL1Operator",
    "KernelWeights",
    "discrete_kernel_weights",
    "make_operator",
    "SpatialOperator",
    "StepSystem",
    "thomas_solve",
    "ode_step",
    "pde_step",
    "solve_ode",
    "solve_pde",
    "SolveResult",
    "__version__",
]
