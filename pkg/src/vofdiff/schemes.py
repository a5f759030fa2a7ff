"""Implicit finite-difference time steppers built on the Caputo operators.

Each time level solves

    (1/dt + capacity * s_k) u^k - Lap u^k = u^{k-1}/dt - capacity * (explicit
    history part) + f^k,

where s_k is the operator's implicit coefficient (identical for all three
schemes) and Lap is the conservative three-point stencil.  The per-step
system is tridiagonal and strictly diagonally dominant, so a pivot-free
Thomas elimination solves it.  An ODE variant drops the spatial operator.

A solve is sequential in time (hard data dependence); distinct solves share
no mutable state and may run concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import OdeProblem, ProblemSpec, SolutionField, SpatialGrid, TimeGrid, VoOrderProfile
from .operators import make_operator

__all__ = [
    "SpatialOperator",
    "StepSystem",
    "thomas_solve",
    "ode_step",
    "pde_step",
    "solve_ode",
    "solve_pde",
    "SolveResult",
]


def _space_values(fn: Callable, xs: np.ndarray) -> np.ndarray:
    """Evaluate a function of x over the nodes, vectorized when possible."""
    try:
        out = np.asarray(fn(xs), dtype=float)
        if out.shape == xs.shape:
            return out
        if out.ndim == 0:
            return np.full(xs.shape, float(out))
    except (TypeError, ValueError):
        pass
    return np.array([float(fn(x)) for x in xs])


def _source_evaluator(fn, xs: np.ndarray):
    """Build t -> f(x_j, t) over the interior nodes; None means f == 0."""
    if fn is None:
        zero = np.zeros(xs.shape[0])
        return lambda t: zero

    def evaluate(t: float) -> np.ndarray:
        try:
            out = np.asarray(fn(xs, t), dtype=float)
            if out.shape == xs.shape:
                return out
            if out.ndim == 0:
                return np.full(xs.shape, float(out))
        except (TypeError, ValueError):
            pass
        return np.array([float(fn(x, t)) for x in xs])

    return evaluate


@dataclass(frozen=True, eq=False)
class SpatialOperator:
    """Three-point stencil for (p(x) u_x)_x at the interior nodes j = 1..m-1."""

    sub: np.ndarray  # coefficient of u_{j-1}
    main: np.ndarray  # coefficient of u_j (negative)
    sup: np.ndarray  # coefficient of u_{j+1}

    @classmethod
    def from_grid(cls, grid: SpatialGrid, diffusivity: Callable[[float], float]) -> "SpatialOperator":
        p_mid = _space_values(diffusivity, grid.midpoints())  # p_{j+1/2}, j = 0..m-1
        dx2 = grid.dx * grid.dx
        return cls(
            sub=p_mid[:-1] / dx2,
            main=-(p_mid[1:] + p_mid[:-1]) / dx2,
            sup=p_mid[1:] / dx2,
        )

    def apply(self, u_full: np.ndarray) -> np.ndarray:
        """Stencil applied to a full row (boundaries included); returns interior values."""
        return self.sub * u_full[:-2] + self.main * u_full[1:-1] + self.sup * u_full[2:]


@dataclass(frozen=True, eq=False)
class StepSystem:
    """Tridiagonal system for one implicit step; lower[0] and upper[-1] are unused."""

    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray
    rhs: np.ndarray

    def __post_init__(self):
        n = self.diag.shape[0]
        if not (self.lower.shape[0] == self.upper.shape[0] == self.rhs.shape[0] == n):
            raise ValueError("system bands and right-hand side must share one length")

    def dominance_margin(self) -> float:
        """min_j (|diag_j| - |offdiag_j|); positive for every assembled step."""
        off = np.abs(self.lower).copy()
        off[0] = 0.0
        up = np.abs(self.upper).copy()
        up[-1] = 0.0
        return float(np.min(np.abs(self.diag) - off - up))


def thomas_solve(system: StepSystem) -> np.ndarray:
    """Solve the tridiagonal system by elimination without pivoting.

    Diagonal dominance of the assembled steps makes pivoting unnecessary;
    a near-zero pivot therefore signals a malformed system and raises.
    """
    n = system.diag.shape[0]
    lo = system.lower.tolist()
    d = system.diag.tolist()
    up = system.upper.tolist()
    r = system.rhs.tolist()
    scale = float(np.max(np.abs(system.diag)))
    tiny = 1e-12 * scale
    cp = [0.0] * n
    dp = [0.0] * n
    den = d[0]
    if abs(den) <= tiny:
        raise np.linalg.LinAlgError("near-zero pivot in tridiagonal elimination")
    cp[0] = up[0] / den
    dp[0] = r[0] / den
    for i in range(1, n):
        den = d[i] - lo[i] * cp[i - 1]
        if abs(den) <= tiny:
            raise np.linalg.LinAlgError("near-zero pivot in tridiagonal elimination")
        cp[i] = up[i] / den
        dp[i] = (r[i] - lo[i] * dp[i - 1]) / den
    x = [0.0] * n
    x[n - 1] = dp[n - 1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return np.array(x)


def ode_step(operator, capacity: float, dt: float, u_prev: float, f_k: float) -> float:
    """One implicit scalar step; the operator must already be advanced."""
    s = operator.implicit_coeff()
    explicit = operator.explicit_part()
    u_new = (u_prev / dt - capacity * explicit + f_k) / (1.0 / dt + capacity * s)
    operator.commit(u_new)
    return u_new


def pde_step(
    operator,
    spatial: SpatialOperator,
    capacity: float,
    dt: float,
    u_prev_full: np.ndarray,
    f_interior,
) -> np.ndarray:
    """One implicit step of the diffusion problem; returns the full new row."""
    s = operator.implicit_coeff()
    explicit = operator.explicit_part()
    rhs = u_prev_full[1:-1] / dt - capacity * explicit + f_interior
    system = StepSystem(
        lower=-spatial.sub,
        diag=(1.0 / dt + capacity * s) - spatial.main,
        upper=-spatial.sup,
        rhs=rhs,
    )
    interior = thomas_solve(system)
    operator.commit(interior)
    out = np.zeros_like(u_prev_full)
    out[1:-1] = interior
    return out


@dataclass(frozen=True, eq=False)
class SolveResult:
    """Solution plus the cost metrics the benchmark harness reports."""

    field: SolutionField
    retained_values: int
    quad_count: int


def solve_ode(
    problem: OdeProblem,
    time_grid: TimeGrid,
    profile: VoOrderProfile,
    scheme: str,
    epsilon: float | None = None,
) -> SolveResult:
    """March the scalar problem over the whole grid."""
    if problem.horizon != time_grid.horizon:
        raise ValueError("problem and grid horizons differ")
    n = time_grid.steps
    dt = time_grid.dt
    operator = make_operator(scheme, time_grid, profile, epsilon, problem.initial)
    u = np.empty(n + 1)
    u[0] = problem.initial
    source = problem.source
    for k in range(1, n + 1):
        if k >= 2:
            operator.advance()
        u[k] = ode_step(operator, problem.capacity, dt, u[k - 1], source(time_grid.node(k)))
    field = SolutionField(values=u, time_grid=time_grid)
    return SolveResult(field=field, retained_values=operator.retained_values(), quad_count=operator.quad_count)


def solve_pde(
    problem: ProblemSpec,
    time_grid: TimeGrid,
    space_grid: SpatialGrid,
    profile: VoOrderProfile,
    scheme: str,
    epsilon: float | None = None,
    final_only: bool = False,
) -> SolveResult:
    """March the diffusion problem; ``final_only`` keeps just the last time level."""
    if problem.horizon != time_grid.horizon:
        raise ValueError("problem and grid horizons differ")
    if (problem.x_left, problem.x_right) != (space_grid.left, space_grid.right):
        raise ValueError("problem and grid spatial domains differ")
    m = space_grid.cells
    if m < 2:
        raise ValueError("spatial grid needs at least one interior node")
    n = time_grid.steps
    dt = time_grid.dt
    xs = space_grid.nodes()
    row0 = _space_values(problem.initial, xs)
    operator = make_operator(scheme, time_grid, profile, epsilon, row0[1:m])
    spatial = SpatialOperator.from_grid(space_grid, problem.diffusivity)
    f_eval = _source_evaluator(problem.source, xs[1:m])
    if final_only:
        values = np.empty((1, m + 1))
    else:
        values = np.empty((n + 1, m + 1))
        values[0] = row0
    u_full = row0.copy()
    for k in range(1, n + 1):
        if k >= 2:
            operator.advance()
        u_full = pde_step(operator, spatial, problem.capacity, dt, u_full, f_eval(time_grid.node(k)))
        if not final_only:
            values[k] = u_full
    if final_only:
        values[0] = u_full
    field = SolutionField(values=values, time_grid=time_grid, space_grid=space_grid, final_only=final_only)
    return SolveResult(field=field, retained_values=operator.retained_values(), quad_count=operator.quad_count)
