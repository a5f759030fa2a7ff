"""Shared domain types: grids, order profiles, problem data, solution fields.

Everything here is immutable after construction and safe to share across
threads; solver state lives in the operator classes instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "TimeGrid",
    "SpatialGrid",
    "alpha_profile",
    "VoOrderProfile",
    "ProblemSpec",
    "OdeProblem",
    "SolutionField",
]

_TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [0, T] with ``steps`` intervals; dt is derived."""

    horizon: float
    steps: int

    def __post_init__(self):
        if not self.horizon > 0.0:
            raise ValueError("horizon must be positive")
        if self.steps < 1:
            raise ValueError("steps must be a positive integer")

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    def node(self, k: int) -> float:
        # horizon * k / steps so that node(steps) == horizon exactly
        return self.horizon * k / self.steps

    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.steps + 1)


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform grid on [left, right] with ``cells`` intervals."""

    left: float
    right: float
    cells: int

    def __post_init__(self):
        if not self.right > self.left:
            raise ValueError("right boundary must exceed left boundary")
        if self.cells < 1:
            raise ValueError("cells must be a positive integer")

    @property
    def dx(self) -> float:
        return (self.right - self.left) / self.cells

    def node(self, j: int) -> float:
        return self.left + (self.right - self.left) * j / self.cells

    def nodes(self) -> np.ndarray:
        return np.linspace(self.left, self.right, self.cells + 1)

    def midpoints(self) -> np.ndarray:
        """Cell midpoints x_{j+1/2}, j = 0..cells-1."""
        xs = self.nodes()
        return 0.5 * (xs[:-1] + xs[1:])


def alpha_profile(t: float, alpha0: float, alpha_end: float, horizon: float) -> float:
    """Built-in smooth order profile running from alpha0 at t=0 to alpha_end at t=T.

    alpha(t) = alpha_end + (alpha0 - alpha_end) * (1 - t/T - sin(2*pi*(1 - t/T)) / (2*pi)),
    which is monotone and reproduces both endpoints exactly.
    """
    if not 0.0 <= t <= horizon:
        raise ValueError(f"t={t!r} outside [0, {horizon!r}]")
    s = t / horizon
    return alpha_end + (alpha0 - alpha_end) * (1.0 - s - math.sin(_TWO_PI * (1.0 - s)) / _TWO_PI)


@dataclass(frozen=True, eq=False)
class VoOrderProfile:
    """Time-dependent fractional order alpha(t) with certified bounds.

    ``lower``/``upper`` bracket alpha(t) on [0, horizon]; both must sit in
    [0, 1).  Use :meth:`from_endpoints` for the built-in profile (exact
    bounds) or :meth:`from_callable` for user functions (bounds estimated
    on a dense sample).
    """

    func: Callable[[float], float]
    horizon: float
    lower: float
    upper: float
    endpoints: tuple[float, float] | None = field(default=None)

    def __post_init__(self):
        if not (0.0 <= self.lower <= self.upper < 1.0):
            raise ValueError(
                f"order bounds must satisfy 0 <= lower <= upper < 1, got [{self.lower}, {self.upper}]"
            )

    def __call__(self, t: float) -> float:
        return self.func(t)

    @classmethod
    def from_endpoints(cls, alpha0: float, alpha_end: float, horizon: float) -> "VoOrderProfile":
        """Built-in sine-modulated ramp between alpha0 and alpha_end."""
        lo, hi = min(alpha0, alpha_end), max(alpha0, alpha_end)
        return cls(
            func=lambda t: alpha_profile(t, alpha0, alpha_end, horizon),
            horizon=horizon,
            lower=lo,
            upper=hi,
            endpoints=(alpha0, alpha_end),
        )

    @classmethod
    def from_callable(
        cls, func: Callable[[float], float], horizon: float, samples: int = 4001
    ) -> "VoOrderProfile":
        """Wrap a user-supplied order function; bounds come from dense sampling."""
        ts = np.linspace(0.0, horizon, samples)
        vals = np.array([func(t) for t in ts], dtype=float)
        lo, hi = float(vals.min()), float(vals.max())
        if not (0.0 <= lo and hi < 1.0):
            raise ValueError(f"sampled order values leave [0, 1): range [{lo}, {hi}]")
        return cls(func=func, horizon=horizon, lower=lo, upper=hi)


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Mobile-immobile diffusion problem data on [x_left, x_right] x [0, horizon].

    u_t + capacity * D_t^{alpha(t)} u = (p(x) u_x)_x + f(x, t), homogeneous
    Dirichlet boundary, u(x, 0) = initial(x).  ``source=None`` means f == 0.
    """

    capacity: float
    diffusivity: Callable[[float], float]
    initial: Callable[[float], float]
    x_left: float
    x_right: float
    horizon: float
    source: Callable[..., float] | None = None

    def __post_init__(self):
        if not self.capacity > 0.0:
            raise ValueError("capacity must be positive")
        if not self.x_right > self.x_left:
            raise ValueError("x_right must exceed x_left")
        if not self.horizon > 0.0:
            raise ValueError("horizon must be positive")
        xs = np.linspace(self.x_left, self.x_right, 1001)
        pvals = np.array([self.diffusivity(x) for x in xs], dtype=float)
        if not np.all(pvals > 0.0):
            raise ValueError("diffusivity must be positive on the domain")


@dataclass(frozen=True, eq=False)
class OdeProblem:
    """Scalar specialization: u'(t) + capacity * D_t^{alpha(t)} u = source(t)."""

    capacity: float
    source: Callable[[float], float]
    initial: float
    horizon: float

    def __post_init__(self):
        if not self.capacity > 0.0:
            raise ValueError("capacity must be positive")
        if not self.horizon > 0.0:
            raise ValueError("horizon must be positive")


@dataclass(frozen=True, eq=False)
class SolutionField:
    """Computed solution values on a grid.

    PDE: ``values`` has shape (steps+1, cells+1), or (1, cells+1) when only
    the final time level was kept (``final_only``).  ODE: shape (steps+1,).
    """

    values: np.ndarray
    time_grid: TimeGrid
    space_grid: SpatialGrid | None = None
    final_only: bool = False

    @property
    def final(self) -> np.ndarray | float:
        """Values at t = horizon (row for PDE, scalar for ODE)."""
        out = self.values[-1]
        return float(out) if np.ndim(out) == 0 else out
