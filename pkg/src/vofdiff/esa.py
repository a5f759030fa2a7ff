"""Exponential-sum approximation (ESA) of the power kernel s^(-beta).

For s = (t_k - tau)/T in [delta, 1] and beta in a band [beta_lo, beta_hi],
the kernel s^(-beta) is replaced by

    sum_i theta_i(beta) * exp(-lambda_i * s),    lambda_i = exp(i*h),
    theta_i(beta) = h * exp(beta*i*h) / Gamma(beta),

a trapezoidal discretization of the Gamma-integral representation
Gamma(beta) * s^(-beta) = integral exp(beta*v - s*exp(v)) dv over the real
line.  The step h and the index window are chosen from the target relative
accuracy ``epsilon`` so that the approximation holds uniformly on
[delta, 1] for every beta in the band.

Index window convention: the continuous cutoffs are rounded *outward*
(floor below, ceil above) and both end indices are included.  The inward
reading of the printed cutoff formulas leaves the truncated lower tail at
roughly Gamma(1+beta_hi)/Gamma(1+beta_lo) * epsilon, which already breaks
the epsilon guarantee at beta = beta_lo; outward rounding restores it and
is the only reading consistent with the reference operation counts this
package reproduces (see tests).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .gammafn import gamma

__all__ = [
    "EsaDivergenceError",
    "EsaConfig",
    "EsaQuadrature",
    "build_quadrature",
    "step_weights",
    "kernel_eval",
]

_MAX_EPSILON = 1.0 / math.e
# beta tolerance for band membership checks; covers profile roundoff only
_BAND_TOL = 1e-9


class EsaDivergenceError(ValueError):
    """Raised when the lower index cutoff diverges (beta_lo -> 0)."""


@dataclass(frozen=True)
class EsaConfig:
    """Parameters the quadrature is built from.

    ``beta_lo``/``beta_hi`` bound the kernel exponents that will be
    requested; ``epsilon`` is the uniform relative accuracy target;
    ``delta`` = dt/T is the smallest scaled distance the kernel is
    evaluated at.
    """

    beta_lo: float
    beta_hi: float
    epsilon: float
    delta: float

    def __post_init__(self):
        if self.beta_lo <= 0.0:
            raise EsaDivergenceError(
                "ESA lower index diverges for vanishing order lower bound "
                f"(beta_lo={self.beta_lo!r}); use the shifted-kernel operator instead"
            )
        if not self.beta_lo <= self.beta_hi < 2.0:
            raise ValueError(
                f"exponent band must satisfy 0 < beta_lo <= beta_hi < 2, got [{self.beta_lo}, {self.beta_hi}]"
            )
        if not 0.0 < self.epsilon <= _MAX_EPSILON:
            raise ValueError(f"epsilon must lie in (0, 1/e], got {self.epsilon!r}")
        if not 0.0 < self.delta <= 1.0:
            raise ValueError(f"delta must lie in (0, 1], got {self.delta!r}")


@dataclass(frozen=True, eq=False)
class EsaQuadrature:
    """Frozen quadrature: step h and exponents lambda_i, i = N_lo+1 .. N_hi."""

    step: float
    lower_index: int
    upper_index: int
    exponents: np.ndarray
    config: EsaConfig

    @property
    def count(self) -> int:
        """Number of exponential terms (the scheme's per-point memory)."""
        return self.upper_index - self.lower_index

    @cached_property
    def indices(self) -> np.ndarray:
        return np.arange(self.lower_index + 1, self.upper_index + 1)

    def count_bound(self) -> float:
        """Diagnostic upper estimate of ``count`` (not enforced)."""
        c = self.config
        le = math.log(1.0 / c.epsilon)
        return 0.1 * (2.0 * le + math.log(c.beta_hi) + 2.0) * (
            math.log(1.0 / c.delta) + le / c.beta_lo + math.log(le) + 1.5
        )


def build_quadrature(config: EsaConfig) -> EsaQuadrature:
    """Construct the quadrature for ``config``; deterministic in its inputs."""
    beta_lo, beta_hi = config.beta_lo, config.beta_hi
    eps, delta = config.epsilon, config.delta
    h = 2.0 * math.pi / (math.log(3.0) + beta_hi * math.log(1.0 / math.cos(1.0)) + math.log(1.0 / eps))
    lower_expr = (1.0 / h) * (1.0 / beta_lo) * (math.log(eps) + math.log(gamma(1.0 + beta_hi)))
    upper_expr = (1.0 / h) * (
        math.log(1.0 / delta) + math.log(math.log(1.0 / eps)) + math.log(beta_lo) + 0.5
    )
    # outward rounding, both cutoff indices included (see module docstring);
    # stored so that the active window is lower_index+1 .. upper_index
    lower_index = math.floor(lower_expr) - 1
    upper_index = math.ceil(upper_expr)
    indices = np.arange(lower_index + 1, upper_index + 1)
    # exp per index, not a cumulative product: no drift across the window
    exponents = np.exp(indices * h)
    exponents.setflags(write=False)
    return EsaQuadrature(
        step=h,
        lower_index=lower_index,
        upper_index=upper_index,
        exponents=exponents,
        config=config,
    )


def _check_beta(quadrature: EsaQuadrature, beta: float) -> None:
    c = quadrature.config
    if not (c.beta_lo - _BAND_TOL <= beta <= c.beta_hi + _BAND_TOL):
        raise ValueError(f"beta={beta!r} outside the quadrature band [{c.beta_lo}, {c.beta_hi}]")


def step_weights(quadrature: EsaQuadrature, beta: float) -> np.ndarray:
    """Weights theta_i = h * exp(beta*i*h) / Gamma(beta) for the given exponent."""
    _check_beta(quadrature, beta)
    h = quadrature.step
    return (h / gamma(beta)) * np.exp(beta * h * quadrature.indices)


def kernel_eval(quadrature: EsaQuadrature, beta: float, s):
    """Evaluate the exponential sum at scaled distance ``s`` in [delta, 1].

    Terms whose exponent underflows contribute exactly zero in 64-bit
    arithmetic; they stay part of the quadrature (``count`` is unchanged).
    """
    _check_beta(quadrature, beta)
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    c = quadrature.config
    if np.any(s_arr < c.delta * (1.0 - 1e-12)) or np.any(s_arr > 1.0 + 1e-12):
        raise ValueError(f"s must lie in [{c.delta}, 1]")
    theta = step_weights(quadrature, beta)
    out = np.exp(-np.outer(s_arr, quadrature.exponents)) @ theta
    return float(out[0]) if np.ndim(s) == 0 else out
