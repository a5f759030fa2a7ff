"""Discrete Caputo derivative operators of variable order, as stepping state machines.

Three discretizations of D_t^{alpha(t)} u at the grid nodes t_k share one
protocol:

* ``L1Operator`` -- direct piecewise-linear (L1) discretization; keeps the
  full value history, O(k) work per level.
* ``FastL1Operator`` -- ESA compression applied to the original kernel
  (t_k - tau)^(-alpha); O(N_eps) work and memory, but its quadrature
  degenerates as the order's lower bound approaches zero.
* ``RobustFastL1Operator`` -- integration by parts shifts the kernel
  exponent to 1 + alpha before ESA compression, so the quadrature stays
  bounded even when inf alpha(t) = 0.

Stepping protocol at time level k (after seeding with the initial value):
``advance()`` once per level for k >= 2 (fast operators update their
exponential accumulators), then either ``apply(u_k)`` for the derivative
value, or ``implicit_coeff()`` / ``explicit_part()`` / ``commit(u_k)``
when the new level is itself the unknown of an implicit solve.  A state
instance is single-writer; distinct instances may run in parallel.

All operators accept scalar values (one sample point) or 1-D arrays (one
value per spatial point); accumulators are stored per point and advanced
level-synchronously, sharing a single quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .core import TimeGrid, VoOrderProfile
from .esa import EsaConfig, EsaQuadrature, build_quadrature, step_weights
from .gammafn import gamma

__all__ = [
    "L1Operator",
    "FastL1Operator",
    "RobustFastL1Operator",
    "KernelWeights",
    "discrete_kernel_weights",
    "make_operator",
]

# Threshold below which the bracket factors lose all significant digits when
# evaluated literally; the smallest quadrature exponents make x ~ 1e-15 routine.
_TAYLOR_CUTOFF = 1e-3


def _falling_hat_factor(x: np.ndarray) -> np.ndarray:
    """(1 - e^-x - x e^-x); the [t_l, t_{l+1}] hat integral bracket."""
    x = np.asarray(x, dtype=float)
    small = x < _TAYLOR_CUTOFF
    xs = np.where(small, x, 1.0)
    taylor = xs * xs / 2.0 - xs**3 / 3.0 + xs**4 / 8.0
    xl = np.where(small, 1.0, x)
    direct = -np.expm1(-xl) - xl * np.exp(-xl)
    return np.where(small, taylor, direct)


def _rising_hat_factor(x: np.ndarray) -> np.ndarray:
    """(x - 1 + e^-x); the [t_{l-1}, t_l] hat integral bracket."""
    x = np.asarray(x, dtype=float)
    small = x < _TAYLOR_CUTOFF
    xs = np.where(small, x, 1.0)
    taylor = xs * xs / 2.0 - xs**3 / 6.0 + xs**4 / 24.0
    xl = np.where(small, 1.0, x)
    direct = xl - 1.0 + np.exp(-xl)
    return np.where(small, taylor, direct)


@njit(cache=True)
def _l1_history_combo(hist: np.ndarray, k: int, e: float) -> np.ndarray:
    """sum_{l=1}^{k-1} (a_{k-l-1} - a_{k-l}) u_l + a_{k-1} u_0 with a_j = (j+1)^e - j^e.

    One power evaluation per history level; compiled so the O(k) per-step
    cost is not swamped by interpreter overhead at small k.
    """
    npts = hist.shape[1]
    acc = np.zeros(npts)
    a_prev = 1.0  # a_0
    p_lo = 1.0  # 1^e
    for j in range(1, k):
        p_hi = (j + 1.0) ** e
        a_cur = p_hi - p_lo
        w = a_prev - a_cur  # coefficient of u_{k-j}
        row = k - j
        for q in range(npts):
            acc[q] += w * hist[row, q]
        a_prev = a_cur
        p_lo = p_hi
    for q in range(npts):
        acc[q] += a_prev * hist[0, q]  # a_{k-1} u_0
    return acc


class _CaputoOperatorBase:
    """Level bookkeeping and value normalization shared by the three operators."""

    def __init__(self, grid: TimeGrid, profile: VoOrderProfile, u0):
        self.grid = grid
        self.profile = profile
        self._scalar = np.ndim(u0) == 0
        u0v = np.atleast_1d(np.asarray(u0, dtype=float)).copy()
        if u0v.ndim != 1:
            raise ValueError("operator values must be scalars or 1-D arrays")
        self.npoints = u0v.shape[0]
        self._u0 = u0v
        self._level = 0
        self._advanced = False
        self._params_level = 0  # pending level the cached (alpha, scale) belong to

    @property
    def level(self) -> int:
        return self._level

    def _pending(self) -> int:
        k = self._level + 1
        if k > self.grid.steps:
            raise RuntimeError("operator already at the final time level")
        return k

    def _params(self) -> tuple[int, float, float]:
        """(pending level, alpha_k, dt^-alpha_k / Gamma(2-alpha_k)), memoized per level."""
        k = self._pending()
        if k != self._params_level:
            alpha_k = self.profile(self.grid.node(k))
            self._params_alpha = alpha_k
            self._params_scale = self.grid.dt ** (-alpha_k) / gamma(2.0 - alpha_k)
            self._params_level = k
        return k, self._params_alpha, self._params_scale

    def _wrap(self, value: np.ndarray):
        return float(value[0]) if self._scalar else value

    def _coerce(self, u) -> np.ndarray:
        if self._scalar and isinstance(u, float):
            return np.array((float(u),))
        uv = np.atleast_1d(np.asarray(u, dtype=float))
        if uv.shape != (self.npoints,):
            raise ValueError(f"expected value of shape ({self.npoints},)")
        return uv

    def implicit_coeff(self) -> float:
        """Coefficient of the (unknown) level-k value: dt^(-alpha_k)/Gamma(2-alpha_k)."""
        return self._params()[2]

    def advance(self) -> None:  # overridden by the fast operators
        """Move internal accumulators to the next level (no-op for L1)."""

    def apply(self, u):
        """Derivative at the next level given its value; commits the value."""
        uk = self._coerce(u)
        value = self.implicit_coeff() * uk + self._explicit_vec()
        self.commit(uk)
        return self._wrap(value)

    def explicit_part(self):
        """History-only part of the derivative at the next level."""
        return self._wrap(self._explicit_vec())

    def _explicit_vec(self) -> np.ndarray:
        raise NotImplementedError

    def commit(self, u) -> None:
        raise NotImplementedError


class L1Operator(_CaputoOperatorBase):
    """Direct L1 discretization; exact discrete convolution over the full history."""

    def __init__(self, grid: TimeGrid, profile: VoOrderProfile, u0):
        super().__init__(grid, profile, u0)
        self._hist = np.empty((grid.steps + 1, self.npoints))
        self._hist[0] = self._u0

    def _explicit_vec(self) -> np.ndarray:
        k, alpha_k, scale = self._params()
        combo = _l1_history_combo(self._hist, k, 1.0 - alpha_k)
        return -scale * combo

    def explicit_part(self):
        # scalar fast path: skip the length-one array round trip
        if not self._scalar:
            return self._explicit_vec()
        k, alpha_k, scale = self._params()
        return -scale * float(_l1_history_combo(self._hist, k, 1.0 - alpha_k)[0])

    def commit(self, u) -> None:
        k = self._pending()
        if self._scalar and isinstance(u, float):
            self._hist[k, 0] = u
        else:
            self._hist[k] = self._coerce(u)
        self._level = k

    def retained_values(self) -> int:
        """History levels times spatial points (the operator's live state)."""
        return (self._level + 1) * self.npoints

    @property
    def quad_count(self) -> int:
        return 0


class _FastOperatorBase(_CaputoOperatorBase):
    """Shared ESA machinery: quadrature, accumulators, rolling levels."""

    #: kernel-exponent offset: 0 for the original kernel, 1 for the shifted one
    _beta_offset = 0.0

    def __init__(self, grid: TimeGrid, profile: VoOrderProfile, epsilon: float, u0):
        super().__init__(grid, profile, u0)
        self.epsilon = float(epsilon)
        if grid.steps >= 2:
            config = EsaConfig(
                beta_lo=self._beta_offset + profile.lower,
                beta_hi=self._beta_offset + profile.upper,
                epsilon=self.epsilon,
                delta=grid.dt / grid.horizon,
            )
            self.quadrature: EsaQuadrature | None = build_quadrature(config)
        else:
            # a single-step march never touches the history accumulators
            self.quadrature = None
        n_terms = self.quadrature.count if self.quadrature is not None else 0
        self._acc = np.zeros((self.npoints, n_terms))
        self._u_prev = self._u0.copy()
        self._u_prev2 = np.zeros_like(self._u0)

    @property
    def quad_count(self) -> int:
        return self.quadrature.count if self.quadrature is not None else 0

    def advance(self) -> None:
        k = self._pending()
        if k < 2:
            raise RuntimeError("advance is defined for levels k >= 2")
        if self._advanced:
            raise RuntimeError("operator already advanced to the pending level")
        self._advance_acc()
        self._advanced = True

    def _advance_acc(self) -> None:
        raise NotImplementedError

    def _require_advanced(self, k: int) -> None:
        if k >= 2 and not self._advanced:
            raise RuntimeError("call advance() before evaluating level k >= 2")

    def commit(self, u) -> None:
        k = self._pending()
        self._require_advanced(k)
        uv = self._coerce(u).copy()
        self._u_prev2 = self._u_prev
        self._u_prev = uv
        self._level = k
        self._advanced = False


class RobustFastL1Operator(_FastOperatorBase):
    """Fast L1 on the shifted kernel (t_k - tau)^(-1-alpha); valid for inf alpha = 0.

    Integration by parts trades the original kernel for its derivative, so
    the ESA exponent band is [1 + lower, 1 + upper] and the lower index
    cutoff stays bounded for any admissible order profile.
    """

    _beta_offset = 1.0

    def __init__(self, grid: TimeGrid, profile: VoOrderProfile, epsilon: float, u0):
        super().__init__(grid, profile, epsilon, u0)
        if self.quadrature is not None:
            lam = self.quadrature.exponents
            x = grid.dt * lam / grid.horizon
            self._decay = np.exp(-x)
            # closed-form hat integrals over [t_{k-2}, t_{k-1}]; expm1/Taylor
            # forms keep the brackets accurate down to x ~ 1e-15
            common = grid.dt * np.exp(-x) / (x * x)
            self._coef_prev2 = common * _falling_hat_factor(x)
            self._coef_prev = common * _rising_hat_factor(x)
        else:
            self._decay = self._coef_prev2 = self._coef_prev = np.zeros(0)

    def _advance_acc(self) -> None:
        self._acc *= self._decay
        self._acc += np.multiply.outer(self._u_prev2, self._coef_prev2)
        self._acc += np.multiply.outer(self._u_prev, self._coef_prev)

    def _explicit_vec(self) -> np.ndarray:
        k, alpha_k, s = self._params()
        if k == 1:
            return -s * self._u0
        self._require_advanced(k)
        dt, horizon = self.grid.dt, self.grid.horizon
        theta = step_weights(self.quadrature, 1.0 + alpha_k)
        t_k = self.grid.node(k)
        history = (
            self._u_prev / dt**alpha_k
            - self._u0 / t_k**alpha_k
            - (alpha_k / horizon ** (1.0 + alpha_k)) * (self._acc @ theta)
        ) / gamma(1.0 - alpha_k)
        return history - s * self._u_prev

    def retained_values(self) -> int:
        """Accumulators + three stored levels + per-index constants."""
        n_terms = self.quad_count
        return self.npoints * (n_terms + 3) + 4 * n_terms


class FastL1Operator(_FastOperatorBase):
    """Fast L1 on the original kernel; requires inf alpha(t) > 0.

    Construction fails with :class:`EsaDivergenceError` when the profile's
    lower bound is zero, since the quadrature's lower cutoff diverges.
    """

    _beta_offset = 0.0

    def __init__(self, grid: TimeGrid, profile: VoOrderProfile, epsilon: float, u0):
        super().__init__(grid, profile, epsilon, u0)
        if self.quadrature is not None:
            lam = self.quadrature.exponents
            x = grid.dt * lam / grid.horizon
            self._decay = np.exp(-x)
            # T (e^-x - e^-2x) / (lambda dt) written as e^-x * (1 - e^-x) / x
            self._coef_diff = np.exp(-x) * (-np.expm1(-x)) / x
        else:
            self._decay = self._coef_diff = np.zeros(0)

    def _advance_acc(self) -> None:
        self._acc *= self._decay
        self._acc += np.multiply.outer(self._u_prev - self._u_prev2, self._coef_diff)

    def _explicit_vec(self) -> np.ndarray:
        k, alpha_k, s = self._params()
        if k == 1:
            return -s * self._u0
        self._require_advanced(k)
        horizon = self.grid.horizon
        theta = step_weights(self.quadrature, alpha_k)
        history = horizon ** (-alpha_k) / gamma(1.0 - alpha_k) * (self._acc @ theta)
        return history - s * self._u_prev

    def retained_values(self) -> int:
        n_terms = self.quad_count
        return self.npoints * (n_terms + 3) + 3 * n_terms


@dataclass(frozen=True, eq=False)
class KernelWeights:
    """The shifted-kernel operator re-expressed as scale * (u_k - sum_l d_l u_l)."""

    scale: float
    weights: np.ndarray  # d_0 .. d_{k-1}


def discrete_kernel_weights(
    k: int, grid: TimeGrid, profile: VoOrderProfile, quadrature: EsaQuadrature
) -> KernelWeights:
    """Closed-form convolution weights equivalent to ``RobustFastL1Operator`` at level k.

    The weights are positive and sum to at most 1 + epsilon, which is what
    makes the implicit schemes built on the operator unconditionally stable.
    Used for verification; the stepping operator itself never forms them.
    """
    if not 1 <= k <= grid.steps:
        raise ValueError(f"level k must lie in [1, {grid.steps}]")
    alpha_k = profile(grid.node(k))
    scale = grid.dt ** (-alpha_k) / gamma(2.0 - alpha_k)
    if k == 1:
        return KernelWeights(scale=scale, weights=np.array([1.0]))
    dt, horizon = grid.dt, grid.horizon
    lam = quadrature.exponents
    x = dt * lam / horizon
    theta = step_weights(quadrature, 1.0 + alpha_k)
    base_fall = theta * dt * dt * _falling_hat_factor(x) / (x * x)
    base_rise = theta * dt * dt * _rising_hat_factor(x) / (x * x)
    # rows q = 1 .. k-1 of e^{-q x}; row q scales a hat integral q steps back
    decay_rows = np.exp(-np.outer(np.arange(1, k), x))
    c = alpha_k * (1.0 - alpha_k) * dt ** (alpha_k - 1.0) / horizon ** (1.0 + alpha_k)
    d = np.empty(k)
    d[0] = (1.0 - alpha_k) * k ** (-alpha_k) + c * (decay_rows[k - 2] @ base_fall)
    d[k - 1] = alpha_k + c * (decay_rows[0] @ base_rise)
    if k > 2:
        # interior l = 1..k-2: rising hat q = k-l, falling hat q = k-l-1
        d[1 : k - 1] = c * (
            decay_rows[k - 2 : 0 : -1] @ base_rise + decay_rows[k - 3 :: -1] @ base_fall
        )
    return KernelWeights(scale=scale, weights=d)


def make_operator(scheme: str, grid: TimeGrid, profile: VoOrderProfile, epsilon: float | None, u0):
    """Operator factory for the scheme ids used across the package."""
    if scheme == "l1":
        return L1Operator(grid, profile, u0)
    if epsilon is None:
        raise ValueError(f"scheme {scheme!r} needs an accuracy epsilon")
    if scheme == "rfl1":
        return RobustFastL1Operator(grid, profile, epsilon, u0)
    if scheme == "fl1":
        return FastL1Operator(grid, profile, epsilon, u0)
    raise ValueError(f"unknown scheme {scheme!r}; expected one of l1, fl1, rfl1")
