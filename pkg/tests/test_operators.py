"""Caputo operator state machines: exactness, recursions, oracle equivalence."""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from vofdiff import (
    EsaConfig,
    FastL1Operator,
    L1Operator,
    RobustFastL1Operator,
    TimeGrid,
    VoOrderProfile,
    build_quadrature,
    discrete_kernel_weights,
)
from vofdiff.esa import EsaDivergenceError
from vofdiff.gammafn import gamma

PROFILE_PAIRS = [(0.0, 0.2), (0.05, 0.5), (0.2, 0.6)]


def march(op, u_of_t, grid):
    """Drive an operator over the whole grid; returns the derivative values."""
    out = []
    for k in range(1, grid.steps + 1):
        if k >= 2:
            op.advance()
        out.append(op.apply(u_of_t(grid.node(k))))
    return np.array(out)


# ---------------------------------------------------------------- L1 operator


def test_l1_constant_history_is_zero():
    grid = TimeGrid(1.0, 64)
    profile = VoOrderProfile.from_endpoints(0.05, 0.5, 1.0)
    op = L1Operator(grid, profile, 1.0)
    vals = march(op, lambda t: 1.0, grid)
    assert np.all(vals == 0.0)


def test_l1_linear_constant_order_exact():
    # the piecewise-linear interpolant coincides with u(t)=t, so the value
    # equals the closed-form derivative t^(1-a)/Gamma(2-a)
    grid = TimeGrid(1.0, 64)
    profile = VoOrderProfile.from_endpoints(0.5, 0.5, 1.0)
    op = L1Operator(grid, profile, 0.0)
    vals = march(op, lambda t: t, grid)
    for k in range(1, 65):
        t_k = grid.node(k)
        exact = t_k**0.5 / gamma(1.5)
        assert vals[k - 1] == pytest.approx(exact, rel=1e-12)


def test_l1_first_level_formula():
    grid = TimeGrid(2.0, 8)
    profile = VoOrderProfile.from_endpoints(0.3, 0.7, 2.0)
    op = L1Operator(grid, profile, 0.25)
    got = op.apply(1.25)
    a1 = profile(grid.node(1))
    expected = (1.25 - 0.25) / (grid.dt**a1 * gamma(2.0 - a1))
    assert got == pytest.approx(expected, rel=1e-14)


def test_l1_history_grows_per_level():
    grid = TimeGrid(1.0, 16)
    profile = VoOrderProfile.from_endpoints(0.2, 0.6, 1.0)
    op = L1Operator(grid, profile, 1.0)
    assert op.retained_values() == 1
    op.apply(1.0)
    assert op.retained_values() == 2
    op.apply(1.0)
    assert op.retained_values() == 3


# ------------------------------------------------------- robust fast operator


def test_rfl1_first_level_value():
    # single-step grid: the k=1 value needs no quadrature at all
    grid = TimeGrid(1.0, 1)
    profile = VoOrderProfile.from_endpoints(0.5, 0.5, 1.0)
    op = RobustFastL1Operator(grid, profile, 1.0, 0.0)
    assert op.apply(1.0) == pytest.approx(1.0 / gamma(1.5), rel=1e-14)


def test_rfl1_accumulator_zero_before_first_update():
    grid = TimeGrid(1.0, 8)
    profile = VoOrderProfile.from_endpoints(0.1, 0.4, 1.0)
    op = RobustFastL1Operator(grid, profile, 1e-6, 1.0)
    assert np.all(op._acc == 0.0)


def test_rfl1_accumulator_constant_closed_form():
    # after one update with u == c the accumulator equals the exact integral
    # c * (T/lambda_i) (e^{-dt lambda_i/T} - e^{-2 dt lambda_i/T})
    c = 0.8
    grid = TimeGrid(1.0, 16)
    profile = VoOrderProfile.from_endpoints(0.1, 0.4, 1.0)
    op = RobustFastL1Operator(grid, profile, 1e-6, c)
    op.apply(c)  # level 1
    op.advance()  # accumulators now at level 2
    lam = op.quadrature.exponents
    x = grid.dt * lam / grid.horizon
    exact = c * (grid.horizon / lam) * (np.exp(-x) - np.exp(-2.0 * x))
    assert np.allclose(op._acc[0], exact, rtol=1e-12)


def test_rfl1_accumulator_matches_quadrature_oracle():
    # piecewise-linear history, level 5: accumulators equal the defining
    # integral of the interpolant, evaluated by adaptive quadrature
    rng = np.random.default_rng(7)
    uvals = rng.normal(size=6)
    grid = TimeGrid(1.0, 16)
    dt = grid.dt
    profile = VoOrderProfile.from_endpoints(0.1, 0.4, 1.0)
    op = RobustFastL1Operator(grid, profile, 1e-6, uvals[0])
    for k in range(1, 6):
        if k >= 2:
            op.advance()
        op.apply(uvals[k])
    # operator committed level 5; accumulators hold the level-5 integrals

    def interp(tau):
        j = min(int(tau / dt), 4)
        return uvals[j] + (uvals[j + 1] - uvals[j]) * (tau - j * dt) / dt

    k = 5
    for i, lam in enumerate(op.quadrature.exponents):
        val, _ = quad(
            lambda tau: interp(tau) * math.exp(-(k * dt - tau) * lam / grid.horizon),
            0.0,
            (k - 1) * dt,
            points=[dt, 2 * dt, 3 * dt],
            limit=200,
        )
        assert op._acc[0, i] == pytest.approx(val, rel=1e-10, abs=1e-300)


def test_rfl1_zero_history_stays_zero():
    grid = TimeGrid(1.0, 16)
    profile = VoOrderProfile.from_endpoints(0.05, 0.5, 1.0)
    op = RobustFastL1Operator(grid, profile, 1e-6, 0.0)
    vals = march(op, lambda t: 0.0, grid)
    assert np.all(vals == 0.0)
    assert np.all(op._acc == 0.0)


@pytest.mark.parametrize("alpha0,alpha_end", PROFILE_PAIRS)
def test_rfl1_constant_history_bounded_by_kernel_error(alpha0, alpha_end):
    n = 256
    eps = (1.0 / n) ** 2
    grid = TimeGrid(1.0, n)
    profile = VoOrderProfile.from_endpoints(alpha0, alpha_end, 1.0)
    op = RobustFastL1Operator(grid, profile, eps, 1.0)
    for k in range(1, n + 1):
        if k >= 2:
            op.advance()
        val = op.apply(1.0)
        alpha_k = profile(grid.node(k))
        assert abs(val) <= 5.0 * eps * grid.dt**-alpha_k


@pytest.mark.parametrize("alpha0,alpha_end", PROFILE_PAIRS)
def test_rfl1_matches_l1_within_kernel_error(alpha0, alpha_end):
    n = 2**9
    eps = (1.0 / n) ** 2
    grid = TimeGrid(1.0, n)
    profile = VoOrderProfile.from_endpoints(alpha0, alpha_end, 1.0)
    u = lambda t: 1.0 + t + math.sin(t)
    fast = RobustFastL1Operator(grid, profile, eps, u(0.0))
    direct = L1Operator(grid, profile, u(0.0))
    bound = 10.0 * eps * grid.dt**-profile.upper
    worst = np.max(np.abs(march(fast, u, grid) - march(direct, u, grid)))
    assert worst <= bound


def test_rfl1_requires_advance_before_level_two():
    grid = TimeGrid(1.0, 4)
    profile = VoOrderProfile.from_endpoints(0.1, 0.4, 1.0)
    op = RobustFastL1Operator(grid, profile, 1e-6, 1.0)
    op.apply(1.0)
    with pytest.raises(RuntimeError):
        op.apply(1.0)  # advance() skipped
    op.advance()
    with pytest.raises(RuntimeError):
        op.advance()  # double advance
    op.apply(1.0)


# -------------------------------------------------------- fast (original) op


def test_fl1_vanishing_lower_bound_rejected():
    grid = TimeGrid(1.0, 16)
    profile = VoOrderProfile.from_endpoints(0.0, 0.2, 1.0)
    with pytest.raises(EsaDivergenceError):
        FastL1Operator(grid, profile, 1e-6, 1.0)


def test_fl1_zero_history():
    grid = TimeGrid(1.0, 16)
    profile = VoOrderProfile.from_endpoints(0.2, 0.6, 1.0)
    op = FastL1Operator(grid, profile, 1e-6, 0.0)
    vals = march(op, lambda t: 0.0, grid)
    assert np.all(vals == 0.0)


def test_fl1_matches_l1_within_kernel_error():
    n = 2**9
    eps = (1.0 / n) ** 2
    grid = TimeGrid(1.0, n)
    profile = VoOrderProfile.from_endpoints(0.2, 0.6, 1.0)
    u = lambda t: 1.0 + t + math.sin(t)
    fast = FastL1Operator(grid, profile, eps, u(0.0))
    direct = L1Operator(grid, profile, u(0.0))
    bound = 10.0 * eps * grid.dt**-profile.upper
    worst = np.max(np.abs(march(fast, u, grid) - march(direct, u, grid)))
    assert worst <= bound


def test_fl1_first_level_matches_rfl1():
    grid = TimeGrid(1.0, 4)
    profile = VoOrderProfile.from_endpoints(0.2, 0.6, 1.0)
    a = FastL1Operator(grid, profile, 1e-6, 0.5)
    b = RobustFastL1Operator(grid, profile, 1e-6, 0.5)
    assert a.apply(1.5) == b.apply(1.5)


# ------------------------------------------------------------ vector values


def test_vector_state_matches_scalar_runs():
    n = 32
    grid = TimeGrid(1.0, n)
    profile = VoOrderProfile.from_endpoints(0.05, 0.5, 1.0)
    rng = np.random.default_rng(11)
    traces = rng.normal(size=(n + 1, 3))
    vec_op = RobustFastL1Operator(grid, profile, 1e-8, traces[0])
    scalar_ops = [RobustFastL1Operator(grid, profile, 1e-8, traces[0, q]) for q in range(3)]
    for k in range(1, n + 1):
        if k >= 2:
            vec_op.advance()
            for so in scalar_ops:
                so.advance()
        got = vec_op.apply(traces[k])
        want = np.array([so.apply(traces[k, q]) for q, so in enumerate(scalar_ops)])
        assert np.allclose(got, want, rtol=1e-14, atol=0.0)


# ------------------------------------------------------------ kernel weights


def _rf_quadrature(grid, profile, eps):
    return build_quadrature(
        EsaConfig(
            beta_lo=1.0 + profile.lower,
            beta_hi=1.0 + profile.upper,
            epsilon=eps,
            delta=grid.dt / grid.horizon,
        )
    )


def test_kernel_weights_first_level():
    grid = TimeGrid(1.0, 64)
    profile = VoOrderProfile.from_endpoints(0.05, 0.5, 1.0)
    quadrature = _rf_quadrature(grid, profile, 1e-8)
    kw = discrete_kernel_weights(1, grid, profile, quadrature)
    a1 = profile(grid.node(1))
    assert kw.scale == pytest.approx(grid.dt**-a1 / gamma(2.0 - a1), rel=1e-14)
    assert kw.weights.tolist() == [1.0]


@pytest.mark.parametrize("alpha0,alpha_end", PROFILE_PAIRS)
def test_kernel_weights_positive_and_bounded(alpha0, alpha_end):
    n = 1024
    eps = (1.0 / n) ** 2
    grid = TimeGrid(1.0, n)
    profile = VoOrderProfile.from_endpoints(alpha0, alpha_end, 1.0)
    quadrature = _rf_quadrature(grid, profile, eps)
    for k in (1, 2, 10, 50):
        kw = discrete_kernel_weights(k, grid, profile, quadrature)
        assert np.all(kw.weights > 0.0)
        assert float(np.sum(kw.weights)) <= 1.0 + eps


def test_kernel_weights_reproduce_operator():
    n = 64
    eps = 1e-8
    grid = TimeGrid(1.0, n)
    profile = VoOrderProfile.from_endpoints(0.05, 0.5, 1.0)
    rng = np.random.default_rng(3)
    hist = rng.normal(size=11)
    op = RobustFastL1Operator(grid, profile, eps, hist[0])
    value = None
    for k in range(1, 11):
        if k >= 2:
            op.advance()
        value = op.apply(hist[k])
    kw = discrete_kernel_weights(10, grid, profile, op.quadrature)
    rewritten = kw.scale * (hist[10] - kw.weights @ hist[:10])
    assert rewritten == pytest.approx(value, rel=1e-10)


# ----------------------------------------------------------------- memory


def test_fast_memory_footprint_tracks_quadrature():
    profile = VoOrderProfile.from_endpoints(0.05, 0.5, 1.0)
    counts = []
    for n in (2**8, 2**9, 2**10):
        grid = TimeGrid(1.0, n)
        op = RobustFastL1Operator(grid, profile, (1.0 / n) ** 2, np.zeros(5))
        counts.append(op.retained_values())
        assert op.retained_values() == 5 * (op.quad_count + 3) + 4 * op.quad_count
    # grows with the (logarithmic) quadrature size, far slower than n
    assert counts[-1] < counts[0] * 2
