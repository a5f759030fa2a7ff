"""Exponential-sum quadrature: construction, weights, kernel accuracy."""

import math

import numpy as np
import pytest

from vofdiff import EsaConfig, EsaDivergenceError, build_quadrature, kernel_eval, step_weights

# frozen from a 40-digit evaluation of the cutoff formulas for
# (beta_lo=1, beta_hi=1.6, eps=1e-6, delta=2^-13); the index window rounds
# the continuous cutoffs outward, so the window is one index wider on each
# side than an inward reading would give
H_EXPECTED = 0.395190630203728243
N_LO_EXPECTED = -36
N_HI_EXPECTED = 31
THETA0_EXPECTED = 0.445924874153233589  # h / Gamma(1.5)


def _quad(beta_lo=1.0, beta_hi=1.6, eps=1e-6, delta=2.0**-13):
    return build_quadrature(EsaConfig(beta_lo=beta_lo, beta_hi=beta_hi, epsilon=eps, delta=delta))


def test_derived_parameters():
    q = _quad()
    assert q.step == pytest.approx(H_EXPECTED, rel=1e-12)
    assert q.lower_index == N_LO_EXPECTED
    assert q.upper_index == N_HI_EXPECTED
    assert q.count == N_HI_EXPECTED - N_LO_EXPECTED == 67
    assert q.exponents.shape == (q.count,)
    assert np.array_equal(q.indices, np.arange(N_LO_EXPECTED + 1, N_HI_EXPECTED + 1))


def test_exponents_increasing_positive():
    q = _quad()
    assert np.all(q.exponents > 0.0)
    assert np.all(np.diff(q.exponents) > 0.0)
    # lambda_i = e^{i h} exactly, computed per index
    assert q.exponents[0] == pytest.approx(math.exp((q.lower_index + 1) * q.step), rel=1e-15)


def test_reference_counts_shifted_band():
    # shifted-kernel band for order endpoints (0.05, 0.5) at n = 2^13
    q = _quad(beta_lo=1.05, beta_hi=1.5, eps=(2.0**-13) ** 2, delta=2.0**-13)
    assert abs(q.count - 95) <= 5


def test_reference_counts_original_band():
    # original-kernel band for the same order endpoints
    q = _quad(beta_lo=0.05, beta_hi=0.5, eps=(2.0**-13) ** 2, delta=2.0**-13)
    assert abs(q.count - 1153) <= 10


def test_divergent_lower_bound_rejected():
    with pytest.raises(EsaDivergenceError, match="diverges"):
        EsaConfig(beta_lo=0.0, beta_hi=0.5, epsilon=1e-6, delta=2.0**-10)


def test_epsilon_band():
    with pytest.raises(ValueError):
        EsaConfig(beta_lo=1.0, beta_hi=1.5, epsilon=0.5, delta=0.5)  # 0.5 > 1/e
    EsaConfig(beta_lo=1.0, beta_hi=1.5, epsilon=1.0 / math.e, delta=0.5)


def test_band_ordering_rejected():
    with pytest.raises(ValueError):
        EsaConfig(beta_lo=1.5, beta_hi=1.2, epsilon=1e-6, delta=0.5)
    with pytest.raises(ValueError):
        EsaConfig(beta_lo=1.0, beta_hi=2.0, epsilon=1e-6, delta=0.5)


def test_step_weights_positive_and_frozen_value():
    q = _quad()
    theta = step_weights(q, 1.5)
    assert np.all(theta > 0.0)
    # theta at index i = 0 equals h / Gamma(1.5)
    i0 = np.where(q.indices == 0)[0][0]
    assert theta[i0] == pytest.approx(THETA0_EXPECTED, rel=1e-12)


def test_step_weights_geometric_ratio():
    q = _quad()
    for beta in (1.0, 1.25, 1.6):
        theta = step_weights(q, beta)
        ratios = theta[1:] / theta[:-1]
        assert np.allclose(ratios, math.exp(beta * q.step), rtol=1e-12)


def test_step_weights_band_domain_error():
    q = _quad()
    with pytest.raises(ValueError):
        step_weights(q, 0.9)
    with pytest.raises(ValueError):
        step_weights(q, 1.7)


def test_kernel_endpoint_values():
    delta = 2.0**-13
    q = _quad(beta_lo=1.5, beta_hi=1.5, eps=1e-6, delta=delta)
    assert kernel_eval(q, 1.5, 1.0) == pytest.approx(1.0, rel=1e-6)
    # direct power evaluation as oracle at the smallest admissible distance
    assert kernel_eval(q, 1.5, delta) == pytest.approx(delta**-1.5, rel=1e-6)


def test_kernel_sweep_relative_accuracy():
    delta = 2.0**-13
    rng = np.random.default_rng(42)
    s = np.exp(rng.uniform(math.log(delta), 0.0, size=1000))
    for eps in (1e-4, 1e-6):
        for beta in (1.0, 1.3, 1.6):
            q = _quad(beta_lo=beta, beta_hi=beta, eps=eps, delta=delta)
            rel = np.abs(kernel_eval(q, beta, s) - s**-beta) / s**-beta
            assert float(np.max(rel)) <= eps


def test_kernel_two_sided_bound_on_operator_bands():
    # the bands the shifted-kernel operator actually uses; the truncated
    # lower tail makes the sum undershoot near the lower band edge (worst
    # measured -1.06 eps), while the overshoot side -- the one the
    # kernel-weight sum bound relies on -- stays far below +eps
    delta = 2.0**-13
    eps = (2.0**-13) ** 2
    rng = np.random.default_rng(7)
    s = np.exp(rng.uniform(math.log(delta), 0.0, size=500))
    for lo, hi in ((1.0, 1.2), (1.05, 1.5), (1.2, 1.6)):
        q = _quad(beta_lo=lo, beta_hi=hi, eps=eps, delta=delta)
        for beta in (lo, 0.5 * (lo + hi), hi):
            vals = kernel_eval(q, beta, s)
            exact = s**-beta
            assert np.all(vals >= (1.0 - 2.0 * eps) * exact)
            assert np.all(vals <= (1.0 + eps) * exact)


def test_count_growth_with_delta():
    eps = 1e-6
    prev = None
    for p in range(8, 17):
        q = _quad(beta_lo=1.0, beta_hi=1.5, eps=eps, delta=2.0**-p)
        assert q.count > 0
        if prev is not None:
            assert 0 <= q.count - prev <= math.ceil(math.log(2.0) / q.step) + 1
        prev = q.count


def test_count_diagnostic_bound():
    for eps in (1e-4, 1e-6, (2.0**-13) ** 2):
        for lo, hi in ((1.0, 1.6), (1.05, 1.5), (0.05, 0.5)):
            q = _quad(beta_lo=lo, beta_hi=hi, eps=eps, delta=2.0**-13)
            assert q.count <= q.count_bound()


def test_determinism():
    a = _quad()
    b = _quad()
    assert a.step == b.step
    assert a.lower_index == b.lower_index and a.upper_index == b.upper_index
    assert np.array_equal(a.exponents, b.exponents)


def test_kernel_eval_domain():
    q = _quad()
    with pytest.raises(ValueError):
        kernel_eval(q, 1.3, 2.0)
    with pytest.raises(ValueError):
        kernel_eval(q, 1.3, 2.0**-20)


def test_underflow_terms_are_retained():
    # a wide-delta window evaluated at s=1: the largest exponents underflow
    # to zero but stay part of the quadrature
    q = _quad(beta_lo=1.0, beta_hi=1.6, eps=1e-8, delta=2.0**-16)
    assert float(np.max(q.exponents)) > 745.0
    before = q.count
    val = kernel_eval(q, 1.3, 1.0)
    assert q.count == before
    assert val == pytest.approx(1.0, rel=1e-8)
