"""Tests for the approximation-accuracy analytics.

Tests cover:
- z for known gradient sets, including the degenerate z = 0
- Chi-square CDF and survival function against closed forms and scipy
- Exact approximation probability and its exponential bound
- Smallest user count for a target accuracy
"""

import logging
import math

import numpy as np
import pytest
from scipy import integrate, stats

from src.concentration import (
    DofMode,
    approximation_probability,
    chi2_cdf,
    chi2_sf,
    chi2_tail_bound,
    min_users_for_accuracy,
    regularized_gamma,
    tail_bound,
    z_value,
)
from src.errors import DomainError, ParameterError
from src.fl_models import GradientSet


def test_dof_mode_dimension():
    assert DofMode.PAPER_D.dimension(100, 25) == 100
    assert DofMode.PHYSICAL_S.dimension(100, 25) == 25
    assert DofMode("physical-s") is DofMode.PHYSICAL_S


def test_z_value_examples():
    """Test z = (1/M^2) sum ||g||^2 + sigma^2 on hand-computed cases."""
    grads = GradientSet(np.array([[2.0, 0.0], [0.0, 2.0]])).sparsify(0.1)
    assert z_value(grads, 2, 0.0) == pytest.approx(2.0)
    assert z_value(grads, 2, 1.0) == pytest.approx(3.0)
    zeros = GradientSet(np.zeros((3, 4))).sparsify(0.1)
    assert z_value(zeros, 3, 1.0) == pytest.approx(1.0)


def test_z_value_uses_sparsified_gradients():
    grads = GradientSet(np.array([[0.05, 3.0]])).sparsify(0.1)
    assert z_value(grads, 1, 0.0) == pytest.approx(9.0)


def test_zero_z_is_logged(caplog):
    zeros = GradientSet(np.zeros((2, 3))).sparsify(0.1)
    with caplog.at_level(logging.WARNING):
        assert z_value(zeros, 2, 0.0) == 0.0
    assert "z = 0" in caplog.text


def test_z_value_rejects_mismatched_M():
    grads = GradientSet(np.ones((2, 3))).sparsify(0.1)
    with pytest.raises(ParameterError):
        z_value(grads, 3, 0.1)


def test_chi2_cdf_closed_forms():
    assert chi2_cdf(2, 2.0) == pytest.approx(1 - math.exp(-1), abs=1e-10)
    assert chi2_cdf(2, 4.0) == pytest.approx(1 - math.exp(-2), abs=1e-10)
    assert chi2_cdf(7, 0.0) == 0.0
    assert chi2_sf(7, 0.0) == 1.0


def test_chi2_cdf_against_quadrature():
    """Test chi2_cdf(1, 1) against numerical integration of the chi^2_1 density."""
    density = lambda t: math.exp(-t / 2) / math.sqrt(2 * math.pi * t)
    expected, _ = integrate.quad(density, 0.0, 1.0)
    assert chi2_cdf(1, 1.0) == pytest.approx(expected, abs=1e-8)


@pytest.mark.parametrize("d", [1, 2, 5, 30, 100, 500])
@pytest.mark.parametrize("ratio", [0.1, 0.5, 0.9, 1.0, 1.1, 2.0, 4.0])
def test_chi2_matches_scipy(d, ratio):
    x = ratio * d
    assert chi2_cdf(d, x) == pytest.approx(stats.chi2.cdf(x, d), abs=1e-10)
    assert chi2_sf(d, x) == pytest.approx(stats.chi2.sf(x, d), rel=1e-8, abs=1e-300)


def test_regularized_gamma_sums_to_one():
    for a, x in [(0.5, 0.2), (3.0, 3.5), (50.0, 80.0)]:
        p, q = regularized_gamma(a, x)
        assert p + q == pytest.approx(1.0, abs=1e-12)
        assert 0.0 <= p <= 1.0 and 0.0 <= q <= 1.0


def test_regularized_gamma_rejects_bad_arguments():
    with pytest.raises(ParameterError):
        regularized_gamma(0.0, 1.0)
    with pytest.raises(ParameterError):
        regularized_gamma(1.0, -1.0)


def test_approximation_probability_examples():
    z = 0.7
    assert approximation_probability(2, 2 * z, z) == pytest.approx(math.exp(-2), abs=1e-10)
    assert approximation_probability(10, 1e-9, z) == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(DomainError):
        approximation_probability(5, 1.0, 0.0)


def test_tail_bound_examples():
    """Test mu, beta and the bound at epsilon = 2z and epsilon = 5z."""
    z = 1.3
    bound = tail_bound(16, 2 * z, z)
    assert bound.mu == pytest.approx(0.25)
    assert bound.beta == pytest.approx(1 / 16)
    assert bound.exp_bound == pytest.approx(math.exp(-1))
    assert bound.exact_prob <= math.exp(-1)

    bound = tail_bound(10, 5 * z, z)
    assert bound.mu == pytest.approx(1.0)
    assert bound.beta == pytest.approx(1.0)
    assert bound.exp_bound == pytest.approx(math.exp(-10))


@pytest.mark.parametrize("d", [1, 4, 25, 100, 1000])
@pytest.mark.parametrize("factor", [1.05, 1.5, 2.0, 3.0, 5.0, 20.0])
def test_exact_probability_never_exceeds_bound(d, factor):
    bound = tail_bound(d, factor * 0.4, 0.4)
    assert 0.0 <= bound.exact_prob <= bound.exp_bound


def test_tail_bound_requires_epsilon_above_z():
    with pytest.raises(DomainError):
        tail_bound(10, 1.0, 1.0)
    with pytest.raises(DomainError):
        tail_bound(10, 0.5, 1.0)


def test_chi2_tail_bound():
    assert chi2_tail_bound(16, 16.0) == pytest.approx(math.exp(-1))
    assert chi2_tail_bound(1, 100.0) == pytest.approx(math.exp(-25))
    with pytest.raises(DomainError):
        chi2_tail_bound(4, 0.0)


def test_min_users_for_accuracy_is_smallest():
    d, epsilon, norm, sigma, target = 100, 0.5, 40.0, 0.1, 1e-3
    M = min_users_for_accuracy(d, epsilon, norm, sigma, target)
    assert M is not None and M > 1
    assert approximation_probability(d, epsilon, norm / M + sigma ** 2) <= target
    assert approximation_probability(d, epsilon, norm / (M - 1) + sigma ** 2) > target


def test_min_users_for_accuracy_unreachable():
    # Noise alone keeps z above epsilon.
    assert min_users_for_accuracy(50, 0.5, 10.0, 1.0, 1e-3, M_max=1000) is None
