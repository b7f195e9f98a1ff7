"""Tests for bounds, Monte-Carlo estimation and the solvability/security predicates.

Tests cover:
- Closed-form bounds and their domains
- CondEstimate construction, rank-deficient draws and reproducibility
- Solvability on the shared-A and per-user models
- Security with Gaussian and identity fading, paired and unpaired
- The shared-A sufficient condition and the meshed-network condition
"""

import logging
import math

import numpy as np
import pytest

from src.analysis import (
    CondEstimate,
    check_inverse_secure,
    check_inverse_solvable,
    check_meshed_security,
    check_tbc,
    check_vic7,
    estimate_compression_cond,
    estimate_expected_cond,
    estimate_fading_cond,
    fact1_bounds,
    fading_cond_bound,
    map_trials,
    paired_cond_estimates,
    solvability_bound_per_user,
    solvability_bound_shared,
    vic7_breakdown,
)
from src.errors import DomainError, EstimationError, ParameterError
from src.fl_models import FadingKind, ModelKind, SystemParams


@pytest.fixture
def desk():
    """d = 100, s = 25 with unit power coefficients."""
    return SystemParams.uniform(100, 25, 1)


def test_shared_bound():
    assert solvability_bound_shared(100, 25) == pytest.approx(3.0, rel=1e-12)
    assert solvability_bound_shared(4, 1) == pytest.approx(3.0, rel=1e-12)
    with pytest.raises(DomainError):
        solvability_bound_shared(25, 25)


def test_per_user_bound_values():
    assert solvability_bound_per_user(100, 25, 1) == pytest.approx(4.0, rel=1e-12)
    assert solvability_bound_per_user(100, 25, 4) == pytest.approx(27 / 13, rel=1e-12)


def test_per_user_bound_is_decreasing():
    values = [solvability_bound_per_user(100, 25, M) for M in range(1, 200)]
    assert all(a > b for a, b in zip(values, values[1:]))
    assert values[-1] > 1.0


def test_per_user_bound_domain():
    with pytest.raises(DomainError):
        solvability_bound_per_user(100, 81, 1)
    with pytest.raises(ParameterError):
        solvability_bound_per_user(100, 25, 0)


def test_fading_bound_tends_to_one():
    values = [fading_cond_bound(100, 25, M) for M in (1, 10, 100, 10_000)]
    assert all(a > b for a, b in zip(values, values[1:]))
    assert values[-1] == pytest.approx(1.0, abs=0.01)


def test_fact1_bounds():
    assert fact1_bounds(100, 25) == (5.0, 15.0)
    with pytest.raises(DomainError):
        fact1_bounds(25, 100)


def test_cond_estimate_from_samples():
    estimate = CondEstimate.from_samples([2.0, 4.0, math.inf, 3.0], master_seed=5)
    assert estimate.mean == pytest.approx(3.0)
    assert estimate.stderr == pytest.approx(1.0 / math.sqrt(3))
    assert estimate.trials == 4
    assert estimate.infinite_count == 1
    assert estimate.master_seed == 5
    with pytest.raises(EstimationError):
        CondEstimate.from_samples([math.inf, math.inf, 2.0], master_seed=0)


def test_map_trials_keeps_trial_order():
    paths = map_trials(lambda seed: seed.stream_path[0], 20, 0, workers=4)
    assert paths == list(range(20))


def test_estimate_requires_two_trials(desk):
    with pytest.raises(ParameterError):
        estimate_expected_cond(ModelKind.SHARED_A, desk, 1, 0)


def test_estimate_is_reproducible_across_worker_counts(desk):
    params = desk.with_users(4)
    serial = estimate_expected_cond(ModelKind.PER_USER_B, params, 20, 3)
    threaded = estimate_expected_cond(ModelKind.PER_USER_B, params, 20, 3, workers=4)
    assert serial.samples == threaded.samples
    assert serial.mean == threaded.mean


def test_estimate_logs_every_trial_at_debug(desk, caplog):
    with caplog.at_level(logging.DEBUG, logger="src.analysis"):
        estimate_expected_cond(ModelKind.PER_USER_B, desk.with_users(2), 5, 0)
    lines = [r.getMessage() for r in caplog.records if r.levelno == logging.DEBUG]
    assert len(lines) == 5
    assert lines[0].startswith("PER_USER_B M=2 trial 0: cond=")


@pytest.mark.parametrize("M", [1, 3, 8])
def test_shared_estimate_equals_compression_estimate(desk, M):
    params = SystemParams(100, 25, M, tuple(np.linspace(0.2, 3.0, M)))
    shared = estimate_expected_cond(ModelKind.SHARED_A, params, 30, 12)
    compression = estimate_compression_cond(params, 30, 12)
    np.testing.assert_allclose(shared.samples, compression.samples, rtol=1e-8)


def test_shared_model_meets_its_bound(desk):
    """Test E[cond(L)] <= 3 + 3 stderr at d = 100, s = 25 over 200 trials."""
    estimate = estimate_expected_cond(ModelKind.SHARED_A, desk, 200, 1)
    assert estimate.mean <= 3.0 + 3 * estimate.stderr


def test_per_user_model_meets_its_bound_at_four_users(desk):
    estimate = estimate_expected_cond(ModelKind.PER_USER_B, desk.with_users(4), 200, 1)
    assert estimate.mean <= 27 / 13 + 3 * estimate.stderr


def test_solvability_on_grid(desk):
    """Test both legitimate models on M in {1, 2, 4, 8, 16}."""
    grid = (1, 2, 4, 8, 16)
    shared = [(M, estimate_expected_cond(ModelKind.SHARED_A, desk.with_users(M), 200, 2))
              for M in grid]
    report = check_inverse_solvable(shared, lambda M: solvability_bound_shared(100, 25),
                                    ModelKind.SHARED_A)
    assert report.satisfied
    assert [row.M for row in report.rows] == list(grid)

    per_user = {M: estimate_expected_cond(ModelKind.PER_USER_B, desk.with_users(M), 200, 2)
                for M in grid}
    report = check_inverse_solvable(per_user,
                                    lambda M: solvability_bound_per_user(100, 25, M))
    assert report.satisfied
    means = [per_user[M].mean for M in grid]
    assert all(a > b for a, b in zip(means, means[1:]))


def test_unreachable_bound_is_not_satisfied(desk):
    estimates = {1: estimate_expected_cond(ModelKind.SHARED_A, desk, 50, 0)}
    report = check_inverse_solvable(estimates, lambda M: 1.0)
    assert not report.satisfied
    assert not report.rows[0].satisfied


def test_check_inverse_secure_grid_mismatch():
    estimate = CondEstimate.from_samples([1.0, 2.0], 0)
    with pytest.raises(ParameterError):
        check_inverse_secure({1: estimate, 2: estimate}, {1: estimate})


def test_check_inverse_secure_uses_combined_stderr():
    legit = CondEstimate.from_samples([1.0, 1.2, 0.8, 1.0], 0)
    eaves = CondEstimate.from_samples([3.0, 3.2, 2.8, 3.0], 0)
    report = check_inverse_secure({1: legit}, {1: eaves})
    assert report.secure
    assert report.rows[0].combined_stderr == pytest.approx(
        math.sqrt(legit.stderr ** 2 + eaves.stderr ** 2))
    assert not check_inverse_secure({1: eaves}, {1: legit}).secure


def test_identity_fading_is_not_secure(desk):
    """Test that an identity-fading eavesdropper sees exactly the server's operator."""
    for kind in (ModelKind.SHARED_A, ModelKind.PER_USER_B):
        paired = paired_cond_estimates(kind, desk.with_users(4), 20, 0, FadingKind.IDENTITY)
        assert paired.legit.samples == paired.eaves.samples
        assert paired.diff_mean == 0.0
    report = check_tbc(100, 25, (1, 2, 4), 20, 0, FadingKind.IDENTITY)
    assert not report.secure


def test_gaussian_fading_per_user_is_secure():
    """Test the per-user security condition for M in {2, 4, 8, 16}."""
    report = check_tbc(100, 25, (2, 4, 8, 16), 50, 4)
    assert report.secure
    assert all(row.eaves.mean > row.legit.mean for row in report.rows)


def test_gaussian_fading_single_user_ordering():
    # A single square Gaussian fading matrix has a heavy-tailed condition
    # number, so only the ordering of means and the median gap are checked.
    paired = paired_cond_estimates(ModelKind.PER_USER_B, SystemParams.uniform(100, 25, 1),
                                   50, 4)
    diffs = np.subtract(paired.eaves.samples, paired.legit.samples)
    assert paired.eaves.mean > paired.legit.mean
    assert np.median(diffs) > 0


def test_check_vic7_examples():
    assert check_vic7([1.0, 1.0], 3.0, 10.0)
    assert not check_vic7([1.0, 1.0], 3.0, 9.0)
    assert not check_vic7([1.0, 4.0], 3.0, 10.0)
    estimate = CondEstimate.from_samples([2.0, 2.0, 2.0], 0)
    assert check_vic7([1.0], estimate, 5.0)


def test_fading_estimate_approaches_one(desk):
    few = estimate_fading_cond(desk.with_users(2), 50, 0)
    many = estimate_fading_cond(desk.with_users(32), 50, 0)
    assert 1.0 < many.mean < few.mean


def test_vic7_breaks_down_as_users_grow(desk):
    evaluation = vic7_breakdown(desk, (1, 2, 4, 8, 16), 100, 0)
    assert [M for M, _ in evaluation.rows] == [1, 2, 4, 8, 16]
    assert evaluation.breakdown_M is not None
    assert evaluation.rows[-1][1] is False


def test_meshed_security(desk):
    assert check_meshed_security(desk, 4, 200, 0)
    assert not check_meshed_security(desk, 2, 50, 0, kind=ModelKind.SHARED_A)
    with pytest.raises(ParameterError):
        check_meshed_security(desk, 0, 50, 0)
