"""Concentration of the per-user model's received vector around its mean.

Covers the chi-square machinery:
- z, the per-coordinate variance of y
- the chi-square CDF/survival function via the regularized incomplete gamma
  function (series for x < a + 1, continued fraction otherwise)
- the exact probability P(||y - E[y]||^2 / n >= eps) and its exponential bound

The dimension n is d when following the derivation as written and s when
matching what a simulation of y actually produces (see DofMode).
"""

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple
import logging
import math

import numpy as np
from scipy.special import gammaln

from .errors import ComputationError, DomainError, require
from .fl_models import GradientSet

logger = logging.getLogger(__name__)

_ACCURACY = 1.0e-12
_MAX_ITERATIONS = 100_000
_TINY = 1.0e-300


class DofMode(Enum):
    """Which dimension plays the role of n in ||y - E[y]||^2 / n and chi^2_n"""
    PAPER_D = "paper-d"
    PHYSICAL_S = "physical-s"

    def dimension(self, d: int, s: int) -> int:
        return d if self is DofMode.PAPER_D else s


def z_value(grads: GradientSet, M: int, sigma_gamma: float) -> float:
    """z = (1/M^2) sum_m ||g_m^sp||^2 + sigma_gamma^2.

    A zero result is returned as is and logged; probabilities need z > 0.
    """
    require(M == grads.M, f"M={M} does not match {grads.M} gradient rows")
    require(grads.sparsified is not None, "gradients have not been sparsified")
    z = float(np.sum(grads.sparsified ** 2)) / M ** 2 + sigma_gamma ** 2
    if z <= 0.0:
        logger.warning("Degenerate z = 0 (zero gradients and noiseless channel)")
    return z


def _gamma_series(a: float, x: float) -> float:
    # Lower regularized gamma P(a, x) by its power series.
    ap = a
    term = 1.0 / a
    total = term
    for _ in range(_MAX_ITERATIONS):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _ACCURACY:
            return total * math.exp(-x + a * math.log(x) - gammaln(a))
    raise ComputationError(f"incomplete gamma series did not converge for a={a}, x={x}")


def _gamma_continued_fraction(a: float, x: float) -> float:
    # Upper regularized gamma Q(a, x) by the modified Lentz continued fraction.
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITERATIONS + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _ACCURACY:
            return math.exp(-x + a * math.log(x) - gammaln(a)) * h
    raise ComputationError(f"incomplete gamma continued fraction did not converge for a={a}, x={x}")


def regularized_gamma(a: float, x: float) -> Tuple[float, float]:
    """Return (P(a, x), Q(a, x)), the lower and upper regularized gamma functions."""
    require(a > 0.0, f"non-positive a={a} is not allowed")
    require(x >= 0.0, f"negative x={x} is not allowed")
    if x == 0.0:
        return 0.0, 1.0
    if x < a + 1.0:
        p = min(max(_gamma_series(a, x), 0.0), 1.0)
        return p, 1.0 - p
    q = min(max(_gamma_continued_fraction(a, x), 0.0), 1.0)
    return 1.0 - q, q


def chi2_cdf(d: int, x: float) -> float:
    """CDF of the chi-square distribution with d degrees of freedom."""
    require(d >= 1, f"degrees of freedom must be >= 1, got {d}")
    return regularized_gamma(d / 2.0, x / 2.0)[0]


def chi2_sf(d: int, x: float) -> float:
    """Survival function 1 - chi2_cdf(d, x), accurate in the far tail."""
    require(d >= 1, f"degrees of freedom must be >= 1, got {d}")
    return regularized_gamma(d / 2.0, x / 2.0)[1]


def approximation_probability(d: int, epsilon: float, z: float) -> float:
    """P(||y - E[y]||^2 / d >= epsilon) = 1 - F_{chi^2_d}(d * epsilon / z).

    Raises:
        DomainError: z <= 0
    """
    require(d >= 1, f"d must be >= 1, got {d}")
    require(epsilon > 0, f"epsilon must be positive, got {epsilon}")
    require(z > 0, f"z must be positive, got {z}", DomainError)
    return chi2_sf(d, d * epsilon / z)


def chi2_tail_bound(d: int, delta: float) -> float:
    """Upper bound exp(-min(delta/4, delta^2/(16 d))) on P(Y - d >= delta), Y ~ chi^2_d."""
    require(d >= 1, f"d must be >= 1, got {d}")
    require(delta > 0, f"delta must be positive, got {delta}", DomainError)
    return math.exp(-min(delta / 4.0, delta ** 2 / (16.0 * d)))


@dataclass(frozen=True)
class TailBound:
    """Exact deviation probability next to its exponential bound."""
    d: int
    epsilon: float
    z: float
    mu: float
    beta: float
    exact_prob: float
    exp_bound: float


def tail_bound(d: int, epsilon: float, z: float) -> TailBound:
    """Evaluate both sides of the concentration inequality.

    mu = (epsilon/z - 1)/4, beta = min(mu, mu^2), exp_bound = exp(-beta d).

    Raises:
        DomainError: epsilon <= z, where the bound is vacuous
    """
    require(z > 0, f"z must be positive, got {z}", DomainError)
    require(epsilon > z, f"epsilon={epsilon} must exceed z={z} for the bound", DomainError)
    mu = (epsilon / z - 1.0) / 4.0
    beta = min(mu, mu * mu)
    exp_bound = chi2_tail_bound(d, d * (epsilon / z - 1.0))
    exact = approximation_probability(d, epsilon, z)
    return TailBound(d, epsilon, z, mu, beta, exact, exp_bound)


def min_users_for_accuracy(d: int, epsilon: float, grad_sq_norm: float,
                           sigma_gamma: float, target: float,
                           M_max: int = 1_000_000) -> Optional[int]:
    """Smallest M whose exact approximation probability is at most `target`.

    Every user is assumed to send a gradient with squared norm `grad_sq_norm`,
    so z(M) = grad_sq_norm / M + sigma_gamma^2 and the probability is
    non-increasing in M, which allows a bisection.

    Returns:
        The smallest such M, or None if even M_max users do not suffice
    """
    require(0 < target < 1, f"target must lie in (0, 1), got {target}")
    require(grad_sq_norm >= 0 and M_max >= 1, "invalid gradient norm or M_max")

    def probability(M: int) -> float:
        return approximation_probability(d, epsilon, grad_sq_norm / M + sigma_gamma ** 2)

    if probability(M_max) > target:
        logger.info(f"Target {target} not reached with M_max={M_max} users")
        return None
    lo, hi = 1, M_max
    while lo < hi:
        mid = (lo + hi) // 2
        if probability(mid) <= target:
            hi = mid
        else:
            lo = mid + 1
    return lo
