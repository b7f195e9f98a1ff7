"""Inverse solvability and inverse security of the forward models.

Closed-form bounds on expected condition numbers, their Monte-Carlo
counterparts and the predicates that compare the two. Expectations are
realized as sample means over independent trials; every inequality is
checked with a 3-standard-error margin and only on a finite grid of user
counts, so a passing report is grid-restricted statistical evidence.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Mapping, Optional, Sequence, Tuple, Union
import logging
import math

import numpy as np

from .errors import DomainError, EstimationError, ParameterError, require
from .fl_models import (
    FadingKind,
    ModelKind,
    SystemParams,
    build_operator,
    fading_seed,
    sample_compression,
)
from .linalg_utils import SeedSpec, condition_number, hconcat, sample_gaussian

logger = logging.getLogger(__name__)

SIGMA_MARGIN = 3.0


# ---------------------------------------------------------------------------
# Closed-form bounds
# ---------------------------------------------------------------------------

def solvability_bound_shared(d: int, s: int) -> float:
    """F(M) = (sqrt(d) + sqrt(s)) / (sqrt(d) - sqrt(s)), the same for every M."""
    require(d > s >= 1, f"shared-A bound needs d > s >= 1, got d={d}, s={s}", DomainError)
    return (math.sqrt(d) + math.sqrt(s)) / (math.sqrt(d) - math.sqrt(s))


def solvability_bound_per_user(d: int, s: int, M: int) -> float:
    """F(M) = (sqrt(Md) + sqrt(s) + sqrt(M)) / (sqrt(Md) - sqrt(s) - sqrt(M)).

    Valid when (sqrt(d) - 1)^2 > s, where F is strictly decreasing in M.
    """
    require(M >= 1, f"M must be >= 1, got {M}")
    require(s >= 1, f"s must be >= 1, got {s}")
    require((math.sqrt(d) - 1.0) ** 2 > s,
            f"per-user bound needs (sqrt(d) - 1)^2 > s, got d={d}, s={s}", DomainError)
    root_md = math.sqrt(M * d)
    denominator = root_md - math.sqrt(s) - math.sqrt(M)
    require(denominator > 0, f"per-user bound undefined at M={M}", DomainError)
    return (root_md + math.sqrt(s) + math.sqrt(M)) / denominator


def fading_cond_bound(d: int, s: int, M: int) -> float:
    """Upper bound (sqrt(Md) + sqrt(s)) / (sqrt(Md) - sqrt(s)) on E[cond(H_1, ..., H_M)]
    for standard Gaussian fading; it tends to 1 as M grows."""
    require(M >= 1 and s >= 1, f"invalid M={M} or s={s}")
    require(M * d > s, f"fading bound needs M*d > s, got M*d={M * d}, s={s}", DomainError)
    root_md = math.sqrt(M * d)
    return (root_md + math.sqrt(s)) / (root_md - math.sqrt(s))


def fact1_bounds(N: int, n: int) -> Tuple[float, float]:
    """(sqrt(N) - sqrt(n), sqrt(N) + sqrt(n)): bounds on the expected extreme
    singular values of a tall N x n standard Gaussian matrix."""
    require(N >= n >= 1, f"expected a tall shape N >= n >= 1, got {N}x{n}", DomainError)
    return math.sqrt(N) - math.sqrt(n), math.sqrt(N) + math.sqrt(n)


# ---------------------------------------------------------------------------
# Monte-Carlo estimation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CondEstimate:
    """Sample mean and standard error of a condition number.

    Rank-deficient draws (cond = inf) are excluded from mean and stderr and
    counted in `infinite_count`. `samples` keeps every draw in trial order.
    """
    mean: float
    stderr: float
    trials: int
    infinite_count: int
    master_seed: int
    samples: Tuple[float, ...] = field(default=(), repr=False)

    @classmethod
    def from_samples(cls, samples: Sequence[float], master_seed: int) -> "CondEstimate":
        values = np.asarray(samples, dtype=np.float64)
        finite = values[np.isfinite(values)]
        infinite_count = int(values.size - finite.size)
        if finite.size < 2:
            raise EstimationError(
                f"only {finite.size} of {values.size} draws were full rank")
        if infinite_count:
            logger.warning(f"{infinite_count} of {values.size} draws were rank-deficient")
        stderr = float(np.std(finite, ddof=1) / math.sqrt(finite.size))
        return cls(float(np.mean(finite)), stderr, int(values.size), infinite_count,
                   master_seed, tuple(float(v) for v in values))


def map_trials(draw: Callable[[SeedSpec], float], trials: int, master_seed: int,
               workers: int = 1) -> List[float]:
    """Evaluate `draw` on trial seeds [0], [1], ..., keeping trial order.

    With workers > 1 trials run on a thread pool; every trial owns its
    stream, so the result does not depend on scheduling.
    """
    require(trials >= 1, f"trials must be >= 1, got {trials}")
    require(workers >= 1, f"workers must be >= 1, got {workers}")
    seeds = [SeedSpec(master_seed, (t,)) for t in range(trials)]
    if workers == 1:
        return [draw(seed) for seed in seeds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(draw, seeds))


def estimate_expected_cond(kind: ModelKind, params: SystemParams, trials: int,
                           master_seed: int,
                           fading: FadingKind = FadingKind.GAUSSIAN,
                           workers: int = 1) -> CondEstimate:
    """Estimate E[cond(L)] of the chosen forward model.

    Args:
        kind: Which operator to draw
        params: System dimensions and power coefficients
        trials: Number of independent draws (>= 2)
        master_seed: Master seed; trial t uses stream path [t]
        fading: Fading distribution for eavesdropper kinds
        workers: Thread count for the trials

    Returns:
        CondEstimate over the full-rank draws

    Raises:
        EstimationError: fewer than two draws were full rank
    """
    require(trials >= 2, f"trials must be >= 2, got {trials}")

    def draw(seed: SeedSpec) -> float:
        value = condition_number(build_operator(kind, params, seed, fading).matrix)
        logger.debug(f"{kind.name} M={params.M} trial {seed.stream_path[0]}: cond={value:.6g}")
        return value

    estimate = CondEstimate.from_samples(map_trials(draw, trials, master_seed, workers),
                                         master_seed)
    logger.info(f"{kind.name} M={params.M}: E[cond] ~ {estimate.mean:.6g} "
                f"+/- {estimate.stderr:.3g} ({trials} trials)")
    return estimate


def estimate_compression_cond(params: SystemParams, trials: int, master_seed: int,
                              workers: int = 1) -> CondEstimate:
    """Estimate E[cond(A)] from the same streams the shared-A model draws A from."""
    require(trials >= 2, f"trials must be >= 2, got {trials}")

    def draw(seed: SeedSpec) -> float:
        return condition_number(sample_compression(params, seed))

    return CondEstimate.from_samples(map_trials(draw, trials, master_seed, workers),
                                     master_seed)


def estimate_fading_cond(params: SystemParams, trials: int, master_seed: int,
                         workers: int = 1) -> CondEstimate:
    """Estimate E[cond(H_1, ..., H_M)] for standard Gaussian fading."""
    require(trials >= 2, f"trials must be >= 2, got {trials}")

    def draw(seed: SeedSpec) -> float:
        blocks = [sample_gaussian(params.s, params.s, 0.0, 1.0, fading_seed(seed, params.M, m))
                  for m in range(params.M)]
        return condition_number(hconcat(blocks))

    return CondEstimate.from_samples(map_trials(draw, trials, master_seed, workers),
                                     master_seed)


@dataclass(frozen=True)
class PairedEstimate:
    """Legitimate and eavesdropper estimates sharing their compression draws."""
    M: int
    legit: CondEstimate
    eaves: CondEstimate
    diff_mean: float
    diff_stderr: float


def paired_cond_estimates(kind: ModelKind, params: SystemParams, trials: int,
                          master_seed: int,
                          fading: FadingKind = FadingKind.GAUSSIAN,
                          workers: int = 1) -> PairedEstimate:
    """Estimate E[cond] of a legitimate model and its eavesdropper variant
    from the same trial seeds, along with the paired difference."""
    require(trials >= 2, f"trials must be >= 2, got {trials}")
    legit_kind, eaves_kind = kind.legitimate, kind.eavesdropper

    def draw(seed: SeedSpec) -> Tuple[float, float]:
        legit = condition_number(build_operator(legit_kind, params, seed, fading).matrix)
        eaves = condition_number(build_operator(eaves_kind, params, seed, fading).matrix)
        logger.debug(f"M={params.M} trial {seed.stream_path[0]}: legit cond={legit:.6g}, "
                     f"eaves cond={eaves:.6g}")
        return legit, eaves

    pairs = map_trials(draw, trials, master_seed, workers)
    legit = CondEstimate.from_samples([p[0] for p in pairs], master_seed)
    eaves = CondEstimate.from_samples([p[1] for p in pairs], master_seed)
    diffs = np.array([e - l for l, e in pairs if math.isfinite(l) and math.isfinite(e)])
    if diffs.size < 2:
        raise EstimationError("fewer than two trials with both operators full rank")
    diff_stderr = float(np.std(diffs, ddof=1) / math.sqrt(diffs.size))
    return PairedEstimate(params.M, legit, eaves, float(np.mean(diffs)), diff_stderr)


# ---------------------------------------------------------------------------
# Predicates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SolvabilityRow:
    M: int
    estimate: CondEstimate
    bound: float
    satisfied: bool


@dataclass(frozen=True)
class SolvabilityReport:
    """Per-M comparison of E[cond] with a bound F(M) on a finite grid."""
    kind: Optional[ModelKind]
    rows: Tuple[SolvabilityRow, ...]

    @property
    def satisfied(self) -> bool:
        return all(row.satisfied for row in self.rows)


@dataclass(frozen=True)
class SecurityRow:
    M: int
    legit: CondEstimate
    eaves: CondEstimate
    secure: bool
    combined_stderr: float


@dataclass(frozen=True)
class SecurityReport:
    """Per-M comparison of eavesdropper and server E[cond] on a finite grid."""
    rows: Tuple[SecurityRow, ...]

    @property
    def secure(self) -> bool:
        return all(row.secure for row in self.rows)


EstimateGrid = Union[Mapping[int, CondEstimate], Sequence[Tuple[int, CondEstimate]]]


def _as_pairs(estimates: EstimateGrid) -> List[Tuple[int, CondEstimate]]:
    items = list(estimates.items()) if isinstance(estimates, Mapping) else list(estimates)
    return [(int(M), est) for M, est in items]


def check_inverse_solvable(estimates: EstimateGrid, bound: Callable[[int], float],
                           kind: Optional[ModelKind] = None) -> SolvabilityReport:
    """Check E[cond] <= F(M) + 3 stderr at every grid point."""
    pairs = _as_pairs(estimates)
    require(len(pairs) > 0, "the M-grid is empty")
    rows = []
    for M, estimate in pairs:
        f_m = bound(M)
        satisfied = estimate.mean <= f_m + SIGMA_MARGIN * estimate.stderr
        if not satisfied:
            logger.info(f"Solvability fails at M={M}: {estimate.mean:.6g} > F(M)={f_m:.6g}")
        rows.append(SolvabilityRow(M, estimate, f_m, satisfied))
    return SolvabilityReport(kind, tuple(rows))


def _security_row(M: int, legit: CondEstimate, eaves: CondEstimate,
                  diff_mean: float, diff_stderr: float) -> SecurityRow:
    secure = diff_mean > SIGMA_MARGIN * diff_stderr
    if not secure:
        logger.info(f"Security not established at M={M}: "
                    f"eaves {eaves.mean:.6g} vs legit {legit.mean:.6g}")
    return SecurityRow(M, legit, eaves, secure, diff_stderr)


def check_inverse_secure(legit: EstimateGrid, eaves: EstimateGrid) -> SecurityReport:
    """Check E[cond(L_E)] - E[cond(L)] > 3 combined stderr at every grid point.

    Raises:
        ParameterError: the two grids differ
    """
    legit_pairs, eaves_pairs = _as_pairs(legit), _as_pairs(eaves)
    legit_grid = [M for M, _ in legit_pairs]
    eaves_grid = [M for M, _ in eaves_pairs]
    if legit_grid != eaves_grid:
        raise ParameterError(f"M-grids differ: {legit_grid} vs {eaves_grid}")
    require(len(legit_grid) > 0, "the M-grid is empty")
    rows = []
    for (M, l_est), (_, e_est) in zip(legit_pairs, eaves_pairs):
        combined = math.sqrt(l_est.stderr ** 2 + e_est.stderr ** 2)
        rows.append(_security_row(M, l_est, e_est, e_est.mean - l_est.mean, combined))
    return SecurityReport(tuple(rows))


def paired_security_report(estimates: Sequence[PairedEstimate]) -> SecurityReport:
    """Security report whose margin is the stderr of the paired differences."""
    require(len(estimates) > 0, "the M-grid is empty")
    return SecurityReport(tuple(
        _security_row(p.M, p.legit, p.eaves, p.diff_mean, p.diff_stderr) for p in estimates
    ))


def _mean_of(value: Union[CondEstimate, float]) -> float:
    return value.mean if isinstance(value, CondEstimate) else float(value)


def check_vic7(alphas: Sequence[float], cond_A_estimate: Union[CondEstimate, float],
               cond_H_estimate: Union[CondEstimate, float]) -> bool:
    """Sufficient condition for security of the shared-A model:
    E[cond(H_1, ..., H_M)] > (max sqrt(alpha) / min sqrt(alpha)) * E[cond(A)]^2."""
    require(len(alphas) > 0 and all(a > 0 for a in alphas), "alphas must be positive")
    roots = [math.sqrt(a) for a in alphas]
    threshold = max(roots) / min(roots) * _mean_of(cond_A_estimate) ** 2
    return _mean_of(cond_H_estimate) > threshold


@dataclass(frozen=True)
class Vic7Evaluation:
    """Sufficient-condition verdict per M and the first M where it fails."""
    rows: Tuple[Tuple[int, bool], ...]
    breakdown_M: Optional[int]


def vic7_breakdown(params: SystemParams, M_grid: Sequence[int], trials: int,
                   master_seed: int, workers: int = 1) -> Vic7Evaluation:
    """Evaluate the shared-A sufficient condition with Gaussian fading over M_grid.

    E[cond(A)] does not depend on M while E[cond(H_1, ..., H_M)] shrinks
    towards 1, so the condition eventually stops holding.
    """
    cond_a = estimate_compression_cond(params, trials, master_seed, workers)
    rows = []
    for M in M_grid:
        grid_params = params.with_users(M)
        cond_h = estimate_fading_cond(grid_params, trials, master_seed, workers)
        rows.append((M, check_vic7(grid_params.alphas, cond_a, cond_h)))
    breakdown = next((M for M, holds in rows if not holds), None)
    return Vic7Evaluation(tuple(rows), breakdown)


def check_tbc(d: int, s: int, M_grid: Sequence[int], trials: int, master_seed: int,
              fading: FadingKind = FadingKind.GAUSSIAN, workers: int = 1) -> SecurityReport:
    """Sufficient condition for security of the per-user model:
    E[cond(H_1(C_1 + I), ...)] > E[cond(C_1 + I, ...)] for every grid M.

    Power coefficients do not enter: both sides are evaluated on the scaled
    blocks C_m + I_{s x d}. The two sides share their C_m draws.
    """
    require(len(M_grid) > 0, "the M-grid is empty")
    estimates = [
        paired_cond_estimates(ModelKind.PER_USER_B, SystemParams.uniform(d, s, M), trials,
                              master_seed, fading, workers)
        for M in M_grid
    ]
    return paired_security_report(estimates)


def check_meshed_security(params: SystemParams, M_star: int, trials: int,
                          master_seed: int, kind: ModelKind = ModelKind.PER_USER_B,
                          workers: int = 1) -> bool:
    """Meshed-network condition: E[cond] at every M in 1..M_star exceeds
    E[cond] at M_star + 1 by more than 3 combined stderr."""
    require(M_star >= 1, f"M_star must be >= 1, got {M_star}")
    reference = estimate_expected_cond(kind, params.with_users(M_star + 1), trials,
                                       master_seed, workers=workers)
    for M in range(1, M_star + 1):
        estimate = estimate_expected_cond(kind, params.with_users(M), trials, master_seed,
                                          workers=workers)
        combined = math.sqrt(estimate.stderr ** 2 + reference.stderr ** 2)
        if estimate.mean - reference.mean <= SIGMA_MARGIN * combined:
            logger.info(f"Meshed condition fails at M={M} against M_star+1={M_star + 1}")
            return False
    return True
