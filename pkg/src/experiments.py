"""Scripted reproductions of the condition-number and concentration results.

Each experiment returns plain records and has a matching CSV writer; floats
are written with 9 significant digits so reruns with the same seed produce
identical files.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union
import csv
import logging
import math

import numpy as np

from .analysis import (
    CondEstimate,
    SecurityReport,
    SolvabilityReport,
    check_inverse_solvable,
    estimate_expected_cond,
    map_trials,
    paired_cond_estimates,
    solvability_bound_per_user,
    solvability_bound_shared,
)
from .concentration import DofMode, approximation_probability, tail_bound, z_value
from .errors import DomainError, ParameterError, require
from .fl_models import (
    FadingKind,
    GradientSet,
    ModelKind,
    SystemParams,
    build_per_user,
    expected_observation,
    noise_seed,
    synthetic_gradients,
    transmit,
)
from .linalg_utils import SeedSpec

logger = logging.getLogger(__name__)

FIG1_GRID = (1, 2, 4, 8, 16, 32, 64)
PathLike = Union[str, Path]


@dataclass(frozen=True)
class SweepSpec:
    """One sweep over user counts.

    Attributes:
        d: Parameter-vector length
        s: Receiver endpoints
        M_grid: Strictly increasing user counts
        trials: Independent draws per grid point
        master_seed: Master seed of every stream
        kind: Legitimate model kind; the eavesdropper sweep pairs it with its
            fading variant
        fading: Eavesdropper fading distribution
        alpha: Power coefficient shared by all users
        workers: Thread count for the trials
    """
    d: int
    s: int
    M_grid: Tuple[int, ...] = FIG1_GRID
    trials: int = 50
    master_seed: int = 0
    kind: ModelKind = ModelKind.PER_USER_B
    fading: FadingKind = FadingKind.GAUSSIAN
    alpha: float = 1.0
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "M_grid", tuple(int(M) for M in self.M_grid))
        require(len(self.M_grid) > 0, "M_grid must not be empty")
        require(all(M >= 1 for M in self.M_grid), "M_grid entries must be positive")
        require(all(a < b for a, b in zip(self.M_grid, self.M_grid[1:])),
                f"M_grid must be strictly increasing, got {list(self.M_grid)}")
        require(self.trials >= 1, f"trials must be >= 1, got {self.trials}")
        require(not self.kind.is_eavesdropper,
                f"sweeps take a legitimate model kind, got {self.kind.name}")

    def params(self, M: int) -> SystemParams:
        return SystemParams.uniform(self.d, self.s, M, self.alpha)


@dataclass(frozen=True)
class SweepRow:
    """Legitimate vs. eavesdropper E[cond] at one M."""
    M: int
    legit_mean: float
    legit_stderr: float
    eaves_mean: float
    eaves_stderr: float
    diff_mean: float
    diff_stderr: float


@dataclass(frozen=True)
class ConcentrationRecord:
    """Empirical and exact probability of ||y - E[y]||^2 / n >= epsilon."""
    M: int
    z: float
    epsilon: float
    empirical: float
    exact: float
    bound: float


def run_fig1(spec: SweepSpec) -> List[SweepRow]:
    """Paired legitimate and eavesdropper E[cond] per grid M.

    For the per-user kind these are E[cond(C_1 + I, ...)] and
    E[cond(H_1(C_1 + I), ...)].
    """
    logger.info(f"=== Condition-number sweep d={spec.d} s={spec.s} "
                f"trials={spec.trials} kind={spec.kind.name} fading={spec.fading.name} ===")
    rows = []
    for M in spec.M_grid:
        paired = paired_cond_estimates(spec.kind, spec.params(M), spec.trials,
                                       spec.master_seed, spec.fading, spec.workers)
        rows.append(SweepRow(M, paired.legit.mean, paired.legit.stderr,
                             paired.eaves.mean, paired.eaves.stderr,
                             paired.diff_mean, paired.diff_stderr))
        logger.info(f"M={M}: legit {paired.legit.mean:.6g}, eaves {paired.eaves.mean:.6g}")
    return rows


def solvability_bound(kind: ModelKind, d: int, s: int):
    """Return F as a function of M for a legitimate model kind.

    The domain of the bound is checked here, before any estimation runs.
    """
    if kind is ModelKind.SHARED_A:
        value = solvability_bound_shared(d, s)
        return lambda M: value
    if kind is ModelKind.PER_USER_B:
        solvability_bound_per_user(d, s, 1)
        return lambda M: solvability_bound_per_user(d, s, M)
    raise ParameterError(f"no solvability bound for {kind.name}")


def run_solvability_sweep(spec: SweepSpec) -> SolvabilityReport:
    """Estimate E[cond] over the grid and compare with the model's bound F(M)."""
    kind = spec.kind
    bound = solvability_bound(kind, spec.d, spec.s)
    logger.info(f"=== Solvability sweep {kind.name} d={spec.d} s={spec.s} ===")
    estimates = [
        (M, estimate_expected_cond(kind, spec.params(M), spec.trials, spec.master_seed,
                                   spec.fading, spec.workers))
        for M in spec.M_grid
    ]
    return check_inverse_solvable(estimates, bound, kind)


def run_concentration(params: SystemParams, epsilon: float, transmissions: int,
                      master_seed: int, dof: DofMode = DofMode.PAPER_D,
                      grads: Optional[GradientSet] = None,
                      workers: int = 1) -> ConcentrationRecord:
    """Empirical frequency of ||y - E[y]||^2 / n >= epsilon for the per-user model.

    Gradients stay fixed across transmissions; every transmission redraws the
    compression matrices and the noise. n is d or s according to `dof`. The
    bound field is NaN when epsilon <= z.

    Raises:
        DomainError: z = 0
    """
    require(epsilon > 0, f"epsilon must be positive, got {epsilon}")
    require(transmissions >= 1, f"transmissions must be >= 1, got {transmissions}")
    if grads is None:
        grads = synthetic_gradients(params.M, params.d, master_seed)
    require(grads.M == params.M and grads.d == params.d,
            f"gradients are {grads.M}x{grads.d}, expected {params.M}x{params.d}")
    grads = grads.sparsify(params.delta)
    z = z_value(grads, params.M, params.sigma_gamma)
    require(z > 0, "z = 0: zero gradients on a noiseless channel", DomainError)
    n = dof.dimension(params.d, params.s)
    target = expected_observation(grads, params.M, params.s)

    def deviation(seed: SeedSpec) -> float:
        y = transmit(build_per_user(params, seed), grads, params.sigma_gamma,
                     noise_seed(seed, params.M))
        return float(np.sum((y - target) ** 2)) / n

    deviations = np.asarray(map_trials(deviation, transmissions, master_seed, workers))
    empirical = float(np.mean(deviations >= epsilon))
    exact = approximation_probability(n, epsilon, z)
    if epsilon > z:
        bound = tail_bound(n, epsilon, z).exp_bound
    else:
        logger.warning(f"M={params.M}: epsilon={epsilon:.6g} <= z={z:.6g}, "
                       f"exponential bound undefined (reported as NaN)")
        bound = math.nan
    logger.info(f"M={params.M}: z={z:.6g} empirical={empirical:.6g} exact={exact:.6g}")
    return ConcentrationRecord(params.M, z, epsilon, empirical, exact, bound)


def run_concentration_sweep(params: SystemParams, M_grid: Sequence[int], epsilon: float,
                            transmissions: int, master_seed: int,
                            dof: DofMode = DofMode.PAPER_D,
                            grads: Optional[GradientSet] = None,
                            workers: int = 1) -> List[ConcentrationRecord]:
    """run_concentration at every grid M with fixed per-user gradients."""
    logger.info(f"=== Concentration sweep d={params.d} s={params.s} dof={dof.value} ===")
    return [
        run_concentration(params.with_users(M), epsilon, transmissions, master_seed, dof,
                          grads, workers)
        for M in M_grid
    ]


def _fmt(value: float) -> str:
    return f"{value:.9g}"


def _write_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[str]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    logger.info(f"Wrote {path}")
    return path


def write_fig1_csv(rows: Sequence[SweepRow], path: PathLike) -> Path:
    return _write_csv(
        path, ["M", "legit_mean", "legit_stderr", "eaves_mean", "eaves_stderr"],
        ([str(r.M), _fmt(r.legit_mean), _fmt(r.legit_stderr),
          _fmt(r.eaves_mean), _fmt(r.eaves_stderr)] for r in rows))


def write_solvability_csv(report: SolvabilityReport, path: PathLike) -> Path:
    return _write_csv(
        path, ["M", "mean", "stderr", "bound", "satisfied"],
        ([str(r.M), _fmt(r.estimate.mean), _fmt(r.estimate.stderr), _fmt(r.bound),
          str(r.satisfied).lower()] for r in report.rows))


def write_concentration_csv(records: Sequence[ConcentrationRecord], path: PathLike) -> Path:
    return _write_csv(
        path, ["M", "z", "epsilon", "empirical", "exact", "bound"],
        ([str(r.M), _fmt(r.z), _fmt(r.epsilon), _fmt(r.empirical), _fmt(r.exact),
          _fmt(r.bound)] for r in records))


def write_estimate_csv(estimates: Sequence[Tuple[int, CondEstimate]], path: PathLike) -> Path:
    return _write_csv(
        path, ["M", "mean", "stderr", "trials", "infinite_count"],
        ([str(M), _fmt(e.mean), _fmt(e.stderr), str(e.trials), str(e.infinite_count)]
         for M, e in estimates))


def write_security_csv(report: SecurityReport, path: PathLike) -> Path:
    return _write_csv(
        path, ["M", "legit_mean", "legit_stderr", "eaves_mean", "eaves_stderr", "secure"],
        ([str(r.M), _fmt(r.legit.mean), _fmt(r.legit.stderr), _fmt(r.eaves.mean),
          _fmt(r.eaves.stderr), str(r.secure).lower()] for r in report.rows))
