"""Numerical utility functions for the over-the-air forward models.

This module provides the linear-algebra substrate used everywhere else:
- Seeded, order-independent Gaussian sampling (counter-based Philox streams)
- Block assembly (horizontal concatenation, rectangular identity shift, scaling)
- Singular values and condition numbers with a numerical-rank cutoff

Matrices are plain float64 numpy arrays marked read-only after construction.
"""

from dataclasses import dataclass, field
from typing import Sequence, Tuple
import logging
import math

import numpy as np
from numpy.typing import NDArray
from scipy import linalg as sla

from .errors import ComputationError, ShapeError, require

logger = logging.getLogger(__name__)

Matrix = NDArray[np.float64]

_UINT64_LIMIT = 2 ** 64


@dataclass(frozen=True)
class SeedSpec:
    """Key of one independent random stream.

    The pair (master_seed, stream_path) fully determines the stream, so the
    same draw is reproduced no matter which thread or in which order it is
    requested.
    """
    master_seed: int
    stream_path: Tuple[int, ...] = ()

    def __post_init__(self):
        require(0 <= int(self.master_seed) < _UINT64_LIMIT,
                f"master_seed must fit in 64 unsigned bits, got {self.master_seed}")
        path = tuple(int(i) for i in self.stream_path)
        require(all(i >= 0 for i in path),
                f"stream_path entries must be non-negative, got {path}")
        object.__setattr__(self, "master_seed", int(self.master_seed))
        object.__setattr__(self, "stream_path", path)

    def child(self, *indices: int) -> "SeedSpec":
        """Return the seed of a sub-stream, extending the path by `indices`."""
        return SeedSpec(self.master_seed, self.stream_path + tuple(indices))

    def generator(self) -> np.random.Generator:
        """Build a fresh generator positioned at the start of this stream."""
        sequence = np.random.SeedSequence(self.master_seed, spawn_key=self.stream_path)
        return np.random.Generator(np.random.Philox(sequence))


@dataclass(frozen=True)
class SingularSpectrum:
    """Singular values sorted non-increasingly."""
    values: NDArray[np.float64] = field(repr=False)

    @property
    def largest(self) -> float:
        return float(self.values[0])

    @property
    def smallest(self) -> float:
        return float(self.values[-1])

    def __len__(self) -> int:
        return len(self.values)


def _freeze(array: np.ndarray) -> Matrix:
    out = np.ascontiguousarray(array, dtype=np.float64)
    if out.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got {out.ndim} dimensions")
    if not np.all(np.isfinite(out)):
        raise ComputationError("matrix contains NaN or infinite entries")
    out.setflags(write=False)
    return out


def as_matrix(data) -> Matrix:
    """Copy `data` into a read-only float64 matrix, rejecting non-finite entries."""
    return _freeze(np.array(data, dtype=np.float64, copy=True))


def sample_gaussian(rows: int, cols: int, mean: float, std: float,
                    seed: SeedSpec) -> Matrix:
    """Draw a rows x cols matrix with i.i.d. Normal(mean, std**2) entries.

    Args:
        rows: Number of rows (>= 1)
        cols: Number of columns (>= 1)
        mean: Entry mean
        std: Entry standard deviation (> 0)
        seed: Stream key; identical keys give bitwise-identical matrices

    Returns:
        Read-only float64 matrix
    """
    require(rows >= 1 and cols >= 1, f"invalid dimensions {rows}x{cols}")
    require(std > 0, f"std must be positive, got {std}")
    draw = seed.generator().standard_normal((rows, cols))
    return _freeze(mean + std * draw)


def add_rect_identity(m: Matrix) -> Matrix:
    """Return m + I_{rows x cols} (ones on the main diagonal, zeros elsewhere)."""
    rows, cols = m.shape
    require(rows <= cols, f"rectangular identity needs rows <= cols, got {rows}x{cols}",
            ShapeError)
    out = np.array(m, dtype=np.float64, copy=True)
    idx = np.arange(rows)
    out[idx, idx] += 1.0
    return _freeze(out)


def hconcat(blocks: Sequence[Matrix]) -> Matrix:
    """Concatenate blocks column-wise, keeping their order.

    Raises:
        ParameterError: empty block list
        ShapeError: blocks with different row counts
    """
    require(len(blocks) > 0, "hconcat needs at least one block")
    rows = blocks[0].shape[0]
    for i, block in enumerate(blocks):
        require(block.shape[0] == rows,
                f"block {i} has {block.shape[0]} rows, expected {rows}", ShapeError)
    return _freeze(np.hstack(blocks))


def scale(m: Matrix, c: float) -> Matrix:
    """Multiply every entry by c."""
    return _freeze(np.multiply(m, float(c)))


def singular_values(m: Matrix) -> SingularSpectrum:
    """Compute the min(rows, cols) singular values of m, largest first.

    Uses LAPACK's divide-and-conquer SVD without singular vectors.

    Raises:
        ComputationError: the SVD did not converge
    """
    try:
        values = sla.svdvals(m, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise ComputationError(f"singular value computation failed: {exc}") from exc
    if not np.all(np.isfinite(values)):
        raise ComputationError("singular value computation returned non-finite values")
    values = np.sort(np.maximum(values, 0.0))[::-1]
    values.setflags(write=False)
    return SingularSpectrum(values)


def rank_tolerance(rows: int, cols: int, sigma_max: float) -> float:
    """Singular values below this are treated as zero."""
    return max(rows, cols) * np.finfo(np.float64).eps * sigma_max


def condition_number(m: Matrix) -> float:
    """Ratio of the largest to the smallest singular value of a wide matrix.

    A numerically rank-deficient matrix yields math.inf instead of raising;
    callers test for it with math.isinf.

    Raises:
        ShapeError: m has more rows than columns
    """
    rows, cols = m.shape
    require(rows <= cols,
            f"condition_number expects a wide or square matrix, got {rows}x{cols}",
            ShapeError)
    spectrum = singular_values(m)
    sigma_max, sigma_min = spectrum.largest, spectrum.smallest
    if sigma_max == 0.0 or sigma_min < rank_tolerance(rows, cols, sigma_max):
        logger.warning(f"Rank-deficient {rows}x{cols} matrix (sigma_min={sigma_min:.3e})")
        return math.inf
    return sigma_max / sigma_min
