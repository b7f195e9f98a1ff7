"""Forward models of over-the-air federated learning.

Builds the random linear operators that map the stacked, sparsified user
gradients x = (g_1, ..., g_M) to the s received coordinates:
- SharedA: every user compresses with the same Gaussian matrix A
- PerUserB: user m compresses with its own B_m, centred so that E[y] is the
  mean gradient (on the first s coordinates)
- EavesSharedA / EavesPerUserB: the same signals seen through per-user
  fading mismatch matrices H_{E_m} at an eavesdropper

Stream layout per trial (user index m is 0-based): compression [trial, m],
noise [trial, M+1], eavesdropper noise [trial, M+1, 1], fading [trial, M+2+m].
Legitimate and eavesdropper operators built from the same trial seed share
their compression matrices.
"""

from dataclasses import dataclass, field
from enum import Enum, auto
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union
import logging
import math

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import block_diag

from .errors import ParameterError, ShapeError, require
from .linalg_utils import (
    Matrix,
    SeedSpec,
    add_rect_identity,
    as_matrix,
    hconcat,
    sample_gaussian,
    scale,
)

logger = logging.getLogger(__name__)

Vector = NDArray[np.float64]

# Synthetic gradients live outside any trial index so they stay fixed across trials and M.
GRADIENT_STREAM = 2 ** 32


class ModelKind(Enum):
    """Forward operator variants"""
    SHARED_A = auto()
    PER_USER_B = auto()
    EAVES_SHARED_A = auto()
    EAVES_PER_USER_B = auto()

    @property
    def is_eavesdropper(self) -> bool:
        return self in (ModelKind.EAVES_SHARED_A, ModelKind.EAVES_PER_USER_B)

    @property
    def legitimate(self) -> "ModelKind":
        """The server-side model an eavesdropper variant perturbs."""
        return {
            ModelKind.EAVES_SHARED_A: ModelKind.SHARED_A,
            ModelKind.EAVES_PER_USER_B: ModelKind.PER_USER_B,
        }.get(self, self)

    @property
    def eavesdropper(self) -> "ModelKind":
        return {
            ModelKind.SHARED_A: ModelKind.EAVES_SHARED_A,
            ModelKind.PER_USER_B: ModelKind.EAVES_PER_USER_B,
        }.get(self, self)


class FadingKind(Enum):
    """Distribution of the eavesdropper mismatch matrices"""
    IDENTITY = auto()
    GAUSSIAN = auto()


@dataclass(frozen=True)
class SystemParams:
    """Dimensions, power scalings and noise of one FL round.

    Attributes:
        d: Parameter-vector length
        s: Number of receiver endpoints
        M: Number of active users
        alphas: Power scaling coefficient alpha_m of each user
        sigma_gamma: Channel noise standard deviation
        delta: Sparsification threshold
    """
    d: int
    s: int
    M: int
    alphas: Tuple[float, ...]
    sigma_gamma: float = 0.0
    delta: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        require(self.d >= 1 and self.s >= 1 and self.M >= 1,
                f"d, s and M must be positive, got d={self.d}, s={self.s}, M={self.M}")
        require(self.s <= self.M * self.d,
                f"s={self.s} exceeds M*d={self.M * self.d}")
        require(len(self.alphas) == self.M,
                f"expected {self.M} power coefficients, got {len(self.alphas)}")
        require(all(a > 0 and math.isfinite(a) for a in self.alphas),
                "power coefficients must be positive and finite")
        require(self.sigma_gamma >= 0, f"sigma_gamma must be >= 0, got {self.sigma_gamma}")
        require(self.delta > 0, f"delta must be positive, got {self.delta}")

    @classmethod
    def uniform(cls, d: int, s: int, M: int, alpha: float = 1.0,
                sigma_gamma: float = 0.0, delta: float = 0.1) -> "SystemParams":
        """Parameters with the same power coefficient for every user."""
        return cls(d, s, M, (alpha,) * M, sigma_gamma, delta)

    def with_users(self, M: int) -> "SystemParams":
        """Same system with M users.

        Only possible when the power coefficients are all equal (they are
        replicated) or when M already matches.
        """
        if M == self.M:
            return self
        if len(set(self.alphas)) != 1:
            raise ParameterError(
                f"cannot resize {self.M} distinct power coefficients to M={M}")
        return SystemParams(self.d, self.s, M, (self.alphas[0],) * M,
                            self.sigma_gamma, self.delta)


@dataclass(frozen=True)
class BlockMeta:
    """Columns [start, stop) of the operator belong to `user`, scaled by `scaling`."""
    user: int
    start: int
    stop: int
    scaling: float


@dataclass(frozen=True)
class LinearOperator:
    """A realized s x (M*d) forward operator."""
    matrix: Matrix = field(repr=False)
    kind: ModelKind
    block_meta: Tuple[BlockMeta, ...]

    def __post_init__(self):
        cols = sum(b.stop - b.start for b in self.block_meta)
        require(cols == self.matrix.shape[1],
                f"block metadata covers {cols} columns, matrix has {self.matrix.shape[1]}",
                ShapeError)

    @property
    def s(self) -> int:
        return self.matrix.shape[0]

    @property
    def M(self) -> int:
        return len(self.block_meta)

    def block(self, user: int) -> Matrix:
        meta = self.block_meta[user]
        return self.matrix[:, meta.start:meta.stop]


@dataclass(frozen=True)
class FadingSet:
    """Per-user s x s mismatch matrices H_{E_m}."""
    matrices: Tuple[Matrix, ...] = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "matrices", tuple(self.matrices))
        require(len(self.matrices) > 0, "fading set needs at least one matrix")
        s = self.matrices[0].shape[0]
        for i, h in enumerate(self.matrices):
            require(h.shape == (s, s),
                    f"fading matrix {i} has shape {h.shape}, expected ({s}, {s})", ShapeError)

    @classmethod
    def identity(cls, M: int, s: int) -> "FadingSet":
        return cls(tuple(as_matrix(np.eye(s)) for _ in range(M)))

    @property
    def M(self) -> int:
        return len(self.matrices)

    @property
    def s(self) -> int:
        return self.matrices[0].shape[0]


@dataclass(frozen=True)
class GradientSet:
    """Per-user gradient vectors and, once sparsified, their sparsified images."""
    vectors: NDArray[np.float64] = field(repr=False)
    sparsified: Optional[NDArray[np.float64]] = field(default=None, repr=False)

    def __post_init__(self):
        vectors = np.array(self.vectors, dtype=np.float64, copy=True)
        require(vectors.ndim == 2 and vectors.shape[0] >= 1 and vectors.shape[1] >= 1,
                f"gradients must be an M x d array, got shape {vectors.shape}", ShapeError)
        require(bool(np.all(np.isfinite(vectors))), "gradients must be finite")
        vectors.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)
        if self.sparsified is not None:
            sparse = np.array(self.sparsified, dtype=np.float64, copy=True)
            require(sparse.shape == vectors.shape,
                    "sparsified gradients must match the raw gradients' shape", ShapeError)
            sparse.setflags(write=False)
            object.__setattr__(self, "sparsified", sparse)

    @property
    def M(self) -> int:
        return self.vectors.shape[0]

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    def sparsify(self, delta: float) -> "GradientSet":
        """Return a copy with the sparsified images populated."""
        sparse = np.vstack([sparsify(g, delta) for g in self.vectors])
        return GradientSet(self.vectors, sparse)

    def stacked(self) -> Vector:
        """The operator input (g_1^sp, ..., g_M^sp) as one vector of length M*d."""
        require(self.sparsified is not None, "gradients have not been sparsified")
        return self.sparsified.reshape(-1)


def sparsify(g: Vector, delta: float) -> Vector:
    """Zero every entry with |g_i| < delta; entries with |g_i| == delta are kept.

    Args:
        g: Gradient vector
        delta: Sparsification threshold (> 0)

    Returns:
        New vector of the same length
    """
    require(delta > 0, f"delta must be positive, got {delta}")
    g = np.asarray(g, dtype=np.float64)
    return np.where(np.abs(g) < delta, 0.0, g)


def compression_seed(trial_seed: SeedSpec, user: int) -> SeedSpec:
    return trial_seed.child(user)


def noise_seed(trial_seed: SeedSpec, M: int, eavesdropper: bool = False) -> SeedSpec:
    seed = trial_seed.child(M + 1)
    return seed.child(1) if eavesdropper else seed


def fading_seed(trial_seed: SeedSpec, M: int, user: int) -> SeedSpec:
    return trial_seed.child(M + 2 + user)


def _apply_fading(h: Matrix, block: Matrix) -> Matrix:
    # Identity fading returns the block untouched so legit/eaves pairs match bitwise.
    if np.array_equal(h, np.eye(h.shape[0])):
        return block
    return as_matrix(h @ block)


def _assemble(blocks: Sequence[Matrix], params: SystemParams, kind: ModelKind) -> LinearOperator:
    d = params.d
    meta = tuple(
        BlockMeta(m, m * d, (m + 1) * d, math.sqrt(params.alphas[m]) / params.M)
        for m in range(params.M)
    )
    matrix = scale(hconcat(blocks), 1.0 / params.M)
    return LinearOperator(matrix, kind, meta)


def _check_fading(params: SystemParams, fading: FadingSet) -> None:
    require(fading.M == params.M,
            f"expected {params.M} fading matrices, got {fading.M}", ShapeError)
    require(fading.s == params.s,
            f"fading matrices are {fading.s}x{fading.s}, expected {params.s}x{params.s}",
            ShapeError)


def sample_compression(params: SystemParams, seed: SeedSpec) -> Matrix:
    """Draw the shared s x d standard Gaussian compression matrix A."""
    return sample_gaussian(params.s, params.d, 0.0, 1.0, compression_seed(seed, 0))


def sample_user_compression(params: SystemParams, seed: SeedSpec, user: int) -> Matrix:
    """Draw B_m with off-diagonal N(0, 1/alpha_m) and diagonal N(1/sqrt(alpha_m), 1/alpha_m).

    B_m is generated as (C_m + I_{s x d}) / sqrt(alpha_m) from a standard
    Gaussian C_m.
    """
    c = sample_gaussian(params.s, params.d, 0.0, 1.0, compression_seed(seed, user))
    return scale(add_rect_identity(c), 1.0 / math.sqrt(params.alphas[user]))


def build_shared(params: SystemParams, seed: SeedSpec) -> LinearOperator:
    """Operator (1/M)(sqrt(a_1) A, ..., sqrt(a_M) A) with one shared Gaussian A."""
    a = sample_compression(params, seed)
    blocks = [scale(a, math.sqrt(alpha)) for alpha in params.alphas]
    return _assemble(blocks, params, ModelKind.SHARED_A)


def build_per_user(params: SystemParams, seed: SeedSpec) -> LinearOperator:
    """Operator (1/M)(sqrt(a_1) B_1, ..., sqrt(a_M) B_M) with independent B_m."""
    blocks = [
        scale(sample_user_compression(params, seed, m), math.sqrt(params.alphas[m]))
        for m in range(params.M)
    ]
    return _assemble(blocks, params, ModelKind.PER_USER_B)


def build_eaves_shared(params: SystemParams, fading: FadingSet,
                       seed: SeedSpec) -> LinearOperator:
    """Eavesdropper view of the shared-A model: blocks sqrt(a_m) H_{E_m} A."""
    _check_fading(params, fading)
    a = sample_compression(params, seed)
    blocks = [
        _apply_fading(h, scale(a, math.sqrt(alpha)))
        for h, alpha in zip(fading.matrices, params.alphas)
    ]
    return _assemble(blocks, params, ModelKind.EAVES_SHARED_A)


def build_eaves_per_user(params: SystemParams, fading: FadingSet,
                         seed: SeedSpec) -> LinearOperator:
    """Eavesdropper view of the per-user model: blocks sqrt(a_m) H_{E_m} B_m."""
    _check_fading(params, fading)
    blocks = [
        _apply_fading(h, scale(sample_user_compression(params, seed, m),
                               math.sqrt(params.alphas[m])))
        for m, h in enumerate(fading.matrices)
    ]
    return _assemble(blocks, params, ModelKind.EAVES_PER_USER_B)


def factor_eaves_shared(a: Matrix, fading: FadingSet,
                        alphas: Sequence[float]) -> Tuple[Matrix, Matrix]:
    """Split the unnormalized shared-A eavesdropper operator into P_M Q.

    Returns:
        P_M = (H_{E_1} A, ..., H_{E_M} A) and the block-diagonal
        Q = diag(sqrt(a_1) I_d, ..., sqrt(a_M) I_d)
    """
    require(len(alphas) == fading.M, "one power coefficient per fading matrix expected")
    require(a.shape[0] == fading.s, "A and the fading matrices disagree on s", ShapeError)
    d = a.shape[1]
    p = hconcat([as_matrix(h @ a) for h in fading.matrices])
    q = block_diag(*[math.sqrt(alpha) * np.eye(d) for alpha in alphas])
    return p, as_matrix(q)


def sample_gaussian_fading(params: SystemParams, seed: SeedSpec) -> FadingSet:
    """M independent s x s standard Gaussian mismatch matrices."""
    return FadingSet(tuple(
        sample_gaussian(params.s, params.s, 0.0, 1.0, fading_seed(seed, params.M, m))
        for m in range(params.M)
    ))


def make_fading(kind: FadingKind, params: SystemParams, seed: SeedSpec) -> FadingSet:
    if kind is FadingKind.IDENTITY:
        return FadingSet.identity(params.M, params.s)
    return sample_gaussian_fading(params, seed)


def build_operator(kind: ModelKind, params: SystemParams, seed: SeedSpec,
                   fading: FadingKind = FadingKind.GAUSSIAN) -> LinearOperator:
    """Build any of the four operators for one trial seed."""
    if kind is ModelKind.SHARED_A:
        return build_shared(params, seed)
    if kind is ModelKind.PER_USER_B:
        return build_per_user(params, seed)
    fading_set = make_fading(fading, params, seed)
    if kind is ModelKind.EAVES_SHARED_A:
        return build_eaves_shared(params, fading_set, seed)
    return build_eaves_per_user(params, fading_set, seed)


def transmit(op: LinearOperator, grads: GradientSet, sigma_gamma: float,
             seed: SeedSpec) -> Vector:
    """Received vector y = L x + gamma with i.i.d. N(0, sigma_gamma**2) noise.

    Args:
        op: Forward operator
        grads: Sparsified gradients, one row per user
        sigma_gamma: Noise standard deviation (0 gives a noiseless channel)
        seed: Noise stream key

    Returns:
        Vector of length s
    """
    require(sigma_gamma >= 0, f"sigma_gamma must be >= 0, got {sigma_gamma}")
    x = grads.stacked()
    require(x.shape[0] == op.matrix.shape[1],
            f"operator expects {op.matrix.shape[1]} inputs, gradients provide {x.shape[0]}",
            ShapeError)
    y = op.matrix @ x
    if sigma_gamma > 0:
        y = y + sigma_gamma * seed.generator().standard_normal(op.s)
    return y


def mean_target(grads: GradientSet, M: int) -> Vector:
    """Arithmetic mean of the sparsified gradients (the value E[y] should equal)."""
    require(M == grads.M, f"M={M} does not match {grads.M} gradient rows")
    require(grads.sparsified is not None, "gradients have not been sparsified")
    return grads.sparsified.mean(axis=0)


def expected_observation(grads: GradientSet, M: int, s: int) -> Vector:
    """E[y] of the per-user model.

    y has s coordinates while the mean gradient has d; only the first s
    coordinates of the mean gradient are reproduced in expectation.
    """
    target = mean_target(grads, M)
    require(s <= target.shape[0], f"s={s} exceeds d={target.shape[0]}", ShapeError)
    return target[:s]


def synthetic_gradients(M: int, d: int, master_seed: int) -> GradientSet:
    """i.i.d. N(0, 1) gradients; user m's vector does not depend on M."""
    require(M >= 1 and d >= 1, f"invalid gradient shape {M}x{d}")
    rows = [SeedSpec(master_seed, (GRADIENT_STREAM, m)).generator().standard_normal(d)
            for m in range(M)]
    return GradientSet(np.vstack(rows))


def load_gradients_csv(path: Union[str, Path]) -> GradientSet:
    """Read one gradient per row from a CSV file.

    A header line is optional; when its first column is named `user` that
    column is dropped.
    """
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8") as f:
            first = f.readline().strip()
        header = [c.strip() for c in first.split(",")]
        try:
            [float(c) for c in header]
            has_header = False
        except ValueError:
            has_header = True
        data = np.loadtxt(path, delimiter=",", skiprows=1 if has_header else 0, ndmin=2,
                          encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ParameterError(f"{path}: not UTF-8 text ({exc.reason})") from exc
    except ValueError as exc:
        raise ParameterError(f"{path}: {exc}") from exc
    if has_header and header and header[0].lower() == "user":
        data = data[:, 1:]
    require(bool(np.all(np.isfinite(data))), f"{path}: gradient values must be finite")
    logger.info(f"Loaded {data.shape[0]} gradients of length {data.shape[1]} from {path}")
    return GradientSet(data)
