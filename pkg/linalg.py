"""
Dense Linear Algebra Kernels

SPD factorization, triangular solves and numerical-rank row filtering.
Every other module applies curvature inverses and Schur solves through these
helpers; nothing here adds implicit regularization.
"""

from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from scipy import linalg as sla

from config import LinalgConfig


class DimensionMismatch(ValueError):
    """Raised when operand shapes are inconsistent"""


class NotPositiveDefinite(ValueError):
    """Raised when a matrix expected to be SPD is not"""


@dataclass(frozen=True)
class SpdFactor:
    """Lower-triangular Cholesky factor L with M = L L^T"""
    lower: np.ndarray

    @property
    def dimension(self) -> int:
        return self.lower.shape[0]

    def reconstruct(self) -> np.ndarray:
        return self.lower @ self.lower.T


def as_matrix(M, name: str = "matrix") -> np.ndarray:
    """Coerce input to a finite 2-D float array."""
    arr = np.asarray(M, dtype=float)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def factor_spd(M) -> SpdFactor:
    """
    Cholesky-factorize a symmetric positive definite matrix.

    Args:
        M: Square symmetric matrix

    Returns:
        SpdFactor holding the lower-triangular factor

    Raises:
        DimensionMismatch: M is not square
        NotPositiveDefinite: M is asymmetric or a pivot falls below
            dimension * machine-epsilon * max diagonal
    """
    M = as_matrix(M, "M")
    n, cols = M.shape
    if n != cols:
        raise DimensionMismatch(f"SPD factorization needs a square matrix, got {M.shape}")
    if n == 0:
        return SpdFactor(lower=np.zeros((0, 0)))

    scale = max(1.0, float(np.max(np.abs(M))))
    if np.max(np.abs(M - M.T)) > LinalgConfig.SYMMETRY_TOL * scale:
        raise NotPositiveDefinite("matrix is not symmetric")

    try:
        L = sla.cholesky(M, lower=True, check_finite=False)
    except sla.LinAlgError as e:
        raise NotPositiveDefinite(f"Cholesky failed: {e}") from e

    # scipy accepts tiny positive pivots; enforce the relative floor
    max_diag = float(np.max(np.diag(M)))
    floor = n * np.finfo(float).eps * max_diag
    if max_diag <= 0 or np.min(np.diag(L)) ** 2 <= floor:
        raise NotPositiveDefinite(f"pivot below threshold {floor:.3e}")

    return SpdFactor(lower=L)


def solve_spd(F: SpdFactor, rhs) -> np.ndarray:
    """
    Solve M x = rhs given the Cholesky factor of M.

    rhs may be a vector or a matrix of stacked right-hand-side columns.
    """
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape[0] != F.dimension:
        raise DimensionMismatch(
            f"rhs has leading dimension {rhs.shape[0]}, factor has {F.dimension}"
        )
    if F.dimension == 0:
        return rhs.copy()
    return sla.cho_solve((F.lower, True), rhs, check_finite=False)


def independent_rows(J, tol: Optional[float] = None) -> List[int]:
    """
    Select a maximal linearly independent subset of rows, in order.

    Rows are processed top to bottom and kept when their component orthogonal
    to the already-kept rows exceeds tol times the largest row norm, so
    earlier rows (equalities are stacked first) take priority.

    Args:
        J: Matrix whose rows are tested
        tol: Relative pivot threshold (defaults to LinalgConfig.RANK_TOL)

    Returns:
        Sorted list of kept row indices
    """
    tol = LinalgConfig.RANK_TOL if tol is None else tol
    if tol <= 0:
        raise ValueError("tol must be positive")

    J = np.asarray(J, dtype=float)
    if J.size == 0:
        return []
    J = np.atleast_2d(J)

    scale = float(np.max(np.linalg.norm(J, axis=1)))
    if scale == 0.0:
        return []

    kept: List[int] = []
    basis = np.zeros((0, J.shape[1]))
    for i, row in enumerate(J):
        r = row.copy()
        # two passes of Gram-Schmidt keep the basis orthonormal to working precision
        for _ in range(2):
            if basis.shape[0]:
                r -= basis.T @ (basis @ r)
        pivot = float(np.linalg.norm(r))
        if pivot > tol * scale:
            basis = np.vstack([basis, r / pivot])
            kept.append(i)
    return kept


class SpdOperator:
    """
    SPD curvature operator applied through factorizations.

    Either a scaled identity (lam * I) or an explicit matrix with a cached
    Cholesky factor. The inverse is never formed.
    """

    def __init__(self, dimension: int, scale: Optional[float] = None,
                 matrix: Optional[np.ndarray] = None):
        self.dimension = dimension
        self.scale = scale
        self.matrix = matrix
        self.factor = factor_spd(matrix) if matrix is not None else None

    @classmethod
    def scaled_identity(cls, lam: float, dimension: int) -> "SpdOperator":
        if lam <= 0:
            raise NotPositiveDefinite(f"scaled identity needs lambda > 0, got {lam}")
        return cls(dimension, scale=float(lam))

    @classmethod
    def from_matrix(cls, H) -> "SpdOperator":
        H = as_matrix(H, "H")
        return cls(H.shape[0], matrix=H)

    @property
    def is_scaled_identity(self) -> bool:
        return self.matrix is None

    def apply(self, x) -> np.ndarray:
        """Return H x."""
        x = np.asarray(x, dtype=float)
        if self.is_scaled_identity:
            return self.scale * x
        return self.matrix @ x

    def solve(self, rhs) -> np.ndarray:
        """Return H^{-1} rhs."""
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape[0] != self.dimension:
            raise DimensionMismatch(
                f"rhs has leading dimension {rhs.shape[0]}, operator has {self.dimension}"
            )
        if self.is_scaled_identity:
            return rhs / self.scale
        return solve_spd(self.factor, rhs)

    def to_dense(self) -> np.ndarray:
        if self.is_scaled_identity:
            return self.scale * np.eye(self.dimension)
        return self.matrix.copy()
