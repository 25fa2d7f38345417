"""
PEAR Sensitivity Module

Active-set detection, assembly of the stacked active Jacobian J = [A; G_A],
and the regret gradient g = P_H e computed through the reduced Schur system
(J H^-1 J^T) v = J H^-1 e, with the LP specialization (H = lam I) and normal
injection. Dense projector constructions are kept for verification only.
"""

from dataclasses import dataclass, field
from typing import List, NamedTuple, Tuple, Union

import numpy as np

from config import SensitivityConfig
from linalg import (
    DimensionMismatch,
    NotPositiveDefinite,
    SpdOperator,
    as_matrix,
    factor_spd,
    independent_rows,
    solve_spd,
)
from solver import ConvexInstance, PrimalDualSolution, SolveStatus, SolverError


class SchurSingular(RuntimeError):
    """Raised when the k x k Schur system cannot be factorized"""


# ============================================================================
# TYPES
# ============================================================================

@dataclass(frozen=True)
class ActiveSet:
    """Binding inequality rows at a primal-dual solution"""
    lower: Tuple[int, ...]
    upper: Tuple[int, ...]
    equality_count: int
    m: int
    pinned: Tuple[int, ...] = ()  # rows with l = u, always active

    def __post_init__(self):
        if set(self.lower) & set(self.upper):
            raise ValueError("a row cannot be both lower- and upper-active")
        if any(i >= self.m or i < 0 for i in self.lower + self.upper + self.pinned):
            raise ValueError("active index out of range")

    @property
    def active(self) -> Tuple[int, ...]:
        return tuple(sorted(set(self.lower) | set(self.upper) | set(self.pinned)))

    def mask(self) -> np.ndarray:
        """Binary activity pattern over the m inequality rows."""
        a = np.zeros(self.m, dtype=bool)
        a[list(self.active)] = True
        return a


class RowOrigin(NamedTuple):
    kind: str  # 'eq' | 'lower' | 'upper' | 'pinned'
    index: int


@dataclass
class ActiveJacobian:
    """Stacked active constraint matrix after LICQ filtering"""
    J: np.ndarray
    row_origin: List[RowOrigin]
    dropped: List[RowOrigin] = field(default_factory=list)

    @property
    def k(self) -> int:
        return self.J.shape[0]


@dataclass
class PearGradient:
    """Tangent gradient, normal component and Schur multipliers"""
    g: np.ndarray
    n_vec: np.ndarray
    v: np.ndarray


JacobianLike = Union[ActiveJacobian, np.ndarray]


def _jacobian_rows(J: JacobianLike, n: int) -> np.ndarray:
    M = J.J if isinstance(J, ActiveJacobian) else np.asarray(J, dtype=float)
    if M.size == 0:
        return np.zeros((0, n))
    M = np.atleast_2d(M)
    if M.shape[1] != n:
        raise DimensionMismatch(f"J has {M.shape[1]} columns, expected {n}")
    return M


# ============================================================================
# ACTIVE SET
# ============================================================================

def detect_active(inst: ConvexInstance, sol: PrimalDualSolution,
                  tol: float = None) -> ActiveSet:
    """
    Complementary slackness test on a certified solution.

    Row i is lower-active when (r_i - l_i) < -y_i - tol and upper-active when
    (u_i - r_i) < y_i - tol, with r = G z. A binding row whose multiplier is
    within tol of zero is inactive. Rows with l_i = u_i (within tol) are
    pinned and always active.
    """
    if sol.status is not SolveStatus.SOLVED:
        raise SolverError(f"active-set detection needs a Solved status, got {sol.status.value}")
    tol = SensitivityConfig.ACTIVE_TOL if tol is None else tol

    p, m = inst.p, inst.m
    if m == 0:
        return ActiveSet(lower=(), upper=(), equality_count=p, m=0)

    r = inst.G @ sol.z
    y = sol.y[p:]
    low_margin = r - inst.l
    upp_margin = inst.u - r
    with np.errstate(invalid="ignore"):
        pinned = np.isfinite(inst.l) & np.isfinite(inst.u) & ((inst.u - inst.l) <= tol)
    low = (low_margin < -y - tol) & ~pinned
    upp = (upp_margin < y - tol) & ~pinned

    return ActiveSet(
        lower=tuple(int(i) for i in np.where(low)[0]),
        upper=tuple(int(i) for i in np.where(upp)[0]),
        equality_count=p,
        m=m,
        pinned=tuple(int(i) for i in np.where(pinned)[0]),
    )


def assemble_jacobian(inst: ConvexInstance, act: ActiveSet,
                      rank_tol: float = None) -> ActiveJacobian:
    """
    Stack equality rows above the active inequality rows and drop dependent rows.
    """
    kinds = {i: 'lower' for i in act.lower}
    kinds.update({i: 'upper' for i in act.upper})
    kinds.update({i: 'pinned' for i in act.pinned})
    rows_idx = sorted(kinds)

    origin = [RowOrigin('eq', j) for j in range(inst.p)]
    origin += [RowOrigin(kinds[i], i) for i in rows_idx]
    stacked = np.vstack([inst.A, inst.G[rows_idx]]) if rows_idx else inst.A.copy()

    if stacked.shape[0] == 0:
        return ActiveJacobian(J=np.zeros((0, inst.n)), row_origin=[])

    keep = independent_rows(stacked, rank_tol)
    keep_set = set(keep)
    return ActiveJacobian(
        J=stacked[keep],
        row_origin=[origin[i] for i in keep],
        dropped=[origin[i] for i in range(len(origin)) if i not in keep_set],
    )


# ============================================================================
# REDUCED SCHUR SOLVES
# ============================================================================

def _schur_solve(S: np.ndarray, rhs: np.ndarray,
                 refine: int = SensitivityConfig.SCHUR_REFINE_STEPS) -> np.ndarray:
    """Solve S v = rhs with delta-regularized Cholesky plus iterative refinement."""
    k = S.shape[0]
    S = 0.5 * (S + S.T)
    delta = SensitivityConfig.SCHUR_REG * float(np.trace(S)) / k
    try:
        F = factor_spd(S + delta * np.eye(k))
    except NotPositiveDefinite as e:
        raise SchurSingular(f"Schur system singular beyond regularization: {e}") from e
    v = solve_spd(F, rhs)
    for _ in range(refine):
        v = v + solve_spd(F, rhs - S @ v)
    return v


def pear_gradient(H: SpdOperator, J: JacobianLike, e) -> PearGradient:
    """
    Regret gradient g = P_H e via the reduced system.

    x = H^-1 e, r = J x, (J H^-1 J^T) v = r, g = x - H^-1 J^T v.

    Args:
        H: SPD curvature operator
        J: Active Jacobian (k x n, full row rank)
        e: Prediction error c_hat - c

    Returns:
        PearGradient with g, n_vec = H^-1 J^T v and v
    """
    e = np.asarray(e, dtype=float)
    if e.shape != (H.dimension,):
        raise DimensionMismatch(f"e has shape {e.shape}, expected ({H.dimension},)")
    Jm = _jacobian_rows(J, H.dimension)
    x = H.solve(e)
    if Jm.shape[0] == 0:
        return PearGradient(g=x, n_vec=np.zeros_like(x), v=np.zeros(0))

    HinvJt = H.solve(Jm.T)
    S = Jm @ HinvJt
    v = _schur_solve(S, Jm @ x)
    n_vec = HinvJt @ v
    return PearGradient(g=x - n_vec, n_vec=n_vec, v=v)


def pear_gradient_lp(lam: float, J: JacobianLike, e) -> PearGradient:
    """
    LP specialization with H = lam I: J J^T v = J e, g = (e - J^T v) / lam.
    """
    if lam <= 0:
        raise ValueError(f"lambda_smooth must be positive, got {lam}")
    e = np.asarray(e, dtype=float)
    Jm = _jacobian_rows(J, e.shape[0])
    if Jm.shape[0] == 0:
        return PearGradient(g=e / lam, n_vec=np.zeros_like(e), v=np.zeros(0))

    v = _schur_solve(Jm @ Jm.T, Jm @ e)
    normal = Jm.T @ v
    return PearGradient(g=(e - normal) / lam, n_vec=normal / lam, v=v)


def normal_inject(pg: PearGradient, beta: float) -> np.ndarray:
    """
    Add a norm-matched fraction of the normal component:
    g + beta * (||g|| / ||n||) * n.
    """
    if beta < 0:
        raise ValueError(f"beta must be non-negative, got {beta}")
    g_norm = float(np.linalg.norm(pg.g))
    n_norm = float(np.linalg.norm(pg.n_vec))
    if beta == 0 or g_norm == 0.0 or n_norm == 0.0:
        return pg.g.copy()
    return pg.g + beta * (g_norm / n_norm) * pg.n_vec


# ============================================================================
# DENSE ORACLES (verification only)
# ============================================================================

def _dense_parts(H, J) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    H = as_matrix(H, "H")
    n = H.shape[0]
    Jm = _jacobian_rows(J, n)
    try:
        Hinv = solve_spd(factor_spd(H), np.eye(n))
    except NotPositiveDefinite as e:
        raise SchurSingular(f"curvature not SPD: {e}") from e
    if Jm.shape[0] == 0:
        return Hinv, Jm, np.zeros((n, 0)), np.zeros((0, 0))
    HinvJt = Hinv @ Jm.T
    S = Jm @ HinvJt
    try:
        Sinv = solve_spd(factor_spd(0.5 * (S + S.T)), np.eye(S.shape[0]))
    except NotPositiveDefinite as e:
        raise SchurSingular(f"J H^-1 J^T is singular: {e}") from e
    return Hinv, Jm, HinvJt, Sinv


def dense_projector(H, J: JacobianLike) -> np.ndarray:
    """Explicit P_H = H^-1 - H^-1 J^T (J H^-1 J^T)^-1 J H^-1."""
    Hinv, Jm, HinvJt, Sinv = _dense_parts(H, J)
    if Jm.shape[0] == 0:
        return Hinv
    return Hinv - HinvJt @ Sinv @ HinvJt.T


def tangent_projector(H, J: JacobianLike) -> np.ndarray:
    """Explicit H-orthogonal projector onto ker(J): I - H^-1 J^T (J H^-1 J^T)^-1 J."""
    Hinv, Jm, HinvJt, Sinv = _dense_parts(H, J)
    n = Hinv.shape[0]
    if Jm.shape[0] == 0:
        return np.eye(n)
    return np.eye(n) - HinvJt @ Sinv @ Jm
