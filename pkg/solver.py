"""
Forward QP Solver

Solves  min 1/2 z^T H z + q^T z  s.t.  A z = b,  l <= G z <= u
with an operator-splitting (ADMM) iteration on the folded form
l' <= [A; G] z <= u', followed by active-set polishing that recovers an
exact primal-dual pair and certifies it against the KKT residuals.

Dual sign convention: an inequality multiplier is negative only when its lower
bound binds and positive only when its upper bound binds.
"""

import hashlib
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, Optional, Tuple, Union

import numpy as np
from scipy.optimize import lsq_linear

from config import SolverConfig
from linalg import (
    DimensionMismatch,
    NotPositiveDefinite,
    SpdOperator,
    as_matrix,
    factor_spd,
    independent_rows,
    solve_spd,
)


class SolverError(RuntimeError):
    """Raised by callers that require a certified (Solved) solution"""


class SolveStatus(str, Enum):
    SOLVED = "Solved"
    MAX_ITERATIONS = "MaxIterations"
    INFEASIBLE = "Infeasible"


# ============================================================================
# PROBLEM DATA
# ============================================================================

@dataclass(frozen=True)
class ScaledIdentity:
    """Curvature lam * I (quadratic smoothing of an LP)"""
    lam: float


@dataclass(frozen=True)
class ExplicitSpd:
    """Explicit SPD curvature matrix"""
    H: np.ndarray


Curvature = Union[ScaledIdentity, ExplicitSpd]


def _empty_rows(n: int) -> np.ndarray:
    return np.zeros((0, n))


@dataclass
class ConvexInstance:
    """
    One strictly convex QP.

    `cost` is the linear cost slot q. Problems posed as maximizations store
    cost_sign = -1 so that `with_cost(values)` writes q = -values; everything
    downstream only ever sees a minimization.
    """
    n: int
    curvature: Curvature
    cost: Optional[np.ndarray] = None
    A: Optional[np.ndarray] = None
    b: Optional[np.ndarray] = None
    G: Optional[np.ndarray] = None
    l: Optional[np.ndarray] = None
    u: Optional[np.ndarray] = None
    cost_sign: float = 1.0
    name: str = ""
    operator: Optional[SpdOperator] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        n = self.n
        self.cost = np.zeros(n) if self.cost is None else np.asarray(self.cost, dtype=float)
        self.A = _empty_rows(n) if self.A is None else as_matrix(np.atleast_2d(self.A), "A")
        self.b = np.zeros(self.A.shape[0]) if self.b is None else np.asarray(self.b, dtype=float)
        self.G = _empty_rows(n) if self.G is None else as_matrix(np.atleast_2d(self.G), "G")
        m = self.G.shape[0]
        self.l = np.full(m, -np.inf) if self.l is None else np.asarray(self.l, dtype=float)
        self.u = np.full(m, np.inf) if self.u is None else np.asarray(self.u, dtype=float)

        if self.cost.shape != (n,):
            raise DimensionMismatch(f"cost has shape {self.cost.shape}, expected ({n},)")
        if self.A.shape[1] != n or self.G.shape[1] != n:
            raise DimensionMismatch("constraint matrices must have n columns")
        if self.b.shape != (self.A.shape[0],):
            raise DimensionMismatch("eq_rhs length must match eq_matrix rows")
        if self.l.shape != (m,) or self.u.shape != (m,):
            raise DimensionMismatch("bounds must match ineq_matrix rows")
        if np.any(self.l > self.u):
            raise ValueError("lower bounds must not exceed upper bounds")
        if not np.all(np.isfinite(self.cost)):
            raise ValueError("cost contains non-finite entries")

        if self.operator is None:
            if isinstance(self.curvature, ScaledIdentity):
                self.operator = SpdOperator.scaled_identity(self.curvature.lam, n)
            else:
                H = as_matrix(self.curvature.H, "H")
                if H.shape != (n, n):
                    raise DimensionMismatch(f"H has shape {H.shape}, expected ({n}, {n})")
                self.operator = SpdOperator.from_matrix(H)

    @property
    def p(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.G.shape[0]

    @property
    def is_smoothed_lp(self) -> bool:
        return isinstance(self.curvature, ScaledIdentity)

    def with_cost(self, values) -> "ConvexInstance":
        """Copy of the instance with the cost slot filled from predicted values."""
        return replace(self, cost=self.cost_sign * np.asarray(values, dtype=float))

    def folded(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Stacked (C, lo, hi) with equalities first as lo = hi = b."""
        C = np.vstack([self.A, self.G])
        lo = np.concatenate([self.b, self.l])
        hi = np.concatenate([self.b, self.u])
        return C, lo, hi

    def objective(self, z) -> float:
        """Smoothed objective 1/2 z^T H z + q^T z."""
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ self.operator.apply(z) + self.cost @ z)

    def signature(self) -> str:
        """Key identifying the feasible region and curvature (not the cost)."""
        h = hashlib.md5()
        for arr in (self.A, self.b, self.G, self.l, self.u):
            h.update(np.ascontiguousarray(arr).tobytes())
        if isinstance(self.curvature, ScaledIdentity):
            h.update(repr(self.curvature.lam).encode())
        else:
            h.update(np.ascontiguousarray(self.curvature.H).tobytes())
        return h.hexdigest()


@dataclass
class SolverSettings:
    """Runtime solver settings"""
    eps_abs: float = SolverConfig.EPS_ABS
    eps_rel: float = SolverConfig.EPS_REL
    max_iter: int = SolverConfig.MAX_ITER
    rho: float = SolverConfig.RHO
    sigma: float = SolverConfig.SIGMA
    alpha: float = SolverConfig.ALPHA
    polish: bool = True
    verbose: bool = False


@dataclass
class PrimalDualSolution:
    """Primal-dual pair with its residual certificate"""
    z: np.ndarray
    y: np.ndarray  # equalities first, then inequalities
    status: SolveStatus
    stationarity_residual: float
    primal_residual: float
    iterations: int = 0
    polished: bool = False
    solve_time: float = 0.0

    def y_eq(self, p: int) -> np.ndarray:
        return self.y[:p]

    def y_ineq(self, p: int) -> np.ndarray:
        return self.y[p:]


# ============================================================================
# KKT RESIDUALS
# ============================================================================

def _primal_violation(r: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    return np.maximum(lo - r, 0.0) + np.maximum(r - hi, 0.0)


def kkt_report(inst: ConvexInstance, sol: PrimalDualSolution) -> Dict[str, float]:
    """
    Recompute the infinity norms of the three KKT residual blocks.

    Returns:
        Dict with 'stationarity', 'primal' and 'complementarity'
    """
    C, lo, hi = inst.folded()
    z = np.asarray(sol.z, dtype=float)
    y = np.asarray(sol.y, dtype=float)
    if z.shape != (inst.n,) or y.shape != (C.shape[0],):
        raise DimensionMismatch(
            f"solution shapes z{z.shape}, y{y.shape} do not match instance "
            f"(n={inst.n}, rows={C.shape[0]})"
        )

    stationarity = inst.operator.apply(z) + inst.cost + C.T @ y
    r = C @ z
    primal = _primal_violation(r, lo, hi)

    y_low = np.minimum(y, 0.0)
    y_upp = np.maximum(y, 0.0)
    with np.errstate(invalid="ignore"):
        comp_low = np.where(y_low != 0.0, np.abs(y_low * (r - lo)), 0.0)
        comp_upp = np.where(y_upp != 0.0, np.abs(y_upp * (hi - r)), 0.0)

    def _norm(v: np.ndarray) -> float:
        return float(np.max(np.abs(v))) if v.size else 0.0

    return {
        "stationarity": _norm(stationarity),
        "primal": _norm(primal),
        "complementarity": max(_norm(comp_low), _norm(comp_upp)),
    }


# ============================================================================
# ADMM + POLISHING
# ============================================================================

class _AdmmWorkspace:
    """Dense ADMM workspace for one solve call"""

    def __init__(self, inst: ConvexInstance, settings: SolverSettings):
        self.inst = inst
        self.settings = settings
        self.C, self.lo, self.hi = inst.folded()
        self.P = inst.operator.to_dense()
        self.q = inst.cost
        self.n = inst.n
        self.rows = self.C.shape[0]

        eq = (self.hi - self.lo) < 1e-12
        free = np.isinf(self.lo) & np.isinf(self.hi)
        self.rho_scale = np.where(eq, SolverConfig.RHO_EQ_SCALE, 1.0)
        self.rho_scale = np.where(free, 1e-6, self.rho_scale)
        self.set_rho(settings.rho)

    def set_rho(self, rho: float):
        self.rho_base = rho
        self.rho = rho * self.rho_scale
        K = self.P + self.settings.sigma * np.eye(self.n) + self.C.T @ (self.rho[:, None] * self.C)
        self.K = factor_spd(K)

    def project(self, v: np.ndarray) -> np.ndarray:
        return np.minimum(np.maximum(v, self.lo), self.hi)

    def step(self, x, z, y):
        s = self.settings
        rhs = s.sigma * x - self.q + self.C.T @ (self.rho * z - y)
        x_tilde = solve_spd(self.K, rhs)
        z_tilde = self.C @ x_tilde
        x_new = s.alpha * x_tilde + (1.0 - s.alpha) * x
        z_relax = s.alpha * z_tilde + (1.0 - s.alpha) * z
        z_new = self.project(z_relax + y / self.rho)
        y_new = y + self.rho * (z_relax - z_new)
        return x_new, z_new, y_new

    def residuals(self, x, z, y) -> Tuple[float, float, float, float]:
        Cx = self.C @ x
        Px = self.P @ x
        Cty = self.C.T @ y
        pri = float(np.max(np.abs(Cx - z))) if self.rows else 0.0
        dua = float(np.max(np.abs(Px + self.q + Cty)))
        s = self.settings
        pri_scale = max(np.max(np.abs(Cx)) if self.rows else 0.0,
                        np.max(np.abs(z)) if self.rows else 0.0)
        dua_scale = max(np.max(np.abs(Px)), np.max(np.abs(self.q)),
                        np.max(np.abs(Cty)) if self.rows else 0.0)
        eps_pri = s.eps_abs + s.eps_rel * pri_scale
        eps_dua = s.eps_abs + s.eps_rel * dua_scale
        return pri, dua, eps_pri, eps_dua

    def is_primal_infeasible(self, delta_y: np.ndarray) -> bool:
        """OSQP-style certificate on the dual iterate difference."""
        if self.rows == 0:
            return False
        norm_dy = float(np.max(np.abs(delta_y)))
        if norm_dy < 1e-12:
            return False
        eps = SolverConfig.EPS_PRIM_INF * norm_dy
        if np.max(np.abs(self.C.T @ delta_y)) > eps:
            return False
        pos = np.maximum(delta_y, 0.0)
        neg = np.minimum(delta_y, 0.0)
        with np.errstate(invalid="ignore"):
            support = (np.sum(np.where(pos > 0, self.hi * pos, 0.0))
                       + np.sum(np.where(neg < 0, self.lo * neg, 0.0)))
        return support < -eps

    def polish(self, z_slack: np.ndarray, y: np.ndarray) -> Optional[Tuple[np.ndarray, np.ndarray]]:
        """
        Solve the equality-constrained QP on the guessed active set.

        The guess uses the complementary slackness test; the primal point comes
        from the reduced Schur system on an independent row subset and the
        multipliers from a sign-constrained least-squares fit, so degenerate
        (dependent) active sets still get sign-consistent duals.
        """
        low = z_slack - self.lo < -y
        upp = self.hi - z_slack < y
        # both tests firing means l ~ u: treat the row as an equality
        eqlike = ((self.hi - self.lo) < 1e-12) | (low & upp)
        low &= ~eqlike
        upp &= ~eqlike
        active = np.where(eqlike | low | upp)[0]

        op = self.inst.operator
        x_free = op.solve(-self.q)
        if active.size:
            target = np.where(upp[active], self.hi[active],
                              np.where(low[active], self.lo[active],
                                       0.5 * (self.lo[active] + self.hi[active])))
            J = self.C[active]
            keep = independent_rows(J)
            Jk = J[keep]
            HinvJt = op.solve(Jk.T)
            S = Jk @ HinvJt
            try:
                nu = solve_spd(factor_spd(0.5 * (S + S.T)), Jk @ x_free - target[keep])
            except NotPositiveDefinite:
                return None
            x = x_free - HinvJt @ nu
        else:
            x = x_free

        r = self.C @ x
        if np.max(_primal_violation(r, self.lo, self.hi), initial=0.0) > self.settings.eps_abs:
            return None

        y_full = np.zeros(self.rows)
        grad = self.P @ x + self.q
        if active.size:
            lb = np.where(upp[active], 0.0, -np.inf)
            ub = np.where(low[active], 0.0, np.inf)
            fit = lsq_linear(self.C[active].T, -grad, bounds=(lb, ub),
                             method="bvls", tol=1e-14)
            y_full[active] = fit.x
        if np.max(np.abs(grad + self.C.T @ y_full)) > self.settings.eps_abs:
            return None
        return x, y_full


def _certificate(inst: ConvexInstance, z: np.ndarray, y: np.ndarray) -> Tuple[float, float]:
    C, lo, hi = inst.folded()
    stat = inst.operator.apply(z) + inst.cost + C.T @ y
    prim = _primal_violation(C @ z, lo, hi)
    return (float(np.max(np.abs(stat))),
            float(np.max(prim)) if prim.size else 0.0)


def solve(
    inst: ConvexInstance,
    settings: Optional[SolverSettings] = None,
    warm_start: Optional[Tuple[np.ndarray, np.ndarray]] = None,
    cache=None,
) -> PrimalDualSolution:
    """
    Solve the instance and return a certified primal-dual pair.

    Args:
        inst: Problem data with the cost slot filled
        settings: Tolerances and ADMM parameters (defaults from SolverConfig)
        warm_start: Optional (z, y) initial iterate
        cache: Optional WarmStartCache consulted when warm_start is None and
            updated with certified solutions

    Returns:
        PrimalDualSolution; status MaxIterations carries the best iterate
    """
    settings = settings or SolverSettings()
    t0 = time.time()
    ws = _AdmmWorkspace(inst, settings)

    if warm_start is None and cache is not None:
        warm_start = cache.lookup(inst)

    if warm_start is not None:
        x = np.asarray(warm_start[0], dtype=float).copy()
        y = np.asarray(warm_start[1], dtype=float).copy()
        if x.shape != (inst.n,) or y.shape != (ws.rows,):
            raise DimensionMismatch("warm start shapes do not match the instance")
        z = ws.project(ws.C @ x)
    else:
        x = np.zeros(inst.n)
        z = ws.project(np.zeros(ws.rows))
        y = np.zeros(ws.rows)

    def _finish(zv, yv, status, iters, polished) -> PrimalDualSolution:
        stat, prim = _certificate(inst, zv, yv)
        sol = PrimalDualSolution(
            z=zv, y=yv, status=status,
            stationarity_residual=stat, primal_residual=prim,
            iterations=iters, polished=polished, solve_time=time.time() - t0,
        )
        if settings.verbose:
            print(f"[SOLVER] {status.value} after {iters} iterations "
                  f"(stat={stat:.2e}, prim={prim:.2e}, polished={polished})")
        if cache is not None and status is SolveStatus.SOLVED:
            cache.store(inst, sol)
        return sol

    if settings.polish:
        polished = ws.polish(z, y)
        if polished is not None:
            return _finish(polished[0], polished[1], SolveStatus.SOLVED, 0, True)

    y_prev = y.copy()
    best, best_score = (x.copy(), y.copy()), np.inf
    for it in range(1, settings.max_iter + 1):
        x, z, y = ws.step(x, z, y)

        check = it % SolverConfig.POLISH_INTERVAL == 0 or it == settings.max_iter
        if not check:
            continue

        if settings.polish:
            polished = ws.polish(z, y)
            if polished is not None:
                return _finish(polished[0], polished[1], SolveStatus.SOLVED, it, True)

        pri, dua, eps_pri, eps_dua = ws.residuals(x, z, y)
        stat, prim = _certificate(inst, x, y)
        if stat <= settings.eps_abs and prim <= settings.eps_abs:
            return _finish(x, y, SolveStatus.SOLVED, it, False)
        if max(stat, prim) < best_score:
            best, best_score = (x.copy(), y.copy()), max(stat, prim)

        if ws.is_primal_infeasible(y - y_prev):
            print(f"[SOLVER] Primal infeasibility certificate at iteration {it}")
            return _finish(x, y, SolveStatus.INFEASIBLE, it, False)
        y_prev = y.copy()

        # residual balancing
        if it % SolverConfig.ADAPTIVE_RHO_INTERVAL == 0 and pri > 0 and dua > 0:
            ratio = (pri / max(eps_pri, 1e-300)) / (dua / max(eps_dua, 1e-300))
            tol = SolverConfig.ADAPTIVE_RHO_TOLERANCE
            if ratio > tol or ratio < 1.0 / tol:
                new_rho = float(np.clip(ws.rho_base * np.sqrt(ratio), 1e-6, 1e6))
                ws.set_rho(new_rho)

    print(f"[SOLVER] ⚠️  Reached max_iter={settings.max_iter} without certificate")
    return _finish(best[0], best[1], SolveStatus.MAX_ITERATIONS, settings.max_iter, False)


def solve_certified(inst: ConvexInstance, settings: Optional[SolverSettings] = None,
                    cache=None) -> PrimalDualSolution:
    """Solve and raise SolverError unless the status is Solved."""
    sol = solve(inst, settings, cache=cache)
    if sol.status is not SolveStatus.SOLVED:
        raise SolverError(f"solve ended with status {sol.status.value}")
    return sol
