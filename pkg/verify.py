"""
Verification Suite

Independent oracles for the sensitivity math: projector identities,
reduced-Schur vs dense-projector agreement, finite-difference regret
gradients, normal filtering and invariance, the MSE decomposition, exact
oracle equivalence, and the active-set stability rate.
"""

import itertools
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from config import ExperimentDefaults
from linalg import SpdOperator
from problems import (
    GridPathProblem,
    KnapsackProblem,
    exact_grid_path,
    exact_knapsack,
    incidence_matrix,
)
from sensitivity import (
    assemble_jacobian,
    dense_projector,
    detect_active,
    pear_gradient,
    pear_gradient_lp,
    tangent_projector,
)
from solver import ConvexInstance, ExplicitSpd, ScaledIdentity, SolveStatus, solve, solve_certified


@dataclass
class CheckReport:
    name: str
    instance: str
    max_error: float
    tolerance: float
    skipped: int = 0
    status: str = ""

    def __post_init__(self):
        if not self.status:
            self.status = "pass" if self.max_error <= self.tolerance else "fail"

    @property
    def passed(self) -> bool:
        # skipped checks do not count as failures
        return self.status != "fail"

    def line(self) -> str:
        return (f"{self.name},{self.instance},{self.max_error:.3e},{self.tolerance:.1e},"
                f"{self.status},{self.skipped}")


# ============================================================================
# RANDOM INSTANCES
# ============================================================================

def random_spd(n: int, rng: np.random.Generator) -> np.ndarray:
    Q = rng.standard_normal((n, n))
    return Q @ Q.T / n + 0.5 * np.eye(n)


def random_full_rank(k: int, n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal((k, n))


def random_box_instance(n: int, rng: np.random.Generator, explicit: bool = True,
                        with_equality: bool = True) -> ConvexInstance:
    """Box-constrained QP with an optional single equality row."""
    curvature = ExplicitSpd(random_spd(n, rng)) if explicit else ScaledIdentity(float(rng.uniform(0.1, 1.0)))
    A = rng.standard_normal((1, n)) if with_equality else None
    b = np.zeros(1) if with_equality else None
    return ConvexInstance(
        n=n,
        curvature=curvature,
        cost=rng.standard_normal(n),
        A=A,
        b=b,
        G=np.eye(n),
        l=-rng.uniform(0.2, 1.0, n),
        u=rng.uniform(0.2, 1.0, n),
        name="random_box",
    )


def _active_mask(inst: ConvexInstance, c_hat) -> Optional[np.ndarray]:
    sol = solve(inst.with_cost(c_hat))
    if sol.status is not SolveStatus.SOLVED:
        return None
    return detect_active(inst.with_cost(c_hat), sol).mask()


def _gradient(inst: ConvexInstance, c_hat, c) -> np.ndarray:
    q_inst = inst.with_cost(c_hat)
    jac = assemble_jacobian(q_inst, detect_active(q_inst, solve_certified(q_inst)))
    return pear_gradient(inst.operator, jac, np.asarray(c_hat) - np.asarray(c)).g


# ============================================================================
# CHECKS
# ============================================================================

@dataclass
class FiniteDiffResult:
    gradient: np.ndarray
    skipped: np.ndarray  # True where the active set changed under +-h


def finite_diff_regret(inst: ConvexInstance, c_hat, c, h: float = 1e-5) -> FiniteDiffResult:
    """
    Central differences of the smoothed regret f_c(z(c_hat)) - f_c(z(c)).

    Coordinates whose perturbation changes the detected active set are
    flagged and left at zero.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    c_hat = np.asarray(c_hat, dtype=float)
    true_inst = inst.with_cost(c)
    base_mask = _active_mask(inst, c_hat)

    def smoothed_value(values) -> float:
        return true_inst.objective(solve_certified(inst.with_cost(values)).z)

    grad = np.zeros(inst.n)
    skipped = np.zeros(inst.n, dtype=bool)
    for i in range(inst.n):
        step = np.zeros(inst.n)
        step[i] = h
        plus, minus = c_hat + step, c_hat - step
        mask_p, mask_m = _active_mask(inst, plus), _active_mask(inst, minus)
        if (base_mask is None or mask_p is None or mask_m is None
                or np.any(mask_p != base_mask) or np.any(mask_m != base_mask)):
            skipped[i] = True
            continue
        grad[i] = (smoothed_value(plus) - smoothed_value(minus)) / (2 * h)
    return FiniteDiffResult(gradient=grad, skipped=skipped)


def check_regret_gradient(inst: ConvexInstance, c_hat, c, h: float = 1e-5,
                          tolerance: float = 1e-4) -> CheckReport:
    """grad_pear (beta = 0) against finite differences on non-skipped coordinates."""
    fd = finite_diff_regret(inst, c_hat, c, h)
    g = _gradient(inst, c_hat, c)
    keep = ~fd.skipped
    if not np.any(keep):
        return CheckReport("theorem_fd", inst.name, 0.0, tolerance, int(fd.skipped.sum()), "skipped")
    denom = max(float(np.max(np.abs(g[keep]))), 1e-2)
    err = float(np.max(np.abs(fd.gradient[keep] - g[keep]))) / denom
    return CheckReport("theorem_fd", inst.name, err, tolerance, int(fd.skipped.sum()))


def check_projection_identities(H, J, tolerance: float = 1e-8) -> CheckReport:
    """
    Max entrywise deviation of J P = 0, P J^T = 0, Pi^2 = Pi, P = Pi H^-1 and P = P^T.
    """
    H = np.asarray(H, dtype=float)
    J = np.atleast_2d(np.asarray(J, dtype=float))
    P = dense_projector(H, J)
    Pi = tangent_projector(H, J)
    Hinv = np.linalg.inv(H)
    errors = [
        np.max(np.abs(J @ P)),
        np.max(np.abs(P @ J.T)),
        np.max(np.abs(Pi @ Pi - Pi)),
        np.max(np.abs(P - Pi @ Hinv)),
        np.max(np.abs(P - P.T)),
    ]
    return CheckReport("projection_identities", f"n={H.shape[0]};k={J.shape[0]}",
                       float(max(errors)), tolerance)


def schur_vs_dense(H, J, e, tolerance: float = 1e-9, inject_bug: bool = False) -> CheckReport:
    """
    ||pear_gradient - P_H e|| / (1 + ||e||); for scaled-identity H the LP path
    is compared as well.

    inject_bug flips the sign of the normal correction (g = x + H^-1 J^T v)
    and must make the check fail.
    """
    H = np.asarray(H, dtype=float)
    e = np.asarray(e, dtype=float)
    pg = pear_gradient(SpdOperator.from_matrix(H), J, e)
    g = pg.g + 2.0 * pg.n_vec if inject_bug else pg.g
    reference = dense_projector(H, J) @ e
    scale = 1.0 + float(np.linalg.norm(e))
    err = float(np.linalg.norm(g - reference)) / scale

    lam = H[0, 0]
    if np.allclose(H, lam * np.eye(H.shape[0]), rtol=0, atol=0):
        g_lp = pear_gradient_lp(lam, J, e).g
        err = max(err, float(np.linalg.norm(g_lp - reference)) / scale)

    return CheckReport("schur_vs_dense", f"n={H.shape[0]};k={np.atleast_2d(J).shape[0]}", err, tolerance)


def check_mse_decomposition(H, J, e, tolerance: float = 1e-8) -> CheckReport:
    """H (g + n_vec) = e."""
    H = np.asarray(H, dtype=float)
    pg = pear_gradient(SpdOperator.from_matrix(H), J, e)
    err = float(np.max(np.abs(H @ (pg.g + pg.n_vec) - np.asarray(e))))
    return CheckReport("mse_decomposition", f"n={H.shape[0]}", err, tolerance)


def check_normal_filtering(H, J, v, tolerance: float = 1e-8) -> CheckReport:
    """e = J^T v lies in the normal space, so g must vanish."""
    H = np.asarray(H, dtype=float)
    J = np.atleast_2d(np.asarray(J, dtype=float))
    e = J.T @ np.asarray(v, dtype=float)
    g = pear_gradient(SpdOperator.from_matrix(H), J, e).g
    bound = float(np.linalg.norm(e)) / float(np.linalg.eigvalsh(H)[0])
    err = float(np.linalg.norm(g)) / max(bound, 1e-300)
    return CheckReport("normal_filtering", f"n={H.shape[0]};k={J.shape[0]}", err, tolerance)


def check_normal_invariance(inst: ConvexInstance, c_hat, c, trials: int = 5,
                            rng: Optional[np.random.Generator] = None,
                            alpha0: float = 1.0, tolerance: float = 1e-6) -> CheckReport:
    """
    Shift c_hat along J^T v with alpha shrunk until the active set is kept,
    then compare gradients. Trials with no admissible alpha > 1e-10 are skipped.
    """
    rng = rng or np.random.default_rng(0)
    c_hat = np.asarray(c_hat, dtype=float)
    q_inst = inst.with_cost(c_hat)
    sol = solve_certified(q_inst)
    act = detect_active(q_inst, sol)
    jac = assemble_jacobian(q_inst, act)
    g0 = pear_gradient(inst.operator, jac, c_hat - c).g
    if jac.k == 0:
        return CheckReport("normal_invariance", inst.name, 0.0, tolerance)

    worst, skipped = 0.0, 0
    for _ in range(trials):
        v = rng.standard_normal(jac.k)
        direction = jac.J.T @ v
        alpha = alpha0
        while alpha > 1e-10:
            shifted = c_hat + alpha * direction
            mask = _active_mask(inst, shifted)
            if mask is not None and np.array_equal(mask, act.mask()):
                worst = max(worst, float(np.max(np.abs(_gradient(inst, shifted, c) - g0))))
                break
            alpha *= 0.5
        else:
            skipped += 1

    if skipped == trials:
        return CheckReport("normal_invariance", inst.name, 0.0, tolerance, skipped, "skipped")
    return CheckReport("normal_invariance", inst.name, worst, tolerance, skipped)


def active_set_change_rate(inst: ConvexInstance, c_hat, scale: float = ExperimentDefaults.STABILITY_SCALE,
                           trials: int = ExperimentDefaults.STABILITY_TRIALS,
                           rng: Optional[np.random.Generator] = None) -> float:
    """
    Average percentage of inequality rows whose activity flips under
    multiplicative perturbations c_hat * (1 + scale * U(-1, 1)).
    """
    if scale < 0:
        raise ValueError("scale must be non-negative")
    if inst.m == 0 or scale == 0 or trials == 0:
        return 0.0
    rng = rng or np.random.default_rng(0)
    c_hat = np.asarray(c_hat, dtype=float)
    base = detect_active(inst.with_cost(c_hat), solve_certified(inst.with_cost(c_hat))).mask()

    rates = []
    for _ in range(trials):
        perturbed = c_hat * (1.0 + scale * rng.uniform(-1.0, 1.0, size=c_hat.shape))
        q_inst = inst.with_cost(perturbed)
        mask = detect_active(q_inst, solve_certified(q_inst)).mask()
        rates.append(100.0 * float(np.sum(mask != base)) / inst.m)
    return float(np.mean(rates))


def model_change_rate(inst: ConvexInstance, predictions: np.ndarray, scale: float = ExperimentDefaults.STABILITY_SCALE,
                      trials: int = ExperimentDefaults.STABILITY_TRIALS, seed: int = 0) -> float:
    """Change rate averaged over a batch of predicted cost vectors."""
    rng = np.random.default_rng(seed)
    return float(np.mean([active_set_change_rate(inst, c_hat, scale, trials, rng) for c_hat in predictions]))


def check_exact_oracles(rng: np.random.Generator, knapsack_items: int = 12,
                        trials: int = 20) -> List[CheckReport]:
    """DP oracles against exhaustive enumeration."""
    reports = []
    subsets = np.array(list(itertools.product((0, 1), repeat=knapsack_items)), dtype=float)

    worst = 0.0
    for _ in range(trials):
        weights = tuple(int(w) for w in rng.integers(1, 10, size=knapsack_items))
        p = KnapsackProblem(weights=weights, capacity_ratio=float(rng.uniform(0.2, 0.8)))
        values = rng.uniform(0.0, 10.0, size=knapsack_items)
        feasible = subsets[subsets @ np.array(weights) <= np.floor(p.capacity + 1e-9)]
        best = float(np.max(feasible @ values))
        worst = max(worst, abs(best - exact_knapsack(p, values).objective_value))
    reports.append(CheckReport("knapsack_dp_vs_enumeration", f"n={knapsack_items}", worst, 1e-9))

    grid = GridPathProblem()
    A = incidence_matrix(grid)
    paths = enumerate_grid_paths(grid)
    worst = 0.0
    for _ in range(trials):
        costs = rng.uniform(0.0, 2.0, size=grid.edge_count)
        best = min(float(costs @ z) for z in paths)
        dp = exact_grid_path(grid, costs)
        feasible = np.allclose(A @ dp.z, _flow_rhs(grid))
        worst = max(worst, abs(best - dp.objective_value) + (0.0 if feasible else 1.0))
    reports.append(CheckReport("grid_dp_vs_enumeration", f"paths={len(paths)}", worst, 1e-9))
    return reports


def _flow_rhs(grid: GridPathProblem) -> np.ndarray:
    b = np.zeros(grid.node_count)
    b[grid.source], b[grid.target] = -1.0, 1.0
    return b


def enumerate_grid_paths(grid: GridPathProblem) -> List[np.ndarray]:
    """Every monotone source-target path as an edge-indicator vector."""
    edge_index = {e: j for j, e in enumerate(grid.edges)}
    vertical = 1 if grid.orientation == "forward" else -1
    steps = (grid.rows - 1) + (grid.cols - 1)
    paths = []
    for rights in itertools.combinations(range(steps), grid.cols - 1):
        r, c = divmod(grid.source, grid.cols)
        z = np.zeros(grid.edge_count)
        for s in range(steps):
            nr, nc = (r, c + 1) if s in rights else (r + vertical, c)
            z[edge_index[(grid.node(r, c), grid.node(nr, nc))]] = 1.0
            r, c = nr, nc
        paths.append(z)
    return paths


# ============================================================================
# SUITE
# ============================================================================

def run_suite(seed: int = 0, inject_bug: bool = False, scale: int = 1) -> List[CheckReport]:
    """
    Default verification suite on random instances drawn from the seed.

    scale multiplies the instance counts (1 gives the sizes used in the
    acceptance runs).
    """
    rng = np.random.default_rng(seed)
    reports: List[CheckReport] = []

    def worst_of(batch: List[CheckReport]) -> CheckReport:
        worst = max(batch, key=lambda r: r.max_error if r.status != "skipped" else -1.0)
        return CheckReport(worst.name, f"{len(batch)} instances (worst {worst.instance})",
                           worst.max_error, worst.tolerance,
                           sum(r.skipped for r in batch),
                           "skipped" if all(r.status == "skipped" for r in batch) else "")

    batch = []
    for _ in range(200 * scale):
        n = int(rng.integers(2, 21))
        k = int(rng.integers(1, n + 1))
        batch.append(check_projection_identities(random_spd(n, rng), random_full_rank(k, n, rng)))
    reports.append(worst_of(batch))

    batch, decomposition, filtering = [], [], []
    for _ in range(200 * scale):
        n = int(rng.integers(2, 21))
        k = int(rng.integers(1, n))
        H = random_spd(n, rng) if rng.random() < 0.8 else float(rng.uniform(0.1, 2.0)) * np.eye(n)
        J = random_full_rank(k, n, rng)
        e = rng.standard_normal(n)
        batch.append(schur_vs_dense(H, J, e, inject_bug=inject_bug))
        decomposition.append(check_mse_decomposition(H, J, e))
        filtering.append(check_normal_filtering(H, J, rng.standard_normal(k)))
    reports += [worst_of(batch), worst_of(decomposition), worst_of(filtering)]

    batch, invariance = [], []
    total_coords = 0
    for i in range(100 * scale):
        n = int(rng.integers(2, 11))
        inst = random_box_instance(n, rng, explicit=bool(i % 2), with_equality=bool(rng.random() < 0.5))
        c_hat = inst.cost
        c = c_hat + rng.standard_normal(n)
        report = check_regret_gradient(inst, c_hat, c)
        batch.append(report)
        total_coords += n
        if i % 5 == 0:
            invariance.append(check_normal_invariance(inst, c_hat, c, trials=3, rng=rng))
    fd = worst_of(batch)
    skipped_fraction = fd.skipped / max(total_coords, 1)
    if skipped_fraction > 0.2:
        fd.status = "fail"
    reports += [fd, worst_of(invariance)]

    reports += check_exact_oracles(rng)
    return reports


def verify_all(seed: int = 0, inject_bug: bool = False, out_path: Optional[str] = None,
               scale: int = 1) -> List[CheckReport]:
    """Run the suite, print a summary and optionally write one line per report."""
    print("=" * 80)
    print(f"[VERIFY] Running verification suite (seed={seed}{', injected bug' if inject_bug else ''})")
    print("=" * 80)
    reports = run_suite(seed, inject_bug=inject_bug, scale=scale)

    for r in reports:
        marker = {"pass": "✅", "fail": "❌", "skipped": "⚠️ "}[r.status]
        print(f"{marker} {r.name}: max error {r.max_error:.3e} (tol {r.tolerance:.1e}, "
              f"skipped {r.skipped}) [{r.instance}]")

    if out_path:
        with open(out_path, "w") as f:
            f.write("name,instance,max_error,tolerance,status,skipped\n")
            for r in reports:
                f.write(r.line() + "\n")
        print(f"[VERIFY] Report written to {out_path}")

    failed = [r for r in reports if not r.passed]
    print(f"[VERIFY] {'✅ All checks passed' if not failed else f'❌ {len(failed)} checks failed'}")
    return reports
