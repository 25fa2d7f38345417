"""
Benchmark Problems

Builders for the smoothed shortest-path and knapsack LP relaxations and the
synthetic mean-variance QP, exact dynamic-programming oracles used for
evaluation, regret, and the constraint-shift variants (grid orientation,
capacity ratio, weight lower bound).

Maximization problems are mapped to minimization here, through the instance's
cost_sign, so sensitivity and training never see sign special cases.
"""

from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from config import ProblemConfig
from linalg import factor_spd
from solver import (
    ConvexInstance,
    ExplicitSpd,
    ScaledIdentity,
    SolverSettings,
    solve_certified,
)


class CapacityOverflow(ValueError):
    """Raised when the knapsack DP table would exceed the configured limit"""


@dataclass
class DecisionOutcome:
    """A decision and its objective value under the true cost"""
    z: np.ndarray
    objective_value: float
    maximize: bool = False


def regret(true_opt: DecisionOutcome, achieved: DecisionOutcome) -> float:
    """Suboptimality of the achieved decision, both valued at the true cost."""
    if true_opt.maximize:
        return true_opt.objective_value - achieved.objective_value
    return achieved.objective_value - true_opt.objective_value


# ============================================================================
# SHORTEST PATH
# ============================================================================

@dataclass(frozen=True)
class GridPathProblem:
    """
    Monotone paths on a directed grid.

    forward: edges point right and down, source (0, 0), target (R-1, C-1).
    cross:   edges point right and up, source (R-1, 0), target (0, C-1).
    Edge j joins the same pair of nodes in both orientations; only the
    direction of vertical edges differs.
    """
    rows: int = ProblemConfig.GRID_ROWS
    cols: int = ProblemConfig.GRID_COLS
    orientation: str = "forward"

    def __post_init__(self):
        if self.rows < 2 or self.cols < 2:
            raise ValueError("grid needs at least 2 rows and 2 columns")
        if self.orientation not in ("forward", "cross"):
            raise ValueError(f"unknown orientation '{self.orientation}'")

    def node(self, r: int, c: int) -> int:
        return r * self.cols + c

    @property
    def node_count(self) -> int:
        return self.rows * self.cols

    @property
    def source(self) -> int:
        if self.orientation == "forward":
            return self.node(0, 0)
        return self.node(self.rows - 1, 0)

    @property
    def target(self) -> int:
        if self.orientation == "forward":
            return self.node(self.rows - 1, self.cols - 1)
        return self.node(0, self.cols - 1)

    @property
    def edges(self) -> List[Tuple[int, int]]:
        """Directed (tail, head) pairs, node by node, horizontal edge first."""
        out = []
        for r in range(self.rows):
            for c in range(self.cols):
                if c + 1 < self.cols:
                    out.append((self.node(r, c), self.node(r, c + 1)))
                if r + 1 < self.rows:
                    if self.orientation == "forward":
                        out.append((self.node(r, c), self.node(r + 1, c)))
                    else:
                        out.append((self.node(r + 1, c), self.node(r, c)))
        return out

    @property
    def edge_count(self) -> int:
        return self.rows * (self.cols - 1) + (self.rows - 1) * self.cols


def incidence_matrix(p: GridPathProblem) -> np.ndarray:
    """Node-arc incidence: +1 where an edge enters a node, -1 where it leaves."""
    A = np.zeros((p.node_count, p.edge_count))
    for j, (tail, head) in enumerate(p.edges):
        A[tail, j] = -1.0
        A[head, j] = 1.0
    return A


def build_grid_lp(p: GridPathProblem, lambda_smooth: float = ProblemConfig.LAMBDA_SMOOTH) -> ConvexInstance:
    """Smoothed LP relaxation: flow balance, 0 <= w <= 1, curvature lam * I."""
    n = p.edge_count
    b = np.zeros(p.node_count)
    b[p.source] = -1.0
    b[p.target] = 1.0
    return ConvexInstance(
        n=n,
        curvature=ScaledIdentity(lambda_smooth),
        A=incidence_matrix(p),
        b=b,
        G=np.eye(n),
        l=np.zeros(n),
        u=np.ones(n),
        name=f"shortest_path[{p.orientation}]",
    )


def exact_grid_path(p: GridPathProblem, costs) -> DecisionOutcome:
    """
    Minimum-cost source-target path by dynamic programming on the DAG.

    Ties go to the lexicographically smaller edge-index sequence.
    """
    costs = np.asarray(costs, dtype=float)
    if costs.shape != (p.edge_count,):
        raise ValueError(f"costs must have length {p.edge_count}")

    out_edges: Dict[int, List[int]] = {v: [] for v in range(p.node_count)}
    for j, (tail, _) in enumerate(p.edges):
        out_edges[tail].append(j)
    edges = p.edges

    # nodes ordered by decreasing distance (in steps) from the source
    def steps_from_source(v: int) -> int:
        r, c = divmod(v, p.cols)
        sr, sc = divmod(p.source, p.cols)
        return abs(r - sr) + abs(c - sc)

    order = sorted(range(p.node_count), key=steps_from_source, reverse=True)
    cost_to_go = np.full(p.node_count, np.inf)
    cost_to_go[p.target] = 0.0
    for v in order:
        for j in out_edges[v]:
            cost_to_go[v] = min(cost_to_go[v], costs[j] + cost_to_go[edges[j][1]])

    tol = 1e-12 * (1.0 + float(np.sum(np.abs(costs))))
    z = np.zeros(p.edge_count)
    v = p.source
    while v != p.target:
        for j in sorted(out_edges[v]):
            head = edges[j][1]
            if costs[j] + cost_to_go[head] <= cost_to_go[v] + tol:
                z[j] = 1.0
                v = head
                break
        else:
            raise RuntimeError("target unreachable from source")

    return DecisionOutcome(z=z, objective_value=float(costs @ z), maximize=False)


# ============================================================================
# KNAPSACK
# ============================================================================

@dataclass(frozen=True)
class KnapsackProblem:
    """0-1 knapsack with capacity C = rho * sum(w)"""
    weights: Tuple[int, ...]
    capacity_ratio: float = ProblemConfig.CAPACITY_RATIO

    def __post_init__(self):
        if not 0 < self.capacity_ratio < 1:
            raise ValueError("capacity ratio must lie in (0, 1)")
        if any(w < 1 for w in self.weights):
            raise ValueError("weights must be positive integers")

    @property
    def n(self) -> int:
        return len(self.weights)

    @property
    def capacity(self) -> float:
        return self.capacity_ratio * float(sum(self.weights))


def random_knapsack(n: int = ProblemConfig.KNAPSACK_ITEMS,
                    capacity_ratio: float = ProblemConfig.CAPACITY_RATIO,
                    seed: int = 0) -> KnapsackProblem:
    """Integer weights drawn uniformly from the configured range, fixed per seed."""
    rng = np.random.default_rng(seed)
    w = rng.integers(ProblemConfig.KNAPSACK_WEIGHT_MIN, ProblemConfig.KNAPSACK_WEIGHT_MAX + 1, size=n)
    return KnapsackProblem(weights=tuple(int(x) for x in w), capacity_ratio=capacity_ratio)


def build_knapsack_lp(p: KnapsackProblem, lambda_smooth: float = ProblemConfig.LAMBDA_SMOOTH) -> ConvexInstance:
    """Smoothed LP relaxation: w^T z <= C, 0 <= z <= 1, value maximization."""
    n = p.n
    w = np.asarray(p.weights, dtype=float)
    G = np.vstack([w[None, :], np.eye(n)])
    l = np.concatenate([[-np.inf], np.zeros(n)])
    u = np.concatenate([[p.capacity], np.ones(n)])
    return ConvexInstance(
        n=n,
        curvature=ScaledIdentity(lambda_smooth),
        G=G,
        l=l,
        u=u,
        cost_sign=-1.0,
        name=f"knapsack[rho={p.capacity_ratio}]",
    )


def exact_knapsack(p: KnapsackProblem, values) -> DecisionOutcome:
    """
    Optimal 0-1 selection by a weight-indexed dynamic program.

    Only strict improvements take an item, so non-positive values are never
    selected.
    """
    values = np.asarray(values, dtype=float)
    if values.shape != (p.n,):
        raise ValueError(f"values must have length {p.n}")
    if not np.all(np.isfinite(values)):
        raise ValueError("values must be finite")

    cap = int(np.floor(p.capacity + 1e-9))
    if (p.n + 1) * (cap + 1) > ProblemConfig.DP_TABLE_LIMIT:
        raise CapacityOverflow(
            f"DP table {(p.n + 1)} x {(cap + 1)} exceeds limit {ProblemConfig.DP_TABLE_LIMIT}"
        )

    best = np.zeros(cap + 1)
    take = np.zeros((p.n, cap + 1), dtype=bool)
    for i, (w, v) in enumerate(zip(p.weights, values)):
        if w > cap:
            continue
        candidate = best[:-w] + v if w > 0 else best + v
        improve = candidate > best[w:]
        take[i, w:] = improve
        best[w:] = np.where(improve, candidate, best[w:])

    z = np.zeros(p.n)
    c = cap
    for i in range(p.n - 1, -1, -1):
        if take[i, c]:
            z[i] = 1.0
            c -= p.weights[i]

    return DecisionOutcome(z=z, objective_value=float(values @ z), maximize=True)


# ============================================================================
# MEAN-VARIANCE PORTFOLIO
# ============================================================================

@dataclass(frozen=True)
class MvoProblem:
    """min lam/2 w^T Sigma w - mu^T w  s.t.  1^T w = 1,  w >= lower_bound"""
    sigma: np.ndarray = field(repr=False)
    risk_aversion: float = ProblemConfig.MVO_RISK_AVERSION
    lower_bound: float = ProblemConfig.MVO_LOWER_BOUND

    @property
    def n(self) -> int:
        return self.sigma.shape[0]


def random_covariance(n: int = ProblemConfig.MVO_ASSETS, seed: int = 0) -> np.ndarray:
    """
    Sigma = D (Q Q^T / n + 0.1 I) D with random volatilities on the diagonal
    of D, spectrally shifted so the smallest eigenvalue is at least the floor.
    """
    rng = np.random.default_rng(seed)
    Q = rng.standard_normal((n, n))
    D = np.diag(rng.uniform(ProblemConfig.MVO_VOL_MIN, ProblemConfig.MVO_VOL_MAX, size=n))
    sigma = D @ (Q @ Q.T / n + 0.1 * np.eye(n)) @ D
    sigma = 0.5 * (sigma + sigma.T)
    lam_min = float(np.linalg.eigvalsh(sigma)[0])
    if lam_min < ProblemConfig.MVO_SPECTRAL_FLOOR:
        sigma += (ProblemConfig.MVO_SPECTRAL_FLOOR - lam_min) * np.eye(n)
    return sigma


def build_mvo(p: MvoProblem) -> ConvexInstance:
    """Explicit-SPD instance with H = risk_aversion * Sigma; the cost slot receives -mu."""
    n = p.n
    H = p.risk_aversion * np.asarray(p.sigma, dtype=float)
    factor_spd(H)  # raises NotPositiveDefinite

    if np.isfinite(p.lower_bound):
        G, l, u = np.eye(n), np.full(n, p.lower_bound), np.full(n, np.inf)
    else:
        G, l, u = None, None, None
    return ConvexInstance(
        n=n,
        curvature=ExplicitSpd(H),
        A=np.ones((1, n)),
        b=np.ones(1),
        G=G,
        l=l,
        u=u,
        cost_sign=-1.0,
        name=f"mvo[lb={p.lower_bound}]",
    )


# ============================================================================
# BENCHMARK TASKS
# ============================================================================

class BenchmarkTask:
    """
    Binds a training surrogate instance to its evaluation oracle.

    decide(values) returns the decision the pipeline takes for predicted
    values; outcome(z, true_values) values it under the true cost.
    """
    name = "task"
    maximize = False

    def __init__(self, instance: ConvexInstance):
        self.instance = instance

    @property
    def cost_dim(self) -> int:
        return self.instance.n

    def targets_from_costs(self, C: np.ndarray) -> np.ndarray:
        """Map generated costs to the quantities the model predicts."""
        return C

    def decide(self, values) -> np.ndarray:
        raise NotImplementedError

    def outcome(self, z, true_values) -> DecisionOutcome:
        return DecisionOutcome(z=np.asarray(z), objective_value=float(np.asarray(true_values) @ z),
                               maximize=self.maximize)

    def evaluate(self, predicted, true_values) -> Tuple[DecisionOutcome, DecisionOutcome]:
        """(true optimum, achieved) outcomes for one sample."""
        true_opt = self.outcome(self.decide(true_values), true_values)
        achieved = self.outcome(self.decide(predicted), true_values)
        return true_opt, achieved


class ShortestPathTask(BenchmarkTask):
    name = "shortest_path"
    maximize = False

    def __init__(self, problem: GridPathProblem, lambda_smooth: float = ProblemConfig.LAMBDA_SMOOTH):
        super().__init__(build_grid_lp(problem, lambda_smooth))
        self.problem = problem
        self.lambda_smooth = lambda_smooth

    def decide(self, values) -> np.ndarray:
        return exact_grid_path(self.problem, values).z

    def shifted(self, orientation: str) -> "ShortestPathTask":
        return ShortestPathTask(replace(self.problem, orientation=orientation), self.lambda_smooth)


class KnapsackTask(BenchmarkTask):
    name = "knapsack"
    maximize = True

    def __init__(self, problem: KnapsackProblem, lambda_smooth: float = ProblemConfig.LAMBDA_SMOOTH):
        super().__init__(build_knapsack_lp(problem, lambda_smooth))
        self.problem = problem
        self.lambda_smooth = lambda_smooth

    def decide(self, values) -> np.ndarray:
        return exact_knapsack(self.problem, values).z

    def shifted(self, capacity_ratio: float) -> "KnapsackTask":
        return KnapsackTask(replace(self.problem, capacity_ratio=capacity_ratio), self.lambda_smooth)


class MvoTask(BenchmarkTask):
    """
    Synthetic mean-variance task; the model predicts expected returns and the
    evaluation value is the mean-variance objective under the true returns.
    """
    name = "mvo_synthetic"
    maximize = False

    def __init__(self, problem: MvoProblem, settings: Optional[SolverSettings] = None):
        super().__init__(build_mvo(problem))
        self.problem = problem
        self.settings = settings

    def targets_from_costs(self, C: np.ndarray) -> np.ndarray:
        return ProblemConfig.MVO_RETURN_SCALE * (C - 1.0)

    def decide(self, values) -> np.ndarray:
        return solve_certified(self.instance.with_cost(values), self.settings).z

    def outcome(self, z, true_values) -> DecisionOutcome:
        value = self.instance.with_cost(true_values).objective(z)
        return DecisionOutcome(z=np.asarray(z), objective_value=value, maximize=False)

    def shifted(self, lower_bound: float) -> "MvoTask":
        return MvoTask(replace(self.problem, lower_bound=lower_bound), self.settings)


def make_task(task: str, seed: int = 0, lambda_smooth: float = ProblemConfig.LAMBDA_SMOOTH) -> BenchmarkTask:
    """Build the base (training-constraint) task for a seed."""
    if task == "shortest_path":
        return ShortestPathTask(GridPathProblem(), lambda_smooth)
    if task == "knapsack":
        return KnapsackTask(random_knapsack(seed=seed), lambda_smooth)
    if task == "mvo_synthetic":
        return MvoTask(MvoProblem(sigma=random_covariance(seed=seed)))
    raise ValueError(f"unknown task '{task}'")


def shift_variants(task: BenchmarkTask, shifts: List) -> List[Tuple[str, BenchmarkTask]]:
    """
    Tagged test-time variants of a task. Shift values are orientations for
    shortest path, capacity ratios for knapsack and lower bounds for MVO.
    """
    variants = []
    for s in shifts:
        if isinstance(task, ShortestPathTask):
            variants.append((f"orientation={s}", task.shifted(str(s))))
        elif isinstance(task, KnapsackTask):
            variants.append((f"rho={float(s)}", task.shifted(float(s))))
        elif isinstance(task, MvoTask):
            variants.append((f"lb={float(s)}", task.shifted(float(s))))
        else:
            raise ValueError(f"task '{task.name}' has no shift variants")
    return variants
