"""
PEAR Training Module

Linear predictor, per-sample loss gradients (PEAR, MSE, SPO+), Adam updates
through torch autograd, early stopping with a wall-clock cap, and the
normalized-regret metric.
"""

import copy
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import torch
from torch import nn

from cache import WarmStartCache
from config import ProblemConfig, SensitivityConfig, TrainingConfig
from datagen import DatasetView
from linalg import DimensionMismatch
from problems import BenchmarkTask, MvoTask, regret
from sensitivity import (
    assemble_jacobian,
    detect_active,
    normal_inject,
    pear_gradient,
    pear_gradient_lp,
)
from solver import ConvexInstance, ScaledIdentity, SolverSettings, solve_certified


class ZeroDenominator(ZeroDivisionError):
    """Raised when the sum of absolute true optimal values is zero"""


class LossKind(str, Enum):
    PEAR = "pear"
    MSE = "mse"
    SPO_PLUS = "spo_plus"


class StopReason(str, Enum):
    PATIENCE = "Patience"
    TIME_CAP = "TimeCap"
    MAX_EPOCHS = "MaxEpochs"
    ABORTED = "Aborted"


# ============================================================================
# MODEL
# ============================================================================

class LinearModel(nn.Module):
    """c_hat = W x + bias, zero-initialized"""

    def __init__(self, p: int, d: int):
        super().__init__()
        self.p = p
        self.d = d
        self.linear = nn.Linear(p, d, dtype=torch.float64)
        nn.init.zeros_(self.linear.weight)
        nn.init.zeros_(self.linear.bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.linear(x)

    @property
    def W(self) -> np.ndarray:
        return self.linear.weight.detach().numpy().copy()

    @property
    def bias(self) -> np.ndarray:
        return self.linear.bias.detach().numpy().copy()

    def set_parameters(self, W, bias) -> "LinearModel":
        W = np.asarray(W, dtype=float).reshape(self.d, self.p)
        bias = np.asarray(bias, dtype=float).reshape(self.d)
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(bias))):
            raise ValueError("model parameters must be finite")
        with torch.no_grad():
            self.linear.weight.copy_(torch.from_numpy(W))
            self.linear.bias.copy_(torch.from_numpy(bias))
        return self


def predict(model: LinearModel, x) -> np.ndarray:
    """Predicted costs for one feature vector or a batch of rows."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.p:
        raise DimensionMismatch(f"features have length {x.shape[-1]}, model expects {model.p}")
    with torch.no_grad():
        return model(torch.from_numpy(x)).numpy()


# ============================================================================
# LOSS GRADIENTS (w.r.t. the predicted cost)
# ============================================================================

def grad_mse(c_hat, c) -> np.ndarray:
    """Gradient of 1/2 ||c_hat - c||^2."""
    c_hat, c = np.asarray(c_hat, dtype=float), np.asarray(c, dtype=float)
    if c_hat.shape != c.shape:
        raise DimensionMismatch(f"shapes {c_hat.shape} and {c.shape} differ")
    return c_hat - c


def grad_pear(
    inst: ConvexInstance,
    c_hat,
    c,
    lambda_smooth: Optional[float] = None,
    beta: float = TrainingConfig.BETA,
    settings: Optional[SolverSettings] = None,
    cache: Optional[WarmStartCache] = None,
) -> np.ndarray:
    """
    Projected-error regret gradient for one sample.

    Solves the smoothed problem at c_hat, detects the active set, and projects
    e = c_hat - c onto the tangent space. The sign convention of maximization
    instances cancels, so the result is always the gradient w.r.t. c_hat.
    Normal injection applies to scaled-identity (LP) instances only.

    Args:
        inst: Surrogate instance (cost slot is overwritten)
        c_hat: Predicted costs
        c: True costs
        lambda_smooth: Overrides the smoothing of an LP instance when given
        beta: Normal injection strength
        settings: Solver settings
        cache: Optional warm-start cache
    """
    c_hat = np.asarray(c_hat, dtype=float)
    e = grad_mse(c_hat, c)
    if lambda_smooth is not None and inst.is_smoothed_lp and lambda_smooth != inst.curvature.lam:
        inst = replace(inst, curvature=ScaledIdentity(lambda_smooth), operator=None)

    q_inst = inst.with_cost(c_hat)
    sol = solve_certified(q_inst, settings, cache=cache)
    jac = assemble_jacobian(q_inst, detect_active(q_inst, sol))

    if inst.is_smoothed_lp:
        pg = pear_gradient_lp(inst.curvature.lam, jac, e)
        return normal_inject(pg, beta)
    return pear_gradient(inst.operator, jac, e).g


def grad_spo_plus(
    inst: ConvexInstance,
    c_hat,
    c,
    exact_solver: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    settings: Optional[SolverSettings] = None,
) -> np.ndarray:
    """
    SPO+ subgradient w.r.t. c_hat: 2 (z*(c) - z*(2 c_hat - c)) in the cost-slot
    sign, where z* is the optimal decision for the given values.

    Without an exact solver, the instance itself is solved.
    """
    c_hat, c = np.asarray(c_hat, dtype=float), np.asarray(c, dtype=float)
    if exact_solver is None:
        def exact_solver(values):
            return solve_certified(inst.with_cost(values), settings).z
    z_true = np.asarray(exact_solver(c), dtype=float)
    z_spo = np.asarray(exact_solver(2.0 * c_hat - c), dtype=float)
    return inst.cost_sign * 2.0 * (z_true - z_spo)


# ============================================================================
# OPTIMIZER
# ============================================================================

def make_optimizer(model: LinearModel, lr: float) -> torch.optim.Adam:
    return torch.optim.Adam(
        model.parameters(),
        lr=lr,
        betas=(TrainingConfig.ADAM_BETA1, TrainingConfig.ADAM_BETA2),
        eps=TrainingConfig.ADAM_EPS,
    )


def adam_step(optimizer: torch.optim.Adam, params: Sequence[torch.Tensor],
              grads: Sequence[torch.Tensor], lr: Optional[float] = None) -> None:
    """
    One Adam update of params with the given gradients.

    lr overrides the learning rate of every parameter group when given.
    """
    if len(params) != len(grads):
        raise DimensionMismatch("params and grads differ in length")
    if lr is not None:
        for group in optimizer.param_groups:
            group["lr"] = lr
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise DimensionMismatch(f"gradient shape {tuple(g.shape)} != parameter shape {tuple(p.shape)}")
        p.grad = g.detach().clone()
    optimizer.step()
    optimizer.zero_grad(set_to_none=True)


# ============================================================================
# METRICS
# ============================================================================

def true_outcomes(view: DatasetView, task: BenchmarkTask) -> list:
    """Optimal outcomes under the true costs, reusable across evaluations."""
    return [task.outcome(task.decide(c), c) for c in view.C]


def normalized_regret(model: LinearModel, view: DatasetView, task: BenchmarkTask,
                      optima: Optional[list] = None) -> float:
    """
    100 * sum(regret) / sum(|true optimal value|) over the view.

    Raises:
        ZeroDenominator: every true optimal value is zero
    """
    if len(view) == 0:
        raise ZeroDenominator("empty evaluation set")
    optima = optima if optima is not None else true_outcomes(view, task)
    C_hat = predict(model, view.X)

    total_regret = 0.0
    total_opt = 0.0
    for c_hat, c, opt in zip(C_hat, view.C, optima):
        achieved = task.outcome(task.decide(c_hat), c)
        total_regret += regret(opt, achieved)
        total_opt += abs(opt.objective_value)

    if total_opt == 0.0:
        raise ZeroDenominator("sum of absolute true optimal values is zero")
    return 100.0 * total_regret / total_opt


def mean_squared_error(model: LinearModel, view: DatasetView) -> float:
    if len(view) == 0:
        return 0.0
    return float(np.mean((predict(model, view.X) - view.C) ** 2))


# ============================================================================
# TRAINING LOOP
# ============================================================================

@dataclass
class TrainConfig:
    """Runtime training settings"""
    loss: LossKind = LossKind.PEAR
    lambda_smooth: float = ProblemConfig.LAMBDA_SMOOTH
    beta: float = TrainingConfig.BETA
    lr: float = TrainingConfig.LP_LEARNING_RATE
    batch: int = TrainingConfig.LP_BATCH_SIZE
    max_seconds: float = TrainingConfig.MAX_SECONDS
    eval_every: int = TrainingConfig.EVAL_EVERY
    max_epochs: int = TrainingConfig.MAX_EPOCHS
    patience: int = TrainingConfig.PATIENCE
    min_rel_improvement: float = TrainingConfig.MIN_REL_IMPROVEMENT
    reduce_on_plateau: bool = False
    workers: int = SensitivityConfig.MAX_GRADIENT_WORKERS
    seed: int = 0
    verbose: bool = False

    def __post_init__(self):
        self.loss = LossKind(self.loss)
        if self.lr < 0:
            raise ValueError(f"lr must be non-negative, got {self.lr}")
        if not 0 <= self.beta <= 1:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if self.batch < 1 or self.eval_every < 1:
            raise ValueError("batch and eval_every must be positive")

    @classmethod
    def for_task(cls, task: BenchmarkTask, **overrides) -> "TrainConfig":
        """Task-dependent defaults: MVO uses its own lr, batch and plateau schedule."""
        if isinstance(task, MvoTask):
            base = dict(lr=TrainingConfig.MVO_LEARNING_RATE, batch=TrainingConfig.MVO_BATCH_SIZE,
                        reduce_on_plateau=True, beta=0.0)
        else:
            base = {}
        base.update(overrides)
        return cls(**base)


@dataclass
class EvalRecord:
    epoch: int
    wall_seconds: float
    val_regret: float
    train_mse: float


@dataclass
class TrainHistory:
    records: List[EvalRecord] = field(default_factory=list)
    stop_reason: Optional[StopReason] = None
    failed_samples: int = 0
    wall_seconds: float = 0.0

    @property
    def best(self) -> Optional[EvalRecord]:
        if not self.records:
            return None
        return min(self.records, key=lambda r: r.val_regret)


def sample_gradient(task: BenchmarkTask, cfg: TrainConfig, c_hat: np.ndarray, c: np.ndarray,
                    cache: Optional[WarmStartCache] = None) -> np.ndarray:
    """Dispatch on the configured loss."""
    if cfg.loss is LossKind.MSE:
        return grad_mse(c_hat, c)
    if cfg.loss is LossKind.SPO_PLUS:
        exact = None if isinstance(task, MvoTask) else task.decide
        return grad_spo_plus(task.instance, c_hat, c, exact_solver=exact)
    beta = cfg.beta if task.instance.is_smoothed_lp else 0.0
    return grad_pear(task.instance, c_hat, c, lambda_smooth=cfg.lambda_smooth,
                     beta=beta, cache=cache)


def fit(
    model: LinearModel,
    train: DatasetView,
    val: DatasetView,
    task: BenchmarkTask,
    cfg: TrainConfig,
    cache: Optional[WarmStartCache] = None,
) -> Tuple[LinearModel, TrainHistory]:
    """
    Minibatch training with patience-based early stopping.

    Per-sample gradients w.r.t. c_hat are averaged over the batch and
    back-propagated through the linear map. Evaluation runs every
    cfg.eval_every epochs on the validation view; the best snapshot is
    returned. A failed sample is skipped and counted; more than
    MAX_FAILURE_RATE of an epoch failing stops the run with reason Aborted.
    """
    if train.X.shape[1] != model.p or train.C.shape[1] != model.d:
        raise DimensionMismatch("training data does not match model dimensions")

    t0 = time.time()
    history = TrainHistory()
    rng = np.random.default_rng(cfg.seed)
    optimizer = make_optimizer(model, cfg.lr)
    scheduler = (torch.optim.lr_scheduler.ReduceLROnPlateau(
        optimizer, mode="min", factor=TrainingConfig.PLATEAU_FACTOR,
        patience=TrainingConfig.PLATEAU_PATIENCE) if cfg.reduce_on_plateau else None)
    params = list(model.parameters())
    val_optima = true_outcomes(val, task)

    def evaluate(epoch: int) -> EvalRecord:
        record = EvalRecord(
            epoch=epoch,
            wall_seconds=time.time() - t0,
            val_regret=normalized_regret(model, val, task, val_optima),
            train_mse=mean_squared_error(model, train),
        )
        if history.records and record.wall_seconds <= history.records[-1].wall_seconds:
            record.wall_seconds = np.nextafter(history.records[-1].wall_seconds, np.inf)
        history.records.append(record)
        if cfg.verbose:
            print(f"[TRAIN] epoch {epoch}: val regret {record.val_regret:.4f}% "
                  f"train mse {record.train_mse:.4f} ({record.wall_seconds:.1f}s)")
        return record

    best_state = copy.deepcopy(model.state_dict())
    best_regret = evaluate(0).val_regret
    stall = 0

    if cfg.max_seconds <= 0:
        history.stop_reason = StopReason.TIME_CAP

    executor = ThreadPoolExecutor(max_workers=cfg.workers) if cfg.workers > 1 else None
    try:
        epoch = 0
        while history.stop_reason is None:
            epoch += 1
            if epoch > cfg.max_epochs:
                history.stop_reason = StopReason.MAX_EPOCHS
                break

            order = rng.permutation(len(train))
            failures = 0
            for start in range(0, len(order), cfg.batch):
                idx = order[start:start + cfg.batch]
                X = torch.from_numpy(train.X[idx])
                c_hat = model(X)
                C_hat = c_hat.detach().numpy()

                def one(i: int) -> Optional[np.ndarray]:
                    try:
                        return sample_gradient(task, cfg, C_hat[i], train.C[idx[i]], cache)
                    except (RuntimeError, ValueError) as e:
                        if cfg.verbose:
                            print(f"[TRAIN] ⚠️  Sample {int(idx[i])} skipped: {e}")
                        return None

                rows = list(executor.map(one, range(len(idx)))) if executor else [one(i) for i in range(len(idx))]
                G = np.zeros_like(C_hat)
                for i, g in enumerate(rows):
                    if g is None:
                        failures += 1
                    else:
                        G[i] = g

                grads = torch.autograd.grad(c_hat, params, grad_outputs=torch.from_numpy(G / len(idx)))
                adam_step(optimizer, params, grads)

                if time.time() - t0 >= cfg.max_seconds:
                    history.stop_reason = StopReason.TIME_CAP
                    break

            history.failed_samples += failures
            if failures > TrainingConfig.MAX_FAILURE_RATE * len(train):
                print(f"[TRAIN] ❌ {failures} of {len(train)} samples failed in epoch {epoch}")
                history.stop_reason = StopReason.ABORTED
                break

            if epoch % cfg.eval_every != 0 and history.stop_reason is None:
                continue

            record = evaluate(epoch)
            if scheduler is not None:
                scheduler.step(record.val_regret)
            if record.val_regret < best_regret * (1.0 - cfg.min_rel_improvement):
                best_regret = record.val_regret
                best_state = copy.deepcopy(model.state_dict())
                stall = 0
            else:
                if record.val_regret < best_regret:
                    best_regret = record.val_regret
                    best_state = copy.deepcopy(model.state_dict())
                stall += 1
                if stall >= cfg.patience and history.stop_reason is None:
                    history.stop_reason = StopReason.PATIENCE
    finally:
        if executor is not None:
            executor.shutdown(wait=True)

    model.load_state_dict(best_state)
    history.wall_seconds = time.time() - t0
    print(f"[TRAIN] ✓ Stopped ({history.stop_reason.value}) after {len(history.records)} evaluations, "
          f"best val regret {best_regret:.4f}%")
    return model, history
