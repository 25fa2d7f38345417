#!/usr/bin/env python
"""
PEAR experiment runner

Subcommands:
    gen        generate a dataset and export it as text
    run        train and evaluate one configuration over a list of seeds
    sweep      run one configuration per value of a hyperparameter axis
    aggregate  mean and standard deviation across seeds from result files
    verify     run the verification suite

Exit status is 0 on success and 1 on a failed verification or fatal error.
"""

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Union

import numpy as np
from pydantic import BaseModel, Field, field_validator

from cache import make_cache
from config import DataConfig, ExperimentDefaults, ProblemConfig, TrainingConfig, get_config_summary
from datagen import GenConfig, generate, split
from export import append_results, export_dataset_text, load_dataset_text, read_results, save_checkpoint
from problems import make_task, shift_variants
from train import (
    LinearModel,
    LossKind,
    TrainConfig,
    ZeroDenominator,
    fit,
    mean_squared_error,
    normalized_regret,
    predict,
)
from verify import model_change_rate, verify_all

TASKS = ("shortest_path", "knapsack", "mvo_synthetic")
SWEEP_AXES = {
    "beta": ExperimentDefaults.BETA_GRID,
    "lambda": ExperimentDefaults.LAMBDA_GRID,
    "degree": ExperimentDefaults.DEGREE_GRID,
    "noise": ExperimentDefaults.NOISE_GRID,
}


class ExperimentConfig(BaseModel):
    """One experiment; echoed verbatim ahead of its result rows"""
    task: str = "shortest_path"
    method: LossKind = LossKind.PEAR
    deg: int = DataConfig.DEGREE
    noise: float = DataConfig.NOISE_HALF_WIDTH
    seeds: List[int] = Field(default_factory=lambda: list(ExperimentDefaults.SEEDS))
    lambda_smooth: float = ProblemConfig.LAMBDA_SMOOTH
    beta: float = TrainingConfig.BETA
    shifts: List[Union[float, str]] = Field(default_factory=list)
    out: str = ExperimentDefaults.RESULTS_PATH
    max_seconds: float = TrainingConfig.MAX_SECONDS
    max_epochs: int = TrainingConfig.MAX_EPOCHS
    sizes: List[int] = Field(default_factory=lambda: [DataConfig.TRAIN_SIZE, DataConfig.VAL_SIZE,
                                                      DataConfig.TEST_SIZE])
    stability: bool = False
    data: Optional[str] = None
    workers: int = 1
    verbose: bool = False

    @field_validator("task")
    @classmethod
    def known_task(cls, v: str) -> str:
        if v not in TASKS:
            raise ValueError(f"task must be one of {TASKS}")
        return v

    @field_validator("sizes")
    @classmethod
    def three_sizes(cls, v: List[int]) -> List[int]:
        if len(v) != 3 or any(s < 1 for s in v):
            raise ValueError("sizes must be three positive counts")
        return v


class ResultRow(BaseModel):
    task: str
    method: str
    deg: int
    noise: float
    seed: int
    lambda_smooth: float
    beta: float
    shift: str
    normalized_regret: Optional[float] = None
    train_mse: Optional[float] = None
    test_mse: Optional[float] = None
    active_change_rate: Optional[float] = None
    wall_seconds: float = 0.0
    stop_reason: str = ""


# ============================================================================
# RUN
# ============================================================================

def checkpoint_path(cfg: ExperimentConfig, seed: int) -> str:
    """Checkpoint file beside the results file, one per configuration and seed."""
    stem = os.path.splitext(cfg.out)[0]
    return (f"{stem}.{cfg.task}.{cfg.method.value}.deg{cfg.deg}.noise{cfg.noise}"
            f".lam{cfg.lambda_smooth}.beta{cfg.beta}.seed{seed}.ckpt.json")


def run_seed(cfg: ExperimentConfig, seed: int) -> List[ResultRow]:
    """Train once under the training constraint; evaluate base and shift variants."""
    t0 = time.time()
    base = dict(task=cfg.task, method=cfg.method.value, deg=cfg.deg, noise=cfg.noise, seed=seed,
                lambda_smooth=cfg.lambda_smooth, beta=cfg.beta)
    try:
        task = make_task(cfg.task, seed=seed, lambda_smooth=cfg.lambda_smooth)
        # normal injection only applies to smoothed LPs
        if not task.instance.is_smoothed_lp:
            base["beta"] = 0.0
        if cfg.data:
            ds = load_dataset_text(cfg.data)
            if ds.C.shape[1] != task.cost_dim:
                raise ValueError(f"dataset has {ds.C.shape[1]} cost columns, task needs {task.cost_dim}")
        else:
            ds = generate(GenConfig(d=task.cost_dim, deg=cfg.deg, noise_half_width=cfg.noise,
                                    seed=seed, sizes=tuple(cfg.sizes)), verbose=cfg.verbose)
        train_view, val_view, test_view = split(ds)
        for view in (train_view, val_view, test_view):
            view.C = task.targets_from_costs(view.C)

        model = LinearModel(ds.X.shape[1], task.cost_dim)
        tcfg = TrainConfig.for_task(
            task, loss=cfg.method, lambda_smooth=cfg.lambda_smooth, beta=base["beta"],
            max_seconds=cfg.max_seconds, max_epochs=cfg.max_epochs, seed=seed, verbose=cfg.verbose,
        )
        model, history = fit(model, train_view, val_view, task, tcfg, cache=make_cache())
        save_checkpoint(model.W, model.bias, checkpoint_path(cfg, seed),
                        config={"experiment": cfg.model_dump(mode="json"), "seed": seed,
                                "stop_reason": history.stop_reason.value,
                                "defaults": get_config_summary()})
    except Exception as e:
        print(f"[RUN] ❌ Seed {seed} failed: {e}")
        return [ResultRow(**base, shift="base", wall_seconds=time.time() - t0,
                          stop_reason=f"Error: {type(e).__name__}")]

    train_mse = mean_squared_error(model, train_view)
    test_mse = mean_squared_error(model, test_view)
    change_rate = None
    if cfg.stability and task.instance.is_smoothed_lp:
        change_rate = model_change_rate(task.instance, predict(model, test_view.X), seed=seed)

    rows = []
    for tag, variant in [("base", task)] + shift_variants(task, cfg.shifts):
        try:
            value = normalized_regret(model, test_view, variant)
        except ZeroDenominator as e:
            print(f"[RUN] ⚠️  {tag}: {e}")
            value = None
        rows.append(ResultRow(
            **base, shift=tag, normalized_regret=value, train_mse=train_mse, test_mse=test_mse,
            active_change_rate=change_rate if tag == "base" else None,
            wall_seconds=history.wall_seconds, stop_reason=history.stop_reason.value,
        ))
    print(f"[RUN] ✓ Seed {seed}: " + ", ".join(
        f"{r.shift}={r.normalized_regret:.4f}%" for r in rows if r.normalized_regret is not None))
    return rows


def run(cfg: ExperimentConfig) -> str:
    """Run every seed, merge rows in seed order and append them to cfg.out."""
    print("=" * 80)
    print(f"[RUN] {cfg.task} / {cfg.method.value} (deg={cfg.deg}, noise={cfg.noise}, seeds={cfg.seeds})")
    print("=" * 80)

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            per_seed = list(pool.map(lambda s: run_seed(cfg, s), cfg.seeds))
    else:
        per_seed = [run_seed(cfg, s) for s in cfg.seeds]

    rows = [r.model_dump() for seed_rows in per_seed for r in seed_rows]
    echo = {"experiment": cfg.model_dump(mode="json"), "defaults": get_config_summary()}
    return append_results(cfg.out, rows, echo)


def sweep(cfg: ExperimentConfig, axis: str, values: Optional[list] = None) -> str:
    """One run per axis value, all appended to the same results file."""
    if axis not in SWEEP_AXES:
        raise ValueError(f"axis must be one of {sorted(SWEEP_AXES)}")
    values = SWEEP_AXES[axis] if values is None else values
    if not values:
        raise ValueError("sweep axis needs at least one value")
    field_name = {"beta": "beta", "lambda": "lambda_smooth", "degree": "deg", "noise": "noise"}[axis]
    for v in values:
        run(cfg.model_copy(update={field_name: v}))
    return cfg.out


# ============================================================================
# AGGREGATE
# ============================================================================

GROUP_KEYS = ("task", "method", "deg", "noise", "lambda_smooth", "beta", "shift")


def aggregate(paths: List[str]) -> List[Dict[str, object]]:
    """Mean and sample std of normalized regret per configuration and shift."""
    groups: Dict[tuple, List[float]] = {}
    for path in paths:
        for row in read_results(path):
            if row["normalized_regret"] == "":
                continue
            key = tuple(row[k] for k in GROUP_KEYS)
            groups.setdefault(key, []).append(float(row["normalized_regret"]))

    summary = []
    for key, values in groups.items():
        arr = np.asarray(values)
        summary.append({
            **dict(zip(GROUP_KEYS, key)),
            "seeds": len(arr),
            "mean": float(arr.mean()),
            "std": float(arr.std(ddof=1)) if len(arr) > 1 else 0.0,
        })
    return summary


def print_summary(summary: List[Dict[str, object]]) -> None:
    print("=" * 80)
    print(f"{'task':<14}{'method':<10}{'deg':>4}{'noise':>7}{'lambda':>8}{'beta':>6}  {'shift':<18}{'regret %':>20}")
    print("-" * 80)
    for s in summary:
        print(f"{s['task']:<14}{s['method']:<10}{s['deg']:>4}{s['noise']:>7}{s['lambda_smooth']:>8}"
              f"{s['beta']:>6}  {s['shift']:<18}{s['mean']:>11.4f} ± {s['std']:.4f} (n={s['seeds']})")
    print("=" * 80)


# ============================================================================
# ENTRY POINT
# ============================================================================

def _parse_shifts(raw: Union[str, List[str], None]) -> List[Union[float, str]]:
    """Comma-separated tokens, possibly spread over several arguments."""
    if not raw:
        return []
    if isinstance(raw, str):
        raw = [raw]
    out = []
    for tok in (t for arg in raw for t in arg.split(",")):
        tok = tok.strip()
        if not tok:
            continue
        try:
            out.append(float(tok))
        except ValueError:
            out.append(tok)
    return out


def _add_experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--task", choices=TASKS, default="shortest_path")
    p.add_argument("--method", choices=[k.value for k in LossKind], default="pear")
    p.add_argument("--deg", type=int, default=DataConfig.DEGREE)
    p.add_argument("--noise", type=float, default=DataConfig.NOISE_HALF_WIDTH)
    p.add_argument("--seeds", type=str, default=",".join(map(str, ExperimentDefaults.SEEDS)),
                   help="comma-separated seed list")
    p.add_argument("--lambda", dest="lambda_smooth", type=float, default=ProblemConfig.LAMBDA_SMOOTH)
    p.add_argument("--beta", type=float, default=TrainingConfig.BETA)
    p.add_argument("--shift", type=str, nargs="+", default=None,
                   help="orientations, capacity ratios or lower bounds, comma- or space-separated "
                        "(negative bounds: --shift -0.1 -1.0 or --shift=-0.1,-1.0)")
    p.add_argument("--out", type=str, default=ExperimentDefaults.RESULTS_PATH)
    p.add_argument("--max-seconds", type=float, default=TrainingConfig.MAX_SECONDS)
    p.add_argument("--max-epochs", type=int, default=TrainingConfig.MAX_EPOCHS)
    p.add_argument("--sizes", type=str, default=None, help="train,val,test sample counts")
    p.add_argument("--stability", action="store_true", help="report the active-set change rate")
    p.add_argument("--data", type=str, default=None, help="train on an exported dataset file")
    p.add_argument("--workers", type=int, default=1, help="seeds trained in parallel")
    p.add_argument("--verify", action="store_true", help="run the verification suite first")
    p.add_argument("--verbose", action="store_true")


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    fields = dict(
        task=args.task, method=args.method, deg=args.deg, noise=args.noise,
        seeds=[int(s) for s in args.seeds.split(",") if s.strip()],
        lambda_smooth=args.lambda_smooth, beta=args.beta, shifts=_parse_shifts(args.shift),
        out=args.out, max_seconds=args.max_seconds, max_epochs=args.max_epochs,
        stability=args.stability, data=args.data, workers=args.workers, verbose=args.verbose,
    )
    if args.sizes:
        fields["sizes"] = [int(s) for s in args.sizes.split(",")]
    return ExperimentConfig(**fields)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pear", description="PEAR decision-focused learning experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a synthetic dataset")
    gen.add_argument("--task", choices=TASKS, default="shortest_path")
    gen.add_argument("--deg", type=int, default=DataConfig.DEGREE)
    gen.add_argument("--noise", type=float, default=DataConfig.NOISE_HALF_WIDTH)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", type=str, required=True)

    _add_experiment_flags(sub.add_parser("run", help="train and evaluate over seeds"))

    sw = sub.add_parser("sweep", help="hyperparameter sweep")
    _add_experiment_flags(sw)
    sw.add_argument("--axis", choices=sorted(SWEEP_AXES), required=True)
    sw.add_argument("--values", type=str, default=None, help="override the default grid")

    agg = sub.add_parser("aggregate", help="mean ± std across seeds")
    agg.add_argument("paths", nargs="+")
    agg.add_argument("--json", action="store_true", help="print JSON instead of a table")

    ver = sub.add_parser("verify", help="run the verification suite")
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--out", type=str, default=None)
    ver.add_argument("--inject-bug", action="store_true", help=argparse.SUPPRESS)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "gen":
            task = make_task(args.task, seed=args.seed)
            ds = generate(GenConfig(d=task.cost_dim, deg=args.deg, noise_half_width=args.noise,
                                    seed=args.seed), verbose=True)
            export_dataset_text(ds, args.out)
            return 0

        if args.command == "verify":
            reports = verify_all(args.seed, inject_bug=args.inject_bug, out_path=args.out)
            return 0 if all(r.passed for r in reports) else 1

        if args.command == "aggregate":
            summary = aggregate(args.paths)
            if args.json:
                print(json.dumps(summary, indent=2))
            else:
                print_summary(summary)
            return 0

        cfg = config_from_args(args)
        if args.verify:
            reports = verify_all(cfg.seeds[0] if cfg.seeds else 0)
            if not all(r.passed for r in reports):
                return 1
        if args.command == "run":
            run(cfg)
        else:
            values = _parse_shifts(args.values) if args.values else None
            if values is not None and args.axis == "degree":
                values = [int(v) for v in values]
            sweep(cfg, args.axis, values)
        return 0
    except Exception as e:
        print(f"[RUN] ❌ Fatal error: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
