"""
Export utilities for datasets, model checkpoints and result tables.

All formats are plain text: a version-tagged columnar dataset file, a JSON
checkpoint, and comma-separated result rows preceded by a config echo.
"""

import csv
import json
import os
from dataclasses import asdict
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field

from config import DataConfig
from datagen import Dataset, GenConfig


class FormatError(ValueError):
    """Raised when a file does not match the expected format"""


# ============================================================================
# DATASETS
# ============================================================================

def export_dataset_text(ds: Dataset, path: str) -> str:
    """
    Write a dataset as columnar text.

    Layout:
        # pear-dataset/1
        # meta: {"config": ..., "B": [[...]]}
        x0,...,x{p-1},c0,...,c{d-1},split
        one row per sample
    """
    p, d = ds.X.shape[1], ds.C.shape[1]
    meta = {"config": {**asdict(ds.config), "sizes": list(ds.config.sizes)},
            "B": ds.B.astype(int).tolist()}

    with open(path, "w", newline="") as f:
        f.write(f"# {DataConfig.FORMAT_VERSION}\n")
        f.write(f"# meta: {json.dumps(meta)}\n")
        writer = csv.writer(f)
        writer.writerow([f"x{i}" for i in range(p)] + [f"c{j}" for j in range(d)] + ["split"])
        for x, c, tag in zip(ds.X, ds.C, ds.tags):
            writer.writerow([repr(float(v)) for v in x] + [repr(float(v)) for v in c] + [tag])

    print(f"[EXPORT] Wrote {len(ds)} samples to {path}")
    return path


def load_dataset_text(path: str) -> Dataset:
    """Read a file written by export_dataset_text."""
    with open(path, newline="") as f:
        version = f.readline().strip()
        if version != f"# {DataConfig.FORMAT_VERSION}":
            raise FormatError(f"unsupported dataset header '{version}'")
        meta_line = f.readline().strip()
        if not meta_line.startswith("# meta: "):
            raise FormatError("missing meta line")
        meta = json.loads(meta_line[len("# meta: "):])
        rows = list(csv.reader(f))

    if not rows:
        raise FormatError("missing column header")
    header, body = rows[0], rows[1:]
    p = sum(1 for h in header if h.startswith("x"))
    d = sum(1 for h in header if h.startswith("c"))

    X = np.array([[float(v) for v in r[:p]] for r in body]).reshape(len(body), p)
    C = np.array([[float(v) for v in r[p:p + d]] for r in body]).reshape(len(body), d)
    tags = np.array([r[p + d] for r in body], dtype=object)

    cfg_fields = meta["config"]
    cfg_fields["sizes"] = tuple(cfg_fields["sizes"])
    return Dataset(B=np.array(meta["B"], dtype=int), X=X, C=C,
                   config=GenConfig(**cfg_fields), tags=tags)


# ============================================================================
# CHECKPOINTS
# ============================================================================

class Checkpoint(BaseModel):
    """Linear model checkpoint: dimensions, flat row-major weights, config echo"""
    format: str = "pear-checkpoint/1"
    p: int
    d: int
    weights: List[float]
    bias: List[float]
    config: Dict[str, Any] = Field(default_factory=dict)


def save_checkpoint(W: np.ndarray, bias: np.ndarray, path: str,
                    config: Optional[Dict[str, Any]] = None) -> str:
    d, p = W.shape
    ckpt = Checkpoint(p=p, d=d, weights=W.ravel().tolist(), bias=np.asarray(bias).tolist(),
                      config=config or {})
    with open(path, "w") as f:
        f.write(ckpt.model_dump_json(indent=2))
    print(f"[EXPORT] Saved checkpoint ({d}x{p}) to {path}")
    return path


def load_checkpoint(path: str) -> Checkpoint:
    with open(path) as f:
        ckpt = Checkpoint.model_validate_json(f.read())
    if len(ckpt.weights) != ckpt.p * ckpt.d or len(ckpt.bias) != ckpt.d:
        raise FormatError("checkpoint dimensions do not match its weight lists")
    return ckpt


# ============================================================================
# RESULT TABLES
# ============================================================================

RESULT_COLUMNS = [
    "task", "method", "deg", "noise", "seed", "lambda_smooth", "beta", "shift",
    "normalized_regret", "train_mse", "test_mse", "active_change_rate",
    "wall_seconds", "stop_reason",
]


def append_results(path: str, rows: List[Dict[str, Any]], config_echo: Dict[str, Any]) -> str:
    """
    Append rows under a '# config:' echo line; the header is written once.

    The echo is also appended to a JSON document beside the results file.
    """
    new_file = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="") as f:
        if new_file:
            f.write(",".join(RESULT_COLUMNS) + "\n")
        f.write(f"# config: {json.dumps(config_echo, sort_keys=True)}\n")
        writer = csv.DictWriter(f, fieldnames=RESULT_COLUMNS, extrasaction="ignore")
        for row in rows:
            writer.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in RESULT_COLUMNS})

    sidecar = config_sidecar_path(path)
    configs = []
    if os.path.exists(sidecar):
        with open(sidecar) as f:
            configs = json.load(f)
    configs.append(config_echo)
    with open(sidecar, "w") as f:
        json.dump(configs, f, indent=2, sort_keys=True)

    print(f"[EXPORT] Appended {len(rows)} rows to {path}")
    return path


def config_sidecar_path(path: str) -> str:
    root, _ = os.path.splitext(path)
    return root + ".config.json"


def read_results(path: str) -> List[Dict[str, str]]:
    """Result rows as dicts of strings; echo lines are skipped."""
    with open(path, newline="") as f:
        lines = [line for line in f if not line.startswith("#")]
    if not lines:
        return []
    reader = csv.DictReader(lines)
    if reader.fieldnames != RESULT_COLUMNS:
        raise FormatError(f"unexpected results header in {path}")
    return list(reader)
