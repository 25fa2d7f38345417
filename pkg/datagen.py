"""
Synthetic Data Generation

Features x ~ N(0, I_p) are mapped to positive costs through a random binary
matrix B and a degree-deg polynomial, with optional multiplicative noise.

Random streams: the seed feeds a numpy SeedSequence that is spawned into three
children, used in order for B, the features X and the noise factors. Equal
configurations therefore yield identical datasets.
"""

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from config import DataConfig


class SizesExceedData(ValueError):
    """Raised when requested split sizes exceed the sample count"""


@dataclass(frozen=True)
class GenConfig:
    """Generation parameters"""
    d: int
    p: int = DataConfig.FEATURE_DIM
    deg: int = DataConfig.DEGREE
    noise_half_width: float = DataConfig.NOISE_HALF_WIDTH
    seed: int = 0
    sizes: Tuple[int, int, int] = (DataConfig.TRAIN_SIZE, DataConfig.VAL_SIZE, DataConfig.TEST_SIZE)
    bernoulli_p: float = DataConfig.BERNOULLI_P

    def __post_init__(self):
        if self.deg < 1:
            raise ValueError(f"deg must be >= 1, got {self.deg}")
        if not 0 <= self.noise_half_width < 1:
            raise ValueError(f"noise half-width must lie in [0, 1), got {self.noise_half_width}")
        if self.p < 1 or self.d < 1:
            raise ValueError("feature and cost dimensions must be positive")
        if any(s < 0 for s in self.sizes):
            raise ValueError("split sizes must be non-negative")

    @property
    def count(self) -> int:
        return int(sum(self.sizes))


@dataclass
class DatasetView:
    """Contiguous slice of a dataset"""
    X: np.ndarray
    C: np.ndarray
    start: int = 0

    def __len__(self) -> int:
        return self.X.shape[0]


@dataclass
class Dataset:
    B: np.ndarray
    X: np.ndarray
    C: np.ndarray
    config: GenConfig
    tags: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.tags is None:
            self.tags = _split_tags(self.config.sizes, self.X.shape[0])

    def __len__(self) -> int:
        return self.X.shape[0]


def _split_tags(sizes, count: int) -> np.ndarray:
    tags = np.full(count, "", dtype=object)
    start = 0
    for name, size in zip(("train", "val", "test"), sizes):
        tags[start:start + size] = name
        start += size
    return tags


def cost_map(B: np.ndarray, X: np.ndarray, deg: int, eps: Optional[np.ndarray] = None) -> np.ndarray:
    """
    c_ij = [((B x_i)_j / sqrt(p) + 3)^deg / 3.5^deg + 1] * eps_ij

    Args:
        B: Binary d x p matrix
        X: Features, count x p
        deg: Polynomial degree
        eps: Multiplicative noise, count x d (ones when omitted)
    """
    B = np.atleast_2d(np.asarray(B, dtype=float))
    X = np.atleast_2d(np.asarray(X, dtype=float))
    p = B.shape[1]
    base = (X @ B.T / np.sqrt(p) + 3.0) ** deg / 3.5 ** deg + 1.0
    if eps is None:
        return base
    return base * eps


def generate(cfg: GenConfig, verbose: bool = False) -> Dataset:
    """Draw a dataset of cfg.count samples (train, val, test in generation order)."""
    ss_b, ss_x, ss_eps = np.random.SeedSequence(cfg.seed).spawn(3)
    rng_b = np.random.default_rng(ss_b)
    rng_x = np.random.default_rng(ss_x)
    rng_eps = np.random.default_rng(ss_eps)

    N = cfg.count
    B = rng_b.binomial(1, cfg.bernoulli_p, size=(cfg.d, cfg.p))
    X = rng_x.standard_normal((N, cfg.p))
    if cfg.noise_half_width == 0:
        eps = None
    else:
        eps = rng_eps.uniform(1.0 - cfg.noise_half_width, 1.0 + cfg.noise_half_width, size=(N, cfg.d))
    C = cost_map(B, X, cfg.deg, eps)

    if verbose:
        print(f"[DATA] Generated {N} samples (p={cfg.p}, d={cfg.d}, deg={cfg.deg}, "
              f"noise={cfg.noise_half_width}, seed={cfg.seed})")
    return Dataset(B=B, X=X, C=C, config=cfg)


def split(ds: Dataset, sizes=None) -> Tuple[DatasetView, DatasetView, DatasetView]:
    """Contiguous (train, val, test) views in generation order."""
    sizes = tuple(ds.config.sizes if sizes is None else sizes)
    if len(sizes) != 3 or any(s < 0 for s in sizes):
        raise ValueError("sizes must be three non-negative counts")
    if sum(sizes) > len(ds):
        raise SizesExceedData(f"requested {sum(sizes)} samples, dataset holds {len(ds)}")

    views = []
    start = 0
    for size in sizes:
        views.append(DatasetView(X=ds.X[start:start + size], C=ds.C[start:start + size], start=start))
        start += size
    return tuple(views)
