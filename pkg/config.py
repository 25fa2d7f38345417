"""
Configuration module for the PEAR toolkit.
Centralizes all default parameters for easy tuning and experimentation.

Environment variables are never consulted: every run is fully described by
these defaults plus the explicit flags passed on the command line.
"""

from typing import Any, Dict


# ============================================================================
# LINEAR ALGEBRA CONFIGURATION
# ============================================================================

class LinalgConfig:
    """Configuration for dense linear-algebra kernels"""

    # Relative pivot threshold for numerical-rank row filtering
    RANK_TOL = 1e-8

    # Symmetry tolerance accepted by the SPD factorization
    SYMMETRY_TOL = 1e-10


# ============================================================================
# SOLVER CONFIGURATION
# ============================================================================

class SolverConfig:
    """Configuration for the forward QP solver (ADMM + polishing)"""

    # Residual certificate
    EPS_ABS = 1e-8
    EPS_REL = 1e-8
    MAX_ITER = 20000

    # ADMM parameters
    RHO = 0.1
    RHO_EQ_SCALE = 1e3  # equality rows (l = u) get a stiffer penalty
    SIGMA = 1e-6
    ALPHA = 1.6
    ADAPTIVE_RHO_INTERVAL = 50
    ADAPTIVE_RHO_TOLERANCE = 5.0

    # Polishing
    POLISH_INTERVAL = 25

    # Primal infeasibility certificate tolerance
    EPS_PRIM_INF = 1e-7


# ============================================================================
# SENSITIVITY CONFIGURATION
# ============================================================================

class SensitivityConfig:
    """Configuration for active-set detection and the reduced Schur system"""

    # A row is active only when its multiplier exceeds this band on the binding side
    ACTIVE_TOL = 1e-6

    # delta = SCHUR_REG * trace(S) / k added to the Schur diagonal
    SCHUR_REG = 1e-10
    SCHUR_REFINE_STEPS = 2

    # Workers for per-sample gradient fan-out
    MAX_GRADIENT_WORKERS = 4


# ============================================================================
# PROBLEM CONFIGURATION
# ============================================================================

class ProblemConfig:
    """Configuration for benchmark problem builders"""

    # Shortest path grid
    GRID_ROWS = 5
    GRID_COLS = 5

    # Knapsack
    KNAPSACK_ITEMS = 100
    KNAPSACK_WEIGHT_MIN = 3
    KNAPSACK_WEIGHT_MAX = 8
    CAPACITY_RATIO = 0.5
    DP_TABLE_LIMIT = 10_000_000  # (items + 1) * (capacity + 1) cells

    # Mean-variance portfolio
    MVO_ASSETS = 10
    MVO_RISK_AVERSION = 2.0
    MVO_LOWER_BOUND = 0.0
    MVO_VOL_MIN = 0.1
    MVO_VOL_MAX = 0.4
    MVO_SPECTRAL_FLOOR = 1e-6
    MVO_RETURN_SCALE = 0.05

    # Default smoothing strength for LP relaxations
    LAMBDA_SMOOTH = 0.1


# ============================================================================
# DATA GENERATION CONFIGURATION
# ============================================================================

class DataConfig:
    """Configuration for synthetic feature/cost generation"""

    FEATURE_DIM = 5
    DEGREE = 2
    NOISE_HALF_WIDTH = 0.0
    BERNOULLI_P = 0.5

    TRAIN_SIZE = 1000
    VAL_SIZE = 500
    TEST_SIZE = 500

    # Dataset text format tag
    FORMAT_VERSION = "pear-dataset/1"


# ============================================================================
# TRAINING CONFIGURATION
# ============================================================================

class TrainingConfig:
    """Configuration for predictor training"""

    # Learning rates and batch sizes (LP tasks vs. MVO)
    LP_LEARNING_RATE = 1e-2
    MVO_LEARNING_RATE = 1e-3
    LP_BATCH_SIZE = 32
    MVO_BATCH_SIZE = 64

    # PEAR loss defaults
    BETA = 0.1

    # Early stopping: relative improvement < 1% for 3 consecutive evaluations
    MIN_REL_IMPROVEMENT = 0.01
    PATIENCE = 3
    EVAL_EVERY = 1
    MAX_EPOCHS = 50
    MAX_SECONDS = 600.0

    # Reduce-on-plateau (MVO only)
    PLATEAU_FACTOR = 0.5
    PLATEAU_PATIENCE = 3

    # Abort when more than this fraction of samples fail in one epoch
    MAX_FAILURE_RATE = 0.01

    # Adam
    ADAM_BETA1 = 0.9
    ADAM_BETA2 = 0.999
    ADAM_EPS = 1e-8


# ============================================================================
# WARM-START CACHE CONFIGURATION
# ============================================================================

class CacheConfig:
    """Configuration for the solver warm-start cache"""

    CACHE_ENABLED = True

    # Cosine similarity between cost vectors required for a warm-start hit
    CACHE_SIMILARITY_THRESHOLD = 0.95

    # Maximum cached solutions per instance shape
    CACHE_CAPACITY = 256


# ============================================================================
# EXPERIMENT CONFIGURATION
# ============================================================================

class ExperimentDefaults:
    """Defaults for experiment runs, sweeps and shift protocols"""

    SEEDS = [0, 1, 2, 3, 4]

    # Sweep grids
    BETA_GRID = [0.0, 0.05, 0.1, 0.2, 0.5]
    LAMBDA_GRID = [0.01, 0.05, 0.1, 0.5, 1.0]
    DEGREE_GRID = [2, 4, 6, 8]
    NOISE_GRID = [0.1, 0.3, 0.5]

    # Constraint-shift grids
    CAPACITY_SHIFTS = [0.3, 0.5, 0.7, 0.9]
    LOWER_BOUND_SHIFTS = [-0.1, -0.3, -0.5, -1.0]
    ORIENTATION_SHIFTS = ["cross"]

    # Active-set stability rate
    STABILITY_SCALE = 1e-3
    STABILITY_TRIALS = 10

    RESULTS_PATH = "results.csv"


# ============================================================================
# HELPER FUNCTIONS
# ============================================================================

def get_config_summary() -> Dict[str, Any]:
    """Get a summary of all active defaults"""
    return {
        "linalg": {
            "rank_tol": LinalgConfig.RANK_TOL,
        },
        "solver": {
            "eps_abs": SolverConfig.EPS_ABS,
            "eps_rel": SolverConfig.EPS_REL,
            "max_iter": SolverConfig.MAX_ITER,
            "rho": SolverConfig.RHO,
            "sigma": SolverConfig.SIGMA,
            "alpha": SolverConfig.ALPHA,
        },
        "sensitivity": {
            "active_tol": SensitivityConfig.ACTIVE_TOL,
            "schur_reg": SensitivityConfig.SCHUR_REG,
            "schur_refine_steps": SensitivityConfig.SCHUR_REFINE_STEPS,
        },
        "problems": {
            "grid": [ProblemConfig.GRID_ROWS, ProblemConfig.GRID_COLS],
            "knapsack_items": ProblemConfig.KNAPSACK_ITEMS,
            "knapsack_weights": [ProblemConfig.KNAPSACK_WEIGHT_MIN, ProblemConfig.KNAPSACK_WEIGHT_MAX],
            "capacity_ratio": ProblemConfig.CAPACITY_RATIO,
            "mvo_assets": ProblemConfig.MVO_ASSETS,
            "mvo_risk_aversion": ProblemConfig.MVO_RISK_AVERSION,
        },
        "data": {
            "feature_dim": DataConfig.FEATURE_DIM,
            "bernoulli_p": DataConfig.BERNOULLI_P,
            "sizes": [DataConfig.TRAIN_SIZE, DataConfig.VAL_SIZE, DataConfig.TEST_SIZE],
        },
        "training": {
            "lp_lr": TrainingConfig.LP_LEARNING_RATE,
            "mvo_lr": TrainingConfig.MVO_LEARNING_RATE,
            "lp_batch": TrainingConfig.LP_BATCH_SIZE,
            "mvo_batch": TrainingConfig.MVO_BATCH_SIZE,
            "patience": TrainingConfig.PATIENCE,
            "max_seconds": TrainingConfig.MAX_SECONDS,
        },
        "cache": {
            "enabled": CacheConfig.CACHE_ENABLED,
            "similarity_threshold": CacheConfig.CACHE_SIMILARITY_THRESHOLD,
        },
    }


def print_config():
    """Print current configuration (for debugging)"""
    import json
    config = get_config_summary()
    print("=" * 80)
    print("CURRENT PEAR CONFIGURATION")
    print("=" * 80)
    print(json.dumps(config, indent=2))
    print("=" * 80)


if __name__ == "__main__":
    print_config()
