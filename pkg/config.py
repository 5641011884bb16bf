import os
from pathlib import Path

import psutil
from dotenv import load_dotenv

load_dotenv()


def _env_flag(name: str, default: bool = False) -> bool:
    value = os.getenv(name)
    if value is None:
        return default
    return value.strip().lower() in ("1", "true", "yes", "on")


# Base directory
BASE_DIR = Path(__file__).resolve().parent

# Logging
LOGGING_DEBUG_MODE = _env_flag("TREELAB_LOG_DEBUG")
LOG_PATH = Path(os.getenv("TREELAB_LOG_PATH", str(BASE_DIR / "logs" / "treelab.log")))

# Results
RESULTS_DIR = Path(os.getenv("TREELAB_RESULTS_DIR", str(BASE_DIR / "results")))

# Desk-scale caps
TABLE_MAX_N = 24
TREE_LOOKUP_MAX_N = 20
LOOKAHEAD_MAX = 4
JUNTA_MAX_K = 12
MONOTONE_MAX_N = 16
DP_MAX_N = 16
DP_MAX_DEPTH = 6
CONDITIONED_ATTEMPT_FACTOR = 64

# Estimation / search budgets
SAMPLE_CAP = int(os.getenv("TREELAB_SAMPLE_CAP", 4096))
DP_SUBPROBLEM_CAP = int(os.getenv("TREELAB_DP_SUBPROBLEM_CAP", 10 ** 7))
POLYLOG_EXPONENT = 2.0

# Bench settings
BENCH_WORKERS = int(os.getenv("TREELAB_BENCH_WORKERS", psutil.cpu_count(logical=False) or 1))
