import os
from pathlib import Path


def find_state_dir() -> Path:
    """
    Directory for the log file and the score cache.

    MULTIWALK_STATE_DIR wins when set; otherwise `.multiwalk` under the
    current working directory.
    """
    if env_path := os.getenv("MULTIWALK_STATE_DIR"):
        return Path(env_path).resolve()
    return Path.cwd().resolve() / ".multiwalk"


STATE_DIR = find_state_dir()
LOG_FILE = STATE_DIR / "multiwalk.log"
LOG_MAX_BYTES = 10 * 1024 * 1024
LOG_BACKUP_COUNT = 5


def reconfigure(state_dir: Path) -> None:
    global STATE_DIR, LOG_FILE
    STATE_DIR = Path(state_dir).resolve()
    LOG_FILE = STATE_DIR / "multiwalk.log"


# Walk parameters
DEFAULT_RESTART = 0.7
DEFAULT_DELTA = 0.5
DEFAULT_EPSILON = 1e-10
DEFAULT_MAX_ITER = 1000
PROBABILITY_TOLERANCE = 1e-12
SELF_LOOP_POLICIES = ("keep", "drop")
DEFAULT_SELF_LOOPS = "keep"

# Evaluation
DEFAULT_MIN_DEGREE = 2
DEFAULT_LP_MIN_DEGREE = 1
TRANSIT_PREFIX = "__transit"

# Exploration
DEFAULT_CLUSTERS = 8
KMEANS_RESTARTS = 100
KMEANS_MAX_ITER = 300
PCA_MAX_ITER = 10000
PCA_TOLERANCE = 1e-14
SILHOUETTE_K_RANGE = (2, 12)
DEFAULT_TOP_K = 100

# Output
DEFAULT_RNG_SEED = 20240613
SCORE_DIGITS = 17
TRANSITION_CACHE_CAPACITY = 16

MANIFEST_NAME = "manifest.json"
RECORDS_NAME = "records.tsv"
CDF_NAME = "cdf.tsv"
CDF_PLOT_NAME = "cdf.dat"
SCORE_CACHE_DIR = "scores"


def format_score(value: float) -> str:
    return format(float(value), f".{SCORE_DIGITS}g")


def get_default_workers() -> int:
    """Returns the available parallelism, never less than one."""
    return max(1, os.cpu_count() or 1)
