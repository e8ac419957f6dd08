import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()

TOOL_VERSION = "1.0.0"  # Embedded in every emitted file
MODEL_SCHEMA_VERSION = 1  # Version of the fitted-model JSON document

# The Blue Alliance v3 REST API
TBA_AUTH_KEY = os.getenv("TBA_AUTH_KEY")  # Read-only API key sent as X-TBA-Auth-Key
TBA_BASE_URL = os.getenv("TBA_BASE_URL", "https://www.thebluealliance.com/api/v3")
TBA_TIMEOUT_SECONDS = int(os.getenv("TBA_TIMEOUT_SECONDS", "30"))
TBA_MAX_RETRIES = int(os.getenv("TBA_MAX_RETRIES", "3"))

# Numerical settings of the estimation procedure
REFINE_TOLERANCE = float(os.getenv("REFINE_TOLERANCE", "1e-8"))  # Refinement stopping distance
REFINE_MAX_ITERATIONS = int(os.getenv("REFINE_MAX_ITERATIONS", "100"))  # Cap on refinement passes
RANK_TOLERANCE = float(os.getenv("RANK_TOLERANCE", "1e-10"))  # Relative singular value cut-off
LEVERAGE_TOLERANCE = float(os.getenv("LEVERAGE_TOLERANCE", "1e-10"))  # h_ss >= 1 - tol is infeasible
RESIDUAL_TOLERANCE = float(os.getenv("RESIDUAL_TOLERANCE", "1e-10"))  # Residuals below tol * max(1, max|Y|) are exact zeros

DEFAULT_THREADS = int(os.getenv("DEFAULT_THREADS", "1"))  # Worker processes for simulations

_BASE_PATH = Path(__file__).parent.parent

def _resolve_path(env_var: str, default_path: Path) -> Path:
    """Resolve path from env var, converting relative paths to absolute."""
    path_str = os.getenv(env_var)
    if path_str:
        path = Path(path_str)
        return path if path.is_absolute() else (_BASE_PATH / path).resolve()
    return default_path

CACHE_DIR = _resolve_path("CACHE_DIR", _BASE_PATH / "cache")
OUTPUT_DIR = _resolve_path("OUTPUT_DIR", _BASE_PATH / "output")
DATA_DIR = _resolve_path("DATA_DIR", _BASE_PATH / "data")
EXPERIMENTS_DIR = _resolve_path("EXPERIMENTS_DIR", _BASE_PATH / "config" / "experiments")

def ensure_dir(path: Path) -> Path:
    """Create ``path`` (and parents) unless it already exists as a directory."""
    path = Path(path)
    if path.is_file():
        raise NotADirectoryError(f"{path!s} exists and is a file, not a directory.")
    if not path.exists():
        path.mkdir(parents=True, exist_ok=True)
    return path
