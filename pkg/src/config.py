"""Environment-backed settings for nz-loops."""
import logging
import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()

# Working precision in bits; every tolerance is 2^(16 - P)
DEFAULT_PRECISION = int(os.getenv("NZ_LOOPS_PRECISION", "256"))
MIN_PRECISION = 64
TOLERANCE_HEADROOM_BITS = 16

# Decimal digits written to JSON output
DEFAULT_DIGITS = int(os.getenv("NZ_LOOPS_DIGITS", "20"))

# Shapes closer than 2^-bits to {0, 1} (or larger than 2^bits) are degenerate
DEGENERACY_BITS = int(os.getenv("NZ_LOOPS_DEGENERACY_BITS", "16"))

NEWTON_MAX_ITER = int(os.getenv("NZ_LOOPS_NEWTON_MAX_ITER", "100"))
CONTINUATION_MAX_HALVINGS = int(os.getenv("NZ_LOOPS_MAX_HALVINGS", "12"))
HARNESS_WORKERS = int(os.getenv("NZ_LOOPS_HARNESS_WORKERS", "4"))

# Comparison tolerances used by the invariance harness (relative)
TAU_TOLERANCE = float(os.getenv("NZ_LOOPS_TAU_TOL", "1e-25"))
LOOP_TOLERANCE = float(os.getenv("NZ_LOOPS_LOOP_TOL", "1e-20"))

LOG_LEVEL = os.getenv("NZ_LOOPS_LOG_LEVEL", "WARNING")

FIXTURE_DIR = Path(os.getenv(
    "NZ_LOOPS_FIXTURE_DIR",
    str(Path(__file__).resolve().parent / "data" / "fixtures"),
))

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(level: str = LOG_LEVEL):
    """Configure root logging once for command-line entry points."""
    logging.basicConfig(level=level.upper(), format=LOG_FORMAT)


def fixture_path(name: str) -> Path:
    """Path of a shipped fixture, e.g. fixture_path("4_1.json")."""
    return FIXTURE_DIR / name
