import os

from dotenv import load_dotenv

load_dotenv()

ENV_PREFIX = "NETCOURNOT_"


def _env_float(name: str, default: float) -> float:
    return float(os.getenv(ENV_PREFIX + name, str(default)))


def _env_int(name: str, default: int) -> int:
    return int(os.getenv(ENV_PREFIX + name, str(default)))


# Nash solvers
NASH_TOL = _env_float("NASH_TOL", 1e-9)          # relative change on quantities
NASH_MAX_ITERS = _env_int("NASH_MAX_ITERS", 10_000)
CERTIFY_EPS = _env_float("CERTIFY_EPS", 1e-7)    # absolute profit improvement

# Slack used by every bound_satisfied flag
BOUND_SLACK = _env_float("BOUND_SLACK", 1e-9)

# Stackelberg search
SE_GRID = _env_int("SE_GRID", 2000)
SE_EPS = _env_float("SE_EPS", 1e-7)
SE_STARTS = _env_int("SE_STARTS", 4)
SE_MAX_SWEEPS = _env_int("SE_MAX_SWEEPS", 200)

# Size guards
VERTEX_MAX_MARKETS = _env_int("VERTEX_MAX_MARKETS", 12)
BRUTE_FORCE_MAX_FIRMS = _env_int("BRUTE_FORCE_MAX_FIRMS", 12)
JOINT_MAX_EDGES = _env_int("JOINT_MAX_EDGES", 16)

# Output
OUTPUT_DIGITS = _env_int("OUTPUT_DIGITS", 12)
LOG_LEVEL = os.getenv(ENV_PREFIX + "LOG_LEVEL", "WARNING")
