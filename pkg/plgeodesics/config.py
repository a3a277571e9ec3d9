"""Numerical tolerances, defaults and the output-directory override."""
from dotenv import load_dotenv
import os

load_dotenv()

# Relative immersion guard: an edge is degenerate below EPS_EDGE_REL * max(1, length).
EPS_EDGE_REL = 1e-8
# Tolerance on mean-zero / sum-zero checks, scaled by max(1, largest entry).
EPS_MEAN_ZERO = 1e-9
# Absolute tolerance for point-on-segment and segment contact tests.
EPS_GEO = 1e-12
# Landmarks closer than EPS_LAND_REL * diameter count as collided.
EPS_LAND_REL = 1e-8
# Square-root-velocity pairs: immersion guard and closedness tolerance (both relative).
EPS_SRV_REL = 1e-8
SRV_CONSTRAINT_RTOL = 1e-10

# Singular values below PINV_RCOND * sigma_max are treated as zero by the oracles.
PINV_RCOND = 1e-12

DEFAULT_SIGMA = 1.0

DEFAULT_DT = 1e-3
DEFAULT_T_END = 1.0
DEFAULT_EDGE_GUARD = EPS_EDGE_REL

SHOOTING_MAX_ITER = 100
SHOOTING_TOL = 1e-8
SHOOTING_FD_STEP = 1e-6

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3

OUTPUT_DIR = os.getenv("PLGEO_OUTPUT_DIR", "")
MANIFEST_NAME = "run_manifest.json"
