"""
Environment settings for the command line and sweep runner
CLI flags override these; these override the built-in defaults
"""

import os

from dotenv import load_dotenv
load_dotenv()


# run configuration used when `simulate` is given no file
DEFAULT_CONFIG_PATH = os.getenv("HALFFLOW_CONFIG", "config/default.cfg")

# root directory for CSV, snapshots and summaries
OUTPUT_DIRECTORY = os.getenv("HALFFLOW_OUT_DIR", "output")

LOG_LEVEL = os.getenv("HALFFLOW_LOG_LEVEL", "INFO").upper()

# FFT threads per process
FFT_THREADS = int(os.getenv("HALFFLOW_THREADS", "1"))

DEFAULT_SEED = int(os.getenv("HALFFLOW_SEED", "0"))

DEFAULT_TRIALS = int(os.getenv("HALFFLOW_TRIALS", "1000"))

# worker processes for sweeps; 0 means one per CPU
SWEEP_WORKERS = int(os.getenv("HALFFLOW_SWEEP_WORKERS", "0"))

# fixed Agmon bound for decay checks; unset means the reference-sampler calibration
_agmon_override = os.getenv("HALFFLOW_AGMON_CALIBRATION")
AGMON_CALIBRATION = float(_agmon_override) if _agmon_override else None

# where reference calibrations are stored once computed
CALIBRATION_FILE = os.getenv("HALFFLOW_CALIBRATION_FILE", "config/calibration.json")

# upper bound accepted for sup |u - Q|^2_2 / |u0 - Q|^2_2 when n >= 2
SOBOLEV_CALIBRATION = float(os.getenv("HALFFLOW_SOBOLEV_CALIBRATION", "10.0"))
