"""
Fissid Configuration Module
Process-level settings, paths and reference constants
"""

import os
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Base paths
BASE_DIR = Path(__file__).parent
DATA_DIR = BASE_DIR / "data"
LOGS_DIR = Path(os.getenv("FISSID_LOGS_DIR", str(BASE_DIR / "logs")))
OUTPUT_DIR = Path(os.getenv("FISSID_OUTPUT_DIR", str(BASE_DIR / "runs")))
CACHE_DIR = Path(os.getenv("FISSID_CACHE_DIR", str(DATA_DIR / "cache")))

# Nuclear data shipped with the repository
NUCLEAR_DATA_FILE = Path(os.getenv("FISSID_NUCLEAR_DATA", str(DATA_DIR / "nuclear_data_default.json")))

# Logging Configuration
LOG_LEVEL = os.getenv("FISSID_LOG_LEVEL", "INFO")
LOG_FILE = LOGS_DIR / "fissid.log"

# Parallelism (simulation blocks, multi-start optimisation)
WORKERS = int(os.getenv("FISSID_WORKERS", "4"))

# Cache Configuration
CACHE_ENABLED = os.getenv("FISSID_CACHE_ENABLED", "true").lower() == "true"
CACHE_TIMEOUT = None  # simulation results never expire

CODE_VERSION = "1.0.0"

# Input / output naming
NEUTRON_INPUTS = ["k_p", "eps_f", "s_intensity", "x_s"]
GAMMA_INPUTS = ["k_p", "s_intensity", "x_s", "m_gamma", "eps_gamma"]
JOINT_INPUTS = ["k_p", "eps_f", "s_intensity", "x_s", "m_gamma", "eps_gamma"]

NEUTRON_OUTPUTS = ["r_n", "y_n", "x_n"]
GAMMA_OUTPUTS = ["r_g", "y_g", "x_g"]
JOINT_OUTPUTS = NEUTRON_OUTPUTS + GAMMA_OUTPUTS

# Default design box (lower, upper) for the joint input vector
DESIGN_BOX = {
    "k_p": (0.80, 0.95),
    "eps_f": (0.002, 0.02),
    "s_intensity": (1.0e3, 1.0e4),
    "x_s": (0.0, 1.0),
    "m_gamma": (10.0, 125.0),
    "eps_gamma": (0.01, 0.10),
}

# Reference experiment scale
DATASET_SIZE = 232
TEST_FRACTION = 0.2
N_NEUTRON_OBSERVATIONS = 80
N_JOINT_OBSERVATIONS = 16
CSQ_POINTS = 20
CSQ_SLACK = 2.0
MATCH_ITERATIONS = 10
MATCH_HISTORIES = 50_000
FULL_HISTORIES = 500_000

# Moment estimation defaults
PLATEAU_LEVELS = 3
PLATEAU_TOLERANCE = 0.05
LOW_STATISTICS_WINDOWS = 30

# MCMC defaults
MCMC_STEPS = 200_000
MCMC_BURN_IN = 0.2
