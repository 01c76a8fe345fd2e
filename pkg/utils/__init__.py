"""
Fissid Utilities Module
Logging helpers and seed management
"""

from .logger_setup import setup_logging, log_function_call, log_stage, log_error, log_performance, timed
from .seeding import stage_seed, block_rng

__all__ = [
    "setup_logging",
    "log_function_call",
    "log_stage",
    "log_error",
    "log_performance",
    "timed",
    "stage_seed",
    "block_rng",
]
