"""
Fissid Backend Module
Simulation, moment estimation, surrogates, inference and sequential design
"""

from .cache_manager import CacheManager
from .dataset import DesignBox, TrainingDataset
from .exceptions import FissidError
from .nuclear_data import NuclearData, load_nuclear_data
from .simulator import MaterialInput, TimeList, simulate_timelist
from .surrogate import GPConfig, GPSurrogate, train_gp

__all__ = [
    "CacheManager",
    "DesignBox",
    "TrainingDataset",
    "FissidError",
    "NuclearData",
    "load_nuclear_data",
    "MaterialInput",
    "TimeList",
    "simulate_timelist",
    "GPConfig",
    "GPSurrogate",
    "train_gp",
]
