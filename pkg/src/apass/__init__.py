"""Receding-horizon max-min power allocation for a LEO satellite downlink."""

from .geometry import OrbitConfig, PassGeometry, SlotGrid, elevation_profile, slant_range
from .channel import ChannelRealization, FadingConfig, generate_realization, load_tables
from .linkmodel import NoiseConfig, PowerMatrix, RateReport, jain_index, noise_variance, rate_report
from .maxmin_gp import GpInstance, GpSolverError, ScaResult, SolverConfig, sca_maxmin
from .schemes import (PredictionModel, SchemeResult, run_apass, run_equal_power, run_sts,
                      run_water_filling)

__version__ = "0.1.0"
