"""Cooperative ARQ over a relay with adaptive modulation, coding and power control."""
from .amc import AmcMode, AmcModeTable, load_mode_table, per_awgn, power_gains
from .analytic import AdaptationPolicy, PerformanceReport, Scenario, evaluate, spectral_efficiency
from .channel import LinkModel, expected_inverse_snr, mode_probabilities
from .constpower import const_power_thresholds, direct_transmission_se, optimize_const_power
from .errors import (
    CarqError,
    ConfigParseError,
    DivergenceError,
    InfeasibleError,
    NumericalError,
    TableParseError,
    ValidationError,
)
from .estimators import AdaptivePowerCARQ, ConstantPowerCARQ, DirectTransmissionAMC
from .optimizer import OptimizerConfig, iterate, optimize
from .simulator import SimConfig, SimEstimate, compare, simulate

__version__ = "0.1.0"
