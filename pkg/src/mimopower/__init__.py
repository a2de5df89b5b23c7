"""Uplink multi-cell massive MIMO power control with nonorthogonal pilots."""

__version__ = "0.1.0"

from .network import NetworkScenario, ScenarioConfig, generate_scenario, wrap_distance
from .pilots import PilotBook, PilotKind, make_pilots, pilot_gram
from .channel import mmse_estimate, pilot_phase_rx, sample_channel
from .rates import det_coeffs, det_rate, instant_rate, instant_rate_grad, instant_sinr
from .power_control import NumericalAbort, ScheduleError, StepSchedule, algorithm1, algorithm2
from .evaluation import antenna_sweep, equal_power, mc_ergodic, rate_cdf

__all__ = [
    "NetworkScenario", "ScenarioConfig", "generate_scenario", "wrap_distance",
    "PilotBook", "PilotKind", "make_pilots", "pilot_gram",
    "mmse_estimate", "pilot_phase_rx", "sample_channel",
    "det_coeffs", "det_rate", "instant_rate", "instant_rate_grad", "instant_sinr",
    "NumericalAbort", "ScheduleError", "StepSchedule", "algorithm1", "algorithm2",
    "antenna_sweep", "equal_power", "mc_ergodic", "rate_cdf",
]
