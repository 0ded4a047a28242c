"""Finite-key rate estimation and phase-lock simulation for twin-field style QKD
with sending-or-not-sending sources and imperfect vacuum states."""

from .channel import Transmittance, arm_transmittance, expected_counts, monte_carlo_counts
from .errors import (
    AsymmetryError,
    ConfigError,
    DegenerateMapping,
    DomainError,
    EmptyMatrix,
    NoPositiveRate,
    ScsQkdError,
    ZeroWindows,
)
from .keyrate import (
    evaluate,
    key_rate_coherent,
    key_rate_collective,
    phase_error_expectation,
    phase_error_rate,
    rate_grid,
)
from .mapping import equivalent_intensity, equivalent_pair
from .model import (
    ChannelParams,
    Config,
    KeyRateReport,
    ObservedStatistics,
    ProtocolParams,
    SourceBounds,
    load_config,
    preset_path,
    validate,
)
from .optimizer import GridSpec, calibrate_misalignment, optimize, sweep
from .phaselock import estimate_v0, run_feedback
from .stats import binary_entropy, expected_lower, expected_upper, real_upper

__version__ = "0.1.0"
