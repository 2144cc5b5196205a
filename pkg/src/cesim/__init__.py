"""Constant-envelope multi-user MIMO precoding over frequency-selective channels."""

from .channel import SeedSpec, sample_channel, sample_symbol_batch, sample_symbols
from .model import (
    ChannelRealization,
    Dimensions,
    PhaseSchedule,
    PrecoderConfig,
    ResidualState,
    SymbolFrame,
    mui,
    objective,
    received_block,
)
from .rate import (
    ErgodicRateEvaluator,
    Infeasible,
    MuiCovariance,
    RateConfig,
    estimate_mui_covariance,
    min_power_for_rate,
    optimize_symbol_energy,
    per_user_ergodic_rate,
    rate_lower_bound,
)
from .solver import SolveReport, apply_update, coordinate_update, init_schedule, solve, solve_frames

__version__ = "0.1.0"
