"""Power-control design for spread-spectrum slotted Aloha with SIC.

The library solves for the transmit-power distribution that keeps the
post-cancellation SNIR flat across the whole power range, for three
cancellation models (perfect, fractional leftover, constant leftover),
and ships a chip-level Monte Carlo simulator to check the designs
against an actual waveform receiver.
"""

from .lambertw import lambert_w0
from .powermodel import (
    ChannelParams,
    ConstantResidual,
    FractionalResidual,
    InfeasibleConfigError,
    PerfectSic,
    PowerModel,
    SicModel,
    from_db,
    solve_model,
    to_db,
)
from .simulator import (
    DEFAULT_SEED,
    AggregateStats,
    DecodeRule,
    Genie,
    SicTrace,
    SlotRealization,
    SystemConfig,
    Threshold,
    design_users,
    effective_load,
    matched_filter,
    run_campaign,
    run_sic,
    synthesize_slot,
)
from .experiments import (
    FlatnessReport,
    FlatnessRow,
    McSettings,
    SweepRecord,
    SweepSpec,
    default_grid,
    flatness_report,
    read_records,
    sweep,
    write_records,
)

__version__ = "0.1.0"

__all__ = [
    "AggregateStats",
    "ChannelParams",
    "ConstantResidual",
    "DEFAULT_SEED",
    "DecodeRule",
    "FlatnessReport",
    "FlatnessRow",
    "FractionalResidual",
    "Genie",
    "InfeasibleConfigError",
    "McSettings",
    "PerfectSic",
    "PowerModel",
    "SicModel",
    "SicTrace",
    "SlotRealization",
    "SweepRecord",
    "SweepSpec",
    "SystemConfig",
    "Threshold",
    "__version__",
    "default_grid",
    "design_users",
    "effective_load",
    "flatness_report",
    "from_db",
    "lambert_w0",
    "matched_filter",
    "read_records",
    "run_campaign",
    "run_sic",
    "solve_model",
    "sweep",
    "synthesize_slot",
    "to_db",
    "write_records",
]
