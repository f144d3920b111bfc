"""Multi-cell uplink user scheduling on a grid channel knowledge map."""

from .ckm import (
    GridStats,
    UsCkm,
    build_ckm,
    grid_variance,
    lookup_grid,
    reliability_indicator,
    sample_center_correlation,
    statistical_channel,
    statistical_correlation,
    statistical_gain,
)
from .errors import (
    ConfigError,
    EnumerationGuardError,
    GeometryError,
    OutOfClusterError,
    ScheduleError,
    ZeroNormError,
)
from .evaluation import (
    ChannelSet,
    OverheadModel,
    ReceiveBeamformer,
    ScheduleResult,
    brute_force_optimum,
    calibrate_noise,
    evaluate_group,
    mmse_receiver,
    overhead_counts,
    sinr,
    sum_rate,
)
from .experiments import ALGORITHMS, place_users, run_trial, trial_channels
from .geometry import (
    ChannelVector,
    GridIndex,
    Position,
    ScattererField,
    Scenario,
    ScenarioConfig,
    array_response,
    build_scenario,
    generate_channel,
    path_loss_db,
    sample_grid,
)
from .groups import ActiveSet, SelectionRecord, UserGroup, UserRecord
from .scheduling import (
    EffectiveCsi,
    aes_select,
    fuse_effective_csi,
    gis_select,
    greedy_schedule,
    iccs_schedule,
    random_schedule,
    residual_metric,
    robust_two_stage,
    sus_schedule,
    two_stage_schedule,
)

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS",
    "ActiveSet",
    "ChannelSet",
    "ChannelVector",
    "ConfigError",
    "EffectiveCsi",
    "EnumerationGuardError",
    "GeometryError",
    "GridIndex",
    "GridStats",
    "OutOfClusterError",
    "OverheadModel",
    "Position",
    "ReceiveBeamformer",
    "ScattererField",
    "Scenario",
    "ScenarioConfig",
    "ScheduleError",
    "ScheduleResult",
    "SelectionRecord",
    "UsCkm",
    "UserGroup",
    "UserRecord",
    "ZeroNormError",
    "aes_select",
    "array_response",
    "brute_force_optimum",
    "build_ckm",
    "build_scenario",
    "calibrate_noise",
    "evaluate_group",
    "fuse_effective_csi",
    "generate_channel",
    "gis_select",
    "greedy_schedule",
    "grid_variance",
    "iccs_schedule",
    "lookup_grid",
    "mmse_receiver",
    "overhead_counts",
    "path_loss_db",
    "place_users",
    "random_schedule",
    "reliability_indicator",
    "residual_metric",
    "robust_two_stage",
    "run_trial",
    "sample_center_correlation",
    "sample_grid",
    "sinr",
    "statistical_channel",
    "statistical_correlation",
    "statistical_gain",
    "sum_rate",
    "sus_schedule",
    "trial_channels",
    "two_stage_schedule",
]
