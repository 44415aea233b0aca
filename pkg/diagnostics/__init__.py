from .main import (
    COLUMNS,
    DIVERGENCE_COLUMNS,
    OPTIONAL_COLUMNS,
    Breakdown,
    ContractingWidth,
    EntropyLogFit,
    EntropyRateFit,
    TrajectoryRecord,
    breakdown_time,
    contracting_width,
    divergence,
    entropy_log_fit,
    entropy_rate_fit,
    field_distance,
    fringe_amplitude,
    fringe_contrast,
    linear_entropy,
    negativity_volume,
    observe,
    purity,
)
