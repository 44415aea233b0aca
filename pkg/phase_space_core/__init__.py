from phase_space_core.errors import (
    AlreadyQuantumError,
    ConfigurationError,
    ContractError,
    DomainTooSmallError,
    NumericalAbort,
    PhaseSpaceError,
    ResolutionError,
    UndefinedRatioError,
    UnphysicalStateError,
    UnsupportedModelError,
)
from phase_space_core.main import (
    InitialStateSpec,
    PhaseSpaceGrid,
    SpectralField,
    WignerField,
    fft_workers,
    from_xs,
    make_grid,
    make_state,
    marginals,
    moments,
    to_xs,
)
