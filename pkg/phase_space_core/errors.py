# exceptions shared by every package of the laboratory


class PhaseSpaceError(Exception):
    """Base class for all laboratory errors."""


class ConfigurationError(PhaseSpaceError, ValueError):
    """
    A configuration value is missing, malformed or violates an invariant.

    :param message: Human readable description.
    :param block: Config block the field belongs to (e.g. "grid").
    :param field: Offending key.
    """

    def __init__(self, message, block=None, field=None):
        self.block = block
        self.field = field
        location = ".".join(part for part in (block, field) if part)
        super().__init__(f"[{location}] {message}" if location else message)


class DomainTooSmallError(PhaseSpaceError):
    """The initial packet leaks past the grid boundary above tolerance."""


class UnphysicalStateError(PhaseSpaceError):
    """The requested state violates the uncertainty relation."""


class ResolutionError(PhaseSpaceError):
    """A step pushed significant weight outside the resolvable band."""


class NumericalAbort(PhaseSpaceError):
    """
    A run produced NaN/Inf or drifted in norm.

    :param message: Solver diagnostic.
    :param step: Step index at which the problem was detected.
    """

    def __init__(self, message, step=None):
        self.step = step
        super().__init__(f"step {step}: {message}" if step is not None else message)


class UndefinedRatioError(PhaseSpaceError):
    """The Liouville term vanishes, so the correction ratio is undefined."""


class UnsupportedModelError(PhaseSpaceError):
    """The operation requires a different potential family."""


class AlreadyQuantumError(PhaseSpaceError):
    """The initial state has no classical epoch (chi * sigma_p <= hbar)."""


class ContractError(PhaseSpaceError):
    """An input violates an operation precondition."""
