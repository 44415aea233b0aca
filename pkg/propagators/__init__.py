from .main import (
    BRACKETS,
    EnvironmentModel,
    EvolutionResult,
    EvolutionSpec,
    SplitOperatorPropagator,
    edge_fraction,
    evolve,
    first_correction_ratio,
    step_decoherence,
    step_friction,
    step_kinetic,
    step_potential,
)
