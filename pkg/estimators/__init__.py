from .main import (
    BOLTZMANN_SI,
    DAY,
    HBAR_SI,
    YEAR,
    CorrespondenceRegime,
    DecoherenceTime,
    EquilibrationTime,
    GaussianState,
    HyperionReport,
    LyapunovEstimate,
    MacroScenario,
    OracleTrajectory,
    classical_lyapunov,
    coherence_length,
    correspondence_regime,
    de_broglie_wavelength,
    decoherence_time,
    entropy_profile,
    entropy_rate_profile,
    gaussian_oracle,
    hyperion_report,
    sigma_c,
    t_eq,
    t_hbar_chaotic,
    t_hbar_integrable,
    t_r,
)
