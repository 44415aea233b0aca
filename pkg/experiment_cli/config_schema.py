# keys accepted in config files: block -> key -> (field, type, required, default)
# key names carry their units; field is the keyword the library constructors take


config_schema = {
    "grid": {
        "nx": ("nx", int, True, None),
        "np": ("n_p", int, True, None),
        "x_min_length": ("x_min", float, True, None),
        "x_max_length": ("x_max", float, True, None),
        "p_min_momentum": ("p_min", float, True, None),
        "p_max_momentum": ("p_max", float, True, None),
        "hbar_action": ("hbar", float, False, 1.0),
        "mass": ("mass", float, False, 1.0),
    },
    "potential": {
        "kind": ("kind", str, True, None),
        "omega_per_time": ("omega", float, False, 0.0),
        "lambda_per_time": ("lambda0", float, False, 0.0),
        "a_energy_per_length2": ("a", float, False, 0.0),
        "b_energy_per_length4": ("b", float, False, 0.0),
        "drive_amplitude_force": ("drive_amplitude", float, False, 0.0),
        "drive_frequency_per_time": ("drive_frequency", float, False, 0.0),
    },
    "initial_state": {
        "kind": ("kind", str, False, "gaussian"),
        "x0_length": ("x0", float, False, 0.0),
        "p0_momentum": ("p0", float, False, 0.0),
        "sigma_x_length": ("sigma_x", float, True, None),
        "sigma_p_momentum": ("sigma_p", float, False, None),
        "correlation_action": ("correlation", float, False, 0.0),
        "separation_length": ("separation", float, False, 0.0),
        "phase_rad": ("phase", float, False, 0.0),
    },
    "evolution": {
        "bracket": ("bracket", str, False, "moyal"),
        "n_max": ("n_max", int, False, 1),
        "dt_time": ("dt", float, True, None),
        "n_steps": ("n_steps", int, True, None),
        "record_every": ("record_every", int, False, 1),
        "correction_ratio": ("correction_ratio", bool, False, False),
        "moment_threshold": ("moment_threshold", float, False, 0.10),
        "ratio_threshold": ("ratio_threshold", float, False, 1.0),
    },
    "environment": {
        "D_p2_per_time": ("D", float, False, 0.0),
        "gamma_per_time": ("gamma", float, False, 0.0),
        "kT_energy": ("T", float, False, None),
    },
    "outputs": {
        "csv": ("csv", str, False, "trajectory.csv"),
        "snapshot_every": ("snapshot_every", int, False, 0),
        "heatmap": ("heatmap", bool, False, False),
        "fringe_separation_length": ("fringe_separation", float, False, None),
    },
    "sweep": {
        "parameter": ("parameter", str, True, None),
        "values": ("values", list, True, None),
        "paired": ("paired", bool, False, False),
        "lyapunov_duration_time": ("lyapunov_duration", float, False, 200.0),
        "lyapunov_x0_length": ("lyapunov_x0", float, False, None),
        "lyapunov_p0_momentum": ("lyapunov_p0", float, False, None),
        "fit_window_start_time": ("window_start", float, False, None),
        "fit_window_end_time": ("window_end", float, False, None),
    },
    "scenario": {
        "name": ("name", str, True, None),
        "mass_kg": ("mass", float, False, None),
        "velocity_m_per_s": ("velocity", float, False, None),
        "period_days": ("period", float, False, None),
        "lyapunov_time_days": ("lyapunov_time", float, False, None),
        "temperature_K": ("temperature", float, False, None),
        "separation_m": ("separation", float, False, None),
        "gamma_per_s": ("gamma", float, False, None),
        "action_J_s": ("action", float, False, None),
    },
    "timescales": {
        "alpha": ("alpha", float, False, 0.5),
        "quoted_log_action": ("quoted_log_action", float, False, 100.0),
        "quoted_t_r_years": ("quoted_t_r_years", float, False, 20.0),
    },
}

RUN_BLOCKS = {"grid": True, "potential": True, "initial_state": True, "evolution": True, "environment": False, "outputs": False}
SWEEP_BLOCKS = dict(RUN_BLOCKS, sweep=True)
SCENARIO_BLOCKS = {"scenario": True, "timescales": False}

SWEEP_PARAMETERS = ("hbar", "D", "dt", "drive_amplitude")
