"""Configuration constants and settings for SpinCast"""

# Result file schema; bump on any column or header change
SCHEMA_VERSION = 1

# Boltzmann constant in meV/K
K_B_MEV_PER_K = 0.08617

# Profile name of the bundled defaults
DEFAULT_PROFILE = "gcenter-defaults"

# Environment variable naming the default config directory
CONFIG_DIR_ENV = "SPINCAST_CONFIG_DIR"

# Recipes addressable by name
RECIPES = [
    "odmr",
    "trpl-diff",
    "contrast-map",
    "field-split",
    "lac-sweep",
    "rabi",
    "coherence",
    "lifetime-diff",
    "fit",
    "power-scan",
    "temperature",
]

# Recipes with stored golden files
HEADLINE_RECIPES = ["odmr", "trpl-diff", "contrast-map", "field-split", "lac-sweep"]

# Unit vocabulary
UNITS = {
    "frequency": "MHz",
    "field": "mT",
    "time": "us",
    "pulse": "ns",
    "power": "uW",
    "temperature": "K",
    "energy": "meV",
    "rate": "1/us",
    "fraction": "fraction",
    "angle": "deg",
    "signal": "arb",
}

# Display hints for fraction-valued columns
DISPLAY_HINTS = {
    "contrast": "percent",
    "delta_s": "percent",
    "pl_change": "percent",
    "overshoot": "percent",
}

# gcenter-defaults profile
DEFAULTS = {
    "zfs": {
        "D": -1210.0,
        "E": 520.0,
        "gamma_e": -28.0,
    },
    "rates": {
        "tau_e": 0.005,
        "k_isc": 6.0,
        "branching": [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        "tau_0": 1.9,
        "tau_plus": 54.0,
        "tau_minus": 42.0,
        "pump_coeff": 5.0,
        "detrap_coeff": 0.25,
    },
    "coherence": {
        "t2_star": 0.027,
        "gamma_phi_dyn": 0.2038,
        "rabi_decay": 0.230,
        "pi_half_ns": 7.2,
        "quadrature_nodes": 201,
        "ideal_pulses": False,
    },
    "field": {
        "magnitude": 50.0,
        "direction": [0.0, 0.0, 1.0],
        "misalignment_deg": 0.0,
    },
    "laser": {
        "power": 20.0,
        "pulse": 1.0,
        "window": 0.2,
    },
    "odmr": {
        "freq_start": 500.0,
        "freq_stop": 1900.0,
        "freq_step": 5.0,
        "mw_pulse_ns": 120.0,
        "rabi_rate": None,
        "broadening": 20.0,
        "ideal": False,
        "t_a": 5.0,
        "t_b": 5.0,
        "field": 0.0,  # null follows field.magnitude
    },
    "trpl": {
        "delays": {"start": 0.5, "stop": 80.0, "step": 0.5},
        "field": None,  # null follows field.magnitude
        "direction": [0.0, 0.0, 1.0],
        "complete_mixing": False,
    },
    "contrast_map": {
        "t_a": [0.5, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 10.0, 15.0, 20.0],
        "t_b": [0.5, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 10.0, 15.0, 20.0],
        "transition": "plus",
    },
    "field_split": {
        "fields": {"start": 0.0, "stop": 60.0, "step": 2.0},
        "direction": [1.0, 1.0, 1.0],
    },
    "lac": {
        "fields": {"start": 0.0, "stop": 60.0, "step": 0.1},
        "misalignment_deg": 1.5,
        "delay": 10.0,
        "axis": [1.0, 1.0, 1.0],
        "toward": [1.0, 1.0, -2.0],
    },
    "rabi": {
        "durations": {"start": 0.0, "stop": 1.0, "step": 0.002},
        "powers": [],
        "reference_power": 1.0,
        "decay": True,
    },
    "protocol": {
        "kind": "echo",
        "n_pulses": 1,
        "free_times": {"start": 0.0, "stop": 8.0, "step": 0.1},
        "transition": "plus",
    },
    "lifetime": {
        "transition": "plus",
        "delays": {"start": 0.0, "stop": 150.0, "step": 1.0},
        "prep_wait": 5.0,
        "rotation": "pi",
    },
    "temperature": {
        "temperatures": [4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0, 18.0, 20.0, 22.0, 24.0],
        "tau_0": [2.5, 2.4, 2.3, 2.1, 1.9, 1.7, 1.5, 1.3, 1.1, 0.95, 0.83],
        "tau_1": [55.0, 52.8, 50.6, 46.2, 41.8, 37.4, 33.0, 28.6, 24.2, 20.9, 18.3],
        "activation_energy": 8.7,
        "prefactor": 2.0e4,
        "delays": {"start": 0.5, "stop": 100.0, "step": 1.0},
        "power": 200.0,
    },
    "power_scan": {
        "powers": [20.0, 50.0, 100.0, 200.0, 500.0, 1000.0, 2000.0],
        "pulse": 1.0,
        "period": 15.0,
    },
    "fit": {
        "input": None,
        "model": "biexp_diff",
        "x_column": None,
        "y_column": None,
        "sigma_column": None,
        "init": None,
    },
    "output": {
        "path": None,
        "fit_json": False,
    },
    "seed": 12345,
    "workers": 1,
}

# Keys whose value is an open mapping or free-form list
OPEN_KEYS = {"fit.init"}

# Keys holding a sweep: either {start, stop, step} or an explicit list
SWEEP_KEYS = {
    "trpl.delays",
    "field_split.fields",
    "lac.fields",
    "rabi.durations",
    "protocol.free_times",
    "lifetime.delays",
    "temperature.delays",
    "contrast_map.t_a",
    "contrast_map.t_b",
    "rabi.powers",
    "power_scan.powers",
}
