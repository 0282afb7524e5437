"""Recipe registry: build each experiment from a Config and wrap it as a ResultFile"""

import logging
from pathlib import Path
from typing import Callable, Dict, Optional

import numpy as np

from .config import RECIPES
from .core import sequencer
from .core.errors import ConfigError, DomainError
from .core.fitting import evaluate, fit, get_model
from .core.parsers import Config
from .core.photodynamics import lifetime_table
from .utils.results import ResultFile, from_experiment, read_result, write_fit_json, write_result

logger = logging.getLogger("spincast.recipes")


def _unit(vector, key):
    v = np.asarray(vector, dtype=float)
    if v.shape != (3,) or np.linalg.norm(v) == 0:
        raise ConfigError("must be a non-zero 3-vector", key=key)
    return v / np.linalg.norm(v)


def _laser(config: Config):
    laser = config.section("laser")
    return {"power": laser["power"], "pulse": laser["pulse"], "window": laser["window"]}


def _odmr_settings(config: Config):
    odmr = config.section("odmr")
    return {
        "B_lab": config.field_vector(config.field_magnitude("odmr.field")),
        "mw_pulse_ns": odmr["mw_pulse_ns"],
        "rabi_rate": odmr["rabi_rate"],
        "broadening": odmr["broadening"],
        "ideal": odmr["ideal"],
        **_laser(config),
    }


def run_odmr(config: Config):
    odmr = config.section("odmr")
    frequencies = frequency_axis(odmr["freq_start"], odmr["freq_stop"], odmr["freq_step"])
    return sequencer.recipe_odmr_spectrum(
        frequencies,
        config.zfs,
        config.rates,
        t_a=odmr["t_a"],
        t_b=odmr["t_b"],
        workers=config.get("workers"),
        **_odmr_settings(config),
    )


def frequency_axis(start, stop, step):
    """Inclusive frequency grid"""
    if step <= 0 or stop < start:
        raise ConfigError("frequency sweep needs freq_step > 0 and freq_stop >= freq_start", key="odmr.freq_step")
    count = int(np.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(count)


def _trpl_field(config: Config):
    trpl = config.section("trpl")
    return config.field_magnitude("trpl.field") * _unit(trpl["direction"], "trpl.direction")


def run_trpl(config: Config):
    trpl = config.section("trpl")
    return sequencer.recipe_trpl_differential(
        config.sweep("trpl.delays", positive=True),
        config.zfs,
        config.rates,
        B_on=_trpl_field(config),
        complete_mixing=trpl["complete_mixing"],
        workers=config.get("workers"),
        **_laser(config),
    )


def run_contrast_map(config: Config):
    return sequencer.recipe_contrast_map(
        config.sweep("contrast_map.t_a", positive=True),
        config.sweep("contrast_map.t_b", positive=True),
        config.zfs,
        config.rates,
        transition=config.get("contrast_map.transition"),
        workers=config.get("workers"),
        **_odmr_settings(config),
    )


def run_field_split(config: Config):
    return sequencer.recipe_field_split_spectrum(
        config.sweep("field_split.fields"),
        config.zfs,
        direction=_unit(config.get("field_split.direction"), "field_split.direction"),
    )


def run_lac(config: Config):
    zfs = config.zfs
    if abs(zfs.E) >= abs(zfs.D):
        raise ConfigError(
            f"|E| = {abs(zfs.E)} must be below |D| = {abs(zfs.D)} for a level anticrossing", key="zfs.E"
        )
    lac = config.section("lac")
    return sequencer.recipe_lac_sweep(
        config.sweep("lac.fields"),
        zfs,
        config.rates,
        misalignment_deg=lac["misalignment_deg"],
        delay=lac["delay"],
        axis=_unit(lac["axis"], "lac.axis"),
        toward=lac["toward"],
        workers=config.get("workers"),
        **_laser(config),
    )


def run_rabi(config: Config):
    rabi = config.section("rabi")
    powers = config.sweep("rabi.powers")
    return sequencer.recipe_rabi(
        config.sweep("rabi.durations"),
        config.rates,
        config.coherence,
        powers=powers if powers.size else None,
        reference_power=rabi["reference_power"],
        decay=rabi["decay"],
    )


def run_coherence(config: Config):
    return sequencer.recipe_coherence(
        config.protocol, config.rates, config.coherence, config.sweep("protocol.free_times")
    )


def run_lifetime(config: Config):
    lifetime = config.section("lifetime")
    return sequencer.recipe_lifetime_differential(
        config.sweep("lifetime.delays"),
        config.zfs,
        config.rates,
        config.coherence,
        transition=lifetime["transition"],
        prep_wait=lifetime["prep_wait"],
        rotation=lifetime["rotation"],
        workers=config.get("workers"),
        **_laser(config),
    )


def run_power_scan(config: Config):
    scan = config.section("power_scan")
    return sequencer.recipe_power_scan(
        config.sweep("power_scan.powers", positive=True),
        config.zfs,
        config.rates,
        pulse=scan["pulse"],
        period=scan["period"],
        workers=config.get("workers"),
    )


def run_temperature(config: Config):
    section = config.section("temperature")
    try:
        table = lifetime_table(section["temperatures"], section["tau_0"], section["tau_1"])
    except DomainError as exc:
        raise ConfigError(str(exc), key="temperature") from exc
    return sequencer.recipe_temperature(
        table,
        config.zfs,
        config.rates,
        config.sweep("temperature.delays", positive=True),
        B_on=_trpl_field(config),
        power=section["power"],
        activation_energy=section["activation_energy"],
        prefactor=section["prefactor"],
        complete_mixing=config.get("trpl.complete_mixing"),
    )


def _initial_guess(kind, x, y):
    """Starting point for the models with a usable data-driven guess"""
    if kind == "monoexp":
        below = np.nonzero(np.abs(y - y[-1]) < np.abs(y[0] - y[-1]) / np.e)[0]
        tau = x[below[0]] - x[0] if below.size else np.ptp(x) / 3.0
        return [y[0] - y[-1], max(tau, 1e-3), y[-1]]
    if kind == "biexp_diff":
        peak = x[int(np.argmax(np.abs(y)))]
        return [2.0 * y[int(np.argmax(np.abs(y)))], 3.0 * peak, 0.4 * peak]
    if kind == "lorentzian":
        top = int(np.argmax(y))
        return [y[top] - np.median(y), x[top], 0.05 * np.ptp(x), np.median(y)]
    return None


def run_fit(config: Config):
    """Fit one column of an existing result file"""
    section = config.section("fit")
    if not section["input"]:
        raise ConfigError("input result file is required for the fit recipe", key="fit.input")
    source = read_result(section["input"])
    columns = source.columns
    x_name = section["x_column"] or columns[0]
    y_name = section["y_column"] or columns[1]
    for key, name in (("fit.x_column", x_name), ("fit.y_column", y_name)):
        if name not in columns:
            raise ConfigError(f"column {name!r} not in {columns}", key=key)

    x, y = source.column(x_name), source.column(y_name)
    sigma = None
    if section["sigma_column"]:
        if section["sigma_column"] not in columns:
            raise ConfigError(f"column {section['sigma_column']!r} not in {columns}", key="fit.sigma_column")
        sigma = source.column(section["sigma_column"])

    try:
        model = get_model(section["model"])
    except DomainError as exc:
        raise ConfigError(str(exc), key="fit.model") from exc
    init = section["init"]
    if isinstance(init, dict):
        missing = [n for n in model.param_names if n not in init]
        if missing:
            raise ConfigError(f"missing initial values for {missing}", key="fit.init")
        init = [init[n] for n in model.param_names]
    if init is None:
        init = _initial_guess(model.kind, x, y)
        if init is None:
            raise ConfigError(f"initial parameters are required for {model.kind}", key="fit.init")
    if len(init) != model.n_params:
        raise ConfigError(f"{model.kind} takes {model.n_params} parameters, got {len(init)}", key="fit.init")

    result = fit(model, x, y, init=init, sigma=sigma)
    logger.info(
        "Fit %s to %s: converged=%s after %d iterations", model.kind, y_name, result.converged, result.iterations
    )
    return sequencer.ExperimentResult(
        "fit",
        x_name,
        source.units[x_name],
        x,
        y_name,
        source.units[y_name],
        y,
        extra={"model": (source.units[y_name], evaluate(model, x, result.values))},
        summary={
            "input": str(section["input"]),
            "model": model.kind,
            "params": dict(zip(model.param_names, result.values.tolist())),
        },
        fits={model.kind: result},
    )


RECIPE_BUILDERS: Dict[str, Callable[[Config], "sequencer.ExperimentResult"]] = {
    "odmr": run_odmr,
    "trpl-diff": run_trpl,
    "contrast-map": run_contrast_map,
    "field-split": run_field_split,
    "lac-sweep": run_lac,
    "rabi": run_rabi,
    "coherence": run_coherence,
    "lifetime-diff": run_lifetime,
    "fit": run_fit,
    "power-scan": run_power_scan,
    "temperature": run_temperature,
}


def run_experiment(name: str, config: Config):
    """ExperimentResult for a named recipe"""
    if name not in RECIPE_BUILDERS:
        raise ConfigError(f"unknown recipe {name!r}; expected one of {RECIPES}")
    logger.info("Running recipe %s (config %s)", name, config.hash[:12])
    return RECIPE_BUILDERS[name](config)


def run_recipe(name: str, config: Config, out: Optional[str] = None) -> ResultFile:
    """Run a recipe and, when an output path is given or configured, write it"""
    experiment = run_experiment(name, config)
    result = from_experiment(experiment, name, config.hash, config.source)

    path = out or config.get("output.path")
    if path:
        write_result(result, path)
        logger.info("Wrote %s", path)
        if config.get("output.fit_json"):
            for model, fitted in experiment.fits.items():
                fit_path = Path(path).with_suffix(f".{model}.json")
                write_fit_json(fitted, fit_path, recipe=name, config_hash=config.hash)
                logger.info("Wrote %s", fit_path)
    return result
