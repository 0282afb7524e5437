"""Configuration parsing: YAML files, --set overrides, sweeps and the validated Config"""

import copy
import hashlib
import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, Optional

import numpy as np
import yaml

from ..config import CONFIG_DIR_ENV, DEFAULT_PROFILE, DEFAULTS, OPEN_KEYS, SWEEP_KEYS
from .coherence import CoherenceParams, Protocol
from .errors import ConfigError, DomainError
from .photodynamics import RateParams
from .spin_model import ZfsParams, misaligned_direction
from .validators import ParameterValidator

logger = logging.getLogger("spincast.parsers")

DEFAULT_CONFIG_NAME = "default.yaml"


def parse_config_text(text: str, source: str = "<string>") -> Dict[str, Any]:
    """YAML mapping from config text; an empty document is an empty mapping"""
    try:
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        line = mark.line + 1 if mark is not None else None
        column = mark.column + 1 if mark is not None else None
        raise ConfigError(f"{source}: {exc.problem}", line=line, column=column) from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{source}: {exc}") from exc

    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping, got {type(data).__name__}")
    return data


def _is_number(value):
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _check_value(key, default, value):
    if key in OPEN_KEYS or key in SWEEP_KEYS:
        return value
    if default is None or value is None:
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"expected true or false, got {value!r}", key=key)
        return value
    if _is_number(default):
        if not _is_number(value):
            raise ConfigError(f"expected a number, got {value!r}", key=key)
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"expected a list, got {value!r}", key=key)
        return value
    if isinstance(default, str) and not isinstance(value, str):
        raise ConfigError(f"expected a string, got {value!r}", key=key)
    return value


def merge_config(base: Dict[str, Any], updates: Dict[str, Any], prefix: str = "") -> Dict[str, Any]:
    """Deep-merge updates into a copy of base; unknown keys are errors"""
    merged = copy.deepcopy(base)
    for name, value in updates.items():
        key = f"{prefix}{name}"
        if name not in merged:
            raise ConfigError("unknown key", key=key)
        default = merged[name]
        if isinstance(default, dict) and key not in SWEEP_KEYS:
            if not isinstance(value, dict):
                raise ConfigError(f"expected a mapping, got {value!r}", key=key)
            merged[name] = merge_config(default, value, prefix=f"{key}.")
        else:
            merged[name] = _check_value(key, default, value)
    return merged


def parse_override(text: str) -> Dict[str, Any]:
    """'section.key=value' as a nested mapping; the value follows YAML scalar rules"""
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like section.key=value")
    path, raw = text.split("=", 1)
    path = path.strip()
    if not path or any(not part for part in path.split(".")):
        raise ConfigError(f"override {text!r} has an empty key")
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse override value {raw!r}", key=path) from exc

    nested: Dict[str, Any] = {}
    node = nested
    parts = path.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value
    return nested


def expand_sweep(value, key: str, positive: bool = False) -> np.ndarray:
    """Sweep axis from {start, stop, step} (stop inclusive) or an explicit list"""
    if isinstance(value, dict):
        missing = {"start", "stop", "step"} - set(value)
        extra = set(value) - {"start", "stop", "step"}
        if missing or extra:
            raise ConfigError("sweep needs exactly start, stop and step", key=key)
        start, stop, step = (value[k] for k in ("start", "stop", "step"))
        if not all(_is_number(v) for v in (start, stop, step)):
            raise ConfigError("sweep start, stop and step must be numbers", key=key)
        if step <= 0 or stop < start:
            raise ConfigError("sweep needs step > 0 and stop >= start", key=key)
        count = int(np.floor((stop - start) / step + 1e-9)) + 1
        values = start + step * np.arange(count)
    elif isinstance(value, list):
        if not all(_is_number(v) for v in value):
            raise ConfigError("sweep list must contain only numbers", key=key)
        values = np.asarray(value, dtype=float)
    else:
        raise ConfigError(f"expected a sweep mapping or list, got {value!r}", key=key)

    if values.size == 0:
        return values
    errors, warnings = ParameterValidator.validate_sweep(values, key, positive=positive)
    if errors:
        raise ConfigError(errors[0], key=key)
    for warning in warnings:
        logger.warning(warning)
    return values


def canonical_json(raw: Dict[str, Any]) -> str:
    return json.dumps(raw, sort_keys=True, separators=(",", ":"), default=float)


def config_hash(raw: Dict[str, Any]) -> str:
    """sha256 of the canonical (key-sorted) JSON form"""
    return hashlib.sha256(canonical_json(raw).encode("utf-8")).hexdigest()


def _raise_first(errors, section):
    if errors:
        name = errors[0].split()[0]
        raise ConfigError(errors[0], key=f"{section}.{name}")


@dataclass(frozen=True)
class Config:
    """Validated configuration with the parameter objects built from it"""

    raw: Dict[str, Any]
    zfs: ZfsParams
    rates: RateParams
    coherence: CoherenceParams
    source: str = DEFAULT_PROFILE

    @property
    def hash(self):
        return config_hash(self.raw)

    def section(self, name: str) -> Dict[str, Any]:
        return self.raw[name]

    def get(self, dotted: str):
        node = self.raw
        for part in dotted.split("."):
            node = node[part]
        return node

    def sweep(self, dotted: str, positive: bool = False) -> np.ndarray:
        return expand_sweep(self.get(dotted), dotted, positive=positive)

    @property
    def field_direction(self) -> np.ndarray:
        """Unit lab-frame field direction including the configured misalignment"""
        section = self.raw["field"]
        direction = np.asarray(section["direction"], dtype=float)
        direction = direction / np.linalg.norm(direction)
        if section["misalignment_deg"] > 0:
            return misaligned_direction(direction, section["misalignment_deg"])
        return direction

    def field_magnitude(self, key: Optional[str] = None) -> float:
        """Field (mT) set at key, or field.magnitude when that is null"""
        value = self.get(key) if key else None
        if value is None:
            value = self.raw["field"]["magnitude"]
        return float(value)

    def field_vector(self, magnitude: Optional[float] = None) -> np.ndarray:
        """Lab-frame field (mT) along field_direction"""
        if magnitude is None:
            magnitude = self.field_magnitude()
        return float(magnitude) * self.field_direction

    @property
    def protocol(self) -> Protocol:
        section = self.raw["protocol"]
        return Protocol(section["kind"], int(section["n_pulses"]), section["transition"])


def build_config(raw: Dict[str, Any], source: str = DEFAULT_PROFILE) -> Config:
    """Validate a merged mapping and build the parameter objects"""
    zfs = raw["zfs"]
    errors, warnings = ParameterValidator.validate_zfs(zfs["D"], zfs["E"], zfs["gamma_e"])
    _raise_first(errors, "zfs")

    rates = raw["rates"]
    rate_errors, rate_warnings = ParameterValidator.validate_rates(
        rates["tau_e"],
        rates["k_isc"],
        rates["branching"],
        rates["tau_0"],
        rates["tau_plus"],
        rates["tau_minus"],
        rates["pump_coeff"],
        rates["detrap_coeff"],
    )
    _raise_first(rate_errors, "rates")

    coherence = raw["coherence"]
    coherence_errors, coherence_warnings = ParameterValidator.validate_coherence(
        coherence["t2_star"],
        coherence["gamma_phi_dyn"],
        coherence["rabi_decay"],
        coherence["pi_half_ns"],
        coherence["quadrature_nodes"],
    )
    _raise_first(coherence_errors, "coherence")

    field = raw["field"]
    direction = np.asarray(field["direction"], dtype=float)
    if direction.shape != (3,) or not np.all(np.isfinite(direction)) or np.linalg.norm(direction) == 0:
        raise ConfigError("direction must be a non-zero 3-vector", key="field.direction")
    if field["misalignment_deg"] < 0:
        raise ConfigError("misalignment_deg must be >= 0", key="field.misalignment_deg")
    if field["magnitude"] < 0:
        raise ConfigError("magnitude must be >= 0", key="field.magnitude")
    for key in ("odmr.field", "trpl.field"):
        section, name = key.split(".")
        value = raw[section][name]
        if value is not None and not (_is_number(value) and value >= 0):
            raise ConfigError(f"expected a field >= 0 (mT) or null, got {value!r}", key=key)
    if not isinstance(raw["workers"], int) or raw["workers"] < 1:
        raise ConfigError("workers must be a positive integer", key="workers")
    if not isinstance(raw["seed"], int):
        raise ConfigError("seed must be an integer", key="seed")

    for key in sorted(SWEEP_KEYS):
        section, name = key.split(".")
        expand_sweep(raw[section][name], key)

    for warning in warnings + rate_warnings + coherence_warnings:
        logger.warning(warning)

    try:
        config = Config(
            raw=raw,
            zfs=ZfsParams(zfs["D"], zfs["E"], zfs["gamma_e"]),
            rates=RateParams(
                tau_e=rates["tau_e"],
                k_isc=rates["k_isc"],
                branching=tuple(rates["branching"]),
                tau_0=rates["tau_0"],
                tau_plus=rates["tau_plus"],
                tau_minus=rates["tau_minus"],
                pump_coeff=rates["pump_coeff"],
                detrap_coeff=rates["detrap_coeff"],
            ),
            coherence=CoherenceParams(
                t2_star=coherence["t2_star"],
                gamma_phi_dyn=coherence["gamma_phi_dyn"],
                rabi_decay=coherence["rabi_decay"],
                pi_half_ns=coherence["pi_half_ns"],
                quadrature_nodes=coherence["quadrature_nodes"],
                ideal_pulses=coherence["ideal_pulses"],
            ),
            source=source,
        )
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc
    try:
        config.protocol
    except DomainError as exc:
        raise ConfigError(str(exc), key="protocol") from exc
    return config


def resolve_config_path(path: Optional[str], environ=None) -> Optional[Path]:
    """Locate a config file, falling back to the SPINCAST_CONFIG_DIR directory"""
    environ = os.environ if environ is None else environ
    config_dir = environ.get(CONFIG_DIR_ENV)

    if path is None:
        if config_dir:
            candidate = Path(config_dir) / DEFAULT_CONFIG_NAME
            if candidate.is_file():
                return candidate
        return None

    candidate = Path(path)
    if candidate.is_file():
        return candidate
    if config_dir and not candidate.is_absolute():
        fallback = Path(config_dir) / candidate
        if fallback.is_file():
            return fallback
    raise ConfigError(f"config file not found: {path}")


def load_config(
    path: Optional[str] = None,
    overrides: Iterable[str] = (),
    environ=None,
) -> Config:
    """Defaults profile, then the config file, then --set overrides, validated"""
    resolved = resolve_config_path(path, environ)
    raw = copy.deepcopy(DEFAULTS)
    source = DEFAULT_PROFILE
    if resolved is not None:
        text = resolved.read_text(encoding="utf-8")
        raw = merge_config(raw, parse_config_text(text, str(resolved)))
        source = str(resolved)
        logger.info("Loaded config from %s", resolved)

    for override in overrides:
        raw = merge_config(raw, parse_override(override))
        logger.debug("Applied override %s", override)

    return build_config(raw, source)


def config_from_mapping(updates: Optional[Dict[str, Any]] = None) -> Config:
    """Config from the defaults profile plus an in-memory mapping"""
    return build_config(merge_config(DEFAULTS, updates or {}))
