from __future__ import annotations

import json
import os
from dataclasses import fields
from pathlib import Path
from typing import Any, Mapping

from poisson_expcov.shared.errors import io_error, validation_error
from poisson_expcov.shared.interfaces import ModelConfig

MODEL_CONFIG_FIELD_NAMES = tuple(field.name for field in fields(ModelConfig))
ENV_PREFIX = "POISSON_EXPCOV_"

_INT_FIELDS = frozenset(
    {"n_chains", "gr_check_interval", "max_burn_sweeps", "thin", "posterior_size", "seed", "threads"}
)
_STR_FIELDS = frozenset({"loglik_mode"})
_GRID_FIELDS = frozenset({"phi_grid"})

# short env names next to the POISSON_EXPCOV_<FIELD> spelling
_ENV_ALIASES: dict[str, tuple[str, ...]] = {
    "n_chains": ("CHAINS",),
    "posterior_size": ("SAMPLES",),
}


def _env(*names: str, default: str | None = None) -> str | None:
    for name in names:
        value = os.environ.get(name)
        if value is not None and str(value).strip():
            return str(value).strip()
    return default


def _env_float(*names: str, default: float) -> float:
    raw = _env(*names)
    if raw is None:
        return float(default)
    try:
        return float(raw)
    except (TypeError, ValueError):
        return float(default)


def _env_int(*names: str, default: int) -> int:
    raw = _env(*names)
    if raw is None:
        return int(default)
    try:
        return int(raw)
    except (TypeError, ValueError):
        return int(default)


def _env_float_csv(*names: str, default: tuple[float, ...]) -> tuple[float, ...]:
    raw = _env(*names)
    if raw is None:
        return default
    try:
        return parse_float_csv(raw) or default
    except ValueError:
        return default


def parse_float_csv(raw: str) -> tuple[float, ...]:
    return tuple(float(item.strip()) for item in str(raw).split(",") if item.strip())


def _env_names(name: str) -> tuple[str, ...]:
    return (ENV_PREFIX + name.upper(),) + tuple(ENV_PREFIX + alias for alias in _ENV_ALIASES.get(name, ()))


def build_config_values_from_env() -> dict[str, Any]:
    defaults = ModelConfig()
    values: dict[str, Any] = {}
    for name in MODEL_CONFIG_FIELD_NAMES:
        default = getattr(defaults, name)
        env_names = _env_names(name)
        if name in _GRID_FIELDS:
            values[name] = _env_float_csv(*env_names, default=default)
        elif name in _INT_FIELDS:
            values[name] = _env_int(*env_names, default=default)
        elif name in _STR_FIELDS:
            values[name] = _env(*env_names, default=default)
        else:
            values[name] = _env_float(*env_names, default=default)
    return values


def _coerce(name: str, value: Any) -> Any:
    if name in _GRID_FIELDS:
        items = parse_float_csv(value) if isinstance(value, str) else tuple(float(item) for item in value)
        if not items:
            raise ValueError("empty grid")
        return items
    if name in _INT_FIELDS:
        if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
            raise ValueError(f"expected an integer, got {value!r}")
        return int(value)
    if name in _STR_FIELDS:
        if not isinstance(value, str):
            raise ValueError(f"expected a string, got {value!r}")
        return value
    if isinstance(value, bool):
        raise ValueError(f"expected a number, got {value!r}")
    return float(value)


def load_config_file(path: Path) -> dict[str, Any]:
    """Flat JSON object of ModelConfig fields; unknown keys and bad values are rejected."""
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise io_error(f"cannot read config file {path}: {exc}", path=str(path)) from exc
    except json.JSONDecodeError as exc:
        raise validation_error(f"config file {path} is not valid JSON: {exc}", path=str(path)) from exc
    if not isinstance(payload, dict):
        raise validation_error(f"config file {path} must hold a JSON object", path=str(path))
    unknown = sorted(set(payload) - set(MODEL_CONFIG_FIELD_NAMES))
    if unknown:
        raise validation_error(f"unknown config keys: {unknown}", path=str(path), keys=unknown)
    values: dict[str, Any] = {}
    for name, value in payload.items():
        try:
            values[name] = _coerce(name, value)
        except (TypeError, ValueError) as exc:
            raise validation_error(f"config key {name!r}: {exc}", path=str(path), key=name) from exc
    return values


def build_model_config(
    *,
    config_path: Path | None = None,
    overrides: Mapping[str, Any] | None = None,
) -> ModelConfig:
    """Resolve every field as CLI override > JSON config file > environment > default."""
    values = build_config_values_from_env()
    if config_path is not None:
        values.update(load_config_file(config_path))
    for name, value in (overrides or {}).items():
        if value is None:
            continue
        if name not in MODEL_CONFIG_FIELD_NAMES:
            raise validation_error(f"unknown config override {name!r}")
        try:
            values[name] = _coerce(name, value)
        except (TypeError, ValueError) as exc:
            raise validation_error(f"option {name!r}: {exc}", key=name) from exc
    return ModelConfig(**values).require_valid()
