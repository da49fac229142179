"""Configuration helpers for nematic electrolyte runs."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
import math
import os
from pathlib import Path
from typing import Any, Dict, Mapping

from dotenv import load_dotenv

from .fields import Grid

ENV_PREFIX = "NEMATIC_"
KEY_ALIASES = {"N": "points_per_axis", "lambda": "barrier_lambda", "eps": "epsilon"}
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


class ConfigError(ValueError):
    """Raised when a configuration value is missing, unknown or out of range."""


@dataclass(frozen=True)
class SimConfig:
    """Resolved run configuration; defaults are the desk-scale reference run."""

    dim: int = 2
    points_per_axis: int = 64
    dt: float = 1e-3
    t_end: float = 2.0
    epsilon: float = 0.1
    barrier_lambda: float = 1e-3
    c_bar: float = 2.0
    alpha: tuple[float, ...] = (0.0, 0.0, 1.0, 3.0, 0.0, 0.5)
    preset: str = "charged-blob"
    seed: int = 42
    output_every: int = 100
    checkpoint_every: int = 0
    poisson_tol: float = 1e-10
    poisson_max_iter: int = 500
    tol_mp: float = 1e-8
    grad_phi_exponent: float = 4.0
    p0: float = 1.5
    energy_identity_mode: bool = False
    h2_monitor_mode: bool = False
    certificate_samples: int = 1_000_000
    workers: int = 1

    def __post_init__(self) -> None:
        if self.dim not in (2, 3):
            raise ConfigError(f"dim must be 2 or 3, got {self.dim}.")
        n = self.points_per_axis
        if n < 8 or n & (n - 1):
            raise ConfigError(f"points_per_axis must be a power of two >= 8, got {n}.")
        if not (self.dt > 0.0 and math.isfinite(self.dt)):
            raise ConfigError(f"dt must be positive, got {self.dt}.")
        if not self.t_end >= self.dt:
            raise ConfigError(f"t_end must be at least dt, got {self.t_end}.")
        if not self.epsilon >= 0.0:
            raise ConfigError(f"epsilon must be non-negative, got {self.epsilon}.")
        if not 0.0 < self.barrier_lambda <= 0.5:
            raise ConfigError(f"barrier_lambda must lie in (0, 0.5], got {self.barrier_lambda}.")
        if not self.c_bar > 0.0:
            raise ConfigError(f"c_bar must be positive, got {self.c_bar}.")
        if len(self.alpha) != 6:
            raise ConfigError(f"alpha needs six values, got {len(self.alpha)}.")
        if self.output_every < 0 or self.checkpoint_every < 0:
            raise ConfigError("output_every and checkpoint_every must be non-negative.")
        if not (self.poisson_tol > 0.0 and self.poisson_max_iter > 0):
            raise ConfigError("poisson_tol and poisson_max_iter must be positive.")
        if not (self.grad_phi_exponent >= 1.0 and self.p0 >= 1.0):
            raise ConfigError("grad_phi_exponent and p0 must be at least 1.")
        if self.energy_identity_mode and (self.alpha[1] != 0.0 or self.alpha[2] != 1.0):
            raise ConfigError("energy_identity_mode requires alpha_2 = 0 and alpha_3 = 1.")

    @property
    def steps(self) -> int:
        return max(1, round(self.t_end / self.dt))

    def grid(self) -> Grid:
        return Grid(dim=self.dim, points_per_axis=self.points_per_axis, workers=self.workers)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["alpha"] = list(self.alpha)
        return data

    @classmethod
    def from_dict(cls, values: Mapping[str, Any]) -> "SimConfig":
        return cls.from_mapping(values)

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any]) -> "SimConfig":
        defaults = cls()
        known = {f.name for f in fields(cls)}
        resolved: Dict[str, Any] = {}
        for raw_key, value in values.items():
            key = KEY_ALIASES.get(raw_key, raw_key)
            if key not in known:
                raise ConfigError(f"Unknown configuration key {raw_key!r}.")
            resolved[key] = _coerce(key, value, getattr(defaults, key))
        return replace(defaults, **resolved)


def _coerce(key: str, value: Any, default: Any) -> Any:
    if not isinstance(value, str):
        if key == "alpha":
            return tuple(float(item) for item in value)
        return type(default)(value)
    text = value.strip()
    try:
        if key == "alpha":
            return tuple(float(item) for item in text.replace(",", " ").split())
        if isinstance(default, bool):
            lowered = text.lower()
            if lowered in _TRUE:
                return True
            if lowered in _FALSE:
                return False
            raise ValueError(text)
        if isinstance(default, int):
            number = float(text)
            if not number.is_integer():
                raise ValueError(text)
            return int(number)
        if isinstance(default, float):
            return float(text)
    except ValueError as exc:
        raise ConfigError(f"Invalid value for {key}: {value!r}.") from exc
    return text


def parse_config_text(text: str) -> Dict[str, str]:
    """Parse ``key = value`` lines; blank lines and ``#`` comments are ignored."""

    data: Dict[str, str] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"Line {number}: expected key = value, got {line.strip()!r}.")
        key, value = stripped.split("=", 1)
        data[key.strip()] = value.strip()
    return data


def _canonical_keys(values: Mapping[str, str]) -> Dict[str, str]:
    return {KEY_ALIASES.get(key, key): value for key, value in values.items()}


def load_env() -> None:
    """Load a .env file if present; values already in the environment win."""

    env_path = Path(os.environ.get(f"{ENV_PREFIX}ENV", ".env"))
    if env_path.exists():
        load_dotenv(env_path, override=False)


def _environment_values(environ: Mapping[str, str]) -> Dict[str, str]:
    """Read NEMATIC_<KEY> variables; a full field name beats its short alias."""

    names = {alias.upper(): name for alias, name in KEY_ALIASES.items()}
    names.update({field.name.upper(): field.name for field in fields(SimConfig)})
    data: Dict[str, str] = {}
    for suffix, name in names.items():
        env_key = f"{ENV_PREFIX}{suffix}"
        if env_key in environ:
            data[name] = environ[env_key]
    return data


def parse_overrides(pairs: list[str] | None) -> Dict[str, str]:
    data: Dict[str, str] = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigError(f"Override must look like key=value, got {pair!r}.")
        key, value = pair.split("=", 1)
        data[key.strip()] = value.strip()
    return data


def load_config(
    path: Path | None = None,
    overrides: Mapping[str, str] | None = None,
    environ: Mapping[str, str] | None = None,
) -> SimConfig:
    """Resolve defaults < config file < environment < explicit overrides."""

    values: Dict[str, Any] = {}
    if path is not None:
        if not path.exists():
            raise ConfigError(f"Config file {path} does not exist.")
        values.update(_canonical_keys(parse_config_text(path.read_text(encoding="utf-8"))))
    if environ is None:
        load_env()
        environ = os.environ
    values.update(_environment_values(environ))
    values.update(_canonical_keys(overrides or {}))
    return SimConfig.from_mapping(values)
