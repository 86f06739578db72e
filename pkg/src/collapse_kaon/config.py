"""Run configuration: strict JSON parsing with line-referenced errors."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import jsonschema

from .core import PhysicalParams
from .montecarlo import Grid, Scheme

_NUMBER = {"type": "number"}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "params": {
            "type": "object",
            "additionalProperties": False,
            "properties": {k: _NUMBER for k in
                           ("m_S", "m_L", "m_0", "Gamma_S", "Gamma_L", "lambda", "alpha", "p_i")},
        },
        "theta0": {"type": "array", "minItems": 1,
                   "items": {"type": "number", "minimum": 0, "maximum": 1}},
        "t_max": {"type": "number", "exclusiveMinimum": 0},
        "t_steps": {"type": "integer", "minimum": 1},
        "scheme": {"type": "string", "enum": [s.value for s in Scheme]},
        "trajectories": {"type": "integer", "minimum": 1},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "master_seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"G": {"type": "integer", "minimum": 2},
                           "L": {"type": ["number", "null"], "exclusiveMinimum": 0}},
        },
        "output": {"type": ["string", "null"]},
        "format": {"type": "string", "enum": ["csv", "json"]},
    },
}


class ConfigError(ValueError):
    """Invalid configuration; ``line`` points into the source file when known."""

    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        where = f"{source or '<config>'}:{line}: " if line else f"{source or '<config>'}: "
        super().__init__(where + message)


@dataclass(frozen=True)
class RunConfig:
    params: PhysicalParams = field(default_factory=PhysicalParams)
    theta0: tuple[float, ...] = (0.0, 0.5, 1.0)
    t_max: float = 1.0
    t_steps: int = 10
    scheme: Scheme = Scheme.MIDPOINT_UNITARY
    trajectories: int = 1000
    dt: float = 1e-3
    master_seed: int = 0
    grid: Grid = field(default_factory=Grid)
    output: str | None = None
    format: str = "csv"

    def __post_init__(self):
        if self.t_max <= 0 or self.t_steps < 1:
            raise ConfigError("t_max must be positive and t_steps at least 1")
        if any(not 0 <= th <= 1 for th in self.theta0):
            raise ConfigError("theta0 values must lie in [0, 1]")
        if self.trajectories < 1 or self.dt <= 0:
            raise ConfigError("trajectories must be >= 1 and dt positive")
        if self.format not in ("csv", "json"):
            raise ConfigError(f"unknown format {self.format!r}")
        spacing = self.t_max / self.t_steps
        if abs(spacing / self.dt - round(spacing / self.dt)) > 1e-9 * max(1.0, spacing / self.dt):
            raise ConfigError(f"t_max / t_steps = {spacing!r} is not a whole number of dt = {self.dt!r}")
        self.grid.points(self.params.alpha)

    @property
    def times(self) -> list[float]:
        return [self.t_max * k / self.t_steps for k in range(self.t_steps + 1)]

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "theta0": list(self.theta0),
            "t_max": self.t_max,
            "t_steps": self.t_steps,
            "scheme": self.scheme.value,
            "trajectories": self.trajectories,
            "dt": self.dt,
            "master_seed": self.master_seed,
            "grid": {"G": self.grid.n_points, "L": self.grid.extent},
            "output": self.output,
            "format": self.format,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def with_overrides(self, **changes) -> "RunConfig":
        changes = {k: v for k, v in changes.items() if v is not None}
        return replace(self, **changes) if changes else self


def _key_line(text: str, path) -> int | None:
    """Best-effort line number of the last key in ``path`` within ``text``."""
    keys = [p for p in path if isinstance(p, str)]
    if not keys:
        return None
    match = re.search(r'"%s"\s*:' % re.escape(keys[-1]), text)
    return text.count("\n", 0, match.start()) + 1 if match else None


def parse_config(text: str, source: str | None = None) -> RunConfig:
    try:
        data = json.loads(text, parse_constant=lambda c: (_ for _ in ()).throw(
            ValueError(f"non-finite constant {c}")))
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, exc.lineno, source) from None
    except ValueError as exc:
        raise ConfigError(str(exc), None, source) from None
    validator = jsonschema.Draft7Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = list(err.absolute_path)
        line = _key_line(text, path)
        if err.validator == "additionalProperties":
            extra = re.findall(r"'([^']+)'", err.message)
            line = _key_line(text, extra[-1:]) or line
        label = ".".join(str(p) for p in path) or "<root>"
        raise ConfigError(f"{label}: {err.message}", line, source)
    return config_from_dict(data, text, source)


def config_from_dict(data: dict, text: str | None = None, source: str | None = None) -> RunConfig:
    def fail(exc, key):
        line = _key_line(text, [key]) if text else None
        raise ConfigError(f"{key}: {exc}", line, source) from None

    try:
        params = PhysicalParams.from_dict(data.get("params", {}))
    except (TypeError, ValueError) as exc:
        fail(exc, _bad_param_key(str(exc)) or "params")
    grid_data = data.get("grid", {})
    kwargs = {
        "params": params,
        "grid": Grid(grid_data.get("G", 512), grid_data.get("L")),
    }
    for key in ("t_max", "t_steps", "trajectories", "dt", "master_seed", "output", "format"):
        if key in data:
            kwargs[key] = data[key]
    if "theta0" in data:
        kwargs["theta0"] = tuple(data["theta0"])
    if "scheme" in data:
        kwargs["scheme"] = Scheme.parse(data["scheme"])
    try:
        return RunConfig(**kwargs)
    except (ConfigError, ValueError) as exc:
        message = str(exc)
        key = next((k for k in ("dt", "t_max", "grid", "theta0", "format") if k in message), "t_max")
        fail(message.split(": ", 1)[-1] if isinstance(exc, ConfigError) else exc, key)


def _bad_param_key(message: str) -> str | None:
    for key in ("m_S", "m_L", "m_0", "Gamma_S", "Gamma_L", "lambda", "alpha", "p_i"):
        if message.startswith(key):
            return key
    return None


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    return parse_config(path.read_text(), str(path))
