"""Run configuration: JSON schema, defaults and validation."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction

from .constants import FracOrder, Normalization
from .experiments import LadderSpec

__all__ = ["ConfigError", "ExperimentConfig", "RunConfig", "parse_config", "parse_number", "config_to_dict"]

_KEYS = ("s", "h", "ladder", "alpha", "eps", "lambda", "norm", "force")


class ConfigError(ValueError):
    """Invalid or incomplete configuration (CLI exit code 2)."""


def parse_number(text, name: str) -> float:
    """Float from a number or a string such as ``"0.0625"`` or ``"1/16"``."""
    if isinstance(text, bool):
        raise ConfigError(f"field {name!r} must be a number, got {text!r}")
    if isinstance(text, (int, float)):
        return float(text)
    try:
        return float(Fraction(str(text).strip()))
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"field {name!r} must be a number, got {text!r}") from None


@dataclass(frozen=True)
class ExperimentConfig:
    s: float = 0.75
    h: float = 1.0 / 16
    ladder: tuple = (4.0, 8.0, 16.0)
    alpha: float = 0.5
    eps: float | None = None
    lam: float | None = None
    norm: str = "standard"
    force: str = "one"

    def validate(self) -> "ExperimentConfig":
        try:
            FracOrder(self.s)
        except ValueError:
            raise ConfigError(f"field 's' must lie in (0, 1), got {self.s!r}") from None
        if not self.h > 0:
            raise ConfigError(f"field 'h' must be positive, got {self.h!r}")
        if not self.ladder or any(not v > 0 for v in self.ladder):
            raise ConfigError("field 'ladder' must be a non-empty list of positive numbers")
        if list(self.ladder) != sorted(set(self.ladder)):
            raise ConfigError("field 'ladder' must be strictly increasing")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"field 'alpha' must lie in (0, 1), got {self.alpha!r}")
        if self.eps is not None and not 0.0 < self.eps <= 2.0:
            raise ConfigError(f"field 'eps' must lie in (0, 2], got {self.eps!r}")
        if self.lam is not None and not self.lam > 0:
            raise ConfigError(f"field 'lambda' must be positive, got {self.lam!r}")
        try:
            Normalization.parse(self.norm)
        except ValueError as exc:
            raise ConfigError(f"field 'norm': {exc}") from None
        if self.force not in ("one", "slab") and not self.force.startswith("profile:"):
            raise ConfigError(f"field 'force' must be 'one', 'slab' or 'profile:<path>', got {self.force!r}")
        if self.force.startswith("profile:"):
            path = self.force[len("profile:"):]
            if not os.path.isfile(path):
                raise ConfigError(f"field 'force': profile file {path!r} does not exist")
        return self

    def ladder_spec(self, **overrides) -> LadderSpec:
        spec = LadderSpec(self.s, self.h, tuple(self.ladder), self.alpha, self.force, self.eps, self.lam,
                          Normalization.parse(self.norm))
        return replace(spec, **overrides) if overrides else spec


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    params: ExperimentConfig = field(default_factory=ExperimentConfig)
    out_dir: str = "."


def config_to_dict(cfg: ExperimentConfig) -> dict:
    d = asdict(cfg)
    d["ladder"] = list(d["ladder"])
    d["lambda"] = d.pop("lam")
    return {k: d[k] for k in _KEYS}


def _from_mapping(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = sorted(set(data) - set(_KEYS))
    if unknown:
        raise ConfigError(f"unknown configuration field(s): {', '.join(unknown)}")
    kw = {}
    for key in ("s", "h", "alpha"):
        if key in data:
            kw[key] = parse_number(data[key], key)
    for key, attr in (("eps", "eps"), ("lambda", "lam")):
        if data.get(key) is not None:
            kw[attr] = parse_number(data[key], key)
    if "ladder" in data:
        lad = data["ladder"]
        if not isinstance(lad, list):
            raise ConfigError("field 'ladder' must be a list")
        kw["ladder"] = tuple(parse_number(v, "ladder") for v in lad)
    for key in ("norm", "force"):
        if key in data:
            if not isinstance(data[key], str):
                raise ConfigError(f"field {key!r} must be a string")
            kw[key] = data[key]
    return ExperimentConfig(**kw)


def parse_config(subcommand: str, path=None, overrides: dict | None = None, out_dir: str = ".",
                 check_geometry: bool = True, far_support: bool = False) -> RunConfig:
    """Build and validate a :class:`RunConfig`.

    Values come from the defaults, then the JSON file at ``path``, then
    ``overrides`` (same keys as the file, ``None`` entries skipped).  Geometry
    problems raise :class:`~fraccyl.grid.GeometryError`; everything else
    :class:`ConfigError`.
    """
    data = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"configuration file {path!r} does not exist") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"configuration file {path!r} is not valid JSON: {exc}") from None
        except OSError as exc:
            raise ConfigError(f"configuration file {path!r} cannot be read: {exc}") from None
    if overrides:
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        data = {**data, **{k: v for k, v in overrides.items() if v is not None}}
    cfg = _from_mapping(data).validate()
    if check_geometry:
        cfg.ladder_spec().check_geometry(far_support=far_support)
    return RunConfig(subcommand, cfg, out_dir)
