"""Experiment configuration: an INI file with one section per module.

Keys a section does not reserve are passed to the registry factory as
parameters; values are parsed as JSON when possible (``1.0``, ``[1, 2]``,
``true``) and kept as strings otherwise.  Overrides use ``section.key=value``.

Example::

    [functional]
    name = product
    m = 2

    [model]
    kind = spectral
    family = hermite_gaussian
    n = 1
    m = 2
    length_scale = 1.0
"""

from __future__ import annotations

import configparser
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from . import covariance, functionals, spectral
from .covariance import CovarianceModel
from .errors import ConfigError
from .hermite import Functional
from .simulate import GridSpec
from .spectral import SpectralModel

DEFAULTS: dict[str, dict[str, Any]] = {
    "functional": {"name": None, "m": None},
    "model": {"kind": None, "family": None, "n": 1, "decay_radius": None},
    "chaos": {"q_max": 6, "quadrature_order": 64},
    "variance": {"s_values": [], "R": None},
    "grid": {"s": 200.0, "N": 2048},
    "seeds": {"base": 0, "replicates": 1000},
    "simulate": {"lag_steps": [0, 1, 2, 4, 8], "save_fields": None},
    "covcheck": {"d": None, "R": None},
    "verify": {
        "variance_band": 5.0, "variance_rel_tol": None, "ks_level": 0.01,
        "min_replicates": 500, "fdd_se": 3.0, "fdd_pairs": [[0.25, 1.0], [0.5, 1.0], [0.25, 0.5]],
        "p": 3.0, "levels": 3, "spread": 3.0,
    },
    "output": {"dir": "out"},
}
_RESERVED = {sec: set(keys) for sec, keys in DEFAULTS.items()}
_INT_KEYS = {("functional", "m"), ("model", "n"), ("chaos", "q_max"), ("chaos", "quadrature_order"),
             ("grid", "N"), ("seeds", "base"), ("seeds", "replicates"), ("simulate", "save_fields"),
             ("covcheck", "d"), ("verify", "min_replicates"), ("verify", "levels")}
_FLOAT_KEYS = {("model", "decay_radius"), ("variance", "R"), ("grid", "s"), ("covcheck", "R"),
               ("verify", "variance_band"), ("verify", "variance_rel_tol"), ("verify", "ks_level"),
               ("verify", "fdd_se"), ("verify", "p"), ("verify", "spread")}
_PARAM_SECTIONS = {"functional", "model"}


def _parse(text: str) -> Any:
    text = text.strip()
    if text.lower() in {"none", "null", ""}:
        return None
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


@dataclass
class ExperimentConfig:
    """Resolved configuration; ``values`` holds every section with defaults filled in."""

    values: dict[str, dict[str, Any]]
    source: str = "<defaults>"
    params: dict[str, dict[str, Any]] = field(default_factory=dict)

    def get(self, section: str, key: str):
        return self.values[section][key]

    def _require(self, section: str, key: str, kind=None):
        v = self.values[section].get(key)
        if v is None:
            raise ConfigError(f"{section}.{key}", "is required")
        if kind is not None:
            try:
                v = kind(v)
            except (TypeError, ValueError):
                raise ConfigError(f"{section}.{key}", f"expected {kind.__name__}, got {v!r}") from None
        return v

    def echo(self) -> dict:
        """All settings including defaults, for provenance in reports."""
        out = {sec: dict(vals) for sec, vals in self.values.items()}
        for sec, extra in self.params.items():
            out[sec].update(extra)
        out["output"] = {}
        return out

    # builders
    def functional(self) -> Functional:
        name = self._require("functional", "name", str)
        m = self._require("functional", "m", int)
        try:
            return functionals.build(name, m, **self.params.get("functional", {}))
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError("functional", str(exc)) from None

    def spectral_model(self) -> SpectralModel | None:
        if self._require("model", "kind", str) != "spectral":
            return None
        family = self._require("model", "family", str)
        if family not in spectral.REGISTRY:
            raise ConfigError("model.family", f"unknown spectral family {family!r}; "
                                              f"choose from {sorted(spectral.REGISTRY)}")
        try:
            return spectral.REGISTRY[family](n=self._require("model", "n", int),
                                             **self.params.get("model", {}))
        except (TypeError, ValueError) as exc:
            raise ConfigError("model", str(exc)) from None

    def covariance_model(self) -> CovarianceModel:
        kind = self._require("model", "kind", str)
        radius = self.values["model"]["decay_radius"]
        spec = self.spectral_model()
        if spec is not None:
            return covariance.from_spectral(spec, float(radius) if radius else 12.0)
        if kind not in covariance.REGISTRY:
            raise ConfigError("model.kind", f"unknown model kind {kind!r}; choose from "
                                            f"{sorted(covariance.REGISTRY) + ['spectral']}")
        kwargs = dict(self.params.get("model", {}))
        if radius is not None and kind != "triangular":
            kwargs["decay_radius"] = float(radius)
        try:
            return covariance.REGISTRY[kind](n=self._require("model", "n", int), **kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError("model", str(exc)) from None

    def grid(self) -> GridSpec:
        try:
            return GridSpec(self._require("model", "n", int), self._require("grid", "s", float),
                            self._require("grid", "N", int))
        except ValueError as exc:
            raise ConfigError("grid", str(exc)) from None

    def seeds(self) -> list[int]:
        base = self._require("seeds", "base", int)
        count = self._require("seeds", "replicates", int)
        if not 0 <= base < 2**64:
            raise ConfigError("seeds.base", "must be an unsigned 64-bit integer")
        if count < 1:
            raise ConfigError("seeds.replicates", "must be positive")
        return [(base + i) % 2**64 for i in range(count)]

    def validate(self, needs_grid: bool = False) -> None:
        """Cross-field checks: channel counts agree and path boxes fit the grid."""
        g = self.functional()
        model = self.covariance_model()
        if g.m != model.m:
            raise ConfigError("functional.m", f"functional has m={g.m} but the model has m={model.m}")
        if needs_grid:
            if self.spectral_model() is None:
                raise ConfigError("model.kind", "simulation needs kind = spectral")
            self.grid()
            pairs = self.values["verify"]["fdd_pairs"]
            if any(max(p) > 1.0 for p in pairs):
                raise ConfigError("verify.fdd_pairs", "y values must lie in [0, 1] so s*y^(1/n) <= s")


def load_config(path: str | Path | None, overrides: Sequence[str] = ()) -> ExperimentConfig:
    values = {sec: dict(keys) for sec, keys in DEFAULTS.items()}
    params: dict[str, dict[str, Any]] = {sec: {} for sec in _PARAM_SECTIONS}
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    source = "<defaults>"
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(str(path), "config file not found")
        try:
            parser.read(path)
        except configparser.Error as exc:
            raise ConfigError(str(path), f"malformed config: {exc}") from None
        source = str(path)

    def put(section, key, raw):
        if section not in values:
            raise ConfigError(section, f"unknown section; expected one of {sorted(values)}")
        value = _parse(raw)
        if value is not None and (section, key) in _INT_KEYS:
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{section}.{key}", f"expected an integer, got {raw.strip()!r}")
        if value is not None and (section, key) in _FLOAT_KEYS:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{section}.{key}", f"expected a number, got {raw.strip()!r}")
        if key in _RESERVED[section]:
            values[section][key] = value
        elif section in _PARAM_SECTIONS:
            params[section][key] = value
        else:
            raise ConfigError(f"{section}.{key}", "unknown key")

    for section in parser.sections():
        for key, raw in parser.items(section):
            put(section, key, raw)
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(item, "override must look like section.key=value")
        lhs, raw = item.split("=", 1)
        section, key = lhs.strip().split(".", 1)
        put(section, key.strip(), raw)
    for sec, key in (("verify", "ks_level"), ("verify", "spread"), ("verify", "p")):
        v = values[sec][key]
        if not isinstance(v, (int, float)) or not math.isfinite(v) or v <= 0:
            raise ConfigError(f"{sec}.{key}", f"must be a positive number, got {v!r}")
    return ExperimentConfig(values, source, params)


__all__ = ["DEFAULTS", "ExperimentConfig", "load_config"]
