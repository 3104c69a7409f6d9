"""JSON run configuration with full defaults and strict key checking."""
from __future__ import annotations

import copy
import json
from pathlib import Path

from .numkit import SgdConfig
from .prototype import DbscanConfig, WindowConfig
from .segment import SegmentConfig
from .synth import SynthSpec
from .translate import ModelConfig


class ConfigError(ValueError):
    """Invalid or unknown configuration value."""


ABLATION_KEYS = ("mir_micro", "mir_recurrent", "mar")
MAR_KEYS = {"beta_h": "beta_h", "iterations": "mar_iterations"}

DEFAULTS: dict[str, dict] = {
    "segment": {"theta_r": None, "alpha_min": 3, "pixel_thresh": 0.1, "gap_merge": 2},
    "window": {"window": 8, "stride": 2},
    "encoder": {"out_dim": 64, "hidden": 64, "seed": 0},
    "dbscan": {"eps": "adaptive", "min_pts": 4},
    "mar": {"beta_h": 8.0, "iterations": 1},
    "model": {
        k: v
        for k, v in vars(ModelConfig()).items()
        if k not in ABLATION_KEYS and k not in MAR_KEYS.values()
    },
    "sgd": {"lr0": 0.01, "momentum": 0.0},
    "train": {"epochs": 200, "seed": 0},
    "synth": {**{k: v for k, v in vars(SynthSpec()).items()}, "velocity": [1.0, 2.0], "n_samples": 20},
    "ablation": {"mir_micro": True, "mir_recurrent": True, "mar": True},
}

# keys whose default is None accept these types
NULLABLE = {("segment", "theta_r"): (int, float), ("synth", "frames"): (int,)}


def _check_type(section: str, key: str, default, value):
    if (section, key) in NULLABLE:
        ok = value is None or (isinstance(value, NULLABLE[section, key]) and not isinstance(value, bool))
    elif (section, key) == ("dbscan", "eps"):
        ok = value == "adaptive" or (isinstance(value, (int, float)) and not isinstance(value, bool))
    elif isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif isinstance(default, list):
        ok = isinstance(value, list) and len(value) == len(default)
    else:
        ok = isinstance(value, type(default))
    if not ok:
        raise ConfigError(f"{section}.{key}: bad value {value!r}")
    if isinstance(default, float) and isinstance(value, int):
        return float(value)
    return value


class RunConfig:
    """Nested dict of settings; build typed configs with the accessor methods."""

    def __init__(self, data: dict | None = None):
        self.data = copy.deepcopy(DEFAULTS)
        self.update({} if data is None else data)

    def update(self, data: dict) -> None:
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        for section, values in data.items():
            if section not in DEFAULTS:
                raise ConfigError(f"unknown config section {section!r}")
            if not isinstance(values, dict):
                raise ConfigError(f"section {section!r} must be an object")
            for key, value in values.items():
                self.set(section, key, value)

    def set(self, section: str, key: str, value) -> None:
        if section not in DEFAULTS:
            raise ConfigError(f"unknown config section {section!r}")
        if key not in DEFAULTS[section]:
            raise ConfigError(f"unknown config key {section}.{key}")
        self.data[section][key] = _check_type(section, key, DEFAULTS[section][key], value)

    def override(self, assignment: str) -> None:
        """Apply ``section.key=value``; the value is parsed as JSON when possible."""
        path, sep, raw = assignment.partition("=")
        section, dot, key = path.partition(".")
        if not sep or not dot:
            raise ConfigError(f"override {assignment!r} is not section.key=value")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        self.set(section, key, value)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        return cls(data)

    @classmethod
    def from_path(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        return cls.from_json(text)

    def to_json(self) -> str:
        return json.dumps(self.data, indent=2, sort_keys=True)

    # -- typed views ---------------------------------------------------------

    def _build(self, factory, **kw):
        try:
            return factory(**kw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    def segment(self) -> SegmentConfig:
        return self._build(SegmentConfig, **self.data["segment"])

    def window(self) -> WindowConfig:
        return self._build(WindowConfig, **self.data["window"])

    def dbscan(self) -> DbscanConfig:
        return self._build(DbscanConfig, **self.data["dbscan"])

    def synth(self) -> SynthSpec:
        kw = dict(self.data["synth"])
        kw.pop("n_samples")
        kw["velocity"] = tuple(kw["velocity"])
        return self._build(SynthSpec, **kw)

    def model(self) -> ModelConfig:
        kw = dict(self.data["model"])
        kw.update(self.data["ablation"])
        kw.update({MAR_KEYS[k]: v for k, v in self.data["mar"].items()})
        return self._build(ModelConfig, **kw)

    def sgd(self) -> SgdConfig:
        return self._build(SgdConfig, lr0=self.data["sgd"]["lr0"], momentum=self.data["sgd"]["momentum"])

    @property
    def n_samples(self) -> int:
        n = self.data["synth"]["n_samples"]
        if n < 1:
            raise ConfigError("synth.n_samples must be >= 1")
        return n

    @property
    def epochs(self) -> int:
        n = self.data["train"]["epochs"]
        if n < 1:
            raise ConfigError("train.epochs must be >= 1")
        return n
