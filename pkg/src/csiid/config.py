"""Flat ``section.key=value`` run configuration: defaults < file < flags."""

from __future__ import annotations

import functools
from dataclasses import fields
from pathlib import Path

import numpy as np

from .dataset import DatasetConfig
from .ingest import FormatConfig
from .model import TransformerConfig
from .preprocess import ButterworthConfig, HampelConfig, PreprocessConfig
from .synth import SynthConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


def _synth_defaults():
    out = {}
    for f in fields(SynthConfig):
        if f.name != "seed":
            out[f"synth.{f.name}"] = f.default
    return out


DEFAULTS = {
    "seed": 0,
    "ingest.iq_order": "real_first",
    "ingest.header": False,
    "ingest.max_malformed_frac": 0.1,
    "ingest.sample_rate_hz": 100.0,
    "reduce.temporal": True,
    "hampel.window": 15,
    "hampel.beta": 3.0,
    "hampel.alpha": 0.8,
    "butterworth.order": 5,
    "butterworth.cutoff_hz": 10.0,
    "butterworth.zero_phase": False,
    "window.length": 100,
    "window.overlap": 0.5,
    "window.on_reduced": True,
    "split.train": 0.7,
    "split.val": 0.1,
    "split.test": 0.2,
    "dataset.normalize": False,
    "dataset.shuffle": False,
    "model.type": "transformer",
    "model.d_model": 32,
    "model.heads": 4,
    "model.d_ff": 64,
    "model.dropout": 0.2,
    "model.encoder_layers": 1,
    "model.positional_encoding": True,
    "model.input_dropout": False,
    "model.cnn_channels": 32,
    "attn.scale_full_dmodel": False,
    "train.lr": 0.001,
    "train.batch": 32,
    "train.max_epochs": 50,
    "train.patience": 10,
    "train.beta1": 0.9,
    "train.beta2": 0.999,
    "train.eps": 1e-8,
    "train.dtype": "float32",
    **_synth_defaults(),
    "heatmap.start_s": 0.0,
    "heatmap.span_s": 2.0,
    "heatmap.stage": "raw",
    "heatmap.pgm": True,
    "heatmap.png": True,
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def coerce(key, value):
    if key not in DEFAULTS:
        raise ConfigError(f"unknown configuration key {key!r}")
    default = DEFAULTS[key]
    if not isinstance(value, str):
        return type(default)(value)
    text = value.strip()
    try:
        if isinstance(default, bool):
            if text.lower() in _TRUE:
                return True
            if text.lower() in _FALSE:
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r} as {type(default).__name__}") from None
    return text


def read_config_file(path):
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    out = {}
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def parse_overrides(args):
    """Turn ``--key=value`` / ``--key value`` tokens into a dict."""
    out = {}
    i = 0
    while i < len(args):
        tok = args[i]
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}")
        body = tok[2:]
        if "=" in body:
            key, _, value = body.partition("=")
        elif i + 1 < len(args) and not args[i + 1].startswith("--"):
            key, value = body, args[i + 1]
            i += 1
        else:
            raise ConfigError(f"flag {tok} is missing a value")
        out[key] = value
        i += 1
    return out


def _typed(method):
    @functools.wraps(method)
    def wrapper(self, *args, **kwargs):
        try:
            return method(self, *args, **kwargs)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid configuration: {exc}") from exc

    return wrapper


class RunConfig:
    def __init__(self, values=None):
        self.explicit = dict(values or {})
        self.values = dict(DEFAULTS)
        for key, value in (values or {}).items():
            self.values[key] = coerce(key, value)

    @classmethod
    def load(cls, path=None, overrides=None):
        merged = read_config_file(path) if path else {}
        merged.update(overrides or {})
        return cls(merged)

    def updated(self, values):
        out = RunConfig(self.values)
        for key, value in values.items():
            out.values[key] = coerce(key, value)
        return out

    def __getitem__(self, key):
        return self.values[key]

    @property
    def seed(self):
        return self.values["seed"]

    def dump(self):
        return "".join(f"{key}={_fmt(self.values[key])}\n" for key in sorted(self.values))

    def section(self, prefix):
        n = len(prefix) + 1
        return {k[n:]: v for k, v in self.values.items() if k.startswith(prefix + ".")}

    @_typed
    def format_config(self):
        s = self.section("ingest")
        return FormatConfig(
            iq_order=s["iq_order"],
            header=s["header"],
            max_malformed_frac=s["max_malformed_frac"],
            sample_rate_hz=s["sample_rate_hz"],
        )

    @_typed
    def preprocess_config(self):
        return PreprocessConfig(
            hampel=HampelConfig(**self.section("hampel")),
            butterworth=ButterworthConfig(**self.section("butterworth")),
            reduce_temporal=self["reduce.temporal"],
        )

    @_typed
    def dataset_config(self):
        return DatasetConfig(
            window_len=self["window.length"],
            overlap=self["window.overlap"],
            on_reduced=self["window.on_reduced"],
            fractions=(self["split.train"], self["split.val"], self["split.test"]),
            normalize=self["dataset.normalize"],
            shuffle=self["dataset.shuffle"],
            seed=self.seed,
        )

    @_typed
    def model_config(self, window, subcarriers, classes):
        s = self.section("model")
        s.pop("type")
        return TransformerConfig(
            window=window,
            subcarriers=subcarriers,
            classes=classes,
            scale_full_dmodel=self["attn.scale_full_dmodel"],
            **s,
        )

    @_typed
    def train_config(self):
        s = self.section("train")
        s.pop("dtype")
        return TrainConfig(seed=self.seed, **s)

    @property
    def dtype(self):
        name = self["train.dtype"]
        if name not in ("float32", "float64"):
            raise ConfigError(f"train.dtype must be float32 or float64, got {name!r}")
        return np.dtype(name)

    @_typed
    def synth_config(self):
        return SynthConfig(seed=self.seed, **self.section("synth"))


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)
