"""Run configuration: flat dotted keys, documented defaults, strict checking.

A run is configured by a TOML file whose tables flatten to dotted keys
(``train.batch_size``), overridden by command-line flags.  Every key has a
default in :data:`DEFAULTS`; a key outside that table is a hard error, as
is a value whose type disagrees with the default.  The fully resolved
mapping is echoed as ``config.json`` into every output directory so any
artifact can be traced back to the exact settings that produced it.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - version-dependent import
    import tomli as tomllib

from fontfusion.losses import LossWeights
from fontfusion.trainer import TrainConfig

DEFAULTS: dict[str, object] = {
    # root stream; all component seeds fork from this
    "seed": 0,
    # real-font corpus preparation
    "data.fonts_dir": "",
    "data.charset": "",  # inline string of characters
    "data.charset_file": "",  # file of characters; wins over data.charset
    "data.size": 128,
    "data.font_holdout": 0.2,
    "data.char_holdout": 0.2,
    "data.train_chars": 0,  # explicit split counts; both set -> they win
    "data.test_chars": 0,
    "data.default_category": "printed",  # when the folder layout has no category
    "data.workers": 1,
    # synthetic corpus
    "synth.n_fonts": 4,
    "synth.n_chars": 16,
    "synth.size": 32,
    "synth.holdout_fonts": 0,
    "synth.holdout_chars": 0,
    # training
    "train.data": "",  # corpus directory (written by prepare/synth)
    "train.resume": "",  # checkpoint to continue from
    "train.image_size": 128,
    "train.style_dim": 64,
    "train.channel_base": 2048,
    "train.channel_max": 64,
    "train.batch_size": 8,
    "train.total_steps": 2000,
    "train.lr": 2e-3,
    "train.adam_beta1": 0.0,
    "train.adam_beta2": 0.99,
    "train.adam_eps": 1e-8,
    "train.lambda_adv": 1.0,
    "train.lambda_imgrecon": 1.0,
    "train.lambda_feat": 1.0,
    "train.gamma_r1": 10.0,
    "train.r1_interval": 16,
    "train.ema_decay": 0.999,
    "train.mixing_prob": 1.0,
    "train.log_every": 50,
    "train.checkpoint_every": 0,
    # inference
    "mix.checkpoint": "",
    "mix.content": "",
    "mix.style": "",
    "mix.inject_index": 6,
    "mix.use_ema": True,
    "reconstruct.checkpoint": "",
    "reconstruct.input": "",
    "reconstruct.use_ema": True,
    "sample.checkpoint": "",
    "sample.n": 8,
    "sample.use_ema": True,
    # grid rendering
    "grid.inputs": "",  # directory of PNGs, tiled row-major
    "grid.columns": 3,
    "grid.labels": "content,style,mixed",  # comma-separated; "" for none
}


class ConfigKeyError(ValueError):
    """A key outside the documented namespace was supplied."""


class ConfigValueError(ValueError):
    """A value's type disagrees with its documented default."""


def _flatten(table: Mapping, prefix: str = "") -> dict[str, object]:
    flat: dict[str, object] = {}
    for key, value in table.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, Mapping):
            flat.update(_flatten(value, f"{dotted}."))
        else:
            flat[dotted] = value
    return flat


def _coerce(key: str, value: object) -> object:
    if key not in DEFAULTS:
        raise ConfigKeyError(f"unknown config key {key!r}")
    default = DEFAULTS[key]
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
    elif isinstance(default, int):
        if isinstance(value, int) and not isinstance(value, bool):
            return value
    elif isinstance(default, float):
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
    elif isinstance(default, str):
        if isinstance(value, str):
            return value
    raise ConfigValueError(
        f"config key {key!r} expects {type(default).__name__}, got {value!r}"
    )


def parse_override(text: str) -> tuple[str, object]:
    """Parse one ``key=value`` flag; the value uses TOML literal syntax,
    with bare words falling back to strings."""
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise ConfigValueError(f"override must look like key=value, got {text!r}")
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    if isinstance(value, Mapping) or isinstance(value, list):
        raise ConfigValueError(f"override {key!r} must be a scalar, got {raw!r}")
    return key, value


@dataclass(frozen=True)
class RunConfig:
    """A fully resolved flat configuration (defaults + file + flags)."""

    values: Mapping[str, object]

    def __getitem__(self, key: str) -> object:
        if key not in DEFAULTS:
            raise ConfigKeyError(f"unknown config key {key!r}")
        return self.values[key]

    def to_dict(self) -> dict[str, object]:
        return dict(sorted(self.values.items()))

    def train_config(self) -> TrainConfig:
        weights = LossWeights(
            lambda_adv=self["train.lambda_adv"],
            lambda_imgrecon=self["train.lambda_imgrecon"],
            lambda_feat=self["train.lambda_feat"],
            gamma_r1=self["train.gamma_r1"],
            r1_interval=self["train.r1_interval"],
        )
        return TrainConfig(
            image_size=self["train.image_size"],
            style_dim=self["train.style_dim"],
            channel_base=self["train.channel_base"],
            channel_max=self["train.channel_max"],
            batch_size=self["train.batch_size"],
            total_steps=self["train.total_steps"],
            lr=self["train.lr"],
            adam_beta1=self["train.adam_beta1"],
            adam_beta2=self["train.adam_beta2"],
            adam_eps=self["train.adam_eps"],
            weights=weights,
            ema_decay=self["train.ema_decay"],
            mixing_prob=self["train.mixing_prob"],
            seed=self["seed"],
            log_every=self["train.log_every"],
            checkpoint_every=self["train.checkpoint_every"],
        )


def load_config(
    path: str | Path | None = None, overrides: Mapping[str, object] | None = None
) -> RunConfig:
    """Resolve defaults <- config file <- overrides, validating every key."""
    values = dict(DEFAULTS)
    if path:
        with open(path, "rb") as fh:
            try:
                table = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigValueError(f"{path}: not valid TOML ({exc})") from exc
        for key, value in _flatten(table).items():
            values[key] = _coerce(key, value)
    for key, value in (overrides or {}).items():
        values[key] = _coerce(key, value)
    return RunConfig(values=values)


def echo_config(out_dir: str | Path, config: RunConfig, tool_version: str) -> Path:
    """Write the resolved configuration next to a command's outputs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "config.json"
    payload = {"tool_version": tool_version, "config": config.to_dict()}
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    return path
