"""Run configuration: INI file plus flag overrides.

One flat, human-editable file holds every module's settings in sections
([run], [generator], [loss], [train], [dataset], [eval]).  Unknown sections
or keys are rejected so a typo cannot silently fall back to a default.
Command-line flags override file values; the single seed under [run] (or
--seed) feeds every seeded component.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path

from .dataset import (
    DEFAULT_CHANGE_THRESHOLD,
    DEFAULT_SHOT_THRESHOLD,
    DEFAULT_STRIDE,
    DEFAULT_WIDTH,
    LineArtParams,
)
from .errors import ConfigError
from .generator import GeneratorConfig
from .losses import LossConfig
from .training import TrainConfig

__all__ = ["RunConfig", "DatasetOptions", "EvalOptions", "load_config"]


@dataclass(frozen=True)
class DatasetOptions:
    stride: int = DEFAULT_STRIDE
    width: int = DEFAULT_WIDTH
    shot_threshold: float = DEFAULT_SHOT_THRESHOLD
    lineart: LineArtParams = field(default_factory=LineArtParams)


@dataclass(frozen=True)
class EvalOptions:
    strides: tuple[int, ...] = (1, 5, 10)
    change_threshold: float = DEFAULT_CHANGE_THRESHOLD
    warmup: int = 1
    repeats: int = 5


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    dataset: DatasetOptions = field(default_factory=DatasetOptions)
    eval: EvalOptions = field(default_factory=EvalOptions)

    def with_seed(self, seed: int) -> "RunConfig":
        """Propagate one seed to every seeded component."""
        generator = replace(self.generator, seed=seed)
        train = replace(self.train, seed=seed, generator=generator, loss=self.loss)
        return replace(self, seed=seed, generator=generator, train=train)


def _parse_bool(raw: str, key: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {raw!r}")


def _parse_int_tuple(raw: str, key: str) -> tuple[int, ...]:
    try:
        return tuple(int(part.strip()) for part in raw.split(",") if part.strip())
    except ValueError as exc:
        raise ConfigError(f"{key}: expected comma-separated integers, got {raw!r}") from exc


def _number(cast, raw: str, key: str):
    try:
        return cast(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: expected a number, got {raw!r}") from exc


def _opt_number(cast, raw: str, key: str):
    if not raw.strip():
        return None
    return _number(cast, raw, key)


# per-section: key -> function(raw, qualified_key) -> parsed value
_SCHEMA = {
    "run": {
        "seed": lambda r, k: _number(int, r, k),
    },
    "generator": {
        "head_widths": _parse_int_tuple,
        "sketch_widths": _parse_int_tuple,
        "sketch_dilations": _parse_int_tuple,
        "ru_blocks": lambda r, k: _number(int, r, k),
        "cardinality": lambda r, k: _number(int, r, k),
        "warp_levels": _parse_int_tuple,
        "ablation_no_warp": _parse_bool,
        "matching_provider": lambda r, k: r.strip(),
        "warp_tile": lambda r, k: _number(int, r, k),
        "temperature": lambda r, k: _number(float, r, k),
    },
    "loss": {
        "lambda_color": lambda r, k: _number(float, r, k),
        "lambda_perceptual": lambda r, k: _number(float, r, k),
        "depths": _parse_int_tuple,
        "provider": lambda r, k: r.strip(),
    },
    "train": {
        "learning_rate": lambda r, k: _number(float, r, k),
        "beta1": lambda r, k: _number(float, r, k),
        "beta2": lambda r, k: _number(float, r, k),
        "batch_size": lambda r, k: _number(int, r, k),
        "epochs": lambda r, k: _number(int, r, k),
        "resolution": lambda r, k: _number(int, r, k),
        "checkpoint_interval": lambda r, k: _number(int, r, k),
        "max_iterations": lambda r, k: _opt_number(int, r, k),
        "target_train_psnr": lambda r, k: _opt_number(float, r, k),
        "psnr_check_interval": lambda r, k: _number(int, r, k),
    },
    "dataset": {
        "stride": lambda r, k: _number(int, r, k),
        "width": lambda r, k: _number(int, r, k),
        "shot_threshold": lambda r, k: _number(float, r, k),
        "lineart_sigma": lambda r, k: _number(float, r, k),
        "lineart_k": lambda r, k: _number(float, r, k),
        "lineart_gain": lambda r, k: _number(float, r, k),
        "lineart_threshold": lambda r, k: _number(float, r, k),
        "lineart_softness": lambda r, k: _number(float, r, k),
    },
    "eval": {
        "strides": _parse_int_tuple,
        "change_threshold": lambda r, k: _number(float, r, k),
        "warmup": lambda r, k: _number(int, r, k),
        "repeats": lambda r, k: _number(int, r, k),
    },
}


def _parse_sections(path: Path) -> dict[str, dict]:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    parsed: dict[str, dict] = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"{path}: unknown section [{section}]")
        schema = _SCHEMA[section]
        values = {}
        for key, raw in parser.items(section):
            if key not in schema:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
            values[key] = schema[key](raw, f"[{section}] {key}")
        parsed[section] = values
    return parsed


def load_config(path=None) -> RunConfig:
    """RunConfig from an INI file (or pure defaults when path is None)."""
    if path is None:
        return RunConfig()
    sections = _parse_sections(Path(path))
    lineart_kwargs = {}
    ds_values = dict(sections.get("dataset", {}))
    for ini_key, field_name in (
        ("lineart_sigma", "sigma"),
        ("lineart_k", "k"),
        ("lineart_gain", "gain"),
        ("lineart_threshold", "threshold"),
        ("lineart_softness", "softness"),
    ):
        if ini_key in ds_values:
            lineart_kwargs[field_name] = ds_values.pop(ini_key)
    generator = GeneratorConfig(**sections.get("generator", {}))
    loss = LossConfig(**sections.get("loss", {}))
    train = TrainConfig(**sections.get("train", {}), loss=loss, generator=generator)
    cfg = RunConfig(
        seed=sections.get("run", {}).get("seed", 0),
        generator=generator,
        loss=loss,
        train=train,
        dataset=DatasetOptions(**ds_values, lineart=LineArtParams(**lineart_kwargs)),
        eval=EvalOptions(**sections.get("eval", {})),
    )
    return cfg.with_seed(cfg.seed)
