"""Run configuration: one INI file with a section per component, plus overrides."""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field

from .decode import DecodeConfig
from .errors import InputError
from .model import ModelConfig
from .salience import DEFAULT_PERCENTILES
from .train import TrainConfig

SECTIONS = {"model": ModelConfig, "train": TrainConfig, "decode": DecodeConfig}


@dataclass
class LabelConfig:
    percentiles: str = ",".join(str(p) for p in DEFAULT_PERCENTILES)
    thresholds: str = ""
    vocab_size: int = 50_000

    def percentile_list(self) -> list[float]:
        try:
            return [float(x) for x in self.percentiles.split(",") if x.strip()]
        except ValueError:
            raise InputError(f"bad percentiles {self.percentiles!r}") from None


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    decode: DecodeConfig = field(default_factory=DecodeConfig)
    labels: LabelConfig = field(default_factory=LabelConfig)
    seed: int = 0

    def with_seed(self, seed: int) -> "RunConfig":
        """Propagate one seed to training (shuffling, dropout) and initialization."""
        return dataclasses.replace(self, seed=seed, train=dataclasses.replace(self.train, seed=seed))


ALL_SECTIONS = dict(SECTIONS, labels=LabelConfig)


def coerce(value: str, default):
    """Parse ``value`` to the type of ``default``."""
    if isinstance(default, bool):
        low = value.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    return value


def field_defaults(cls) -> dict:
    out = {}
    for f in dataclasses.fields(cls):
        if f.default is not dataclasses.MISSING:
            out[f.name] = f.default
        elif f.default_factory is not dataclasses.MISSING:
            out[f.name] = f.default_factory()
    return out


def build(values: dict[str, dict[str, str]], seed: int | None = None) -> RunConfig:
    """Make a RunConfig from ``{section: {key: text}}``; unknown keys are errors."""
    parts = {}
    for name, cls in ALL_SECTIONS.items():
        defaults = field_defaults(cls)
        kwargs = {}
        for key, text in values.get(name, {}).items():
            if key not in defaults:
                raise InputError(f"unknown setting [{name}] {key}")
            try:
                kwargs[key] = coerce(text, defaults[key])
            except ValueError as exc:
                raise InputError(f"[{name}] {key}: {exc}") from None
        try:
            parts[name] = cls(**kwargs)
        except ValueError as exc:
            raise InputError(f"[{name}] {exc}") from None
    unknown = set(values) - set(ALL_SECTIONS) - {"run"}
    if unknown:
        raise InputError(f"unknown config sections: {', '.join(sorted(unknown))}")
    run = values.get("run", {})
    if seed is None:
        seed = int(run.get("seed", parts["train"].seed))
    return RunConfig(**parts).with_seed(seed)


def read_ini(path) -> dict[str, dict[str, str]]:
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise InputError(f"cannot read config {path}: {exc}") from None
    return {s: dict(parser[s]) for s in parser.sections()}


def write_ini(config: RunConfig, path) -> None:
    parser = configparser.ConfigParser()
    parser["run"] = {"seed": str(config.seed)}
    for name in ALL_SECTIONS:
        section = getattr(config, name)
        parser[name] = {k: str(v) for k, v in dataclasses.asdict(section).items()}
    with open(path, "w", encoding="utf-8") as fh:
        parser.write(fh)
