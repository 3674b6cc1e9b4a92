"""Declarative run configuration: one strict JSON file drives the pipeline.

Defaults reproduce the published full-scale setup (512px, Adam 2e-4 with
beta1 0.5, batch size 1, 150 epochs, FID every 10 epochs). Unknown keys are
rejected rather than ignored so typos fail fast. Relative paths resolve
against the config file's directory.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .networks import DiscriminatorConfig, GeneratorConfig, default_generator_config
from .training import TrainConfig

SEED_ENV_VAR = "ARTEXTEND_SEED"
WEIGHTS_ENV_VAR = "ARTEXTEND_EXTRACTOR_WEIGHTS"


class ConfigError(ValueError):
    pass


@dataclass
class CorpusSection:
    dir: str = ""
    manifest: str | None = None  # default: <dir>/manifest.json
    min_side: int | None = None  # default: resolution
    resolution: int = 512
    split: float = 0.0


@dataclass
class ArchitectureSection:
    norm: str = "instance"
    dropout_rate: float = 0.5
    dropout_blocks: int = 3
    conditional_discriminator: bool = True
    down_filters: list[int] | None = None  # default: schedule for the resolution
    up_filters: list[int] | None = None


@dataclass
class TrainerSection:
    lambda_l1: float = 100.0
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    batch_size: int = 1
    epochs: int = 150
    fid_interval: int = 10
    fid_sample_size: int = 64
    checkpoint_interval: int = 10


@dataclass
class FidSection:
    extractor: str = "inception-pool3"
    extractor_weights: str | None = None


@dataclass
class PathsSection:
    checkpoint_dir: str = "checkpoints"
    metrics_dir: str = "metrics"
    output_dir: str = "outputs"


@dataclass
class RunConfig:
    seed: int = 0
    corpus: CorpusSection = field(default_factory=CorpusSection)
    architecture: ArchitectureSection = field(default_factory=ArchitectureSection)
    trainer: TrainerSection = field(default_factory=TrainerSection)
    fid: FidSection = field(default_factory=FidSection)
    paths: PathsSection = field(default_factory=PathsSection)
    base_dir: Path = field(default_factory=Path)

    def resolve(self, value: str) -> Path:
        return (self.base_dir / value).resolve()

    @property
    def manifest_path(self) -> Path:
        if self.corpus.manifest:
            return self.resolve(self.corpus.manifest)
        return self.resolve(self.corpus.dir) / "manifest.json"

    def generator_config(self) -> GeneratorConfig:
        arch = self.architecture
        overrides = dict(
            norm=arch.norm,
            dropout_rate=arch.dropout_rate,
            dropout_blocks=arch.dropout_blocks,
        )
        if arch.down_filters is None and arch.up_filters is None:
            return default_generator_config(self.corpus.resolution, **overrides)
        if arch.down_filters is None or arch.up_filters is None:
            raise ConfigError("architecture.down_filters and up_filters must be given together")
        return GeneratorConfig(
            resolution=self.corpus.resolution,
            down_filters=tuple(arch.down_filters),
            up_filters=tuple(arch.up_filters),
            **overrides,
        )

    def discriminator_config(self) -> DiscriminatorConfig:
        return DiscriminatorConfig(
            conditional=self.architecture.conditional_discriminator,
            norm=self.architecture.norm,
        )

    def train_config(self) -> TrainConfig:
        t = self.trainer
        return TrainConfig(
            lambda_l1=t.lambda_l1,
            lr=t.lr,
            beta1=t.beta1,
            beta2=t.beta2,
            batch_size=t.batch_size,
            epochs=t.epochs,
            seed=self.seed,
            fid_interval=t.fid_interval,
            fid_sample_size=t.fid_sample_size,
            checkpoint_interval=t.checkpoint_interval,
        )


_SECTIONS = {
    "corpus": CorpusSection,
    "architecture": ArchitectureSection,
    "trainer": TrainerSection,
    "fid": FidSection,
    "paths": PathsSection,
}

_KEY_DOCS = {
    "seed": "global RNG seed (env ARTEXTEND_SEED overrides)",
    "corpus.dir": "image directory to scan/train on",
    "corpus.manifest": "manifest path (default: <corpus.dir>/manifest.json)",
    "corpus.min_side": "reject images smaller than this (default: resolution)",
    "corpus.resolution": "working square size S, power of two in 64..512",
    "corpus.split": "held-out fraction used for FID sampling (0 reuses training files)",
    "architecture.norm": "instance | batch | none",
    "architecture.dropout_rate": "decoder dropout rate (the model's noise source)",
    "architecture.dropout_blocks": "how many leading decoder blocks get dropout",
    "architecture.conditional_discriminator": "concat condition image into D input",
    "architecture.down_filters": "explicit encoder filter counts (with up_filters)",
    "architecture.up_filters": "explicit decoder filter counts (with down_filters)",
    "trainer.lambda_l1": "weight on the reconstruction term",
    "trainer.lr": "Adam learning rate for both networks",
    "trainer.beta1": "Adam beta1",
    "trainer.beta2": "Adam beta2",
    "trainer.batch_size": "must be 1",
    "trainer.epochs": "total training epochs",
    "trainer.fid_interval": "evaluate FID every this many epochs",
    "trainer.fid_sample_size": "pairs sampled per FID evaluation",
    "trainer.checkpoint_interval": "checkpoint every this many epochs",
    "fid.extractor": "pixel-projection | inception-pool3",
    "fid.extractor_weights": "inception weights path (env ARTEXTEND_EXTRACTOR_WEIGHTS overrides)",
    "paths.checkpoint_dir": "where checkpoints are written",
    "paths.metrics_dir": "where losses.csv and fid.csv are written",
    "paths.output_dir": "where extend writes images",
}


def config_key_help() -> str:
    lines = ["config keys (JSON, flag --set key=value overrides the file):"]
    for key, doc in _KEY_DOCS.items():
        lines.append(f"  {key:42s} {doc}")
    return "\n".join(lines)


def _build_section(cls, data: dict, prefix: str):
    known = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"unknown config key {prefix}{key}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"bad config section {prefix.rstrip('.')}: {exc}") from exc


def run_config_from_dict(data: dict, base_dir: Path = Path(".")) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"config root must be an object, got {type(data).__name__}")
    cfg = RunConfig(base_dir=Path(base_dir))
    for key, value in data.items():
        if key == "seed":
            cfg.seed = int(value)
        elif key in _SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"config section {key} must be an object")
            setattr(cfg, key, _build_section(_SECTIONS[key], value, f"{key}."))
        else:
            raise ConfigError(f"unknown config key {key}")
    return cfg


def apply_override(cfg: RunConfig, dotted_key: str, raw_value: str) -> None:
    """Apply one ``--set section.key=value`` style override."""
    if dotted_key not in _KEY_DOCS:
        raise ConfigError(f"unknown config key {dotted_key}")
    try:
        value: Any = json.loads(raw_value)
    except json.JSONDecodeError:
        value = raw_value  # bare strings are fine unquoted
    if "." in dotted_key:
        section, name = dotted_key.split(".", 1)
        setattr(getattr(cfg, section), name, value)
    else:
        setattr(cfg, dotted_key, int(value))


def load_run_config(path, overrides: list[str] | None = None) -> RunConfig:
    """Read, strictly validate, and env-resolve a run config file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"config parse error in {path} at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    cfg = run_config_from_dict(data, base_dir=path.parent)

    # Precedence: explicit flag > environment > file.
    if SEED_ENV_VAR in os.environ:
        cfg.seed = int(os.environ[SEED_ENV_VAR])
    if WEIGHTS_ENV_VAR in os.environ:
        cfg.fid.extractor_weights = os.environ[WEIGHTS_ENV_VAR]

    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        key, _, value = item.partition("=")
        apply_override(cfg, key.strip(), value.strip())
    return cfg
