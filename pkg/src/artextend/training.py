"""Adversarial + L1 training loop, optimizer wiring, metrics CSVs, checkpoints.

One step trains the discriminator on (condition, truth) vs (condition,
generated) patch grids, then trains the generator on the non-saturating
adversarial term plus a weighted mean-absolute-error term. Everything is
deterministic given the seed: data order, dropout draws and optimizer state
all restore exactly across a checkpoint round trip.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import shutil
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np
import torch
import torch.nn.functional as F

from . import fid as fid_mod
from .corpus import CorpusManifest, ExamplePair, eval_records, iterate_pairs, make_training_pair, load_square
from .networks import (
    Discriminator,
    DiscriminatorConfig,
    Generator,
    GeneratorConfig,
    image_to_tensor,
)

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1

LOSS_CSV_HEADER = "step,epoch,d_loss,g_adv_loss,g_l1_loss,g_total"
FID_CSV_HEADER = "epoch,fid"


class NonFiniteLossError(RuntimeError):
    """Training diverged; carries the offending record for diagnostics."""

    def __init__(self, record: "LossRecord"):
        super().__init__(f"non-finite loss at step {record.step}: {record}")
        self.record = record


class CheckpointError(RuntimeError):
    pass


@dataclass(frozen=True)
class LossRecord:
    step: int
    epoch: int
    d_loss: float
    g_adv_loss: float
    g_l1_loss: float
    g_total: float

    def is_finite(self) -> bool:
        return all(np.isfinite(v) for v in (self.d_loss, self.g_adv_loss, self.g_l1_loss))


@dataclass(frozen=True)
class TrainConfig:
    lambda_l1: float = 100.0
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    batch_size: int = 1
    epochs: int = 150
    seed: int = 0
    fid_interval: int = 10
    fid_sample_size: int = 64
    checkpoint_interval: int = 10

    def __post_init__(self):
        if self.batch_size != 1:
            raise ValueError("this trainer is defined for batch size 1")
        for name in ("epochs", "fid_interval", "fid_sample_size", "checkpoint_interval"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


def discriminator_loss(real_logits: torch.Tensor, fake_logits: torch.Tensor) -> torch.Tensor:
    """Patch-mean cross-entropy of real logits against 1 plus fake against 0."""
    real_logits = torch.as_tensor(real_logits)
    fake_logits = torch.as_tensor(fake_logits)
    if real_logits.shape != fake_logits.shape:
        raise ValueError(f"logit shapes differ: {tuple(real_logits.shape)} vs {tuple(fake_logits.shape)}")
    real_term = F.binary_cross_entropy_with_logits(real_logits, torch.ones_like(real_logits))
    fake_term = F.binary_cross_entropy_with_logits(fake_logits, torch.zeros_like(fake_logits))
    return real_term + fake_term


def generator_adversarial_loss(fake_logits: torch.Tensor) -> torch.Tensor:
    """Non-saturating generator objective: cross-entropy of fake logits against 1."""
    fake_logits = torch.as_tensor(fake_logits)
    return F.binary_cross_entropy_with_logits(fake_logits, torch.ones_like(fake_logits))


def l1_loss(generated: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    generated = torch.as_tensor(generated)
    target = torch.as_tensor(target)
    if generated.shape != target.shape:
        raise ValueError(f"shapes differ: {tuple(generated.shape)} vs {tuple(target.shape)}")
    return torch.mean(torch.abs(generated - target))


@dataclass
class TrainState:
    generator: Generator
    discriminator: Discriminator
    opt_g: torch.optim.Adam
    opt_d: torch.optim.Adam
    config: TrainConfig
    epoch: int = 0  # last completed epoch
    step: int = 0  # last completed step
    manifest_hash: str = ""


def manifest_digest(manifest: CorpusManifest) -> str:
    return hashlib.sha256(manifest.to_json().encode("utf-8")).hexdigest()


def init_train_state(
    config: TrainConfig,
    gen_cfg: GeneratorConfig,
    disc_cfg: DiscriminatorConfig,
    manifest: CorpusManifest | None = None,
) -> TrainState:
    """Seed the global RNG, build both networks and their optimizers."""
    torch.manual_seed(config.seed)
    generator = Generator(gen_cfg)
    discriminator = Discriminator(disc_cfg)
    opt_g = torch.optim.Adam(generator.parameters(), lr=config.lr, betas=(config.beta1, config.beta2))
    opt_d = torch.optim.Adam(discriminator.parameters(), lr=config.lr, betas=(config.beta1, config.beta2))
    digest = manifest_digest(manifest) if manifest is not None else ""
    return TrainState(generator, discriminator, opt_g, opt_d, config, manifest_hash=digest)


def train_step(pair: ExamplePair, state: TrainState, epoch: int | None = None) -> LossRecord:
    """One discriminator update followed by one generator update."""
    x = image_to_tensor(pair.input)
    y = image_to_tensor(pair.target)
    gen, disc = state.generator, state.discriminator
    gen.train()
    disc.train()

    fake = gen(x)

    state.opt_d.zero_grad()
    d = discriminator_loss(disc(x, y), disc(x, fake.detach()))
    d.backward()
    state.opt_d.step()

    state.opt_g.zero_grad()
    g_adv = generator_adversarial_loss(disc(x, fake))
    g_l1 = l1_loss(fake, y)
    (g_adv + state.config.lambda_l1 * g_l1).backward()
    state.opt_g.step()

    state.step += 1
    if epoch is not None:
        state.epoch = epoch
    d_val, adv_val, l1_val = float(d.detach()), float(g_adv.detach()), float(g_l1.detach())
    record = LossRecord(
        step=state.step,
        epoch=state.epoch,
        d_loss=d_val,
        g_adv_loss=adv_val,
        g_l1_loss=l1_val,
        g_total=adv_val + state.config.lambda_l1 * l1_val,
    )
    if not record.is_finite():
        raise NonFiniteLossError(record)
    return record


def _rng_state_to_str(state: torch.Tensor) -> str:
    return base64.b64encode(state.numpy().tobytes()).decode("ascii")


def _rng_state_from_str(text: str) -> torch.Tensor:
    return torch.frombuffer(bytearray(base64.b64decode(text)), dtype=torch.uint8)


def save_checkpoint(state: TrainState, path) -> Path:
    """Write a self-describing checkpoint directory (atomic via rename)."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    if tmp.exists():
        shutil.rmtree(tmp)
    tmp.mkdir(parents=True)

    manifest = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "epoch": state.epoch,
        "step": state.step,
        "train_config": asdict(state.config),
        "generator_config": asdict(state.generator.cfg),
        "discriminator_config": asdict(state.discriminator.cfg),
        "manifest_hash": state.manifest_hash,
        "torch_rng": _rng_state_to_str(torch.get_rng_state()),
    }
    (tmp / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", "utf-8")
    torch.save(
        {
            "generator": state.generator.state_dict(),
            "discriminator": state.discriminator.state_dict(),
            "opt_g": state.opt_g.state_dict(),
            "opt_d": state.opt_d.state_dict(),
        },
        tmp / "weights.pt",
    )
    if path.exists():
        shutil.rmtree(path)
    tmp.rename(path)
    return path


def _tuplify(cfg: dict) -> dict:
    return {k: tuple(v) if isinstance(v, list) else v for k, v in cfg.items()}


def load_checkpoint(
    path,
    expect_generator: GeneratorConfig | None = None,
    expect_manifest_hash: str | None = None,
) -> TrainState:
    """Rebuild a TrainState from disk; forward outputs round-trip bit-exact."""
    path = Path(path)
    manifest_path = path / "manifest.json"
    if not manifest_path.is_file():
        raise CheckpointError(f"not a checkpoint directory: {path}")
    meta = json.loads(manifest_path.read_text("utf-8"))

    version = meta.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint format version {version} not supported (expected {CHECKPOINT_FORMAT_VERSION})"
        )
    gen_cfg = GeneratorConfig(**_tuplify(meta["generator_config"]))
    disc_cfg = DiscriminatorConfig(**_tuplify(meta["discriminator_config"]))
    if expect_generator is not None and gen_cfg != expect_generator:
        raise CheckpointError(
            f"architecture mismatch: checkpoint has {gen_cfg}, run configured {expect_generator}"
        )
    if expect_manifest_hash and meta.get("manifest_hash") and meta["manifest_hash"] != expect_manifest_hash:
        logger.warning(
            "corpus manifest hash changed since checkpoint %s was written; continuing", path.name
        )

    config = TrainConfig(**meta["train_config"])
    generator = Generator(gen_cfg)
    discriminator = Discriminator(disc_cfg)
    payload = torch.load(path / "weights.pt", weights_only=True)
    generator.load_state_dict(payload["generator"])
    discriminator.load_state_dict(payload["discriminator"])
    opt_g = torch.optim.Adam(generator.parameters(), lr=config.lr, betas=(config.beta1, config.beta2))
    opt_d = torch.optim.Adam(discriminator.parameters(), lr=config.lr, betas=(config.beta1, config.beta2))
    opt_g.load_state_dict(payload["opt_g"])
    opt_d.load_state_dict(payload["opt_d"])
    torch.set_rng_state(_rng_state_from_str(meta["torch_rng"]))
    return TrainState(
        generator,
        discriminator,
        opt_g,
        opt_d,
        config,
        epoch=meta["epoch"],
        step=meta["step"],
        manifest_hash=meta.get("manifest_hash", ""),
    )


def _format_row(record: LossRecord) -> str:
    return (
        f"{record.step},{record.epoch},{record.d_loss!r},{record.g_adv_loss!r},"
        f"{record.g_l1_loss!r},{record.g_total!r}"
    )


class MetricsWriter:
    """Append-only CSV logs: per-step losses and per-interval FID."""

    def __init__(self, metrics_dir, resume: bool = False):
        self.dir = Path(metrics_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.losses_path = self.dir / "losses.csv"
        self.fid_path = self.dir / "fid.csv"
        if not resume or not self.losses_path.exists():
            self.losses_path.write_text(LOSS_CSV_HEADER + "\n", "utf-8")
        if not resume or not self.fid_path.exists():
            self.fid_path.write_text(FID_CSV_HEADER + "\n", "utf-8")

    def append_loss(self, record: LossRecord) -> None:
        with self.losses_path.open("a", encoding="utf-8", newline="\n") as fh:
            fh.write(_format_row(record) + "\n")

    def append_fid(self, epoch: int, value: float) -> None:
        with self.fid_path.open("a", encoding="utf-8", newline="\n") as fh:
            fh.write(f"{epoch},{value!r}\n")


@dataclass
class TrainResult:
    final_epoch: int
    final_step: int
    last_fid: float | None
    checkpoints: list[Path]
    losses_csv: Path
    fid_csv: Path


def fid_pairs(manifest: CorpusManifest, split: float = 0.0) -> list[ExamplePair]:
    records = eval_records(manifest, split)
    pairs = []
    for rec in records:
        image = load_square(manifest.root / rec.path, manifest.resolution)
        pairs.append(make_training_pair(image, source_id=rec.path))
    return pairs


def train(
    config: TrainConfig,
    manifest: CorpusManifest,
    gen_cfg: GeneratorConfig,
    disc_cfg: DiscriminatorConfig,
    checkpoint_dir,
    metrics_dir,
    extractor: "fid_mod.FeatureExtractor | None" = None,
    resume_from=None,
    split: float = 0.0,
    on_record: Callable[[LossRecord], None] | None = None,
) -> TrainResult:
    """Run the full loop: per-step loss logging, periodic FID, checkpoints.

    ``resume_from`` restarts from a checkpoint directory; the loss sequence
    then continues exactly as if the run had never stopped.
    """
    checkpoint_dir = Path(checkpoint_dir)
    checkpoint_dir.mkdir(parents=True, exist_ok=True)
    digest = manifest_digest(manifest)

    if resume_from is not None:
        state = load_checkpoint(resume_from, expect_generator=gen_cfg, expect_manifest_hash=digest)
        # epochs is only the stop condition; everything else shapes the
        # dynamics and must match for the sequence to continue exactly
        if replace(state.config, epochs=config.epochs) != config:
            raise CheckpointError(
                f"train config mismatch: checkpoint has {state.config}, run configured {config}"
            )
        state.config = config
        state.manifest_hash = digest
    else:
        state = init_train_state(config, gen_cfg, disc_cfg, manifest)
    writer = MetricsWriter(metrics_dir, resume=resume_from is not None)

    if extractor is None:
        extractor = fid_mod.PixelProjectionExtractor()
    eval_pairs: list[ExamplePair] | None = None

    checkpoints: list[Path] = []
    last_fid: float | None = None
    for epoch in range(state.epoch + 1, config.epochs + 1):
        for pair in iterate_pairs(manifest, config.seed, epoch):
            try:
                record = train_step(pair, state, epoch=epoch)
            except NonFiniteLossError as err:
                writer.append_loss(err.record)  # diagnostic row, then abort
                raise
            writer.append_loss(record)
            if on_record is not None:
                on_record(record)

        if epoch % config.fid_interval == 0:
            if eval_pairs is None:
                eval_pairs = fid_pairs(manifest, split)
            last_fid = fid_mod.evaluate_fid(
                state.generator, eval_pairs, extractor, config.fid_sample_size, seed=config.seed
            )
            writer.append_fid(epoch, last_fid)
            logger.info("epoch %d: fid(%s) = %.6f", epoch, extractor.name, last_fid)

        if epoch % config.checkpoint_interval == 0 or epoch == config.epochs:
            ckpt = save_checkpoint(state, checkpoint_dir / f"epoch_{epoch:04d}")
            checkpoints.append(ckpt)
            logger.info("epoch %d: checkpoint %s", epoch, ckpt)

    return TrainResult(
        final_epoch=state.epoch,
        final_step=state.step,
        last_fid=last_fid,
        checkpoints=checkpoints,
        losses_csv=writer.losses_path,
        fid_csv=writer.fid_path,
    )
