"""U-Net generator and PatchGAN discriminator.

The generator is a mirrored stack of stride-2 4x4 convolutions with skip
connections concatenating each encoder activation into the decoder at the
matching depth; the output layer maps to 3 channels through tanh. The
discriminator concatenates condition and candidate along channels and emits
a grid of per-patch logits.
"""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np
import torch
import torch.nn as nn

from .corpus import SUPPORTED_RESOLUTIONS, require_image

LEAKY_SLOPE = 0.2
INIT_STD = 0.02

# Filter schedule at full resolution: 64, 128, 256, then 512s. Smaller
# resolutions truncate it so the bottleneck stays at 1x1 or 2x2.
FULL_DOWN_FILTERS = (64, 128, 256, 512, 512, 512, 512, 512)

NORM_KINDS = ("instance", "batch", "none")


def default_down_filters(resolution: int) -> tuple[int, ...]:
    depth = min(int(np.log2(resolution)), len(FULL_DOWN_FILTERS))
    return FULL_DOWN_FILTERS[:depth]


@dataclass(frozen=True)
class GeneratorConfig:
    resolution: int = 512
    down_filters: tuple[int, ...] = FULL_DOWN_FILTERS
    up_filters: tuple[int, ...] = tuple(reversed(FULL_DOWN_FILTERS[:-1]))
    kernel: int = 4
    stride: int = 2
    dropout_rate: float = 0.5
    dropout_blocks: int = 3
    norm: str = "instance"

    def __post_init__(self):
        if self.resolution not in SUPPORTED_RESOLUTIONS:
            raise ValueError(f"unsupported resolution {self.resolution}")
        if len(self.down_filters) != len(self.up_filters) + 1:
            raise ValueError(
                f"need len(down_filters) == len(up_filters) + 1, got "
                f"{len(self.down_filters)} and {len(self.up_filters)}"
            )
        if self.resolution % (2 ** len(self.down_filters)) != 0:
            raise ValueError(
                f"{len(self.down_filters)} downsampling layers do not divide "
                f"resolution {self.resolution}"
            )
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.norm not in NORM_KINDS:
            raise ValueError(f"norm must be one of {NORM_KINDS}, got {self.norm!r}")

    @property
    def bottleneck_size(self) -> int:
        return self.resolution // (2 ** len(self.down_filters))


def default_generator_config(resolution: int = 512, **overrides) -> GeneratorConfig:
    down = default_down_filters(resolution)
    return GeneratorConfig(
        resolution=resolution,
        down_filters=down,
        up_filters=tuple(reversed(down[:-1])),
        **overrides,
    )


@dataclass(frozen=True)
class DiscriminatorConfig:
    down_filters: tuple[int, ...] = (64, 128, 256)
    head_filters: int = 512
    kernel: int = 4
    conditional: bool = True  # concatenate condition image along channels
    norm: str = "instance"

    def __post_init__(self):
        if len(self.down_filters) != 3:
            raise ValueError(f"discriminator uses exactly 3 stride-2 blocks, got {len(self.down_filters)}")
        if self.norm not in NORM_KINDS:
            raise ValueError(f"norm must be one of {NORM_KINDS}, got {self.norm!r}")

    @property
    def in_channels(self) -> int:
        return 6 if self.conditional else 3


def patch_map_size(cfg: DiscriminatorConfig, resolution: int) -> int:
    """Spatial side of the logit grid for an SxS input (conv arithmetic)."""
    s = resolution
    for _ in cfg.down_filters:
        s = (s + 2 - cfg.kernel) // 2 + 1
    for _ in range(2):  # head block and logit conv, stride 1
        s = s + 2 - cfg.kernel + 1
    return s


def _norm_layer(kind: str, channels: int) -> nn.Module | None:
    if kind == "instance":
        return nn.InstanceNorm2d(channels, affine=False, track_running_stats=False)
    if kind == "batch":
        return nn.BatchNorm2d(channels)
    return None


def init_weights(module: nn.Module) -> None:
    """Zero-mean Gaussian init, sigma 0.02, on all conv and norm weights."""
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            nn.init.normal_(m.weight, 0.0, INIT_STD)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.BatchNorm2d):
            nn.init.normal_(m.weight, 1.0, INIT_STD)
            nn.init.zeros_(m.bias)


class Generator(nn.Module):
    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        self.cfg = cfg
        k, st = cfg.kernel, cfg.stride
        down = cfg.down_filters
        up = cfg.up_filters

        self.encoder = nn.ModuleList()
        in_ch = 3
        size = cfg.resolution
        for i, out_ch in enumerate(down):
            size //= 2
            layers: list[nn.Module] = [nn.Conv2d(in_ch, out_ch, k, st, 1)]
            # No norm on the first block, nor where the output collapses to
            # 1x1 (a single spatial element cannot be normalized in train mode).
            if i > 0 and size > 1:
                norm = _norm_layer(cfg.norm, out_ch)
                if norm is not None:
                    layers.append(norm)
            layers.append(nn.LeakyReLU(LEAKY_SLOPE))
            self.encoder.append(nn.Sequential(*layers))
            in_ch = out_ch

        self.decoder = nn.ModuleList()
        self._decoder_in_channels: list[int] = []
        for i, out_ch in enumerate(up):
            size *= 2
            in_ch = down[-1] if i == 0 else up[i - 1] + down[len(down) - 1 - i]
            self._decoder_in_channels.append(in_ch)
            layers = [nn.ConvTranspose2d(in_ch, out_ch, k, st, 1)]
            if size > 1:
                norm = _norm_layer(cfg.norm, out_ch)
                if norm is not None:
                    layers.append(norm)
            if i < cfg.dropout_blocks and cfg.dropout_rate > 0:
                layers.append(nn.Dropout(cfg.dropout_rate))
            layers.append(nn.ReLU())
            self.decoder.append(nn.Sequential(*layers))

        final_in = (up[-1] if up else down[-1]) + down[0]
        self._decoder_in_channels.append(final_in)
        self.output = nn.Sequential(nn.ConvTranspose2d(final_in, 3, k, st, 1), nn.Tanh())

        init_weights(self)
        self.audit_channels()

    def audit_channels(self) -> None:
        """Recompute the skip wiring arithmetic and compare against the built convs."""
        down, up = self.cfg.down_filters, self.cfg.up_filters
        expected = [down[-1]]
        expected += [up[i - 1] + down[len(down) - 1 - i] for i in range(1, len(up))]
        expected.append((up[-1] if up else down[-1]) + down[0])
        built = [blk[0].in_channels for blk in self.decoder] + [self.output[0].in_channels]
        if built != expected:
            raise AssertionError(f"skip wiring mismatch: built {built}, expected {expected}")

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[1] != 3 or x.shape[2] != self.cfg.resolution or x.shape[3] != self.cfg.resolution:
            raise ValueError(
                f"expected Nx3x{self.cfg.resolution}x{self.cfg.resolution} input, got {tuple(x.shape)}"
            )
        skips = []
        for block in self.encoder:
            x = block(x)
            skips.append(x)
        x = skips[-1]
        for i, block in enumerate(self.decoder):
            if i > 0:
                x = torch.cat([x, skips[-(i + 1)]], dim=1)
            x = block(x)
        x = torch.cat([x, skips[0]], dim=1)
        return self.output(x)


class Discriminator(nn.Module):
    def __init__(self, cfg: DiscriminatorConfig):
        super().__init__()
        self.cfg = cfg
        k = cfg.kernel
        layers: list[nn.Module] = []
        in_ch = cfg.in_channels
        for i, out_ch in enumerate(cfg.down_filters):
            layers.append(nn.Conv2d(in_ch, out_ch, k, 2, 1))
            if i > 0:
                norm = _norm_layer(cfg.norm, out_ch)
                if norm is not None:
                    layers.append(norm)
            layers.append(nn.LeakyReLU(LEAKY_SLOPE))
            in_ch = out_ch
        layers.append(nn.Conv2d(in_ch, cfg.head_filters, k, 1, 1))
        norm = _norm_layer(cfg.norm, cfg.head_filters)
        if norm is not None:
            layers.append(norm)
        layers.append(nn.LeakyReLU(LEAKY_SLOPE))
        layers.append(nn.Conv2d(cfg.head_filters, 1, k, 1, 1))  # per-patch logits
        self.model = nn.Sequential(*layers)
        init_weights(self)

    def forward(self, condition: torch.Tensor, candidate: torch.Tensor) -> torch.Tensor:
        if condition.shape != candidate.shape:
            raise ValueError(f"condition {tuple(condition.shape)} != candidate {tuple(candidate.shape)}")
        if condition.shape[1] != 3:
            raise ValueError(f"expected 3-channel images, got {condition.shape[1]} channels")
        x = torch.cat([condition, candidate], dim=1) if self.cfg.conditional else candidate
        return self.model(x)


def build_generator(cfg: GeneratorConfig) -> Generator:
    return Generator(cfg)


def build_discriminator(cfg: DiscriminatorConfig) -> Discriminator:
    return Discriminator(cfg)


def count_parameters(net: nn.Module) -> int:
    return sum(p.numel() for p in net.parameters() if p.requires_grad)


def image_to_tensor(image: np.ndarray) -> torch.Tensor:
    """HxWx3 float array -> 1x3xHxW float32 tensor."""
    arr = np.ascontiguousarray(image, dtype=np.float32)
    return torch.from_numpy(arr).permute(2, 0, 1).unsqueeze(0)


def tensor_to_image(t: torch.Tensor) -> np.ndarray:
    """1x3xHxW tensor -> HxWx3 float32 array."""
    return t.detach().squeeze(0).permute(1, 2, 0).contiguous().numpy()


def generator_forward(generator: Generator, image: np.ndarray, mode: str = "eval") -> np.ndarray:
    """Run one image through the generator.

    ``eval`` mode is deterministic; ``train`` mode keeps dropout active, which
    is the model's only source of randomness.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    image = require_image(image, generator.cfg.resolution)
    was_training = generator.training
    generator.train(mode == "train")
    try:
        with torch.no_grad():
            out = generator(image_to_tensor(image))
    finally:
        generator.train(was_training)
    return tensor_to_image(out)
