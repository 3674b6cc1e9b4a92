"""Corpus scanning and construction of training/generation inputs.

Images are decoded to 8-bit sRGB, centre-cropped square, resized with a
bilinear filter and normalized to float32 in [-1, 1]. Training pairs keep
the centre half of the image and replace the border ring with a reserved
chroma-green key so the network can never mistake real paint for the
region it has to synthesize.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

# Pure green (R:G:B 0:255:0) mapped through v / 127.5 - 1. Synthesized, never
# sampled, so comparisons against it are exact.
CHROMA_KEY = np.array([-1.0, 1.0, -1.0], dtype=np.float32)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")

SUPPORTED_RESOLUTIONS = (64, 128, 256, 512)


class EmptyCorpusError(RuntimeError):
    """Raised when a scan accepts zero files."""


class DecodeError(RuntimeError):
    """Raised when an accepted file cannot be decoded after all."""

    def __init__(self, path, cause: Exception | None = None):
        super().__init__(f"cannot decode image {path}" + (f": {cause}" if cause else ""))
        self.path = Path(path)


@dataclass(frozen=True)
class FileRecord:
    path: str  # corpus-relative, posix separators
    width: int
    height: int


@dataclass(frozen=True)
class Rejection:
    path: str
    reason: str


@dataclass(frozen=True)
class ExamplePair:
    """Conditioned input (centre kept, border chroma) and its ground truth."""

    input: np.ndarray
    target: np.ndarray
    source_id: str = ""


@dataclass
class CorpusManifest:
    resolution: int
    seed: int
    accepted: list[FileRecord]
    rejected: list[Rejection]
    # Directory the relative paths resolve against. Not serialized; set by
    # scan_corpus and load_manifest.
    root: Path | None = field(default=None, compare=False)

    def to_json(self) -> str:
        obj = {
            "resolution": self.resolution,
            "seed": self.seed,
            "accepted": [{"path": r.path, "w": r.width, "h": r.height} for r in self.accepted],
            "rejected": [{"path": r.path, "reason": r.reason} for r in self.rejected],
        }
        return json.dumps(obj, indent=2) + "\n"

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_json().encode("utf-8"))


def load_manifest(path, root: Path | None = None) -> CorpusManifest:
    """Read a manifest file; relative paths resolve against ``root``.

    When ``root`` is omitted the manifest's own directory is used, which is
    the right default for manifests written into the corpus directory.
    """
    path = Path(path)
    obj = json.loads(path.read_text("utf-8"))
    return CorpusManifest(
        resolution=int(obj["resolution"]),
        seed=int(obj["seed"]),
        accepted=[FileRecord(e["path"], int(e["w"]), int(e["h"])) for e in obj["accepted"]],
        rejected=[Rejection(e["path"], e["reason"]) for e in obj["rejected"]],
        root=root if root is not None else path.parent,
    )


def normalize(pixels: np.ndarray) -> np.ndarray:
    """Map 8-bit values onto [-1, 1] (255 -> 1.0, 0 -> -1.0)."""
    return (np.asarray(pixels, dtype=np.float32) / 127.5) - 1.0


def denormalize(image: np.ndarray) -> np.ndarray:
    """Inverse of :func:`normalize`, rounding back to 8-bit."""
    scaled = (np.asarray(image, dtype=np.float32) + 1.0) * 127.5
    return np.clip(np.rint(scaled), 0, 255).astype(np.uint8)


def resize_bilinear(image: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear resize of an HxWx3 float array (half-pixel centres, no antialias)."""
    arr = np.ascontiguousarray(image, dtype=np.float32)
    if arr.shape[:2] == (height, width):
        return arr.copy()
    t = torch.from_numpy(arr).permute(2, 0, 1).unsqueeze(0)
    out = F.interpolate(t, size=(height, width), mode="bilinear", align_corners=False)
    return out.squeeze(0).permute(1, 2, 0).contiguous().numpy()


def require_image(image: np.ndarray, resolution: int | None = None) -> np.ndarray:
    """Validate the HxWx3, [-1, 1] contract; returns the array unchanged."""
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected HxWx3 image, got shape {arr.shape}")
    if resolution is not None and arr.shape[:2] != (resolution, resolution):
        raise ValueError(f"expected {resolution}x{resolution} image, got {arr.shape[:2]}")
    lo, hi = float(arr.min()), float(arr.max())
    if lo < -1.0 - 1e-5 or hi > 1.0 + 1e-5:
        raise ValueError(f"image values outside [-1, 1]: min={lo}, max={hi}")
    return arr


def _check_resolution(resolution: int) -> None:
    if resolution not in SUPPORTED_RESOLUTIONS:
        raise ValueError(
            f"resolution must be a power of two in {SUPPORTED_RESOLUTIONS}, got {resolution}"
        )


def scan_corpus(
    directory,
    min_side: int | None = None,
    resolution: int = 512,
    seed: int = 0,
) -> CorpusManifest:
    """Walk ``directory`` and build a manifest of usable source images.

    Every regular file below the directory is either accepted or rejected
    with a reason; a rejected or unreadable file never aborts the scan.
    Ordering is lexicographic by relative path, so the manifest is a pure
    function of the directory contents.
    """
    _check_resolution(resolution)
    if min_side is None:
        min_side = resolution
    root = Path(directory)
    if not root.is_dir():
        raise FileNotFoundError(f"corpus directory does not exist: {root}")

    accepted: list[FileRecord] = []
    rejected: list[Rejection] = []
    candidates = sorted(
        (p for p in root.rglob("*") if p.is_file()),
        key=lambda p: p.relative_to(root).as_posix(),
    )
    for path in candidates:
        rel = path.relative_to(root).as_posix()
        if path.suffix.lower() not in IMAGE_SUFFIXES:
            rejected.append(Rejection(rel, f"unsupported suffix {path.suffix!r}"))
            continue
        try:
            with Image.open(path) as im:
                width, height = im.size
                im.verify()
        except Exception as exc:
            rejected.append(Rejection(rel, f"unreadable: {exc.__class__.__name__}"))
            continue
        if min(width, height) < min_side:
            rejected.append(Rejection(rel, f"too small: {width}x{height} < min side {min_side}"))
            continue
        accepted.append(FileRecord(rel, width, height))

    if not accepted:
        raise EmptyCorpusError(f"empty corpus: no usable images under {root}")
    return CorpusManifest(resolution, seed, accepted, rejected, root=root)


def load_square(path, resolution: int) -> np.ndarray:
    """Decode, centre-crop square, bilinear-resize to SxS and normalize."""
    _check_resolution(resolution)
    try:
        with Image.open(path) as im:
            rgb = im.convert("RGB")
            arr = np.asarray(rgb, dtype=np.uint8)
    except Exception as exc:
        raise DecodeError(path, exc) from exc

    h, w = arr.shape[:2]
    side = min(h, w)
    top = (h - side) // 2
    left = (w - side) // 2
    square = arr[top : top + side, left : left + side].astype(np.float32)
    if side != resolution:
        square = resize_bilinear(square, resolution, resolution)
    return normalize(square)


def _chroma_canvas(resolution: int) -> np.ndarray:
    return np.broadcast_to(CHROMA_KEY, (resolution, resolution, 3)).copy()


def make_training_pair(image: np.ndarray, source_id: str = "") -> ExamplePair:
    """Keep the centre half in place and paint the border ring chroma-green."""
    image = require_image(image)
    s = image.shape[0]
    if image.shape[0] != image.shape[1] or s % 4 != 0:
        raise ValueError(f"expected square image with side divisible by 4, got {image.shape[:2]}")
    q = s // 4
    canvas = _chroma_canvas(s)
    canvas[q : 3 * q, q : 3 * q] = image[q : 3 * q, q : 3 * q]
    return ExamplePair(input=canvas, target=image, source_id=source_id)


def make_generation_input(image: np.ndarray) -> np.ndarray:
    """Shrink the whole image to half size and embed it in a chroma canvas.

    This is the inference-time counterpart of :func:`make_training_pair`:
    instead of discarding the border, the full artwork is downsized so the
    network is asked to invent content that never existed.
    """
    image = require_image(image)
    s = image.shape[0]
    if image.shape[0] != image.shape[1] or s % 4 != 0:
        raise ValueError(f"expected square image with side divisible by 4, got {image.shape[:2]}")
    q = s // 4
    half = resize_bilinear(image, s // 2, s // 2)
    canvas = _chroma_canvas(s)
    canvas[q : 3 * q, q : 3 * q] = half
    return canvas


def epoch_permutation(n: int, seed: int, epoch: int) -> np.ndarray:
    """Deterministic file order for one epoch; pure function of (seed, epoch)."""
    return np.random.default_rng([seed, epoch]).permutation(n)


def iterate_pairs(
    manifest: CorpusManifest,
    seed: int,
    epoch: int,
    loader: Callable[[Path, int], np.ndarray] = load_square,
) -> Iterator[ExamplePair]:
    """Yield one full permutation of the accepted files as training pairs."""
    if not manifest.accepted:
        raise EmptyCorpusError("manifest has no accepted files")
    if manifest.root is None:
        raise ValueError("manifest has no root directory; pass root= to load_manifest")
    order = epoch_permutation(len(manifest.accepted), seed, epoch)
    for idx in order:
        record = manifest.accepted[int(idx)]
        image = loader(manifest.root / record.path, manifest.resolution)
        yield make_training_pair(image, source_id=record.path)


def eval_records(manifest: CorpusManifest, split: float) -> list[FileRecord]:
    """Deterministic held-out subset: the tail of a seed-shuffled file list.

    ``split`` is the held-out fraction; 0 means evaluation reuses the
    training files.
    """
    if not 0.0 <= split < 1.0:
        raise ValueError(f"split must be in [0, 1), got {split}")
    if split == 0.0:
        return list(manifest.accepted)
    n = len(manifest.accepted)
    k = max(1, int(round(n * split)))
    # Split stream kept apart from the epoch streams (epochs count from 1).
    order = np.random.default_rng([manifest.seed, 2**33]).permutation(n)
    return [manifest.accepted[int(i)] for i in order[n - k :]]
