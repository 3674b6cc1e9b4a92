"""Shrink-and-extend application of a trained generator.

Each generation halves the artwork and asks the network to fill the ring
around it, so after k generations the original occupies a (1/2)^k-side
region and everything outside it is synthesized. With paste_back on, the
centre is overwritten with the exactly-resized source each step, keeping
the original work faithful inside its shrinking frame.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .corpus import CHROMA_KEY, denormalize, make_generation_input, require_image
from .fid import GeneratorLike, _run_generator

logger = logging.getLogger(__name__)

# A border-row run of at least this many chroma-keyed pixels means the
# generator left part of the canvas unfilled.
CHROMA_RUN_LIMIT = 16
CHROMA_TOL = 0.05

# Pinned PNG encoder settings so re-exports are byte-identical.
_PNG_OPTS = {"optimize": False, "compress_level": 6}


@dataclass
class GenerationSeries:
    original: np.ndarray
    steps: list[np.ndarray]
    paste_back: bool
    generations: int


def extend_once(generator: GeneratorLike, image: np.ndarray, paste_back: bool = True) -> np.ndarray:
    """Halve the image, embed it in chroma, and let the generator fill the ring."""
    image = require_image(image)
    condition = make_generation_input(image)
    out = np.array(_run_generator(generator, condition), dtype=np.float32)
    if out.shape != image.shape:
        raise ValueError(f"generator returned shape {out.shape}, expected {image.shape}")
    if paste_back:
        s = image.shape[0]
        q = s // 4
        out[q : 3 * q, q : 3 * q] = condition[q : 3 * q, q : 3 * q]
    return out


def extend_series(
    generator: GeneratorLike, image: np.ndarray, generations: int, paste_back: bool = True
) -> GenerationSeries:
    if generations < 1:
        raise ValueError("generations must be >= 1")
    image = require_image(image)
    steps = []
    current = image
    for _ in range(generations):
        current = extend_once(generator, current, paste_back=paste_back)
        steps.append(current)
    return GenerationSeries(original=image, steps=steps, paste_back=paste_back, generations=generations)


def longest_chroma_run(image: np.ndarray, tol: float = CHROMA_TOL) -> int:
    """Longest horizontal run of chroma-keyed pixels in the border ring.

    Runs are measured per row and cannot cross the centre square, matching
    how leftover key colour would actually appear.
    """
    image = np.asarray(image)
    s = image.shape[0]
    q = s // 4
    mask = np.all(np.abs(image - CHROMA_KEY) <= tol, axis=2)

    def run_length(bits: np.ndarray) -> int:
        best = cur = 0
        for b in bits:
            cur = cur + 1 if b else 0
            best = max(best, cur)
        return best

    longest = 0
    for row in range(s):
        if q <= row < 3 * q:
            longest = max(longest, run_length(mask[row, :q]), run_length(mask[row, 3 * q :]))
        else:
            longest = max(longest, run_length(mask[row]))
    return longest


def _save_png(image: np.ndarray, path: Path) -> None:
    try:
        Image.fromarray(denormalize(image), mode="RGB").save(path, format="PNG", **_PNG_OPTS)
    except OSError as exc:
        raise OSError(f"failed writing {path}: {exc}") from exc


def export_series(
    series: GenerationSeries, out_dir, format: str = "png", contact_sheet: bool = True
) -> list[Path]:
    """Write gen_000.png (original) through gen_N.png plus an optional sheet."""
    if format.lower() != "png":
        raise ValueError(f"only png export is supported, got {format!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    frames = [series.original, *series.steps]
    for k, image in enumerate(frames):
        path = out_dir / f"gen_{k:03d}.png"
        _save_png(image, path)
        written.append(path)
    if contact_sheet:
        sheet = np.concatenate(frames, axis=1)
        path = out_dir / "series.png"
        _save_png(sheet, path)
        written.append(path)
    return written
