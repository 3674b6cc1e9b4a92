"""Fréchet distance between feature statistics of two image sets.

The distance between Gaussian fits N(mu_a, sigma_a) and N(mu_b, sigma_b) is

    ||mu_a - mu_b||^2 + tr(sigma_a + sigma_b - 2 (sigma_a sigma_b)^(1/2))

The matrix square root is computed through an eigendecomposition of the
symmetrized product sqrt(A) B sqrt(A), which is similar to A B and stays
real throughout; negative eigenvalues from round-off are clamped to zero.

Feature extraction is pluggable. The fixed-projection extractor needs no
external weights and backs the whole test suite; the inception extractor
loads pretrained weights from a user-supplied file for values comparable
to published ones.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch

from .corpus import ExamplePair, resize_bilinear
from .networks import Generator, generator_forward

logger = logging.getLogger(__name__)

WEIGHTS_ENV_VAR = "ARTEXTEND_EXTRACTOR_WEIGHTS"

# Seed for the fixed projection matrix; changing it changes every reported
# value, so it is part of the extractor's identity.
_PROJECTION_SEED = 20240613

SYMMETRY_TOL = 1e-8
EIGENVALUE_TOL = -1e-6


class ExtractorWeightsError(FileNotFoundError):
    """Pretrained extractor weights are required but not available."""


@dataclass(frozen=True)
class FidStats:
    mu: np.ndarray
    sigma: np.ndarray
    n: int

    def validate(self) -> None:
        if self.mu.shape != (self.sigma.shape[0],) or self.sigma.shape[0] != self.sigma.shape[1]:
            raise ValueError(f"inconsistent stats shapes: mu {self.mu.shape}, sigma {self.sigma.shape}")
        asym = float(np.abs(self.sigma - self.sigma.T).max())
        if asym > SYMMETRY_TOL:
            raise ValueError(f"covariance not symmetric: max asymmetry {asym}")
        w = np.linalg.eigvalsh(self.sigma)
        if float(w.min()) < EIGENVALUE_TOL:
            raise ValueError(f"covariance not PSD: min eigenvalue {float(w.min())}")


class FeatureExtractor:
    """Deterministic map from an image in [-1, 1] to a feature vector."""

    name: str = "base"
    dim: int = 0

    def extract(self, image: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def extract_batch(self, images: Sequence[np.ndarray]) -> np.ndarray:
        return np.stack([self.extract(img) for img in images])


class PixelProjectionExtractor(FeatureExtractor):
    """Fixed random linear projection of the downscaled image.

    Needs no external weights; values are only comparable to other values
    produced by this same extractor.
    """

    def __init__(self, dim: int = 64, patch: int = 16):
        self.name = "pixel-projection"
        self.dim = dim
        self.patch = patch
        rng = np.random.default_rng(_PROJECTION_SEED)
        flat = patch * patch * 3
        self._projection = rng.standard_normal((flat, dim)) / np.sqrt(flat)

    def extract(self, image: np.ndarray) -> np.ndarray:
        small = resize_bilinear(np.asarray(image, dtype=np.float32), self.patch, self.patch)
        return small.reshape(-1).astype(np.float64) @ self._projection


class InceptionPool3Extractor(FeatureExtractor):
    """2048-d pooled features from a pretrained torchvision inception_v3.

    Weights are loaded from ``weights_path`` (or the ARTEXTEND_EXTRACTOR_WEIGHTS
    environment variable); they are never downloaded implicitly. Input images
    are bilinearly resized to 299x299 and fed in [-1, 1].
    """

    def __init__(self, weights_path=None):
        self.name = "inception-pool3"
        self.dim = 2048
        path = weights_path or os.environ.get(WEIGHTS_ENV_VAR)
        if not path or not Path(path).is_file():
            raise ExtractorWeightsError(
                "inception-pool3 needs a torchvision inception_v3 state dict on disk. "
                "Download inception_v3_google-*.pth from the torchvision model zoo and "
                f"point {WEIGHTS_ENV_VAR} (or fid.extractor_weights) at it. Got: {path!r}"
            )
        from torchvision.models import inception_v3

        model = inception_v3(weights=None, init_weights=False, aux_logits=True)
        payload = torch.load(path, map_location="cpu", weights_only=True)
        model.load_state_dict(payload)
        model.fc = torch.nn.Identity()
        model.eval()
        self._model = model

    def extract(self, image: np.ndarray) -> np.ndarray:
        arr = resize_bilinear(np.asarray(image, dtype=np.float32), 299, 299)
        t = torch.from_numpy(arr).permute(2, 0, 1).unsqueeze(0)
        with torch.no_grad():
            feats = self._model(t)
        return feats.squeeze(0).numpy().astype(np.float64)


def make_extractor(name: str, weights_path=None) -> FeatureExtractor:
    if name == "pixel-projection":
        return PixelProjectionExtractor()
    if name == "inception-pool3":
        return InceptionPool3Extractor(weights_path)
    raise ValueError(f"unknown extractor {name!r} (choose pixel-projection or inception-pool3)")


def feature_stats(images: Sequence[np.ndarray], extractor: FeatureExtractor) -> FidStats:
    """Sample mean and unbiased covariance of extracted features."""
    if len(images) < 2:
        raise ValueError(f"insufficient samples: covariance needs n >= 2, got {len(images)}")
    feats = extractor.extract_batch(images).astype(np.float64)
    mu = feats.mean(axis=0)
    centered = feats - mu
    sigma = centered.T @ centered / (feats.shape[0] - 1)
    sigma = (sigma + sigma.T) / 2.0
    return FidStats(mu=mu, sigma=sigma, n=feats.shape[0])


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(matrix)
    clamped = np.clip(w, 0.0, None)
    if float(w.min()) < 0:
        logger.debug("clamped negative eigenvalues down to %g in matrix sqrt", float(w.min()))
    return (v * np.sqrt(clamped)) @ v.T


def frechet_distance(a: FidStats, b: FidStats) -> float:
    """Squared-mean distance plus the covariance trace term, clamped at 0."""
    if a.mu.shape != b.mu.shape:
        raise ValueError(f"dimension mismatch: {a.mu.shape} vs {b.mu.shape}")
    sigma_a = (a.sigma + a.sigma.T) / 2.0
    sigma_b = (b.sigma + b.sigma.T) / 2.0
    try:
        root_a = _psd_sqrt(sigma_a)
        inner = root_a @ sigma_b @ root_a
        inner = (inner + inner.T) / 2.0
        eigvals = np.linalg.eigvalsh(inner)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(
            "matrix square root failed to converge "
            f"(cond a={np.linalg.cond(sigma_a):.3e}, cond b={np.linalg.cond(sigma_b):.3e})"
        ) from exc
    # tr((sigma_a sigma_b)^1/2) equals the trace over the symmetrized product's
    # eigenvalues because the two matrices are similar.
    trace_sqrt = float(np.sum(np.sqrt(np.clip(eigvals, 0.0, None))))
    diff = a.mu - b.mu
    raw = float(diff @ diff + np.trace(sigma_a) + np.trace(sigma_b) - 2.0 * trace_sqrt)
    if raw < 0:
        logger.debug("clamped fid %g to 0", raw)
        return 0.0
    return raw


GeneratorLike = Generator | Callable[[np.ndarray], np.ndarray]


def _run_generator(generator: GeneratorLike, image: np.ndarray) -> np.ndarray:
    if isinstance(generator, Generator):
        return generator_forward(generator, image, mode="eval")
    return generator(image)


def evaluate_fid(
    generator: GeneratorLike,
    pairs: Sequence[ExamplePair],
    extractor: FeatureExtractor,
    sample_size: int,
    seed: int = 0,
) -> float:
    """Distance between generator reconstructions and ground truths.

    The subset of pairs is a seeded deterministic sample, so repeated calls
    with the same seed and data give the same value.
    """
    if sample_size < 2:
        raise ValueError(f"sample_size must be >= 2, got {sample_size}")
    n = len(pairs)
    if n < 2:
        raise ValueError(f"need at least 2 pairs, got {n}")
    if sample_size >= n:
        chosen = list(range(n))
    else:
        rng = np.random.default_rng(seed)
        chosen = sorted(rng.choice(n, size=sample_size, replace=False).tolist())
    generated = [_run_generator(generator, pairs[i].input) for i in chosen]
    targets = [pairs[i].target for i in chosen]
    return frechet_distance(
        feature_stats(generated, extractor), feature_stats(targets, extractor)
    )
