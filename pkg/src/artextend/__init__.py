"""artextend: train a border-inpainting GAN on artworks and continue them past the canvas."""

__version__ = "0.1.0"

from .corpus import (
    CHROMA_KEY,
    CorpusManifest,
    ExamplePair,
    iterate_pairs,
    load_manifest,
    load_square,
    make_generation_input,
    make_training_pair,
    scan_corpus,
)
from .fid import (
    FeatureExtractor,
    FidStats,
    InceptionPool3Extractor,
    PixelProjectionExtractor,
    evaluate_fid,
    feature_stats,
    frechet_distance,
)
from .networks import (
    DiscriminatorConfig,
    GeneratorConfig,
    build_discriminator,
    build_generator,
    count_parameters,
    default_generator_config,
    generator_forward,
)
from .outpaint import GenerationSeries, export_series, extend_once, extend_series
from .training import (
    LossRecord,
    TrainConfig,
    discriminator_loss,
    generator_adversarial_loss,
    l1_loss,
    load_checkpoint,
    save_checkpoint,
    train,
    train_step,
)

__all__ = [
    "CHROMA_KEY",
    "CorpusManifest",
    "DiscriminatorConfig",
    "ExamplePair",
    "FeatureExtractor",
    "FidStats",
    "GenerationSeries",
    "GeneratorConfig",
    "InceptionPool3Extractor",
    "LossRecord",
    "PixelProjectionExtractor",
    "TrainConfig",
    "build_discriminator",
    "build_generator",
    "count_parameters",
    "default_generator_config",
    "discriminator_loss",
    "evaluate_fid",
    "export_series",
    "extend_once",
    "extend_series",
    "feature_stats",
    "frechet_distance",
    "generator_adversarial_loss",
    "generator_forward",
    "iterate_pairs",
    "l1_loss",
    "load_checkpoint",
    "load_manifest",
    "load_square",
    "make_generation_input",
    "make_training_pair",
    "save_checkpoint",
    "scan_corpus",
    "train",
    "train_step",
]
