"""Command-line entry point: prepare, train, eval, extend.

Human-readable progress goes to stderr; stdout carries only the values a
script would consume. Exit codes: 0 success, 2 usage or config error,
3 missing external resource, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .config import (
    ConfigError,
    SEED_ENV_VAR,
    WEIGHTS_ENV_VAR,
    config_key_help,
    load_run_config,
)
from .corpus import DecodeError, EmptyCorpusError, load_manifest, load_square, scan_corpus
from .fid import ExtractorWeightsError, evaluate_fid, make_extractor

logger = logging.getLogger("artextend")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2
EXIT_MISSING_RESOURCE = 3


class LockHeldError(RuntimeError):
    pass


class CheckpointDirLock:
    """Exclusive .lock file; a second command against the same directory fails fast."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.path = self.directory / ".lock"
        self._fd = None

    def __enter__(self):
        self.directory.mkdir(parents=True, exist_ok=True)
        try:
            self._fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise LockHeldError(
                f"checkpoint directory is locked by another command: {self.path} "
                "(delete the lock file if that process is gone)"
            ) from None
        os.write(self._fd, str(os.getpid()).encode())
        return self

    def __exit__(self, *exc):
        if self._fd is not None:
            os.close(self._fd)
            self.path.unlink(missing_ok=True)
        return False


def _env_seed(flag_value: int | None, fallback: int = 0) -> int:
    if flag_value is not None:
        return flag_value
    if SEED_ENV_VAR in os.environ:
        return int(os.environ[SEED_ENV_VAR])
    return fallback


def cmd_prepare(args) -> int:
    seed = _env_seed(args.seed)
    manifest = scan_corpus(args.input_dir, min_side=args.min_side, resolution=args.size, seed=seed)
    out = Path(args.out) if args.out else Path(args.input_dir) / "manifest.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    manifest.save(out)
    print(f"accepted {len(manifest.accepted)}, rejected {len(manifest.rejected)}")
    logger.info("manifest written to %s", out)
    return EXIT_OK


def cmd_train(args) -> int:
    from . import training

    cfg = load_run_config(args.config, overrides=args.set or [])
    if args.seed is not None:
        cfg.seed = args.seed
    if not cfg.corpus.dir:
        raise ConfigError("corpus.dir is required for train")

    manifest_path = cfg.manifest_path
    if not manifest_path.is_file():
        raise ConfigError(f"manifest not found at {manifest_path}; run `artextend prepare` first")
    manifest = load_manifest(manifest_path, root=cfg.resolve(cfg.corpus.dir))
    if manifest.resolution != cfg.corpus.resolution:
        raise ConfigError(
            f"manifest resolution {manifest.resolution} does not match corpus.resolution "
            f"{cfg.corpus.resolution}; re-run prepare"
        )

    extractor = make_extractor(cfg.fid.extractor, cfg.fid.extractor_weights)
    with CheckpointDirLock(cfg.resolve(cfg.paths.checkpoint_dir)):
        result = training.train(
            cfg.train_config(),
            manifest,
            cfg.generator_config(),
            cfg.discriminator_config(),
            checkpoint_dir=cfg.resolve(cfg.paths.checkpoint_dir),
            metrics_dir=cfg.resolve(cfg.paths.metrics_dir),
            extractor=extractor,
            resume_from=args.resume,
            split=cfg.corpus.split,
        )
    fid_text = f"{result.last_fid:.6f}" if result.last_fid is not None else "n/a"
    print(f"epoch={result.final_epoch} fid={fid_text}")
    return EXIT_OK


def _load_generator(checkpoint):
    from .training import load_checkpoint

    state = load_checkpoint(checkpoint)
    state.generator.eval()
    return state


def cmd_eval(args) -> int:
    from .training import fid_pairs

    state = _load_generator(args.checkpoint)
    root = Path(args.corpus_dir) if args.corpus_dir else None
    manifest = load_manifest(args.manifest, root=root)
    if manifest.resolution != state.generator.cfg.resolution:
        raise ConfigError(
            f"manifest resolution {manifest.resolution} does not match checkpoint "
            f"resolution {state.generator.cfg.resolution}"
        )
    weights = args.weights or os.environ.get(WEIGHTS_ENV_VAR)
    extractor = make_extractor(args.extractor, weights)
    pairs = fid_pairs(manifest)
    seed = _env_seed(args.seed, fallback=manifest.seed)
    value = evaluate_fid(state.generator, pairs, extractor, args.sample_size, seed=seed)

    out = Path(args.out) if args.out else Path(args.checkpoint).parent / "fid_eval.csv"
    if not out.exists():
        out.write_text("epoch,fid\n", "utf-8")
    with out.open("a", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{state.epoch},{value!r}\n")

    logger.info("FID (%s) at epoch %d: %.6f", extractor.name, state.epoch, value)
    print(f"{value:.6f}")
    return EXIT_OK


def cmd_extend(args) -> int:
    from .outpaint import export_series, extend_series

    if args.generations < 1:
        raise ValueError("generations must be >= 1")
    state = _load_generator(args.checkpoint)
    image = load_square(args.image, state.generator.cfg.resolution)
    series = extend_series(
        state.generator, image, args.generations, paste_back=not args.no_paste_back
    )
    files = export_series(series, args.out_dir)
    for path in files:
        print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="artextend",
        description="Train a border-inpainting GAN on artworks and extend them past the canvas.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="scan an image directory and write a corpus manifest")
    p.add_argument("--input-dir", required=True, help="directory tree of PNG/JPEG files")
    p.add_argument("--out", help="manifest path (default: <input-dir>/manifest.json)")
    p.add_argument("--size", type=int, default=512, help="working resolution S (default 512)")
    p.add_argument("--min-side", type=int, default=None, help="minimum source side (default: S)")
    p.add_argument("--seed", type=int, default=None, help=f"corpus seed (env {SEED_ENV_VAR} overrides)")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser(
        "train",
        help="run the adversarial training loop from a JSON config",
        epilog=config_key_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("--config", required=True, help="JSON run config file")
    p.add_argument("--resume", help="checkpoint directory to continue from")
    p.add_argument("--seed", type=int, default=None, help="override the global seed")
    p.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="override any config key, e.g. --set trainer.epochs=3 (repeatable)",
    )
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="compute FID for a checkpoint against a corpus manifest")
    p.add_argument("--checkpoint", required=True, help="checkpoint directory")
    p.add_argument("--manifest", required=True, help="corpus manifest JSON")
    p.add_argument("--corpus-dir", help="image root (default: the manifest's directory)")
    p.add_argument(
        "--extractor",
        default="pixel-projection",
        choices=["pixel-projection", "inception-pool3"],
        help="feature extractor (inception-pool3 needs a weights file)",
    )
    p.add_argument("--weights", help=f"extractor weights path (env {WEIGHTS_ENV_VAR} overrides)")
    p.add_argument("--sample-size", type=int, default=64, help="pairs sampled for FID")
    p.add_argument("--seed", type=int, default=None, help="sampling seed (default: manifest seed)")
    p.add_argument("--out", help="CSV to append epoch,fid to (default: <ckpt>/../fid_eval.csv)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("extend", help="continue an artwork past its canvas for N generations")
    p.add_argument("--checkpoint", required=True, help="checkpoint directory")
    p.add_argument("--image", required=True, help="source artwork (PNG/JPEG)")
    p.add_argument("--generations", type=int, default=2, help="shrink-and-extend iterations")
    p.add_argument("--no-paste-back", action="store_true", help="keep the generator's own centre")
    p.add_argument("--out-dir", default="series", help="output directory (created if absent)")
    p.set_defaults(func=cmd_extend)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ExtractorWeightsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING_RESOURCE
    except (ConfigError, EmptyCorpusError, DecodeError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # runtime failures, incl. lock contention
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
