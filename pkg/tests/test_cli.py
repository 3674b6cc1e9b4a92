import json
from types import SimpleNamespace

import numpy as np
import pytest
from PIL import Image

from artextend.cli import build_parser, main
from artextend.config import _KEY_DOCS, load_run_config, run_config_from_dict
from artextend.corpus import CHROMA_KEY, denormalize, make_training_pair
from conftest import painting, save_painting

TINY_ARCH = {"down_filters": [8, 16, 16, 16], "up_filters": [16, 16, 8]}


def write_corpus(root, n=2, size=64):
    root.mkdir(parents=True, exist_ok=True)
    for i in range(n):
        save_painting(root / f"p{i}.png", seed=i, size=size)
    return root


def write_config(tmp_path, corpus_root, **trainer):
    trainer_section = {
        "epochs": 1,
        "fid_interval": 1,
        "fid_sample_size": 4,
        "checkpoint_interval": 1,
    }
    trainer_section.update(trainer)
    cfg = {
        "seed": 0,
        "corpus": {"dir": str(corpus_root), "resolution": 64, "min_side": 64},
        "architecture": TINY_ARCH,
        "trainer": trainer_section,
        "fid": {"extractor": "pixel-projection"},
        "paths": {
            "checkpoint_dir": str(tmp_path / "ckpts"),
            "metrics_dir": str(tmp_path / "metrics"),
            "output_dir": str(tmp_path / "out"),
        },
    }
    path = tmp_path / "run.json"
    path.write_text(json.dumps(cfg, indent=2))
    return path


@pytest.fixture()
def prepared(tmp_path, capsys):
    corpus = write_corpus(tmp_path / "corpus")
    assert main(["prepare", "--input-dir", str(corpus), "--size", "64"]) == 0
    capsys.readouterr()
    return corpus


class TestPrepare:
    def test_counts_printed(self, tmp_path, capsys):
        corpus = write_corpus(tmp_path / "c", n=5)
        save_painting(corpus / "tiny.png", seed=9, size=32)
        assert main(["prepare", "--input-dir", str(corpus), "--size", "64"]) == 0
        assert "accepted 5, rejected 1" in capsys.readouterr().out
        assert (corpus / "manifest.json").is_file()

    def test_rerun_identical_bytes(self, tmp_path, capsys):
        corpus = write_corpus(tmp_path / "c")
        out = tmp_path / "m.json"
        main(["prepare", "--input-dir", str(corpus), "--size", "64", "--out", str(out)])
        first = out.read_bytes()
        main(["prepare", "--input-dir", str(corpus), "--size", "64", "--out", str(out)])
        assert out.read_bytes() == first

    def test_missing_dir_exit_2(self, tmp_path, capsys):
        assert main(["prepare", "--input-dir", str(tmp_path / "nope")]) == 2
        assert "error" in capsys.readouterr().err

    def test_empty_corpus_nonzero(self, tmp_path, capsys):
        empty = tmp_path / "empty"
        empty.mkdir()
        assert main(["prepare", "--input-dir", str(empty), "--size", "64"]) == 2
        assert "empty corpus" in capsys.readouterr().err

    def test_env_seed_override(self, tmp_path, capsys, monkeypatch):
        corpus = write_corpus(tmp_path / "c")
        monkeypatch.setenv("ARTEXTEND_SEED", "77")
        main(["prepare", "--input-dir", str(corpus), "--size", "64"])
        manifest = json.loads((corpus / "manifest.json").read_text())
        assert manifest["seed"] == 77


class TestTrain:
    def test_desk_run_writes_metrics_and_prints_summary(self, tmp_path, prepared, capsys):
        cfg_path = write_config(tmp_path, prepared)
        assert main(["train", "--config", str(cfg_path)]) == 0
        out = capsys.readouterr().out
        assert out.startswith("epoch=1 fid=")
        losses = (tmp_path / "metrics" / "losses.csv").read_text().splitlines()
        assert len(losses) == 1 + 2  # 2 images, 1 epoch, batch size 1
        fid_rows = (tmp_path / "metrics" / "fid.csv").read_text().splitlines()
        assert len(fid_rows) == 1 + 1

    def test_fid_row_per_epoch(self, tmp_path, prepared, capsys):
        cfg_path = write_config(tmp_path, prepared, epochs=2)
        assert main(["train", "--config", str(cfg_path)]) == 0
        fid_rows = (tmp_path / "metrics" / "fid.csv").read_text().splitlines()
        assert [r.split(",")[0] for r in fid_rows[1:]] == ["1", "2"]

    def test_set_override_beats_file(self, tmp_path, prepared, capsys):
        cfg_path = write_config(tmp_path, prepared, epochs=2)
        assert main(["train", "--config", str(cfg_path), "--set", "trainer.epochs=1"]) == 0
        assert "epoch=1 " in capsys.readouterr().out

    def test_unknown_config_key_exit_2(self, tmp_path, prepared, capsys):
        cfg_path = write_config(tmp_path, prepared)
        data = json.loads(cfg_path.read_text())
        data["trainer"]["warmup"] = 5
        cfg_path.write_text(json.dumps(data))
        assert main(["train", "--config", str(cfg_path)]) == 2
        assert "trainer.warmup" in capsys.readouterr().err

    def test_config_parse_error_exit_2_with_position(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text('{"seed": 0,\n "trainer": {}}}')
        assert main(["train", "--config", str(bad)]) == 2
        assert "line" in capsys.readouterr().err

    def test_missing_manifest_exit_2(self, tmp_path, capsys):
        corpus = write_corpus(tmp_path / "fresh")
        cfg_path = write_config(tmp_path, corpus)
        assert main(["train", "--config", str(cfg_path)]) == 2
        assert "prepare" in capsys.readouterr().err

    def test_lock_contention_exit_1(self, tmp_path, prepared, capsys):
        cfg_path = write_config(tmp_path, prepared)
        ckpts = tmp_path / "ckpts"
        ckpts.mkdir()
        (ckpts / ".lock").write_text("12345")
        assert main(["train", "--config", str(cfg_path)]) == 1
        assert "locked" in capsys.readouterr().err

    def test_resume_reproduces_uninterrupted_run(self, tmp_path, prepared, capsys):
        (tmp_path / "a").mkdir()
        (tmp_path / "b").mkdir()
        # continuous two-epoch run
        cfg_a = write_config(tmp_path / "a", prepared, epochs=2)
        assert main(["train", "--config", str(cfg_a)]) == 0
        full = (tmp_path / "a" / "metrics" / "losses.csv").read_text()

        # interrupted after one epoch, then resumed to two
        cfg_b1 = write_config(tmp_path / "b", prepared, epochs=1)
        assert main(["train", "--config", str(cfg_b1)]) == 0
        cfg_b2 = write_config(tmp_path / "b", prepared, epochs=2)
        resume_from = tmp_path / "b" / "ckpts" / "epoch_0001"
        assert main(["train", "--config", str(cfg_b2), "--resume", str(resume_from)]) == 0
        resumed = (tmp_path / "b" / "metrics" / "losses.csv").read_text()
        assert resumed == full

    def test_help_documents_every_config_key(self, capsys):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["train", "--help"])
        text = capsys.readouterr().out
        for key in _KEY_DOCS:
            assert key in text


@pytest.fixture()
def trained(tmp_path, prepared, capsys):
    cfg_path = write_config(tmp_path, prepared)
    assert main(["train", "--config", str(cfg_path)]) == 0
    capsys.readouterr()
    return SimpleNamespace(
        corpus=prepared,
        manifest=prepared / "manifest.json",
        checkpoint=tmp_path / "ckpts" / "epoch_0001",
    )


class TestEval:
    def test_prints_stable_value_and_appends_row(self, trained, capsys):
        args = [
            "eval",
            "--checkpoint", str(trained.checkpoint),
            "--manifest", str(trained.manifest),
            "--extractor", "pixel-projection",
            "--sample-size", "4",
        ]
        assert main(args) == 0
        first = capsys.readouterr().out
        assert main(args) == 0
        second = capsys.readouterr().out
        assert first == second
        float(first)  # bare number on stdout
        csv_path = trained.checkpoint.parent / "fid_eval.csv"
        rows = csv_path.read_text().splitlines()
        assert rows[0] == "epoch,fid"
        assert len(rows) == 3

    def test_identity_stub_prints_zero(self, tmp_path, capsys, monkeypatch):
        # a corpus whose images already carry the chroma border makes the
        # training input equal its target, so an identity generator is perfect
        root = tmp_path / "greens"
        root.mkdir()
        for i in range(3):
            bordered = make_training_pair(painting(i, 64)).input
            Image.fromarray(denormalize(bordered), mode="RGB").save(root / f"g{i}.png")
        assert main(["prepare", "--input-dir", str(root), "--size", "64"]) == 0
        capsys.readouterr()

        def identity(image):
            return image

        identity.cfg = SimpleNamespace(resolution=64)
        import artextend.cli as cli_mod

        monkeypatch.setattr(
            cli_mod, "_load_generator", lambda ck: SimpleNamespace(generator=identity, epoch=0)
        )
        args = [
            "eval",
            "--checkpoint", "ignored",
            "--manifest", str(root / "manifest.json"),
            "--extractor", "pixel-projection",
            "--sample-size", "3",
            "--out", str(tmp_path / "fid.csv"),
        ]
        assert main(args) == 0
        assert capsys.readouterr().out.strip() == "0.000000"

    def test_missing_inception_weights_exit_3(self, trained, capsys, monkeypatch):
        monkeypatch.delenv("ARTEXTEND_EXTRACTOR_WEIGHTS", raising=False)
        args = [
            "eval",
            "--checkpoint", str(trained.checkpoint),
            "--manifest", str(trained.manifest),
            "--extractor", "inception-pool3",
        ]
        assert main(args) == 3
        assert "ARTEXTEND_EXTRACTOR_WEIGHTS" in capsys.readouterr().err

    def test_resolution_mismatch_exit_2(self, trained, tmp_path, capsys):
        other = write_corpus(tmp_path / "other", n=2, size=128)
        assert main(["prepare", "--input-dir", str(other), "--size", "128"]) == 0
        capsys.readouterr()
        args = [
            "eval",
            "--checkpoint", str(trained.checkpoint),
            "--manifest", str(other / "manifest.json"),
            "--extractor", "pixel-projection",
        ]
        assert main(args) == 2


class TestExtend:
    def test_two_generations_files_listed(self, trained, tmp_path, capsys):
        out_dir = tmp_path / "series_out"
        args = [
            "extend",
            "--checkpoint", str(trained.checkpoint),
            "--image", str(trained.corpus / "p0.png"),
            "--generations", "2",
            "--out-dir", str(out_dir),
        ]
        assert main(args) == 0
        lines = capsys.readouterr().out.splitlines()
        assert [l.split("/")[-1] for l in lines] == [
            "gen_000.png", "gen_001.png", "gen_002.png", "series.png",
        ]
        assert out_dir.is_dir()
        with Image.open(out_dir / "gen_002.png") as im:
            assert im.size == (64, 64)

    def test_zero_generations_exit_2(self, trained, tmp_path, capsys):
        args = [
            "extend",
            "--checkpoint", str(trained.checkpoint),
            "--image", str(trained.corpus / "p0.png"),
            "--generations", "0",
            "--out-dir", str(tmp_path / "x"),
        ]
        assert main(args) == 2
        assert "generations must be >= 1" in capsys.readouterr().err

    def test_decode_failure_exit_2(self, trained, tmp_path, capsys):
        bad = tmp_path / "bad.png"
        bad.write_bytes(b"nonsense")
        args = [
            "extend",
            "--checkpoint", str(trained.checkpoint),
            "--image", str(bad),
            "--out-dir", str(tmp_path / "x"),
        ]
        assert main(args) == 2


class TestConfigModule:
    def test_defaults_reproduce_published_setup(self):
        cfg = run_config_from_dict({})
        assert cfg.corpus.resolution == 512
        train_cfg = cfg.train_config()
        assert train_cfg.lr == 2e-4
        assert train_cfg.beta1 == 0.5
        assert train_cfg.batch_size == 1
        assert train_cfg.epochs == 150
        assert train_cfg.fid_interval == 10
        gen_cfg = cfg.generator_config()
        assert gen_cfg.down_filters == (64, 128, 256, 512, 512, 512, 512, 512)
        assert gen_cfg.up_filters == (512, 512, 512, 512, 256, 128, 64)
        assert cfg.fid.extractor == "inception-pool3"

    def test_unknown_top_level_key(self):
        with pytest.raises(Exception, match="unknown config key momentum"):
            run_config_from_dict({"momentum": 0.9})

    def test_weights_env_override(self, tmp_path, monkeypatch):
        path = tmp_path / "cfg.json"
        path.write_text('{"fid": {"extractor_weights": "from_file.pth"}}')
        monkeypatch.setenv("ARTEXTEND_EXTRACTOR_WEIGHTS", "/from/env.pth")
        cfg = load_run_config(path)
        assert cfg.fid.extractor_weights == "/from/env.pth"

    def test_partial_filter_override_rejected(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"architecture": {"down_filters": [8, 16]}}))
        cfg = load_run_config(path)
        with pytest.raises(Exception, match="together"):
            cfg.generator_config()
