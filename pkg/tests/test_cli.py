"""Tests for the command-line interface."""

import json

import pytest

from automap.cli import main
from automap.config import TrainConfig
from automap.datasets import build_dataset, load_corpus_file, save_corpus, synth_corpus
from automap.encoders import make_encoding
from automap.network import NetParams, load_checkpoint, save_checkpoint
from automap.training import checkpoint_metadata


def _cli(*argv):
    return main([str(a) for a in argv])


def _gen(path, n=8, count=4, seed=1):
    return _cli("gen-data", "--count", count, "--n", n, "--seed", seed, "--out", path)


@pytest.fixture
def corpus_file(tmp_path):
    """A four-image 8x8 corpus on disk."""
    path = tmp_path / "train.amcp"
    assert _gen(path) == 0
    return path


@pytest.fixture
def cartesian_ckpt(tmp_path, corpus_file):
    """A checkpoint trained for one epoch on the Cartesian encoding."""
    path = tmp_path / "model.amap"
    code = _cli("train", "--corpus", corpus_file, "--epochs", 1, "--out-ckpt", path)
    assert code == 0
    return path


class TestGenData:
    """Test corpus generation."""

    def test_deterministic(self, tmp_path):
        """Test the same seed writes identical files."""
        assert _gen(tmp_path / "a.amcp") == 0
        assert _gen(tmp_path / "b.amcp") == 0
        assert (tmp_path / "a.amcp").read_bytes() == (tmp_path / "b.amcp").read_bytes()
        assert len(load_corpus_file(tmp_path / "a.amcp")) == 4

    def test_manifest(self, tmp_path):
        """Test a successful run records its status and versions."""
        _gen(tmp_path / "a.amcp")
        manifest = json.loads((tmp_path / "a.amcp.manifest.json").read_text())
        assert manifest["status"] == "ok"
        assert manifest["seed"] == 1
        assert manifest["error"] is None
        assert "numpy" in manifest["versions"]

    def test_missing_out(self):
        """Test a missing required flag is a usage error."""
        assert _cli("gen-data", "--count", 2) == 2

    def test_zero_count(self, tmp_path):
        """Test --count 0 fails and the manifest records it."""
        path = tmp_path / "a.amcp"
        assert _cli("gen-data", "--count", 0, "--out", path) == 2
        manifest = json.loads((tmp_path / "a.amcp.manifest.json").read_text())
        assert manifest["status"] == "failed"
        assert manifest["error"]["exit_code"] == 2
        assert not path.exists()

    def test_pgm_needs_source(self, tmp_path):
        """Test --kind pgm without --source."""
        assert _cli("gen-data", "--kind", "pgm", "--out", tmp_path / "a.amcp") == 2

    def test_bad_threads(self, tmp_path):
        """Test --threads must be positive."""
        assert _cli("--threads", 0, "gen-data", "--out", tmp_path / "a.amcp") == 2


class TestTrain:
    """Test the train command."""

    def test_writes_checkpoint_and_history(self, cartesian_ckpt):
        """Test the checkpoint, history and manifest with the default learning rate."""
        params, metadata = load_checkpoint(cartesian_ckpt)
        assert params.n == 8 and params.d_in == 128
        assert metadata["encoding"]["kind"] == "cartesian"
        history = cartesian_ckpt.with_name("model.history.csv").read_text().splitlines()
        assert history[0] == "epoch,mean_loss"
        assert len(history) == 2
        manifest = json.loads(cartesian_ckpt.with_name("model.amap.manifest.json").read_text())
        assert manifest["config"]["learning_rate"] == 2e-5
        assert manifest["config"]["epochs"] == 1

    def test_phase_on_radon(self, tmp_path, corpus_file):
        """Test phase modulation of a real-valued encoding is rejected."""
        code = _cli(
            "train",
            "--corpus",
            corpus_file,
            "--encoding",
            "radon",
            "--phase-seed",
            1,
            "--epochs",
            1,
            "--out-ckpt",
            tmp_path / "r.amap",
        )
        assert code == 2

    def test_n_mismatch(self, tmp_path, corpus_file):
        """Test --n must match the corpus."""
        code = _cli("train", "--corpus", corpus_file, "--n", 16, "--out-ckpt", tmp_path / "m.amap")
        assert code == 2

    def test_missing_corpus(self, tmp_path):
        """Test an unreadable corpus is an I/O error."""
        code = _cli("train", "--corpus", tmp_path / "none.amcp", "--out-ckpt", tmp_path / "m.amap")
        assert code == 3

    def test_config_file(self, tmp_path, corpus_file):
        """Test flags override the config file."""
        cfg = tmp_path / "cfg.json"
        cfg.write_text('{"epochs": 5, "batch_size": 2, "seed": 4}')
        code = _cli(
            "train",
            "--corpus",
            corpus_file,
            "--config",
            cfg,
            "--epochs",
            1,
            "--out-ckpt",
            tmp_path / "m.amap",
        )
        assert code == 0
        manifest = json.loads((tmp_path / "m.amap.manifest.json").read_text())
        assert manifest["config"]["epochs"] == 1
        assert manifest["config"]["batch_size"] == 2
        assert manifest["seed"] == 4


class TestEvaluate:
    """Test the evaluate command."""

    def test_writes_report(self, tmp_path, cartesian_ckpt):
        """Test metrics and report land in the experiment folder."""
        test_file = tmp_path / "test.amcp"
        _gen(test_file, seed=2)
        out = tmp_path / "eval"
        code = _cli(
            "evaluate", "--ckpt", cartesian_ckpt, "--test-corpus", test_file, "--out-dir", out
        )
        assert code == 0
        lines = (out / "cartesian" / "metrics.csv").read_text().splitlines()
        assert lines[0] == "image_id,method,rmse,psnr_db"
        assert len(lines) == 1 + 4 * 2
        assert (out / "cartesian" / "img0000.truth.pgm").exists()
        assert json.loads((out / "manifest.json").read_text())["status"] == "ok"

    def test_side_mismatch(self, tmp_path, cartesian_ckpt):
        """Test a test corpus of another side length is an artifact mismatch."""
        test_file = tmp_path / "test16.amcp"
        _gen(test_file, n=16, seed=2)
        code = _cli(
            "evaluate", "--ckpt", cartesian_ckpt, "--test-corpus", test_file, "--out-dir", tmp_path
        )
        assert code == 5

    def test_unknown_baseline(self, tmp_path, cartesian_ckpt, corpus_file):
        """Test an unknown baseline choice is rejected by the parser."""
        code = _cli(
            "evaluate",
            "--ckpt",
            cartesian_ckpt,
            "--test-corpus",
            corpus_file,
            "--baseline",
            "sart",
            "--out-dir",
            tmp_path / "e",
        )
        assert code == 2


class TestAnalyze:
    """Test the analyze command."""

    def test_zero_checkpoint(self, tmp_path, corpus_file):
        """Test a zero network reports full sparsity."""
        dataset = build_dataset(load_corpus_file(corpus_file), make_encoding("cartesian", 8))
        ckpt = save_checkpoint(
            tmp_path / "zero.amap",
            NetParams.zeros(128, 8),
            checkpoint_metadata(dataset, TrainConfig(), 0),
        )
        out = tmp_path / "analysis"
        code = _cli(
            "analyze", "--ckpt", ckpt, "--inputs", corpus_file, "--no-kernels", "--out-dir", out
        )
        assert code == 0
        stats = json.loads((out / "stats.json").read_text())
        assert stats["sparsity_fraction"] == 1.0
        assert stats["total"] == 4 * 64
        assert not (out / "kernels").exists()

    def test_corrupt_checkpoint(self, tmp_path, corpus_file):
        """Test a file that is not a checkpoint is an artifact mismatch."""
        ckpt = tmp_path / "bad.amap"
        ckpt.write_bytes(b"NOPE" + bytes(32))
        code = _cli("analyze", "--ckpt", ckpt, "--inputs", corpus_file, "--out-dir", tmp_path / "a")
        assert code == 5


class TestBaseline:
    """Test the baseline command."""

    def test_zero_fill(self, tmp_path):
        """Test a Poisson-disc zero-filled reconstruction of a corpus."""
        corpus_path = save_corpus(synth_corpus(2, 16, seed=1), tmp_path / "c.amcp")
        out = tmp_path / "bl"
        code = _cli(
            "baseline",
            "--method",
            "auto",
            "--corpus",
            corpus_path,
            "--encoding",
            "poisson",
            "--encoding-seed",
            3,
            "--out-dir",
            out,
        )
        assert code == 0
        assert (out / "img0000.zerofill.pgm").exists()
        assert (out / "baseline.csv").exists()

    def test_needs_encoding(self, tmp_path, corpus_file):
        """Test an encoding or checkpoint is required."""
        out = tmp_path / "b"
        code = _cli("baseline", "--method", "ifft", "--corpus", corpus_file, "--out-dir", out)
        assert code == 2

    def test_unknown_method(self, tmp_path, corpus_file):
        """Test unknown methods are rejected by the parser."""
        out = tmp_path / "b"
        code = _cli("baseline", "--method", "sart", "--corpus", corpus_file, "--out-dir", out)
        assert code == 2


class TestRun:
    """Test the run command."""

    def test_script(self, tmp_path):
        """Test a pipeline script trains and saves a network."""
        script = tmp_path / "exp.amp"
        script.write_text(
            'corpus(count=4, n=8, seed=1)\ntrain(encoding="cartesian")\nsave(name="net")\n'
        )
        out = tmp_path / "run"
        code = _cli("run", "--script", script, "--epochs", 1, "--batch-size", 2, "--out-dir", out)
        assert code == 0
        params, metadata = load_checkpoint(out / "net.amap")
        assert metadata["config"]["batch_size"] == 2
        assert params.n == 8

    def test_bad_script(self, tmp_path):
        """Test a syntax error is a usage error."""
        script = tmp_path / "exp.amp"
        script.write_text("corpus(")
        assert _cli("run", "--script", script, "--out-dir", tmp_path / "run") == 2

    def test_missing_script(self, tmp_path):
        """Test an unreadable script is an I/O error."""
        assert _cli("run", "--script", tmp_path / "none", "--out-dir", tmp_path / "run") == 3
