"""Command-line interface: ``automap <command> [options]``.

Exit codes: 0 success, 2 usage or configuration error, 3 I/O error,
4 numeric abort, 5 artifact mismatch.
"""

import argparse
import logging
import sys
import time
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import lark
import numpy as np
import scipy
import tqdm

from automap.analysis import DEFAULT_TAU, analyze_network
from automap.artifacts import atomic_write_text, dumps_json
from automap.baselines import DEFAULT_SWEEPS, METHODS
from automap.config import TrainConfig, load_config
from automap.datasets import (
    TARGET_MODES,
    build_dataset,
    load_corpus,
    load_corpus_file,
    noise_corpus,
    save_corpus,
    synth_corpus,
)
from automap.encoders import KIND_ALIASES, KINDS, encoding_from_dict, make_encoding
from automap.errors import AutomapError, NumericError, UsageError
from automap.evaluation import NOISE_FOR_KIND, baseline_corpus, evaluate_checkpoint, parse_snr
from automap.network import load_checkpoint, save_checkpoint
from automap.pipeline import PipelineRunner
from automap.rng import derive_rng
from automap.training import checkpoint_metadata, train, write_history_csv
from automap.version import __version__

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
IO_EXIT_CODE = 3


@dataclass
class RunManifest:
    """Self-description of one command invocation."""

    command: list[str]
    out: str
    seed: int | None = None
    config: dict[str, Any] = field(default_factory=dict)
    versions: dict[str, str] = field(default_factory=dict)
    duration_s: float = 0.0
    status: str = "running"
    error: dict[str, Any] | None = None

    def fail(self, err: BaseException, exit_code: int) -> None:
        self.status = "failed"
        self.error = {"type": type(err).__name__, "message": str(err), "exit_code": exit_code}
        if isinstance(err, NumericError):
            self.error.update({"layer": err.layer, "epoch": err.epoch, "batch": err.batch})

    def to_dict(self) -> dict[str, Any]:
        return {
            "command": self.command,
            "out": self.out,
            "seed": self.seed,
            "config": self.config,
            "versions": self.versions,
            "duration_s": self.duration_s,
            "status": self.status,
            "error": self.error,
        }


def component_versions() -> dict[str, str]:
    return {
        "automap": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "lark": lark.__version__,
        "tqdm": tqdm.__version__,
        "python": sys.version.split()[0],
    }


def _manifest_path(out: Path, is_dir: bool) -> Path:
    return out / "manifest.json" if is_dir else out.with_name(out.name + ".manifest.json")


def _resolve_config(args: argparse.Namespace) -> TrainConfig:
    """Defaults < --config file < explicit flags."""
    cfg = load_config(args.config) if getattr(args, "config", None) else TrainConfig()
    return cfg.override(
        seed=getattr(args, "seed", None),
        epochs=getattr(args, "epochs", None),
        batch_size=getattr(args, "batch_size", None),
        learning_rate=getattr(args, "learning_rate", None),
        lambda_l1=getattr(args, "lambda_l1", None),
        mult_noise=getattr(args, "mult_noise", None),
        checkpoint_every=getattr(args, "checkpoint_every", None),
    )


def cmd_gen_data(args: argparse.Namespace, manifest: RunManifest) -> None:
    if args.count < 1:
        raise UsageError(f"--count must be >= 1, got {args.count}")
    manifest.seed = args.seed
    if args.kind == "synth":
        corpus = synth_corpus(args.count, args.n, args.seed)
    elif args.kind == "noise":
        corpus = noise_corpus(args.count, args.n, args.seed)
    else:
        if args.source is None:
            raise UsageError("--kind pgm needs --source DIR")
        corpus = load_corpus(args.source, args.n)
    save_corpus(corpus, args.out)


def cmd_train(args: argparse.Namespace, manifest: RunManifest) -> None:
    cfg = _resolve_config(args)
    manifest.seed = cfg.seed
    manifest.config = cfg.to_dict()
    corpus = load_corpus_file(args.corpus)
    if args.n is not None and args.n != corpus.n:
        raise UsageError(f"--n {args.n} does not match corpus n={corpus.n}")
    encoding = make_encoding(args.encoding, corpus.n, seed=cfg.seed, fraction=args.fraction)
    shift_rng = derive_rng(cfg.seed, "misalignment") if encoding.kind == "misaligned" else None
    dataset = build_dataset(corpus, encoding, args.target, args.phase_seed, shift_rng)
    out = Path(args.out_ckpt)
    params, history = train(
        dataset,
        cfg,
        checkpoint_dir=out.parent / f"{out.stem}_epochs",
        workers=args.threads,
        progress=args.progress,
    )
    save_checkpoint(out, params, checkpoint_metadata(dataset, cfg, cfg.epochs))
    write_history_csv(history, out.with_name(out.stem + ".history.csv"))


def cmd_evaluate(args: argparse.Namespace, manifest: RunManifest) -> None:
    manifest.seed = args.seed
    params, metadata = load_checkpoint(args.ckpt)
    manifest.config = dict(metadata.get("config", {}))
    corpus = load_corpus_file(args.test_corpus)
    kind = metadata.get("encoding", {}).get("kind", "cartesian")
    snr = NOISE_FOR_KIND.get(kind) if args.snr_db == "auto" else parse_snr(args.snr_db)
    evaluate_checkpoint(
        params,
        metadata,
        corpus,
        snr,
        args.out_dir,
        seed=args.seed,
        experiment=args.experiment,
        baseline=args.baseline,
        sweeps=args.sweeps,
        progress=args.progress,
    )


def cmd_analyze(args: argparse.Namespace, manifest: RunManifest) -> None:
    manifest.seed = args.seed
    params, metadata = load_checkpoint(args.ckpt)
    manifest.config = dict(metadata.get("config", {}))
    corpus = load_corpus_file(args.inputs)
    analyze_network(
        params,
        metadata,
        corpus,
        args.out_dir,
        tau=args.tau,
        seed=args.seed,
        kernels=not args.no_kernels,
    )


def cmd_baseline(args: argparse.Namespace, manifest: RunManifest) -> None:
    manifest.seed = args.seed
    corpus = load_corpus_file(args.corpus)
    if args.ckpt is not None:
        _, metadata = load_checkpoint(args.ckpt)
        encoding = encoding_from_dict(metadata["encoding"])
    elif args.encoding is not None:
        encoding = make_encoding(args.encoding, corpus.n, seed=args.encoding_seed)
    else:
        raise UsageError("baseline needs --encoding or --ckpt")
    baseline_corpus(
        args.method, encoding, corpus, args.out_dir, args.snr_db, seed=args.seed, sweeps=args.sweeps
    )


def cmd_run(args: argparse.Namespace, manifest: RunManifest) -> None:
    cfg = _resolve_config(args)
    manifest.seed = cfg.seed
    manifest.config = cfg.to_dict()
    try:
        script = Path(args.script).read_text(encoding="utf-8")
    except OSError as err:
        raise OSError(f"Cannot read pipeline script {args.script}: {err}") from err
    runner = PipelineRunner(args.out_dir, cfg, workers=args.threads, progress=args.progress)
    runner.run(script)


def _add_training_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON, YAML or TOML training config")
    parser.add_argument("--seed", type=int, help="Master seed (overrides config)")
    parser.add_argument("--epochs", type=int, help="Training epochs (overrides config)")
    parser.add_argument("--batch-size", type=int, help="Minibatch size (overrides config)")
    parser.add_argument("--learning-rate", type=float, help="RMSProp step size (overrides config)")
    parser.add_argument("--lambda-l1", type=float, help="L1 weight on C2 activations")
    parser.add_argument("--mult-noise", type=float, help="Multiplicative input corruption level")
    parser.add_argument("--checkpoint-every", type=int, help="Checkpoint every N epochs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="automap",
        description="Learned sensor-to-image reconstruction experiments.",
        epilog="Exit codes: 0 ok, 2 usage, 3 I/O, 4 numeric abort, 5 artifact mismatch.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "--log-level",
        default="INFO",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logging verbosity (default: INFO)",
    )
    parser.add_argument("--progress", action="store_true", help="Show progress bars")
    parser.add_argument("--threads", type=int, default=1, help="Worker threads (default: 1)")
    sub = parser.add_subparsers(dest="command", required=True)
    kinds = sorted(set(KINDS) | set(KIND_ALIASES))

    gen = sub.add_parser("gen-data", help="Create a corpus file")
    gen.add_argument("--kind", choices=["synth", "noise", "pgm"], default="synth")
    gen.add_argument("--count", type=int, default=64, help="Images to synthesize")
    gen.add_argument("--n", type=int, default=16, help="Image side length")
    gen.add_argument("--seed", type=int, default=0, help="Corpus seed")
    gen.add_argument("--source", help="Directory of PGM files for --kind pgm")
    gen.add_argument("--out", required=True, help="Output corpus file")
    gen.set_defaults(handler=cmd_gen_data, out_attr="out", out_is_dir=False)

    tr = sub.add_parser("train", help="Train a network on an encoded corpus")
    tr.add_argument("--corpus", required=True, help="Corpus file from gen-data")
    tr.add_argument("--encoding", choices=kinds, default="cartesian")
    tr.add_argument("--n", type=int, help="Expected image side (checked against the corpus)")
    tr.add_argument("--fraction", type=float, default=0.4, help="Poisson-disc sampling fraction")
    tr.add_argument("--phase-seed", type=int, help="Modulate images with synthetic phase maps")
    tr.add_argument("--target", choices=TARGET_MODES, default="magnitude")
    _add_training_flags(tr)
    tr.add_argument("--out-ckpt", required=True, help="Checkpoint file to write")
    tr.set_defaults(handler=cmd_train, out_attr="out_ckpt", out_is_dir=False)

    ev = sub.add_parser("evaluate", help="Evaluate a checkpoint on held-out images")
    ev.add_argument("--ckpt", required=True)
    ev.add_argument("--test-corpus", required=True)
    ev.add_argument("--snr-db", default="auto", help='dB value, "clean" or "auto" (default)')
    ev.add_argument("--baseline", choices=["auto", "none", *METHODS], default="auto")
    ev.add_argument("--sweeps", type=int, default=DEFAULT_SWEEPS, help="ART sweeps")
    ev.add_argument("--seed", type=int, default=0, help="Noise and misalignment seed")
    ev.add_argument("--experiment", help="Experiment folder name (default: encoding kind)")
    ev.add_argument("--out-dir", required=True)
    ev.set_defaults(handler=cmd_evaluate, out_attr="out_dir", out_is_dir=True)

    an = sub.add_parser("analyze", help="Activation statistics and weight export")
    an.add_argument("--ckpt", required=True)
    an.add_argument("--inputs", required=True, help="Corpus file whose encodings are analyzed")
    an.add_argument("--tau", type=float, default=DEFAULT_TAU, help="Sparsity threshold")
    an.add_argument("--seed", type=int, default=0)
    an.add_argument("--no-kernels", action="store_true", help="Skip the kernel gallery")
    an.add_argument("--out-dir", required=True)
    an.set_defaults(handler=cmd_analyze, out_attr="out_dir", out_is_dir=True)

    bl = sub.add_parser("baseline", help="Conventional reconstruction of a corpus")
    bl.add_argument("--method", choices=["auto", *METHODS], required=True)
    bl.add_argument("--corpus", required=True)
    bl.add_argument("--encoding", choices=kinds, help="Encoding to simulate")
    bl.add_argument("--encoding-seed", type=int, default=0, help="Seed of the encoding geometry")
    bl.add_argument("--ckpt", help="Take the encoding from this checkpoint instead")
    bl.add_argument("--snr-db", default="clean", help='dB value or "clean" (default)')
    bl.add_argument("--sweeps", type=int, default=DEFAULT_SWEEPS, help="ART sweeps")
    bl.add_argument("--seed", type=int, default=0)
    bl.add_argument("--out-dir", required=True)
    bl.set_defaults(handler=cmd_baseline, out_attr="out_dir", out_is_dir=True)

    run = sub.add_parser("run", help="Execute a pipeline script")
    run.add_argument("--script", required=True)
    _add_training_flags(run)
    run.add_argument("--out-dir", required=True)
    run.set_defaults(handler=cmd_run, out_attr="out_dir", out_is_dir=True)
    return parser


def setup_logging(level: str) -> None:
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)


def main(argv: list[str] | None = None) -> int:
    """Entry point; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    setup_logging(args.log_level)

    out = Path(getattr(args, args.out_attr))
    manifest = RunManifest(
        command=["automap", *(sys.argv[1:] if argv is None else argv)],
        out=str(out),
        versions=component_versions(),
    )
    handler: Callable[[argparse.Namespace, RunManifest], None] = args.handler
    start = time.perf_counter()
    exit_code = 0
    try:
        if args.threads < 1:
            raise UsageError(f"--threads must be >= 1, got {args.threads}")
        handler(args, manifest)
        manifest.status = "ok"
    except AutomapError as err:
        exit_code = err.exit_code
        manifest.fail(err, exit_code)
        logger.error("%s", err)
    except OSError as err:
        exit_code = IO_EXIT_CODE
        manifest.fail(err, exit_code)
        logger.error("%s", err)
    finally:
        manifest.duration_s = time.perf_counter() - start
        try:
            atomic_write_text(_manifest_path(out, args.out_is_dir), dumps_json(manifest.to_dict()))
        except OSError as err:
            logger.error("Cannot write manifest: %s", err)
            exit_code = exit_code or IO_EXIT_CODE
    return exit_code


if __name__ == "__main__":
    sys.exit(main())
