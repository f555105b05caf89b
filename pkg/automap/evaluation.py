"""Sensor noise, image metrics and the per-encoding experiment harness.

Every experiment writes into ``{out_dir}/{experiment}/``:

    automap.amap            trained checkpoint (run_experiment only)
    history.csv             epoch,mean_loss (run_experiment only)
    metrics.csv             image_id,method,rmse,psnr_db
    report.json             summary validated against REPORT_SCHEMA
    {image_id}.{method}.pgm reconstructions (plus .f64 sidecars) and truth

run_phase_experiment writes ``phase/`` (real, imag and clean magnitude networks plus
phase_report.json) and run_sparsity_experiment writes ``sparsity/`` (structured and noise
networks plus sparsity_report.json).
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from tqdm import tqdm

from automap.analysis import (
    DEFAULT_TAU,
    ActivationStats,
    capture_stats,
    encode_inputs,
    stats_to_dict,
)
from automap.artifacts import atomic_write_text, dumps_json
from automap.baselines import (
    BASELINE_FOR_KIND,
    DEFAULT_SWEEPS,
    METHODS,
    BaselineResult,
    run_baseline,
)
from automap.config import TrainConfig
from automap.datasets import Corpus, build_dataset, noise_corpus, synth_corpus
from automap.encoders import (
    EncodingOperator,
    SensorVec,
    apply_phase,
    encode,
    encoding_from_dict,
    make_encoding,
    sensor_layout,
    synthesize_phase_map,
)
from automap.errors import (
    ArtifactMismatchError,
    ConfigurationError,
    DegenerateSignalError,
    DimensionError,
    UsageError,
)
from automap.imageio import write_image_with_sidecar
from automap.network import NetParams, combine_complex_outputs, forward, save_checkpoint
from automap.rng import derive_rng
from automap.training import checkpoint_metadata, train, write_history_csv

logger = logging.getLogger(__name__)

CLEAN = "clean"

# sensor-domain SNR (dB) used for each encoding's experiment; None is noise-free
NOISE_FOR_KIND: dict[str, float | None] = {
    "radon": 40.0,
    "spiral": 25.0,
    "poisson_disc": 30.0,
    "misaligned": None,
    "cartesian": None,
}

PHASE_MAGNITUDE_FLOOR = 0.2

REPORT_SCHEMA: dict[str, tuple[type, ...]] = {
    "experiment": (str,),
    "kind": (str,),
    "n": (int,),
    "snr_db": (str, float, int),
    "count": (int,),
    "methods": (dict,),
    "metrics_csv": (str,),
    "images": (list,),
    "seeds": (dict,),
    "config": (dict,),
}

_SUMMARY_KEYS = ("rmse_mean", "rmse_std", "psnr_db_mean", "psnr_db_std")


@dataclass(frozen=True)
class Metrics:
    """Reconstruction error of one image."""

    rmse: float
    psnr_db: float
    method: str = ""
    snr_db: float | str = CLEAN


@dataclass
class ExperimentReport:
    """Per-method metrics over a test set plus the artifacts that were written."""

    experiment: str
    kind: str
    n: int
    snr_db: float | str
    metrics: dict[str, list[Metrics]] = field(default_factory=dict)
    images: list[str] = field(default_factory=list)
    metrics_csv: str = ""
    seeds: dict[str, int] = field(default_factory=dict)
    config: dict[str, Any] = field(default_factory=dict)

    @property
    def methods(self) -> list[str]:
        return list(self.metrics)

    def mean_rmse(self, method: str) -> float:
        return float(np.mean([m.rmse for m in self.metrics[method]]))

    def summary(self, method: str) -> dict[str, float]:
        rmse = np.array([m.rmse for m in self.metrics[method]])
        psnr = np.array([m.psnr_db for m in self.metrics[method]])
        return {
            "rmse_mean": float(rmse.mean()),
            "rmse_std": float(rmse.std()),
            "psnr_db_mean": float(psnr.mean()),
            "psnr_db_std": float(psnr.std()) if np.all(np.isfinite(psnr)) else float("nan"),
        }

    def to_dict(self) -> dict[str, Any]:
        count = len(next(iter(self.metrics.values()), []))
        return {
            "experiment": self.experiment,
            "kind": self.kind,
            "n": self.n,
            "snr_db": self.snr_db,
            "count": count,
            "methods": {
                m: {k: _json_float(v) for k, v in self.summary(m).items()} for m in self.metrics
            },
            "metrics_csv": self.metrics_csv,
            "images": list(self.images),
            "seeds": dict(self.seeds),
            "config": dict(self.config),
        }


def _json_float(value: float) -> float | str:
    """Non-finite floats become the strings "inf", "-inf" and "nan"."""
    if math.isfinite(value):
        return value
    return str(value)


def validate_report(obj: dict[str, Any]) -> None:
    """
    Check a report dict against REPORT_SCHEMA.

    Raises:
        ArtifactMismatchError: On a missing key or a wrongly typed value
    """
    if not isinstance(obj, dict):
        raise ArtifactMismatchError(f"Report must be a JSON object, got {type(obj).__name__}")
    for key, types in REPORT_SCHEMA.items():
        if key not in obj:
            raise ArtifactMismatchError(f"Report is missing key {key!r}")
        if isinstance(obj[key], bool) or not isinstance(obj[key], types):
            raise ArtifactMismatchError(f"Report key {key!r} has type {type(obj[key]).__name__}")
    for method, summary in obj["methods"].items():
        if method != "automap" and method not in METHODS:
            raise ArtifactMismatchError(f"Report lists unknown method {method!r}")
        for key in _SUMMARY_KEYS:
            value = summary.get(key) if isinstance(summary, dict) else None
            if not isinstance(value, int | float | str) or isinstance(value, bool):
                raise ArtifactMismatchError(f"Report method {method!r} lacks numeric {key!r}")


def parse_snr(value: str | float | None) -> float | None:
    """CLI/pipeline form of an SNR: a number of dB, or "clean"/None for no noise."""
    if value is None or value == CLEAN:
        return None
    try:
        snr = float(value)
    except (TypeError, ValueError) as err:
        raise ConfigurationError(f"SNR must be a number of dB or {CLEAN!r}, got {value!r}") from err
    if not math.isfinite(snr):
        raise ConfigurationError(f"SNR must be finite, got {value!r}")
    return snr


def add_awgn_snr(sv: SensorVec, snr_db: float | str | None, rng: np.random.Generator) -> SensorVec:
    """
    Add white Gaussian noise at a target signal-to-noise ratio.

    Signal power is the mean square over the whole real vector (real and imaginary
    parts pooled); each element gets i.i.d. N(0, P_s / 10^(snr_db/10)) noise.

    Args:
        sv: Clean sensor vector
        snr_db: Target SNR in dB, or "clean"/None to return sv unchanged
        rng: Noise generator

    Raises:
        DegenerateSignalError: If sv is all zeros and a finite SNR is requested
    """
    snr = parse_snr(snr_db)
    if snr is None:
        return sv
    power = float(np.mean(sv.values**2))
    if power == 0.0:
        raise DegenerateSignalError("Cannot add noise at a finite SNR to an all-zero signal")
    sigma = math.sqrt(power / 10.0 ** (snr / 10.0))
    return sv.with_values(sv.values + rng.normal(0.0, sigma, size=sv.values.shape))


def compute_metrics(
    recon: np.ndarray, truth: np.ndarray, method: str = "", snr_db: float | str = CLEAN
) -> Metrics:
    """RMSE and PSNR against peak 1.0; a perfect match has psnr +inf."""
    recon = np.asarray(recon, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if recon.shape != truth.shape:
        raise DimensionError(f"Reconstruction shape {recon.shape} does not match truth {truth.shape}")
    rmse = float(np.sqrt(np.mean((recon - truth) ** 2)))
    psnr = math.inf if rmse == 0.0 else 20.0 * math.log10(1.0 / rmse)
    return Metrics(rmse, psnr, method, snr_db)


def wrapped_phase_error(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Absolute phase difference wrapped to [0, pi]."""
    return np.abs(np.angle(np.exp(1j * (np.asarray(a) - np.asarray(b)))))


def automap_recon(p: NetParams, sensor_scale: float, sv: SensorVec) -> np.ndarray:
    """Network reconstruction of one sensor vector, applying the training input scale."""
    if sv.values.size != p.d_in:
        raise DimensionError(f"Sensor vector length {sv.values.size} does not match d_in={p.d_in}")
    output, _ = forward(p, sv.values / sensor_scale)
    return output.reshape(p.n, p.n)


def _check_compatible(p: NetParams, encoding: EncodingOperator, corpus: Corpus) -> None:
    if not (p.n == encoding.n == corpus.n):
        raise ArtifactMismatchError(
            f"Side-length mismatch: checkpoint n={p.n}, encoding n={encoding.n}, corpus n={corpus.n}"
        )
    if sensor_layout(encoding).length != p.d_in:
        raise ArtifactMismatchError(
            f"Checkpoint d_in={p.d_in} does not match the {encoding.kind} layout "
            f"length {sensor_layout(encoding).length}"
        )


def _write_metrics_csv(path: Path, rows: list[tuple[str, Metrics]]) -> Path:
    lines = ["image_id,method,rmse,psnr_db"]
    lines.extend(f"{image_id},{m.method},{m.rmse!r},{m.psnr_db!r}" for image_id, m in rows)
    return atomic_write_text(path, "\n".join(lines) + "\n")


def evaluate_checkpoint(
    params: NetParams,
    metadata: dict[str, Any],
    test_corpus: Corpus,
    snr_db: float | str | None,
    out_dir: str | Path,
    seed: int = 0,
    experiment: str | None = None,
    baseline: str = "auto",
    sweeps: int = DEFAULT_SWEEPS,
    progress: bool = False,
    seeds: dict[str, int] | None = None,
) -> ExperimentReport:
    """
    Evaluate a trained magnitude network and a baseline on held-out images.

    Args:
        params: Trained network
        metadata: Checkpoint metadata (encoding, sensor_scale, target_mode, ...)
        test_corpus: Held-out images
        snr_db: Sensor noise level, or "clean"/None
        out_dir: Parent directory of the experiment folder
        seed: Seed of the per-image noise and misalignment streams
        experiment: Folder name; defaults to the encoding kind
        baseline: "auto" for the encoding's paired method, "none", or a method name
        sweeps: ART sweeps
        progress: Show a tqdm bar over test images
        seeds: Extra seeds recorded in the report

    Returns:
        ExperimentReport; metrics.csv and report.json are written atomically
    """
    try:
        encoding = encoding_from_dict(metadata["encoding"])
        sensor_scale = float(metadata["sensor_scale"])
    except (KeyError, TypeError, ValueError, ConfigurationError) as err:
        raise ArtifactMismatchError(f"Checkpoint metadata is incomplete: {err}") from err
    if metadata.get("target_mode", "magnitude") != "magnitude":
        raise UsageError("evaluate_checkpoint compares magnitude networks; use run_phase_experiment")
    _check_compatible(params, encoding, test_corpus)
    method = BASELINE_FOR_KIND[encoding.kind] if baseline == "auto" else baseline
    if method != "none" and method not in METHODS:
        raise UsageError(f"Unknown baseline method: {method}; expected one of {', '.join(METHODS)}")

    snr = parse_snr(snr_db)
    snr_tag: float | str = CLEAN if snr is None else snr
    name = experiment or encoding.kind
    folder = Path(out_dir) / name
    report = ExperimentReport(
        name,
        encoding.kind,
        encoding.n,
        snr_tag,
        seeds={"eval": seed, "train": int(metadata.get("seed", 0)), **(seeds or {})},
        config=dict(metadata.get("config", {})),
    )
    methods = ["automap"] + ([] if method == "none" else [method])
    for m in methods:
        report.metrics[m] = []
    rows: list[tuple[str, Metrics]] = []

    for index in tqdm(range(len(test_corpus)), desc=name, disable=not progress):
        image_id = f"img{index:04d}"
        img = test_corpus.images[index]
        truth = np.abs(img)
        shift_rng = derive_rng(seed, "misalignment", index)
        sv = encode(encoding, img, None, shift_rng if encoding.kind == "misaligned" else None)
        sv = add_awgn_snr(sv, snr, derive_rng(seed, "awgn", index))
        recons = {"automap": automap_recon(params, sensor_scale, sv)}
        if method != "none":
            # baselines return magnitudes except ART, which is compared in magnitude too
            recons[method] = np.abs(run_baseline(method, sv, encoding, sweeps).image)
        pgm, _ = write_image_with_sidecar(folder / f"{image_id}.truth.pgm", truth)
        report.images.append(str(pgm))
        for m in methods:
            metrics = compute_metrics(recons[m], truth, m, snr_tag)
            report.metrics[m].append(metrics)
            rows.append((image_id, metrics))
            pgm, _ = write_image_with_sidecar(folder / f"{image_id}.{m}.pgm", recons[m])
            report.images.append(str(pgm))

    report.metrics_csv = str(_write_metrics_csv(folder / "metrics.csv", rows))
    payload = report.to_dict()
    validate_report(payload)
    atomic_write_text(folder / "report.json", dumps_json(payload) + "\n")
    for m in methods:
        logger.info("%s %s: mean rmse %.6g", name, m, report.mean_rmse(m))
    return report


def run_experiment(
    kind: str,
    n: int,
    train_corpus_seed: int,
    test_corpus_seed: int,
    cfg: TrainConfig,
    out_dir: str | Path,
    train_count: int = 512,
    snr_db: float | str | None = "auto",
    train_corpus: Corpus | None = None,
    workers: int = 1,
    progress: bool = False,
) -> ExperimentReport:
    """
    Train AUTOMAP for one encoding and compare it with the paired baseline.

    The training and test corpora are synthesized from different seeds so no
    test image can appear in training. The noise level defaults to the
    encoding's entry in NOISE_FOR_KIND; training data is always noise-free.

    Args:
        kind: Encoding kind
        n: Image side
        train_corpus_seed: Seed of the training corpus
        test_corpus_seed: Seed of the held-out corpus, must differ
        cfg: Training configuration (cfg.test_count test images)
        out_dir: Parent directory of the experiment folder
        train_count: Training images when synthesizing the corpus
        snr_db: "auto", "clean"/None or a dB value
        train_corpus: Use this corpus instead of synthesizing one
        workers: Threads computing per-example gradients
        progress: Show progress bars

    Returns:
        ExperimentReport
    """
    if train_corpus_seed == test_corpus_seed:
        raise ConfigurationError("Training and test corpus seeds must differ")
    encoding = make_encoding(kind, n, seed=cfg.seed)
    training = train_corpus or synth_corpus(train_count, n, train_corpus_seed)
    test = synth_corpus(cfg.test_count, n, test_corpus_seed)
    if training.provenance == test.provenance:
        raise ConfigurationError(f"Training and test corpora share provenance {test.provenance!r}")

    shift_rng = derive_rng(cfg.seed, "misalignment") if encoding.kind == "misaligned" else None
    dataset = build_dataset(training, encoding, rng=shift_rng)
    params, history = train(dataset, cfg, workers=workers, progress=progress)

    folder = Path(out_dir) / encoding.kind
    metadata = checkpoint_metadata(dataset, cfg, cfg.epochs)
    save_checkpoint(folder / "automap.amap", params, metadata)
    write_history_csv(history, folder / "history.csv")

    snr = NOISE_FOR_KIND[encoding.kind] if snr_db == "auto" else parse_snr(snr_db)
    return evaluate_checkpoint(
        params,
        metadata,
        test,
        snr,
        out_dir,
        seed=test_corpus_seed,
        progress=progress,
        seeds={"train_corpus": train_corpus_seed, "test_corpus": test_corpus_seed},
    )


@dataclass(frozen=True)
class PhaseReport:
    """Complex reconstruction quality of a real/imag network pair."""

    mean_phase_error: float
    magnitude_rmse: float
    count: int
    masked_pixels: int
    clean_magnitude_rmse: float = float("nan")

    @property
    def magnitude_ratio(self) -> float:
        """Magnitude RMSE relative to a clean Cartesian magnitude network."""
        if not self.clean_magnitude_rmse > 0.0:
            return float("nan")
        return self.magnitude_rmse / self.clean_magnitude_rmse

    def to_dict(self) -> dict[str, Any]:
        return {
            "mean_phase_error": self.mean_phase_error,
            "magnitude_rmse": self.magnitude_rmse,
            "clean_magnitude_rmse": _json_float(self.clean_magnitude_rmse),
            "magnitude_ratio": _json_float(self.magnitude_ratio),
            "count": self.count,
            "masked_pixels": self.masked_pixels,
        }


def run_phase_experiment(
    n: int,
    train_corpus_seed: int,
    test_corpus_seed: int,
    cfg: TrainConfig,
    out_dir: str | Path,
    train_count: int = 512,
    test_count: int = 16,
    workers: int = 1,
    progress: bool = False,
) -> PhaseReport:
    """
    Train real- and imaginary-channel networks on phase-modulated Cartesian data.

    Training images are modulated with phase maps from train_corpus_seed and test
    images with maps from test_corpus_seed. Phase error is measured where the
    true magnitude exceeds PHASE_MAGNITUDE_FLOOR. A magnitude network trained on
    the same images without modulation gives the clean reference RMSE.
    """
    if train_corpus_seed == test_corpus_seed:
        raise ConfigurationError("Training and test corpus seeds must differ")
    encoding = make_encoding("cartesian", n, seed=cfg.seed)
    training = synth_corpus(train_count, n, train_corpus_seed)
    folder = Path(out_dir) / "phase"
    networks = {}
    for mode in ("real", "imag", "magnitude"):
        phase_seed = None if mode == "magnitude" else train_corpus_seed
        dataset = build_dataset(training, encoding, mode, phase_seed=phase_seed)
        params, history = train(dataset, cfg, workers=workers, progress=progress)
        save_checkpoint(folder / f"{mode}.amap", params, checkpoint_metadata(dataset, cfg, cfg.epochs))
        write_history_csv(history, folder / f"history_{mode}.csv")
        networks[mode] = (params, dataset.sensor_scale)

    test = synth_corpus(test_count, n, test_corpus_seed)
    errors, squared, clean_squared, masked = [], [], [], 0
    for index, img in enumerate(test.images):
        re, im = apply_phase(img, synthesize_phase_map(n, test_corpus_seed, index))
        sv = encode(encoding, re, im)
        real_out = automap_recon(*networks["real"], sv)
        imag_out = automap_recon(*networks["imag"], sv)
        magnitude, phase = combine_complex_outputs(real_out, imag_out)
        truth_mag = np.hypot(re, im)
        squared.append(np.mean((magnitude - truth_mag) ** 2))
        clean = automap_recon(*networks["magnitude"], encode(encoding, img))
        clean_squared.append(np.mean((clean - np.abs(img)) ** 2))
        mask = truth_mag > PHASE_MAGNITUDE_FLOOR
        masked += int(mask.sum())
        errors.append(wrapped_phase_error(phase, np.arctan2(im, re))[mask])
        write_image_with_sidecar(folder / f"img{index:04d}.phase.pgm", phase)

    flat = np.concatenate(errors) if errors else np.zeros(0)
    report = PhaseReport(
        mean_phase_error=float(flat.mean()) if flat.size else 0.0,
        magnitude_rmse=float(np.sqrt(np.mean(squared))),
        count=len(test),
        masked_pixels=masked,
        clean_magnitude_rmse=float(np.sqrt(np.mean(clean_squared))),
    )
    atomic_write_text(folder / "phase_report.json", dumps_json(report.to_dict()) + "\n")
    logger.info(
        "phase: mean wrapped error %.4g rad, magnitude rmse %.4g (%.3gx clean)",
        report.mean_phase_error,
        report.magnitude_rmse,
        report.magnitude_ratio,
    )
    return report


@dataclass(frozen=True)
class SparsityReport:
    """FC2 activation statistics of a structured-trained and a noise-trained network."""

    structured: ActivationStats
    noise: ActivationStats

    @property
    def structured_sparser(self) -> bool:
        return self.structured.sparsity_fraction > self.noise.sparsity_fraction

    @property
    def structured_lower_l1(self) -> bool:
        return self.structured.l1_mean < self.noise.l1_mean

    def to_dict(self) -> dict[str, Any]:
        return {
            "structured": stats_to_dict(self.structured),
            "noise": stats_to_dict(self.noise),
            "structured_sparser": self.structured_sparser,
            "structured_lower_l1": self.structured_lower_l1,
        }


def run_sparsity_experiment(
    n: int,
    train_corpus_seed: int,
    test_corpus_seed: int,
    cfg: TrainConfig,
    out_dir: str | Path,
    train_count: int = 512,
    test_count: int = 32,
    tau: float = DEFAULT_TAU,
    workers: int = 1,
    progress: bool = False,
) -> SparsityReport:
    """
    Compare FC2 sparsity of Cartesian networks trained on structured and noise images.

    Both networks share cfg and see the same held-out structured test images, each
    scaled by its own training input scale. Writes ``{out_dir}/sparsity/`` with
    one checkpoint and history per corpus plus sparsity_report.json.
    """
    if train_corpus_seed == test_corpus_seed:
        raise ConfigurationError("Training and test corpus seeds must differ")
    encoding = make_encoding("cartesian", n, seed=cfg.seed)
    test = synth_corpus(test_count, n, test_corpus_seed)
    folder = Path(out_dir) / "sparsity"
    stats = {}
    for name, build in (("structured", synth_corpus), ("noise", noise_corpus)):
        dataset = build_dataset(build(train_count, n, train_corpus_seed), encoding)
        params, history = train(dataset, cfg, workers=workers, progress=progress)
        save_checkpoint(folder / f"{name}.amap", params, checkpoint_metadata(dataset, cfg, cfg.epochs))
        write_history_csv(history, folder / f"history_{name}.csv")
        inputs = encode_inputs(encoding, test, dataset.sensor_scale, test_corpus_seed)
        stats[name] = capture_stats(params, inputs, tau, dataset.provenance)
    report = SparsityReport(stats["structured"], stats["noise"])
    atomic_write_text(folder / "sparsity_report.json", dumps_json(report.to_dict()) + "\n")
    logger.info(
        "sparsity: structured %.4f vs noise %.4f, l1 mean %.4g vs %.4g",
        report.structured.sparsity_fraction,
        report.noise.sparsity_fraction,
        report.structured.l1_mean,
        report.noise.l1_mean,
    )
    return report


def baseline_corpus(
    method: str,
    encoding: EncodingOperator,
    corpus: Corpus,
    out_dir: str | Path,
    snr_db: float | str | None = CLEAN,
    seed: int = 0,
    sweeps: int = DEFAULT_SWEEPS,
) -> list[tuple[BaselineResult, Metrics]]:
    """
    Reconstruct every corpus image with one conventional method.

    Writes ``{image_id}.{method}.pgm`` images, ``baseline.csv`` with per-image
    metrics and ``baseline.json`` with metrics plus ART residual histories.
    """
    method = BASELINE_FOR_KIND[encoding.kind] if method == "auto" else method
    if method not in METHODS:
        raise UsageError(f"Unknown baseline method: {method}; expected one of {', '.join(METHODS)}")
    if corpus.n != encoding.n:
        raise ArtifactMismatchError(f"Corpus n={corpus.n} does not match encoding n={encoding.n}")
    snr = parse_snr(snr_db)
    snr_tag: float | str = CLEAN if snr is None else snr
    out_dir = Path(out_dir)
    results = []
    rows: list[tuple[str, Metrics]] = []
    records = []
    for index, img in enumerate(corpus.images):
        image_id = f"img{index:04d}"
        shift_rng = derive_rng(seed, "misalignment", index)
        sv = encode(encoding, img, None, shift_rng if encoding.kind == "misaligned" else None)
        sv = add_awgn_snr(sv, snr, derive_rng(seed, "awgn", index))
        result = run_baseline(method, sv, encoding, sweeps)
        metrics = compute_metrics(np.abs(result.image), np.abs(img), method, snr_tag)
        write_image_with_sidecar(out_dir / f"{image_id}.{method}.pgm", result.image)
        results.append((result, metrics))
        rows.append((image_id, metrics))
        records.append(
            {
                "image_id": image_id,
                "rmse": metrics.rmse,
                "psnr_db": _json_float(metrics.psnr_db),
                "iterations": result.iterations,
                "residual_history": result.residual_history,
            }
        )
    _write_metrics_csv(out_dir / "baseline.csv", rows)
    summary = {"method": method, "kind": encoding.kind, "snr_db": snr_tag, "images": records}
    atomic_write_text(out_dir / "baseline.json", dumps_json(summary) + "\n")
    return results
