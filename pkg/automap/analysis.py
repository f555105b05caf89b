"""Hidden-layer activation statistics and weight export."""

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from automap.artifacts import atomic_write_bytes, atomic_write_text, dumps_json
from automap.datasets import Corpus
from automap.encoders import EncodingOperator, SensorVec, encode, encoding_from_dict
from automap.errors import ArtifactMismatchError, DimensionError, IngestionError
from automap.imageio import encode_pgm, write_pgm
from automap.network import OUT_KERNEL, NetParams, forward
from automap.rng import derive_rng

logger = logging.getLogger(__name__)

HISTOGRAM_BINS = 101
# fixed edges over the tanh range; 102 edges, 101 equal bins
HISTOGRAM_EDGES = np.linspace(-1.0, 1.0, HISTOGRAM_BINS + 1)
DEFAULT_TAU = 0.01

GALLERY_COLUMNS = 8
_CHUNK = 64


@dataclass(frozen=True)
class ActivationStats:
    """Distribution of FC2 activations over a set of reconstructions."""

    bin_edges: np.ndarray
    counts: np.ndarray
    sparsity_fraction: float
    l1_mean: float
    tau: float
    source: str = ""

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def _input_matrix(inputs: Sequence[SensorVec] | np.ndarray, d_in: int) -> np.ndarray:
    if isinstance(inputs, np.ndarray):
        matrix = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    else:
        matrix = np.stack([sv.values for sv in inputs]) if len(inputs) else np.zeros((0, d_in))
    if matrix.shape[0] == 0:
        raise DimensionError("capture_stats needs at least one input")
    if matrix.shape[1] != d_in:
        raise DimensionError(f"Input length {matrix.shape[1]} does not match d_in={d_in}")
    return matrix


def capture_stats(
    p: NetParams,
    inputs: Sequence[SensorVec] | np.ndarray,
    tau: float = DEFAULT_TAU,
    source: str = "",
) -> ActivationStats:
    """
    Histogram, sparsity and mean magnitude of FC2 activations.

    Args:
        p: Network, not modified
        inputs: Sensor vectors or a (count, d_in) array, already input-scaled
        tau: Activations with |a| < tau count as inactive
        source: Tag describing the network's training corpus

    Returns:
        ActivationStats over count * n * n activations
    """
    matrix = _input_matrix(inputs, p.d_in)
    counts = np.zeros(HISTOGRAM_BINS, dtype=np.int64)
    inactive = 0
    l1_total = 0.0
    for start in range(0, matrix.shape[0], _CHUNK):
        _, trace = forward(p, matrix[start : start + _CHUNK], capture=True)
        assert trace is not None
        acts = trace.fc2_act.reshape(-1)
        counts += np.histogram(acts, bins=HISTOGRAM_EDGES)[0]
        inactive += int(np.count_nonzero(np.abs(acts) < tau))
        l1_total += float(np.abs(acts).sum())
    size = matrix.shape[0] * p.n * p.n
    stats = ActivationStats(
        bin_edges=HISTOGRAM_EDGES.copy(),
        counts=counts,
        sparsity_fraction=inactive / size,
        l1_mean=l1_total / size,
        tau=tau,
        source=source,
    )
    logger.info(
        "FC2 stats over %d inputs: sparsity %.4f, l1 mean %.4g",
        matrix.shape[0],
        stats.sparsity_fraction,
        stats.l1_mean,
    )
    return stats


def stats_to_dict(stats: ActivationStats) -> dict[str, Any]:
    return {
        "bin_edges": [float(e) for e in stats.bin_edges],
        "counts": [int(c) for c in stats.counts],
        "sparsity_fraction": stats.sparsity_fraction,
        "l1_mean": stats.l1_mean,
        "tau": stats.tau,
        "total": stats.total,
        "source": stats.source,
    }


def stats_to_json(stats: ActivationStats) -> str:
    """Canonical JSON form of ActivationStats."""
    return dumps_json(stats_to_dict(stats))


def export_fc_weights(p: NetParams, path: str | Path) -> Path:
    """
    Write the FC2 -> FC3 weights as CSV, one row per FC3 pixel.

    Column 0 is the pixel index (row-major); columns 1..n*n are the incoming
    weights W2[i, :] at 17 significant digits. There is no header row.
    """
    lines = [
        f"{i}," + ",".join(format(w, ".17g") for w in row) for i, row in enumerate(p.W2.tolist())
    ]
    try:
        return atomic_write_text(path, "\n".join(lines) + "\n")
    except OSError as err:
        raise IngestionError(f"Cannot write weight export {path}: {err}") from err


def load_fc_weights(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Re-import export_fc_weights output; returns (pixel indices, weight matrix)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise IngestionError(f"Cannot read weight export {path}: {err}") from err
    rows = [line.split(",") for line in text.splitlines() if line]
    if not rows or any(len(r) != len(rows[0]) for r in rows):
        raise IngestionError(f"{path} is not a rectangular weight export")
    index = np.array([int(r[0]) for r in rows])
    weights = np.array([[float(v) for v in r[1:]] for r in rows])
    return index, weights


def _unit_scale(tile: np.ndarray) -> np.ndarray:
    lo, hi = float(tile.min()), float(tile.max())
    if hi - lo <= 0.0:
        return np.zeros_like(tile)
    return (tile - lo) / (hi - lo)


def kernel_gallery(p: NetParams, out_dir: str | Path) -> list[Path]:
    """
    Write the output-layer kernels as 7x7 PGM tiles plus a montage.

    Tiles are min-max scaled one by one. The montage lays them out 8 per row
    with 1-pixel white separators (63 x 63 pixels for 64 filters).

    Returns:
        Paths of the tiles followed by the montage
    """
    out_dir = Path(out_dir)
    rows = -(-p.filters // GALLERY_COLUMNS)
    side = GALLERY_COLUMNS * OUT_KERNEL + (GALLERY_COLUMNS - 1)
    montage = np.ones((rows * OUT_KERNEL + rows - 1, side))
    paths = []
    for index, kernel in enumerate(p.KT):
        paths.append(atomic_write_bytes(out_dir / f"kernel_{index:02d}.pgm", encode_pgm(kernel)))
        r, c = divmod(index, GALLERY_COLUMNS)
        top, left = r * (OUT_KERNEL + 1), c * (OUT_KERNEL + 1)
        montage[top : top + OUT_KERNEL, left : left + OUT_KERNEL] = _unit_scale(kernel)
    paths.append(write_pgm(out_dir / "kernels_montage.pgm", montage))
    logger.info("Wrote %d kernel tiles and montage to %s", p.filters, out_dir)
    return paths


def encode_inputs(
    encoding: EncodingOperator, corpus: Corpus, sensor_scale: float, seed: int = 0
) -> np.ndarray:
    """Clean, input-scaled sensor vectors of every corpus image, one per row."""
    rows = []
    for index, img in enumerate(corpus.images):
        rng = derive_rng(seed, "misalignment", index) if encoding.kind == "misaligned" else None
        rows.append(encode(encoding, img, None, rng).values / sensor_scale)
    return np.stack(rows)


def analyze_network(
    p: NetParams,
    metadata: dict[str, Any],
    corpus: Corpus,
    out_dir: str | Path,
    tau: float = DEFAULT_TAU,
    seed: int = 0,
    kernels: bool = True,
) -> ActivationStats:
    """
    Write stats.json, fc_weights.csv and (optionally) the kernel gallery for a checkpoint.

    Args:
        p: Network
        metadata: Checkpoint metadata with the encoding and sensor_scale
        corpus: Images whose encodings are fed through the network
        out_dir: Destination directory
        tau: Sparsity threshold
        seed: Seed of the misalignment streams
        kernels: Also write the output-kernel tiles

    Returns:
        ActivationStats
    """
    try:
        encoding = encoding_from_dict(metadata["encoding"])
        sensor_scale = float(metadata["sensor_scale"])
    except (KeyError, TypeError, ValueError) as err:
        raise ArtifactMismatchError(f"Checkpoint metadata is incomplete: {err}") from err
    if corpus.n != p.n or encoding.n != p.n:
        raise ArtifactMismatchError(
            f"Side-length mismatch: checkpoint n={p.n}, encoding n={encoding.n}, corpus n={corpus.n}"
        )
    if encoding.layout.length != p.d_in:
        raise ArtifactMismatchError(
            f"Checkpoint d_in={p.d_in} does not match the {encoding.kind} layout"
        )
    out_dir = Path(out_dir)
    stats = capture_stats(
        p,
        encode_inputs(encoding, corpus, sensor_scale, seed),
        tau,
        str(metadata.get("provenance", "")),
    )
    atomic_write_text(out_dir / "stats.json", stats_to_json(stats) + "\n")
    export_fc_weights(p, out_dir / "fc_weights.csv")
    if kernels:
        kernel_gallery(p, out_dir / "kernels")
    return stats
