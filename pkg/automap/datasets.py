"""Image corpora and (sensor, target) training datasets."""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from automap.artifacts import read_container, split_payload, write_container
from automap.encoders import (
    EncodingOperator,
    SensorLayout,
    apply_phase,
    encode,
    encoding_from_dict,
    encoding_to_dict,
    sensor_layout,
    synthesize_phase_map,
)
from automap.errors import ConfigurationError, DimensionError, IngestionError
from automap.imageio import read_pgm
from automap.numerics import MIN_SIDE
from automap.rng import derive_rng

logger = logging.getLogger(__name__)

TARGET_MODES = ("magnitude", "real", "imag", "phase")

CORPUS_MAGIC = b"AMCP"
CORPUS_VERSION = 1
DATASET_MAGIC = b"AMDS"
DATASET_VERSION = 1

_SUPERSAMPLE = 4


@dataclass(frozen=True)
class Corpus:
    """Preprocessed images of one side length.

    Attributes:
        images: Array of shape (count, n, n), per-image zero mean, max-abs 1 overall
        provenance: Free-text source tag, e.g. "synth:seed=1"
        normalization_scale: Global max-abs the mean-subtracted images were divided by
    """

    images: np.ndarray
    provenance: str
    normalization_scale: float

    def __post_init__(self):
        images = np.asarray(self.images, dtype=np.float64)
        if images.ndim != 3 or images.shape[0] == 0 or images.shape[1] != images.shape[2]:
            raise DimensionError(f"Corpus must be a non-empty (count, n, n) array, got {images.shape}")
        object.__setattr__(self, "images", images)

    @property
    def n(self) -> int:
        return int(self.images.shape[1])

    def __len__(self) -> int:
        return int(self.images.shape[0])


@dataclass(frozen=True)
class Dataset:
    """Encoded training pairs.

    Attributes:
        inputs: (count, d_in) sensor vectors scaled by 1/sensor_scale
        targets: (count, n*n) target channel per example
        sensor_scale: Global max-abs the raw sensor vectors were divided by
        encoding: The encoding operator used
        target_mode: One of TARGET_MODES
        layout: Layout of each input row
        provenance: Provenance of the source corpus
        phase_seed: Seed of the synthetic phase maps, None for magnitude-only data
    """

    inputs: np.ndarray
    targets: np.ndarray
    sensor_scale: float
    encoding: EncodingOperator
    target_mode: str
    layout: SensorLayout
    provenance: str = ""
    phase_seed: int | None = None

    def __post_init__(self):
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise DimensionError(
                f"inputs/targets count mismatch: {self.inputs.shape[0]} vs {self.targets.shape[0]}"
            )
        if self.inputs.shape[1] != self.layout.length:
            raise DimensionError(
                f"input length {self.inputs.shape[1]} does not match layout {self.layout.length}"
            )

    @property
    def n(self) -> int:
        return self.encoding.n

    @property
    def d_in(self) -> int:
        return int(self.inputs.shape[1])

    def __len__(self) -> int:
        return int(self.inputs.shape[0])


def preprocess_corpus(images: np.ndarray, provenance: str) -> Corpus:
    """Subtract each image's mean, then scale the whole set to max-abs 1."""
    images = np.asarray(images, dtype=np.float64)
    centred = images - images.mean(axis=(1, 2), keepdims=True)
    scale = float(np.abs(centred).max())
    if scale == 0.0:
        scale = 1.0
    return Corpus(centred / scale, provenance, scale)


def _synth_image(n: int, rng: np.random.Generator) -> np.ndarray:
    size = n * _SUPERSAMPLE
    coords = (np.arange(size) + 0.5) / size
    y, x = np.meshgrid(coords, coords, indexing="ij")
    gx, gy = rng.uniform(-0.3, 0.3, size=2)
    canvas = rng.uniform(0.0, 0.3) + gx * (x - 0.5) + gy * (y - 0.5)
    for _ in range(int(rng.integers(3, 11))):
        shape = rng.choice(("ellipse", "rectangle", "gradient"))
        cx, cy = rng.uniform(0.15, 0.85, size=2)
        angle = rng.uniform(0.0, np.pi)
        xr = (x - cx) * np.cos(angle) + (y - cy) * np.sin(angle)
        yr = -(x - cx) * np.sin(angle) + (y - cy) * np.cos(angle)
        a, b = rng.uniform(0.05, 0.35, size=2)
        value = rng.uniform(0.1, 1.0)
        if shape == "ellipse":
            inside = (xr / a) ** 2 + (yr / b) ** 2 <= 1.0
            canvas = np.where(inside, value, canvas)
        elif shape == "rectangle":
            inside = (np.abs(xr) <= a) & (np.abs(yr) <= b)
            canvas = np.where(inside, value, canvas)
        else:
            bump = value * np.exp(-((xr / a) ** 2 + (yr / b) ** 2))
            canvas = canvas + bump
    # box-filter the supersampled canvas for anti-aliasing
    return canvas.reshape(n, _SUPERSAMPLE, n, _SUPERSAMPLE).mean(axis=(1, 3))


def synth_corpus(count: int, n: int, seed: int) -> Corpus:
    """
    Procedural grayscale shapes: 3-10 ellipses, rectangles and smooth gradient
    bumps per image over a linear-gradient background, 4x supersampled.
    """
    if count < 1:
        raise ConfigurationError(f"count must be >= 1, got {count}")
    if n < MIN_SIDE:
        raise ConfigurationError(f"n must be >= {MIN_SIDE}, got {n}")
    images = np.stack([_synth_image(n, derive_rng(seed, "corpus", i)) for i in range(count)])
    corpus = preprocess_corpus(images, f"synth:n={n}:seed={seed}")
    logger.info("Synthesized %d images n=%d seed=%d", count, n, seed)
    return corpus


def noise_corpus(count: int, n: int, seed: int) -> Corpus:
    """I.i.d. Gaussian-noise images with no spatial structure."""
    if count < 1:
        raise ConfigurationError(f"count must be >= 1, got {count}")
    if n < MIN_SIDE:
        raise ConfigurationError(f"n must be >= {MIN_SIDE}, got {n}")
    rng = derive_rng(seed, "corpus", 0)
    images = rng.standard_normal((count, n, n))
    return preprocess_corpus(images, f"noise:n={n}:seed={seed}")


def box_downsample(img: np.ndarray, n: int) -> np.ndarray:
    """Area-weighted box filter from an (s, s) square image to (n, n)."""
    s = img.shape[0]
    edges = np.arange(n + 1) * (s / n)
    pixel_lo = np.arange(s)[None, :]
    overlap = np.clip(
        np.minimum(edges[1:, None], pixel_lo + 1) - np.maximum(edges[:-1, None], pixel_lo),
        0.0,
        None,
    )
    weights = overlap / (s / n)
    return weights @ img @ weights.T


def centre_crop_square(img: np.ndarray) -> np.ndarray:
    """Largest centred square crop."""
    height, width = img.shape
    side = min(height, width)
    top = (height - side) // 2
    left = (width - side) // 2
    return img[top : top + side, left : left + side]


def load_corpus(path: str | Path, n: int) -> Corpus:
    """
    Ingest a directory of 8-bit PGM files.

    Each image is centre-cropped to its largest square, box-filtered to n x n and
    then preprocessed like synth_corpus.

    Raises:
        IngestionError: Empty directory, unreadable file or an image smaller than 2n
    """
    path = Path(path)
    if not path.is_dir():
        raise IngestionError(f"Corpus directory not found: {path}")
    files = sorted(p for p in path.iterdir() if p.suffix.lower() == ".pgm")
    if not files:
        raise IngestionError(f"No PGM files in corpus directory {path}")
    images = []
    for file in files:
        raw = read_pgm(file)
        if min(raw.shape) < 2 * n:
            raise IngestionError(f"{file} is {raw.shape[1]}x{raw.shape[0]}, needs side >= {2 * n}")
        images.append(box_downsample(centre_crop_square(raw), n))
    logger.info("Loaded %d PGM images from %s", len(images), path)
    return preprocess_corpus(np.stack(images), f"pgm:{path.name}:n={n}")


def augment_rot90(corpus: Corpus) -> Corpus:
    """Each image at 0, 90, 180 and 270 degrees, in that order per image."""
    rotated = [np.rot90(img, k) for img in corpus.images for k in range(4)]
    return Corpus(np.stack(rotated), corpus.provenance + ":rot90", corpus.normalization_scale)


def augment_tile_crop(
    img: np.ndarray, rng: np.random.Generator, offset: tuple[int, int] | None = None
) -> np.ndarray:
    """
    Random n x n window of the 2n x 2n mirror tiling [img, fliplr; flipud, both].

    Args:
        img: (n, n) image
        rng: Generator for the offsets
        offset: Force (row, col) offsets, each in [0, n]
    """
    n = img.shape[0]
    top = np.hstack([img, np.fliplr(img)])
    tiled = np.vstack([top, np.flipud(top)])
    if offset is None:
        row, col = (int(v) for v in rng.integers(0, n + 1, size=2))
    else:
        row, col = offset
    if not (0 <= row <= n and 0 <= col <= n):
        raise ConfigurationError(f"Crop offset {(row, col)} outside [0, {n}]")
    return tiled[row : row + n, col : col + n].copy()


def augment_corpus_tile_crop(corpus: Corpus, seed: int) -> Corpus:
    """Apply augment_tile_crop to every image with a per-image stream."""
    images = np.stack(
        [augment_tile_crop(img, derive_rng(seed, "augment", i)) for i, img in enumerate(corpus.images)]
    )
    return Corpus(images, corpus.provenance + f":tile{seed}", corpus.normalization_scale)


def _target(re: np.ndarray, im: np.ndarray | None, mode: str) -> np.ndarray:
    if mode == "magnitude":
        return np.abs(re) if im is None else np.hypot(re, im)
    assert im is not None
    if mode == "real":
        return re
    if mode == "imag":
        return im
    return np.arctan2(im, re)


def build_dataset(
    corpus: Corpus,
    encoding: EncodingOperator,
    target_mode: str = "magnitude",
    phase_seed: int | None = None,
    rng: np.random.Generator | None = None,
) -> Dataset:
    """
    Encode every corpus image into a (sensor vector, target) pair.

    Args:
        corpus: Source images
        encoding: Forward model, n must match the corpus
        target_mode: Which channel of the ground truth to learn
        phase_seed: If given, image i is modulated by synthesize_phase_map(n, phase_seed, i)
        rng: Generator for misaligned shifts (drawn in image order)

    Returns:
        Dataset with inputs scaled to max-abs 1
    """
    if target_mode not in TARGET_MODES:
        raise ConfigurationError(f"Unknown target mode {target_mode!r}. Known: {TARGET_MODES}")
    if corpus.n != encoding.n:
        raise DimensionError(f"Corpus n={corpus.n} does not match encoding n={encoding.n}")
    if target_mode != "magnitude" and phase_seed is None:
        raise ConfigurationError(
            f"target_mode={target_mode!r} needs phase-modulated data (phase_seed) on a real corpus"
        )
    if phase_seed is not None and encoding.kind == "radon":
        raise ConfigurationError("radon encoding is real-valued; phase modulation is unsupported")
    if encoding.kind == "misaligned" and rng is None:
        raise ConfigurationError("misaligned encoding needs an rng for its shifts")

    inputs = []
    targets = []
    for index, img in enumerate(corpus.images):
        re, im = img, None
        if phase_seed is not None:
            re, im = apply_phase(img, synthesize_phase_map(corpus.n, phase_seed, index))
        inputs.append(encode(encoding, re, im, rng).values)
        targets.append(_target(re, im, target_mode).reshape(-1))

    raw = np.stack(inputs)
    scale = float(np.abs(raw).max())
    if scale == 0.0:
        scale = 1.0
    dataset = Dataset(
        inputs=raw / scale,
        targets=np.stack(targets),
        sensor_scale=scale,
        encoding=encoding,
        target_mode=target_mode,
        layout=sensor_layout(encoding),
        provenance=corpus.provenance,
        phase_seed=phase_seed,
    )
    logger.info(
        "Built %s dataset: %d pairs, d_in=%d, sensor_scale=%.6g",
        encoding.kind,
        len(dataset),
        dataset.d_in,
        scale,
    )
    return dataset


def save_corpus(corpus: Corpus, path: str | Path) -> Path:
    """Write a corpus container (AMCP)."""
    metadata = {
        "count": len(corpus),
        "n": corpus.n,
        "provenance": corpus.provenance,
        "normalization_scale": corpus.normalization_scale,
    }
    return write_container(path, CORPUS_MAGIC, CORPUS_VERSION, metadata, [corpus.images])


def load_corpus_file(path: str | Path) -> Corpus:
    """Read a corpus container written by save_corpus."""
    _, meta, payload = read_container(path, CORPUS_MAGIC, CORPUS_VERSION)
    count, n = int(meta["count"]), int(meta["n"])
    (images,) = split_payload(payload, [(count, n, n)], str(path))
    return Corpus(images, str(meta["provenance"]), float(meta["normalization_scale"]))


def save_dataset(dataset: Dataset, path: str | Path) -> Path:
    """Write a dataset container (AMDS): inputs then targets."""
    metadata = {
        "count": len(dataset),
        "d_in": dataset.d_in,
        "n": dataset.n,
        "layout": dataset.layout.to_dict(),
        "encoding": encoding_to_dict(dataset.encoding),
        "sensor_scale": dataset.sensor_scale,
        "target_mode": dataset.target_mode,
        "provenance": dataset.provenance,
        "phase_seed": dataset.phase_seed,
    }
    return write_container(
        path, DATASET_MAGIC, DATASET_VERSION, metadata, [dataset.inputs, dataset.targets]
    )


def load_dataset(path: str | Path) -> Dataset:
    """Read a dataset container written by save_dataset."""
    _, meta, payload = read_container(path, DATASET_MAGIC, DATASET_VERSION)
    count, d_in, n = int(meta["count"]), int(meta["d_in"]), int(meta["n"])
    inputs, targets = split_payload(payload, [(count, d_in), (count, n * n)], str(path))
    phase_seed = meta.get("phase_seed")
    return Dataset(
        inputs=inputs,
        targets=targets,
        sensor_scale=float(meta["sensor_scale"]),
        encoding=encoding_from_dict(meta["encoding"]),
        target_mode=str(meta["target_mode"]),
        layout=SensorLayout.from_dict(meta["layout"]),
        provenance=str(meta.get("provenance", "")),
        phase_seed=None if phase_seed is None else int(phase_seed),
    )
