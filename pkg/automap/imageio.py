"""8-bit PGM image files through imageio, plus raw float64 sidecars."""

import logging
from pathlib import Path

import imageio.v3 as iio
import numpy as np

from automap.artifacts import atomic_write_bytes
from automap.errors import IngestionError

logger = logging.getLogger(__name__)

PGM_MAGIC = b"P5"


def read_pgm(path: str | Path) -> np.ndarray:
    """
    Read an 8-bit binary PGM file.

    Returns:
        float64 array of shape (height, width) with values 0..255

    Raises:
        IngestionError: If the file is unreadable or not an 8-bit P5 image
    """
    path = Path(path)
    try:
        with path.open("rb") as f:
            magic = f.read(len(PGM_MAGIC))
    except OSError as err:
        raise IngestionError(f"Cannot read PGM file {path}: {err}") from err
    if magic != PGM_MAGIC:
        raise IngestionError(f"{path} is not a binary PGM (P5) file")
    try:
        pixels = iio.imread(path, extension=".pgm")
    except (OSError, ValueError, SyntaxError) as err:
        raise IngestionError(f"{path} is truncated or malformed: {err}") from err
    if pixels.ndim != 2 or pixels.dtype != np.uint8:
        raise IngestionError(f"{path} is not an 8-bit greyscale image ({pixels.dtype})")
    return pixels.astype(np.float64)


def to_uint8(img: np.ndarray) -> np.ndarray:
    """Min-max scale to 0..255; a constant image maps to 0."""
    img = np.asarray(img, dtype=np.float64)
    lo, hi = float(img.min()), float(img.max())
    if hi - lo <= 0.0:
        return np.zeros(img.shape, dtype=np.uint8)
    return np.round((img - lo) / (hi - lo) * 255.0).astype(np.uint8)


def encode_pgm(img: np.ndarray) -> bytes:
    """P5 bytes of a min-max scaled image."""
    return iio.imwrite("<bytes>", to_uint8(img), extension=".pgm")


def write_pgm(path: str | Path, img: np.ndarray) -> Path:
    """Atomically write an image as min-max scaled 8-bit PGM."""
    return atomic_write_bytes(path, encode_pgm(img))


def write_image_with_sidecar(path: str | Path, img: np.ndarray) -> tuple[Path, Path]:
    """
    Write ``<path>`` as PGM and ``<path>.f64`` with the raw float64 pixels.

    Returns:
        (pgm path, sidecar path)
    """
    path = Path(path)
    pgm = write_pgm(path, img)
    sidecar = atomic_write_bytes(
        path.with_name(path.name + ".f64"),
        np.ascontiguousarray(img, dtype="<f8").tobytes(),
    )
    logger.debug("Wrote image %s", pgm)
    return pgm, sidecar
