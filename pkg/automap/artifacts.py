"""Binary artifact containers and atomic file writes.

All automap binary files share one layout:

    magic (4 ASCII bytes) | version (u32 LE) | json length (u64 LE) | json | payload

The payload is a contiguous run of little-endian float64 values whose split into
arrays is described by the JSON metadata of each file kind.
"""

import json
import logging
import os
import struct
import tempfile
from collections.abc import Iterable
from pathlib import Path
from typing import Any

import numpy as np

from automap.errors import ArtifactMismatchError, IngestionError

logger = logging.getLogger(__name__)

_HEADER = struct.Struct("<4sIQ")


def dumps_json(obj: Any) -> str:
    """Canonical JSON used for every artifact: sorted keys, no extra whitespace."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)


def atomic_write_bytes(path: str | Path, data: bytes) -> Path:
    """Write bytes to a temporary sibling file, then rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return path


def atomic_write_text(path: str | Path, text: str) -> Path:
    """Text variant of atomic_write_bytes (UTF-8, newline characters kept as given)."""
    return atomic_write_bytes(path, text.encode("utf-8"))


def pack_container(
    magic: bytes, version: int, metadata: dict[str, Any], arrays: Iterable[np.ndarray]
) -> bytes:
    """Serialize metadata and float64 arrays into one container blob."""
    if len(magic) != 4:
        raise ValueError(f"Container magic must be 4 bytes, got {magic!r}")
    meta = dumps_json(metadata).encode("utf-8")
    chunks = [_HEADER.pack(magic, version, len(meta)), meta]
    for array in arrays:
        chunks.append(np.ascontiguousarray(array, dtype="<f8").tobytes())
    return b"".join(chunks)


def write_container(
    path: str | Path,
    magic: bytes,
    version: int,
    metadata: dict[str, Any],
    arrays: Iterable[np.ndarray],
) -> Path:
    """Atomically write a container file."""
    path = atomic_write_bytes(path, pack_container(magic, version, metadata, arrays))
    logger.info("Wrote %s artifact %s", magic.decode("ascii"), path)
    return path


def read_container(
    path: str | Path, magic: bytes, max_version: int
) -> tuple[int, dict[str, Any], np.ndarray]:
    """
    Read a container file.

    Args:
        path: File to read
        magic: Expected 4-byte magic
        max_version: Highest version this reader understands

    Returns:
        (version, metadata, flat float64 payload)

    Raises:
        IngestionError: If the file cannot be read or is truncated
        ArtifactMismatchError: If the magic or version does not match
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as err:
        raise IngestionError(f"Cannot read artifact {path}: {err}") from err
    if len(data) < _HEADER.size:
        raise IngestionError(f"Artifact {path} is truncated ({len(data)} bytes)")
    found, version, meta_len = _HEADER.unpack_from(data)
    if found != magic:
        raise ArtifactMismatchError(f"{path}: expected magic {magic!r}, found {found!r}")
    if version < 1 or version > max_version:
        raise ArtifactMismatchError(f"{path}: unsupported {magic.decode()} version {version}")
    start = _HEADER.size
    end = start + meta_len
    if end > len(data) or (len(data) - end) % 8:
        raise IngestionError(f"Artifact {path} has an inconsistent payload length")
    metadata = json.loads(data[start:end].decode("utf-8"))
    payload = np.frombuffer(data, dtype="<f8", offset=end).astype(np.float64)
    return version, metadata, payload


def split_payload(
    payload: np.ndarray, shapes: Iterable[tuple[int, ...]], source: str
) -> list[np.ndarray]:
    """Cut a flat payload into arrays of the given shapes, in order."""
    out = []
    offset = 0
    for shape in shapes:
        size = int(np.prod(shape, dtype=np.int64))
        if offset + size > payload.size:
            raise ArtifactMismatchError(f"{source}: payload shorter than declared shapes")
        out.append(payload[offset : offset + size].reshape(shape).copy())
        offset += size
    if offset != payload.size:
        raise ArtifactMismatchError(
            f"{source}: payload has {payload.size - offset} trailing values"
        )
    return out
