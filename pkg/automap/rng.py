"""Named random streams derived from one master seed.

A stream is identified by the master seed, a stream name and optional integer
indices (e.g. an image index). Streams never share state, so components can run
in any order and still reproduce bit-for-bit.
"""

import zlib

import numpy as np

STREAMS = (
    "init",
    "shuffle",
    "corruption",
    "misalignment",
    "phase",
    "augment",
    "awgn",
    "corpus",
    "encoding",
)


def stream_key(name: str) -> int:
    """Stable 32-bit key for a stream name."""
    return zlib.crc32(name.encode("utf-8"))


def derive_rng(master_seed: int, name: str, *indices: int) -> np.random.Generator:
    """
    Build an independent generator for a named stream.

    Args:
        master_seed: Non-negative experiment seed
        name: Stream name, usually one of STREAMS
        *indices: Extra non-negative integers, e.g. an epoch or image index

    Returns:
        A PCG64-backed numpy Generator
    """
    entropy = [int(master_seed), stream_key(name), *(int(i) for i in indices)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
