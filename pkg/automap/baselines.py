"""Conventional reconstructions AUTOMAP is compared against."""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse

from automap.encoders import FULL_GRID_KINDS, EncodingOperator, SensorVec, scatter_to_grid
from automap.errors import ConfigurationError, DimensionError, UsageError
from automap.numerics import (
    KTrajectory,
    Sinogram,
    as_image,
    idft2,
    nudft_adjoint,
    radon_matrix,
)
from automap.rng import derive_rng

logger = logging.getLogger(__name__)

METHODS = ("ifft", "zerofill", "gridding", "art")

# the conventional method paired with each encoding in experiments
BASELINE_FOR_KIND = {
    "cartesian": "ifft",
    "misaligned": "ifft",
    "poisson_disc": "zerofill",
    "spiral": "gridding",
    "radon": "art",
}

DEFAULT_SWEEPS = 10
ROW_ORDERS = ("random", "natural")


@dataclass(frozen=True)
class BaselineResult:
    """A baseline reconstruction; iterations and residual_history are ART-only."""

    image: np.ndarray
    method: str
    iterations: int = 0
    residual_history: list[float] = field(default_factory=list)


def ifft_recon(sv: SensorVec) -> np.ndarray:
    """Magnitude of the inverse DFT of a full-grid complex sensor vector."""
    if sv.layout.kind not in FULL_GRID_KINDS or not sv.layout.is_complex:
        raise UsageError(f"ifft_recon needs a full-grid complex layout, got {sv.layout.kind}")
    n = math.isqrt(sv.layout.m)
    if n * n != sv.layout.m:
        raise DimensionError(f"Full-grid layout length {sv.layout.m} is not a square")
    re, im = idft2(sv.complex_samples().reshape(n, n))
    return np.hypot(re, im)


def zero_fill_recon(sv: SensorVec, op: EncodingOperator) -> np.ndarray:
    """Samples at their mask positions, zeros elsewhere, inverse DFT magnitude."""
    if op.kind != "poisson_disc":
        raise UsageError(f"zero_fill_recon needs a poisson_disc operator, got {op.kind}")
    re, im = idft2(scatter_to_grid(sv, op))
    return np.hypot(re, im)


def gridding_recon(samples: np.ndarray, traj: KTrajectory, n: int) -> np.ndarray:
    """
    Adjoint-NUDFT gridding without density compensation.

    The back-projection is scaled by n*n/m so a full Cartesian trajectory
    reproduces ifft_recon exactly.
    """
    samples = np.asarray(samples, dtype=np.complex128).reshape(-1)
    if samples.size != len(traj):
        raise DimensionError(
            f"Sample/trajectory length mismatch: {samples.size} samples, {len(traj)} points"
        )
    re, im = nudft_adjoint(samples, traj, n)
    return np.hypot(re, im) * (n * n / samples.size)


def kaczmarz(
    matrix: scipy.sparse.spmatrix | np.ndarray,
    b: np.ndarray,
    sweeps: int = DEFAULT_SWEEPS,
    relax: float = 1.0,
    x0: np.ndarray | None = None,
    order: str = "random",
    seed: int = 0,
) -> tuple[np.ndarray, list[float]]:
    """
    Kaczmarz projections for A x = b.

    One sweep visits every nonzero row once. With order="random" each sweep walks
    the rows in a fresh permutation drawn from the ("kaczmarz", sweep) stream of
    ``seed``; neighbouring Radon rows are nearly parallel, and walking them in
    sinogram order stalls. order="natural" keeps the stored row order.

    Returns:
        (solution, residual norm ||A x - b|| after each sweep)
    """
    if sweeps < 1:
        raise ConfigurationError(f"sweeps must be >= 1, got {sweeps}")
    if order not in ROW_ORDERS:
        raise ConfigurationError(f"Unknown row order {order!r}; expected one of {ROW_ORDERS}")
    a = scipy.sparse.csr_matrix(matrix)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if b.size != a.shape[0]:
        raise DimensionError(f"Right-hand side has {b.size} entries, matrix has {a.shape[0]} rows")
    x = np.zeros(a.shape[1]) if x0 is None else np.array(x0, dtype=np.float64).reshape(-1)
    if x.size != a.shape[1]:
        raise DimensionError(f"Start vector has {x.size} entries, matrix has {a.shape[1]} columns")
    norms = np.asarray(a.multiply(a).sum(axis=1)).reshape(-1)
    rows = [
        (r, a.indices[a.indptr[r] : a.indptr[r + 1]], a.data[a.indptr[r] : a.indptr[r + 1]])
        for r in range(a.shape[0])
        if norms[r] > 0.0
    ]
    history = []
    for sweep in range(sweeps):
        if order == "random":
            walk = [rows[i] for i in derive_rng(seed, "kaczmarz", sweep).permutation(len(rows))]
        else:
            walk = rows
        for r, cols, vals in walk:
            step = relax * (b[r] - vals @ x[cols]) / norms[r]
            x[cols] += step * vals
        history.append(float(np.linalg.norm(a @ x - b)))
        logger.debug("Kaczmarz sweep %d residual %.6g", sweep + 1, history[-1])
    return x, history


def kaczmarz_art(
    sino: Sinogram,
    n: int,
    sweeps: int = DEFAULT_SWEEPS,
    relax: float = 1.0,
    x0: np.ndarray | None = None,
    order: str = "random",
    seed: int = 0,
) -> BaselineResult:
    """
    Algebraic reconstruction of a sinogram with the Kaczmarz method.

    Args:
        sino: Measured projections
        n: Image side
        sweeps: Full passes over all rays
        relax: Relaxation factor
        x0: Start image; zero when None
        order: "random" (seeded permutation per sweep) or "natural" row order
        seed: Seed of the row permutations

    Returns:
        BaselineResult with the image and per-sweep residual norms
    """
    values = np.asarray(sino.values, dtype=np.float64)
    try:
        matrix = radon_matrix(n, sino.n_angles, sino.n_rays)
    except ConfigurationError as err:
        raise DimensionError(f"Sinogram geometry inconsistent with n={n}: {err}") from err
    start = None if x0 is None else as_image(x0, "x0").reshape(-1)
    x, history = kaczmarz(matrix, values.reshape(-1), sweeps, relax, start, order, seed)
    return BaselineResult(x.reshape(n, n), "art", sweeps, history)


def run_baseline(
    method: str, sv: SensorVec, op: EncodingOperator, sweeps: int = DEFAULT_SWEEPS
) -> BaselineResult:
    """Reconstruct a sensor vector with the named conventional method."""
    if method == "ifft":
        return BaselineResult(ifft_recon(sv), method)
    if method == "zerofill":
        return BaselineResult(zero_fill_recon(sv, op), method)
    if method == "gridding":
        if op.trajectory is None:
            raise UsageError(f"gridding needs a trajectory; {op.kind} operator has none")
        return BaselineResult(gridding_recon(sv.complex_samples(), op.trajectory, op.n), method)
    if method == "art":
        if op.kind != "radon":
            raise UsageError(f"art needs a radon operator, got {op.kind}")
        sino = Sinogram(sv.values.reshape(op.n_angles, op.n_rays))
        return kaczmarz_art(sino, op.n, sweeps)
    raise UsageError(f"Unknown baseline method: {method}; expected one of {', '.join(METHODS)}")
