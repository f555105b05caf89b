"""Dense and sparse linear-operator kernels with exact adjoints.

Conventions used throughout the package:

* An image is a real ``(n, n)`` float64 array indexed ``[row, col]``.
* A complex grid is a complex ``(n, n)`` array in DFT order, DC at ``[0, 0]``.
* The 2D DFT is unitary (overall scale ``1/n``), so Parseval holds exactly.
* Radon geometry: pixels have side 1, the rotation centre is the image centre
  ``((n - 1) / 2, (n - 1) / 2)`` in pixel-index units, rays are spaced 1 apart with
  ray ``(n_rays - 1) // 2`` passing through the rotation centre, and angles are
  ``j * pi / n_angles``. For even n the axis-aligned rays run along pixel edges;
  such a ray is shared half and half by the two pixels it borders.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse

from automap.errors import ConfigurationError, DimensionError, DomainError, NumericError

logger = logging.getLogger(__name__)

_EDGE_TOL = 1e-12

MIN_SIDE = 4


@dataclass(frozen=True)
class KTrajectory:
    """Non-Cartesian k-space sampling locations in cycles per field of view.

    ``points[j] = (k_u, k_v)`` where ``k_u`` pairs with the image row index and
    ``k_v`` with the column index.
    """

    points: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 2 or points.shape[0] == 0:
            raise DimensionError(f"Trajectory must be a non-empty (m, 2) array, got {points.shape}")
        if not np.all(np.isfinite(points)):
            raise DomainError("Trajectory contains non-finite coordinates")
        points.setflags(write=False)
        object.__setattr__(self, "points", points)

    def __len__(self) -> int:
        return int(self.points.shape[0])


@dataclass(frozen=True)
class Sinogram:
    """Parallel-beam projections, one row per angle."""

    values: np.ndarray

    @property
    def n_angles(self) -> int:
        return int(self.values.shape[0])

    @property
    def n_rays(self) -> int:
        return int(self.values.shape[1])

    @property
    def flat(self) -> np.ndarray:
        """Row-major flattening (angle-major)."""
        return self.values.reshape(-1)


def as_image(x: np.ndarray, name: str = "image") -> np.ndarray:
    """Validate and return a real square float64 image."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionError(f"{name} must be a square 2D array, got shape {arr.shape}")
    if arr.shape[0] < MIN_SIDE:
        raise DimensionError(f"{name} side must be >= {MIN_SIDE}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name} contains non-finite values", layer=name)
    return arr


def _complex_image(img_re: np.ndarray, img_im: np.ndarray | None) -> np.ndarray:
    re = as_image(img_re, "img_re")
    if img_im is None:
        return re.astype(np.complex128)
    im = as_image(img_im, "img_im")
    if im.shape != re.shape:
        raise DimensionError(f"Side-length mismatch: img_re.n={re.shape[0]}, img_im.n={im.shape[0]}")
    return re + 1j * im


def dft2(img_re: np.ndarray, img_im: np.ndarray | None = None) -> np.ndarray:
    """
    Unitary 2D DFT of a (possibly complex) image.

    Args:
        img_re: Real part, shape (n, n)
        img_im: Imaginary part, shape (n, n); None means zero

    Returns:
        Complex grid of shape (n, n), DC at [0, 0]
    """
    return np.fft.fft2(_complex_image(img_re, img_im), norm="ortho")


def idft2(grid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exact inverse of dft2; returns (real part, imaginary part)."""
    grid = np.asarray(grid, dtype=np.complex128)
    if grid.ndim != 2 or grid.shape[0] != grid.shape[1]:
        raise DimensionError(f"Complex grid must be square, got shape {grid.shape}")
    if not np.all(np.isfinite(grid)):
        raise NumericError("Complex grid contains non-finite values", layer="grid")
    img = np.fft.ifft2(grid, norm="ortho")
    return img.real.copy(), img.imag.copy()


def cartesian_trajectory(n: int) -> KTrajectory:
    """
    The integer Cartesian grid as a trajectory, in dft2's row-major order.

    Frequencies at or above n/2 are folded to their negative aliases so every
    coordinate lies in [-n/2, n/2).
    """
    freqs = np.fft.fftfreq(n, d=1.0 / n)
    ku, kv = np.meshgrid(freqs, freqs, indexing="ij")
    return KTrajectory(np.stack([ku.ravel(), kv.ravel()], axis=1))


def check_trajectory(traj: KTrajectory, n: int) -> None:
    """Raise DomainError if any trajectory coordinate lies outside [-n/2, n/2)."""
    half = n / 2.0
    points = traj.points
    bad = (points < -half) | (points >= half)
    if np.any(bad):
        index = int(np.argmax(bad.any(axis=1)))
        raise DomainError(
            f"Trajectory point {index} = {tuple(points[index])} outside [-{half}, {half}) for n={n}"
        )


def _fourier_factors(traj: KTrajectory, n: int) -> tuple[np.ndarray, np.ndarray]:
    grid = np.arange(n, dtype=np.float64)
    ku = traj.points[:, 0]
    kv = traj.points[:, 1]
    e_u = np.exp(-2j * np.pi * np.outer(ku, grid) / n)
    e_v = np.exp(-2j * np.pi * np.outer(kv, grid) / n)
    return e_u, e_v


def nudft(img_re: np.ndarray, img_im: np.ndarray | None, traj: KTrajectory) -> np.ndarray:
    """
    Exact non-uniform DFT, unitary-scaled like dft2.

    s(k) = (1/n) * sum_{u,v} x[u, v] * exp(-2*pi*i*(k_u*u + k_v*v)/n)

    Args:
        img_re: Real part, shape (n, n)
        img_im: Imaginary part or None
        traj: Sampling locations

    Returns:
        Complex samples, one per trajectory point, in trajectory order
    """
    x = _complex_image(img_re, img_im)
    n = x.shape[0]
    check_trajectory(traj, n)
    e_u, e_v = _fourier_factors(traj, n)
    # separable: (E_u x) row j dotted with E_v row j
    return np.einsum("jv,jv->j", e_u @ x, e_v) / n


def nudft_adjoint(
    samples: np.ndarray, traj: KTrajectory, n: int
) -> tuple[np.ndarray, np.ndarray]:
    """
    Exact adjoint of nudft under the standard complex inner product.

    Returns:
        (real part, imaginary part) of the back-projected image
    """
    samples = np.asarray(samples, dtype=np.complex128).reshape(-1)
    if samples.shape[0] != len(traj):
        raise DimensionError(
            f"Sample/trajectory length mismatch: {samples.shape[0]} samples, {len(traj)} points"
        )
    check_trajectory(traj, n)
    e_u, e_v = _fourier_factors(traj, n)
    img = (e_u.conj().T @ (samples[:, None] * e_v.conj())) / n
    return img.real.copy(), img.imag.copy()


def default_radon_geometry(n: int) -> tuple[int, int]:
    """Default (n_angles, n_rays): max(60, n) angles, smallest odd >= ceil(n*sqrt(2)) + 2 rays."""
    n_rays = math.ceil(n * math.sqrt(2)) + 2
    if n_rays % 2 == 0:
        n_rays += 1
    return max(60, n), n_rays


def check_radon_geometry(n: int, n_angles: int, n_rays: int) -> None:
    """Raise ConfigurationError for an unusable Radon geometry."""
    if n < MIN_SIDE:
        raise ConfigurationError(f"Radon image side must be >= {MIN_SIDE}, got {n}")
    if n_angles < 1:
        raise ConfigurationError(f"n_angles must be >= 1, got {n_angles}")
    if n_rays % 2 == 0:
        raise ConfigurationError(f"n_rays must be odd, got {n_rays}")
    minimum = math.ceil(n * math.sqrt(2))
    if n_rays < minimum:
        raise ConfigurationError(f"n_rays must be >= ceil(n*sqrt(2)) = {minimum}, got {n_rays}")


def _slab(lo: np.ndarray, hi: np.ndarray, origin: np.ndarray, step: float):
    """
    Parameter interval where origin + s*step lies in [lo, hi], plus a weight.

    The weight is 0.5 where a ray parallel to the slab runs along one of its
    edges and 1 elsewhere.
    """
    if step == 0.0:
        on_edge = (np.abs(origin - lo) < _EDGE_TOL) | (np.abs(origin - hi) < _EDGE_TOL)
        inside = (origin >= lo - _EDGE_TOL) & (origin <= hi + _EDGE_TOL)
        s_lo = np.where(inside, -np.inf, np.inf)
        s_hi = np.where(inside, np.inf, -np.inf)
        return s_lo, s_hi, np.where(on_edge, 0.5, 1.0)
    a = (lo - origin) / step
    b = (hi - origin) / step
    return np.minimum(a, b), np.maximum(a, b), 1.0


@lru_cache(maxsize=16)
def radon_matrix(n: int, n_angles: int, n_rays: int) -> scipy.sparse.csr_matrix:
    """
    Sparse Radon system matrix with exact line/pixel intersection lengths.

    Row ``j * n_rays + r`` holds ray r at angle j; column ``u * n + v`` is pixel
    (u, v). The returned matrix is cached and must not be modified.
    """
    check_radon_geometry(n, n_angles, n_rays)
    centre = (n - 1) / 2
    rows_idx, cols_idx = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    x0 = (cols_idx - centre - 0.5).ravel()
    x1 = x0 + 1.0
    y1 = (centre - rows_idx + 0.5).ravel()
    y0 = y1 - 1.0
    offsets = np.arange(n_rays, dtype=np.float64) - (n_rays - 1) // 2

    data: list[np.ndarray] = []
    indices: list[np.ndarray] = []
    indptr = [0]
    for j in range(n_angles):
        theta = j * math.pi / n_angles
        ex, ey = math.cos(theta), math.sin(theta)
        dx, dy = -ey, ex
        # snap round-off so axis-aligned rays are exactly axis-aligned
        ex, ey, dx, dy = (0.0 if abs(c) < 1e-12 else c for c in (ex, ey, dx, dy))
        ox = offsets[:, None] * ex
        oy = offsets[:, None] * ey
        sx_lo, sx_hi, wx = _slab(x0[None, :], x1[None, :], ox, dx)
        sy_lo, sy_hi, wy = _slab(y0[None, :], y1[None, :], oy, dy)
        length = np.minimum(sx_hi, sy_hi) - np.maximum(sx_lo, sy_lo)
        length = np.where(np.isfinite(length) & (length > _EDGE_TOL), length * wx * wy, 0.0)
        for r in range(n_rays):
            nz = np.nonzero(length[r])[0]
            indices.append(nz)
            data.append(length[r, nz])
            indptr.append(indptr[-1] + nz.size)
    matrix = scipy.sparse.csr_matrix(
        (np.concatenate(data), np.concatenate(indices), np.asarray(indptr)),
        shape=(n_angles * n_rays, n * n),
    )
    logger.debug(
        "Built Radon matrix n=%d angles=%d rays=%d nnz=%d", n, n_angles, n_rays, matrix.nnz
    )
    return matrix


def radon_forward(img: np.ndarray, n_angles: int, n_rays: int) -> Sinogram:
    """Discrete Radon transform of an image."""
    img = as_image(img)
    matrix = radon_matrix(img.shape[0], int(n_angles), int(n_rays))
    return Sinogram((matrix @ img.reshape(-1)).reshape(n_angles, n_rays))


def radon_adjoint(sino: Sinogram, n: int) -> np.ndarray:
    """Exact adjoint (back-projection) of radon_forward."""
    values = np.asarray(sino.values, dtype=np.float64)
    if values.ndim != 2:
        raise DimensionError(f"Sinogram values must be 2D, got shape {values.shape}")
    try:
        matrix = radon_matrix(n, sino.n_angles, sino.n_rays)
    except ConfigurationError as err:
        raise DimensionError(f"Sinogram geometry inconsistent with n={n}: {err}") from err
    return (matrix.T @ values.reshape(-1)).reshape(n, n)
