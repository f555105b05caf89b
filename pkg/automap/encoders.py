"""Sensor-domain encoding operators.

An EncodingOperator freezes all sampling geometry at construction so that the
network input layout is fixed for the lifetime of an experiment. ``encode`` maps
an image (optionally complex) to a flat real SensorVec:

    cartesian     dft2, then [all re | all im]
    poisson_disc  dft2, masked entries in row-major mask order, [re | im]
    spiral        nudft over the trajectory, [re | im]
    radon         radon_forward, row-major (angle-major), real only
    misaligned    dft2, each k-space row shifted by a random integer, [re | im]
"""

import base64
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from automap.artifacts import dumps_json
from automap.errors import (
    ConfigurationError,
    ConstructionError,
    DimensionError,
    UsageError,
)
from automap.numerics import (
    MIN_SIDE,
    KTrajectory,
    as_image,
    check_radon_geometry,
    default_radon_geometry,
    dft2,
    nudft,
    radon_forward,
)
from automap.rng import derive_rng

logger = logging.getLogger(__name__)

KINDS = ("cartesian", "poisson_disc", "spiral", "radon", "misaligned")
COMPLEX_KINDS = frozenset({"cartesian", "poisson_disc", "spiral", "misaligned"})
FULL_GRID_KINDS = frozenset({"cartesian", "misaligned"})

# CLI spelling -> kind
KIND_ALIASES = {"poisson": "poisson_disc", "poisson-disc": "poisson_disc"}

ORDERING = {
    "cartesian": "grid-row-major",
    "poisson_disc": "mask-row-major",
    "spiral": "trajectory",
    "radon": "sinogram-row-major",
    "misaligned": "grid-row-major",
}

BISECTION_ROUNDS = 50
FRACTION_TOLERANCE = 0.01


def normalize_kind(kind: str) -> str:
    """Map CLI aliases to canonical kind names and validate."""
    kind = KIND_ALIASES.get(kind, kind)
    if kind not in KINDS:
        raise ConfigurationError(f"Unknown encoding kind: {kind!r}. Known: {', '.join(KINDS)}")
    return kind


@dataclass(frozen=True)
class SensorLayout:
    """How a SensorVec's flat values map back to sensor samples."""

    kind: str
    is_complex: bool
    m: int
    ordering: str

    @property
    def length(self) -> int:
        return 2 * self.m if self.is_complex else self.m

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "is_complex": self.is_complex,
            "m": self.m,
            "ordering": self.ordering,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SensorLayout":
        return cls(
            kind=str(data["kind"]),
            is_complex=bool(data["is_complex"]),
            m=int(data["m"]),
            ordering=str(data["ordering"]),
        )


@dataclass(frozen=True)
class SensorVec:
    """Flat real-valued network input plus its layout descriptor."""

    values: np.ndarray
    layout: SensorLayout

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if values.shape[0] != self.layout.length:
            raise DimensionError(
                f"SensorVec length {values.shape[0]} does not match layout length "
                f"{self.layout.length}"
            )
        object.__setattr__(self, "values", values)

    def complex_samples(self) -> np.ndarray:
        """The m complex samples of a complex-valued layout."""
        if not self.layout.is_complex:
            raise UsageError(f"{self.layout.kind} sensor data is real-valued")
        m = self.layout.m
        return self.values[:m] + 1j * self.values[m:]

    def with_values(self, values: np.ndarray) -> "SensorVec":
        return SensorVec(values, self.layout)


@dataclass(frozen=True)
class PhaseMap:
    """Synthetic phase in [0, 2*pi] for an n x n image."""

    n: int
    phase: np.ndarray


@dataclass(frozen=True, eq=False)
class EncodingOperator:
    """
    A frozen forward model.

    Attributes:
        kind: One of KINDS
        n: Image side length
        seed: Seed used to build any random geometry
        params: Construction parameters (JSON-compatible)
        mask: Boolean (n, n) sampling mask for poisson_disc, in DFT order
        trajectory: Sampling locations for spiral
    """

    kind: str
    n: int
    seed: int = 0
    params: dict[str, Any] = field(default_factory=dict)
    mask: np.ndarray | None = None
    trajectory: KTrajectory | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"Unknown encoding kind: {self.kind!r}")
        if self.n < MIN_SIDE:
            raise ConfigurationError(f"Encoding side must be >= {MIN_SIDE}, got {self.n}")
        if self.kind == "poisson_disc":
            if self.mask is None or self.mask.shape != (self.n, self.n):
                raise ConfigurationError("poisson_disc operator needs an (n, n) mask")
            if not self.mask[0, 0]:
                raise ConfigurationError("poisson_disc mask must include the DC location")
            mask = np.array(self.mask, dtype=bool)
            mask.setflags(write=False)
            object.__setattr__(self, "mask", mask)
        if self.kind == "spiral" and self.trajectory is None:
            raise ConfigurationError("spiral operator needs a trajectory")
        if self.kind == "radon":
            check_radon_geometry(self.n, self.n_angles, self.n_rays)
        if self.kind == "misaligned" and self.max_shift < 0:
            raise ConfigurationError(f"max_shift must be >= 0, got {self.max_shift}")

    @property
    def n_angles(self) -> int:
        return int(self.params["n_angles"])

    @property
    def n_rays(self) -> int:
        return int(self.params["n_rays"])

    @property
    def max_shift(self) -> int:
        return int(self.params.get("max_shift", 0))

    @property
    def layout(self) -> SensorLayout:
        return sensor_layout(self)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EncodingOperator):
            return NotImplemented
        return encoding_to_json(self) == encoding_to_json(other)

    def __hash__(self) -> int:
        return hash(encoding_to_json(self))


def sensor_layout(op: EncodingOperator) -> SensorLayout:
    """Layout descriptor of the vectors op.encode produces."""
    if op.kind in FULL_GRID_KINDS:
        m = op.n * op.n
    elif op.kind == "poisson_disc":
        assert op.mask is not None
        m = int(op.mask.sum())
    elif op.kind == "spiral":
        assert op.trajectory is not None
        m = len(op.trajectory)
    else:
        m = op.n_angles * op.n_rays
    return SensorLayout(op.kind, op.kind in COMPLEX_KINDS, m, ORDERING[op.kind])


def default_max_shift(n: int) -> int:
    """Misalignment scaled from 3 samples at n=128."""
    return max(1, round(3 * n / 128))


def _toroidal_sites(n: int, rng: np.random.Generator) -> np.ndarray:
    """One jittered site per grid cell, shape (n, n, 2)."""
    rows, cols = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    jitter = rng.uniform(-0.5, 0.5, size=(n, n, 2))
    jitter[0, 0] = 0.0
    return np.stack([rows, cols], axis=-1) + jitter


def _dart_throw(sites: np.ndarray, order: np.ndarray, radius: float) -> np.ndarray:
    """Greedy dart throwing over jittered sites on the periodic k-space grid."""
    n = sites.shape[0]
    mask = np.zeros((n, n), dtype=bool)
    mask[0, 0] = True
    reach = int(math.ceil(radius)) + 1
    offsets = np.arange(-reach, reach + 1)
    r2 = radius * radius
    for flat in order:
        i, j = divmod(int(flat), n)
        if mask[i, j]:
            continue
        wi = (i + offsets) % n
        wj = (j + offsets) % n
        window = mask[np.ix_(wi, wj)]
        if window.any():
            neighbours = sites[np.ix_(wi, wj)][window]
            delta = neighbours - sites[i, j]
            delta -= n * np.round(delta / n)
            if np.any((delta * delta).sum(axis=1) < r2):
                continue
        mask[i, j] = True
    return mask


def poisson_disc_mask(
    n: int, fraction: float, seed: int, tolerance: float = FRACTION_TOLERANCE
) -> tuple[np.ndarray, float]:
    """
    Poisson-disc k-space mask hitting a sampled fraction.

    The minimum-distance radius is bisected until the sampled fraction lies
    within ``tolerance`` of ``fraction``. DC is always sampled.

    Returns:
        (mask in DFT order, radius used)

    Raises:
        ConstructionError: If no radius reaches the target in BISECTION_ROUNDS rounds
    """
    if not 0.0 < fraction <= 1.0:
        raise ConfigurationError(f"fraction must be in (0, 1], got {fraction}")
    if fraction >= 1.0 - tolerance:
        return np.ones((n, n), dtype=bool), 0.0
    rng = derive_rng(seed, "encoding", n)
    sites = _toroidal_sites(n, rng)
    order = rng.permutation(n * n)
    lo, hi = 0.0, float(n)
    total = n * n
    for round_index in range(BISECTION_ROUNDS):
        radius = 0.5 * (lo + hi)
        mask = _dart_throw(sites, order, radius)
        achieved = mask.sum() / total
        logger.debug(
            "Poisson-disc round %d: radius=%.6f fraction=%.4f", round_index, radius, achieved
        )
        if abs(achieved - fraction) <= tolerance:
            return mask, radius
        if achieved > fraction:
            lo = radius
        else:
            hi = radius
    raise ConstructionError(
        f"Poisson-disc fraction {fraction} unreachable for n={n} after {BISECTION_ROUNDS} rounds"
    )


def spiral_trajectory(n: int, interleaves: int = 10, undersampling: float = 1.2) -> KTrajectory:
    """
    Interleaved Archimedean (alpha=1) spiral.

    Interleave j follows r(tau) = tau * n/2 with angle 2*pi*(turns*tau + j/interleaves).
    ``turns = n / (2 * interleaves)`` keeps adjacent arms one sample apart. Every
    arm starts at the k-space centre, so DC is the first point and is sampled once;
    the remaining round(n^2 / undersampling) - 1 samples are spread as evenly as
    possible over the arms, equispaced in tau on the open interval (0, 1).
    """
    if interleaves < 1:
        raise ConfigurationError(f"interleaves must be >= 1, got {interleaves}")
    if undersampling <= 0:
        raise ConfigurationError(f"undersampling must be > 0, got {undersampling}")
    total = round(n * n / undersampling)
    if total - 1 < interleaves:
        raise ConfigurationError(f"{total} samples cannot cover {interleaves} interleaves")
    turns = n / (2.0 * interleaves)
    base, extra = divmod(total - 1, interleaves)
    arms = [np.zeros((1, 2))]
    for j in range(interleaves):
        count = base + (1 if j < extra else 0)
        tau = np.arange(1, count + 1, dtype=np.float64) / (count + 1)
        angle = 2.0 * np.pi * (turns * tau + j / interleaves)
        radius = tau * (n / 2.0)
        arms.append(np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=1))
    return KTrajectory(np.concatenate(arms, axis=0))


def make_encoding(
    kind: str,
    n: int,
    *,
    seed: int = 0,
    fraction: float = 0.4,
    interleaves: int = 10,
    undersampling: float = 1.2,
    n_angles: int | None = None,
    n_rays: int | None = None,
    max_shift: int | None = None,
) -> EncodingOperator:
    """
    Build a frozen encoding operator.

    Args:
        kind: One of KINDS (CLI aliases accepted)
        n: Image side length
        seed: Seed for random geometry (poisson_disc)
        fraction: Fraction of k-space kept, poisson_disc only
        interleaves: Spiral interleave count
        undersampling: Spiral R, total samples = n^2 / R
        n_angles: Radon angle count (default max(60, n))
        n_rays: Radon ray count (default smallest odd >= ceil(n*sqrt(2)) + 2)
        max_shift: Misalignment bound (default max(1, round(3n/128)))

    Returns:
        EncodingOperator
    """
    kind = normalize_kind(kind)
    if n < MIN_SIDE:
        raise ConfigurationError(f"Encoding side must be >= {MIN_SIDE}, got {n}")
    if kind == "cartesian":
        op = EncodingOperator(kind, n, seed, {})
    elif kind == "poisson_disc":
        mask, radius = poisson_disc_mask(n, fraction, seed)
        params = {"fraction": float(fraction), "radius": float(radius)}
        op = EncodingOperator(kind, n, seed, params, mask=mask)
    elif kind == "spiral":
        traj = spiral_trajectory(n, interleaves, undersampling)
        params = {"interleaves": int(interleaves), "undersampling": float(undersampling)}
        op = EncodingOperator(kind, n, seed, params, trajectory=traj)
    elif kind == "radon":
        default_angles, default_rays = default_radon_geometry(n)
        params = {
            "n_angles": int(n_angles if n_angles is not None else default_angles),
            "n_rays": int(n_rays if n_rays is not None else default_rays),
        }
        op = EncodingOperator(kind, n, seed, params)
    else:
        shift = default_max_shift(n) if max_shift is None else int(max_shift)
        if shift < 1:
            raise ConfigurationError(f"misaligned max_shift must be >= 1, got {shift}")
        op = EncodingOperator(kind, n, seed, {"max_shift": shift, "per_example": True})
    logger.info("Built %s encoding n=%d m=%d", kind, n, op.layout.m)
    return op


def _flatten_complex(samples: np.ndarray) -> np.ndarray:
    samples = np.asarray(samples).reshape(-1)
    return np.concatenate([samples.real, samples.imag])


def misalign_rows(grid: np.ndarray, shifts: np.ndarray) -> np.ndarray:
    """
    Shift each k-space row along the readout direction with zero fill.

    Shifts act on the centred (fftshifted) k-space so that samples move to
    neighbouring frequencies; the result is returned in DFT order.
    """
    centred = np.fft.fftshift(grid)
    out = np.zeros_like(centred)
    n = centred.shape[1]
    for row, shift in enumerate(np.asarray(shifts, dtype=int)):
        if shift > 0:
            out[row, shift:] = centred[row, : n - shift]
        elif shift < 0:
            out[row, : n + shift] = centred[row, -shift:]
        else:
            out[row] = centred[row]
    return np.fft.ifftshift(out)


def encode(
    op: EncodingOperator,
    img_re: np.ndarray,
    img_im: np.ndarray | None = None,
    rng: np.random.Generator | None = None,
) -> SensorVec:
    """
    Apply an encoding operator to an image.

    Args:
        op: Encoding operator
        img_re: Real part (or the magnitude image), shape (n, n)
        img_im: Imaginary part or None
        rng: Generator for per-call randomness; required for misaligned

    Returns:
        SensorVec in op's layout
    """
    img_re = as_image(img_re, "img_re")
    if img_re.shape[0] != op.n:
        raise DimensionError(f"Image side {img_re.shape[0]} does not match operator n={op.n}")
    layout = sensor_layout(op)
    if op.kind == "radon":
        if img_im is not None and np.any(np.asarray(img_im) != 0):
            raise UsageError("radon encoding is real-valued; imaginary input is not supported")
        sino = radon_forward(img_re, op.n_angles, op.n_rays)
        return SensorVec(sino.flat.copy(), layout)
    if op.kind == "spiral":
        assert op.trajectory is not None
        return SensorVec(_flatten_complex(nudft(img_re, img_im, op.trajectory)), layout)
    grid = dft2(img_re, img_im)
    if op.kind == "cartesian":
        return SensorVec(_flatten_complex(grid), layout)
    if op.kind == "poisson_disc":
        return SensorVec(_flatten_complex(grid[op.mask]), layout)
    if rng is None:
        raise UsageError("misaligned encoding needs an rng for its per-example shifts")
    shifts = rng.integers(-op.max_shift, op.max_shift + 1, size=op.n)
    return SensorVec(_flatten_complex(misalign_rows(grid, shifts)), layout)


def scatter_to_grid(sv: SensorVec, op: EncodingOperator) -> np.ndarray:
    """Place complex samples of a grid-based layout back onto the (n, n) grid."""
    if op.kind not in FULL_GRID_KINDS and op.kind != "poisson_disc":
        raise UsageError(f"{op.kind} samples do not live on the Cartesian grid")
    expected = sensor_layout(op)
    if sv.layout.m != expected.m or not sv.layout.is_complex:
        raise DimensionError(
            f"SensorVec has m={sv.layout.m}, operator {op.kind} expects m={expected.m}"
        )
    samples = sv.complex_samples()
    if op.kind == "poisson_disc":
        grid = np.zeros((op.n, op.n), dtype=np.complex128)
        grid[op.mask] = samples
        return grid
    return samples.reshape(op.n, op.n)


def synthesize_phase_map(
    n: int, seed: int, index: int = 0, frequencies: tuple[float, float] | None = None
) -> PhaseMap:
    """
    Rotated separable sinusoid rescaled to [0, 2*pi].

    p(u, v) = sin(2*pi*f1*u'/n) * sin(2*pi*f2*v'/n), where (u', v') are centred
    pixel coordinates rotated by theta ~ U[0, pi) and f1, f2 ~ U[0.5, n/8].

    Args:
        n: Side length
        seed: Master seed
        index: Map index within the seed's stream (one per training image)
        frequencies: Override (f1, f2); the rotation is still drawn

    Returns:
        PhaseMap; a constant pre-rescale map becomes the constant pi
    """
    if n < MIN_SIDE:
        raise ConfigurationError(f"Phase map side must be >= {MIN_SIDE}, got {n}")
    rng = derive_rng(seed, "phase", index)
    theta = rng.uniform(0.0, np.pi)
    f_max = max(n / 8.0, 0.5)
    f1, f2 = rng.uniform(0.5, f_max, size=2)
    if frequencies is not None:
        f1, f2 = frequencies
    coords = np.arange(n, dtype=np.float64) - n / 2.0
    u, v = np.meshgrid(coords, coords, indexing="ij")
    u_rot = u * np.cos(theta) - v * np.sin(theta)
    v_rot = u * np.sin(theta) + v * np.cos(theta)
    raw = np.sin(2 * np.pi * f1 * u_rot / n) * np.sin(2 * np.pi * f2 * v_rot / n)
    lo, hi = raw.min(), raw.max()
    if hi - lo <= 1e-12:
        phase = np.full((n, n), np.pi)
    else:
        phase = (raw - lo) / (hi - lo) * (2 * np.pi)
        phase[raw == lo] = 0.0
        phase[raw == hi] = 2 * np.pi
    return PhaseMap(n, phase)


def apply_phase(img: np.ndarray, pm: PhaseMap) -> tuple[np.ndarray, np.ndarray]:
    """Modulate a magnitude image: returns (img*cos(phase), img*sin(phase))."""
    img = as_image(img)
    if img.shape != pm.phase.shape:
        raise DimensionError(f"Image side {img.shape[0]} does not match phase map n={pm.n}")
    return img * np.cos(pm.phase), img * np.sin(pm.phase)


def encoding_to_dict(op: EncodingOperator) -> dict[str, Any]:
    """JSON-compatible dict {kind, n, seed, params, geometry}."""
    geometry: dict[str, Any]
    if op.kind == "poisson_disc":
        assert op.mask is not None
        bits = np.packbits(op.mask.reshape(-1))
        geometry = {"mask": base64.b64encode(bits.tobytes()).decode("ascii")}
    elif op.kind == "spiral":
        assert op.trajectory is not None
        geometry = {"trajectory": [float(x) for x in op.trajectory.points.reshape(-1)]}
    elif op.kind == "radon":
        geometry = {"n_angles": op.n_angles, "n_rays": op.n_rays}
    elif op.kind == "misaligned":
        geometry = {"max_shift": op.max_shift, "per_example": True}
    else:
        geometry = {}
    return {
        "kind": op.kind,
        "n": op.n,
        "seed": op.seed,
        "params": dict(op.params),
        "geometry": geometry,
    }


def encoding_from_dict(data: dict[str, Any]) -> EncodingOperator:
    """Inverse of encoding_to_dict."""
    try:
        kind = str(data["kind"])
        n = int(data["n"])
        seed = int(data["seed"])
        params = dict(data["params"])
        geometry = dict(data["geometry"])
    except (KeyError, TypeError, ValueError) as err:
        raise ConfigurationError(f"Malformed encoding description: {err}") from err
    mask = None
    trajectory = None
    if kind == "poisson_disc":
        bits = np.frombuffer(base64.b64decode(geometry["mask"]), dtype=np.uint8)
        mask = np.unpackbits(bits)[: n * n].astype(bool).reshape(n, n)
    elif kind == "spiral":
        trajectory = KTrajectory(np.asarray(geometry["trajectory"], dtype=np.float64).reshape(-1, 2))
    return EncodingOperator(kind, n, seed, params, mask=mask, trajectory=trajectory)


def encoding_to_json(op: EncodingOperator) -> str:
    """Canonical JSON text of an operator."""
    return dumps_json(encoding_to_dict(op))


def encoding_from_json(text: str) -> EncodingOperator:
    """Parse an operator from encoding_to_json output."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigurationError(f"Encoding JSON is not valid: {err}") from err
    return encoding_from_dict(data)
