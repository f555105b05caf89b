"""The AUTOMAP feed-forward network with analytic gradients.

Architecture, for sensor input x of length d_in and image side n:

    FC2 = tanh(W1 x + b1)                 n*n units
    FC3 = tanh(W2 FC2 + b2)               n*n units, reshaped to n x n
    C1  = relu(K1 * FC3 + k1b)            64 maps, 5x5 kernels
    C2  = relu(K2 * C1 + k2b)             64 maps, 5x5 kernels
    out = KT (transposed conv) C2 + ktb   1 map, 7x7 kernels, linear

All convolutions are stride 1 with zero "same" padding so every map is n x n.
Every function accepts a single example (1D input) or a batch (2D, examples in
rows); batches reduce over examples in index order.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from automap.artifacts import read_container, split_payload, write_container
from automap.errors import ArtifactMismatchError, DimensionError, NumericError
from automap.numerics import MIN_SIDE
from automap.rng import derive_rng

logger = logging.getLogger(__name__)

N_FILTERS = 64
CONV_KERNEL = 5
OUT_KERNEL = 7
DEFAULT_L1 = 1e-4

PARAM_NAMES = ("W1", "b1", "W2", "b2", "K1", "k1b", "K2", "k2b", "KT", "ktb")

CHECKPOINT_MAGIC = b"AMAP"
CHECKPOINT_VERSION = 1


def param_shapes(d_in: int, n: int, filters: int = N_FILTERS) -> dict[str, tuple[int, ...]]:
    """Shape of every parameter array, in PARAM_NAMES order."""
    pixels = n * n
    return {
        "W1": (pixels, d_in),
        "b1": (pixels,),
        "W2": (pixels, pixels),
        "b2": (pixels,),
        "K1": (filters, 1, CONV_KERNEL, CONV_KERNEL),
        "k1b": (filters,),
        "K2": (filters, filters, CONV_KERNEL, CONV_KERNEL),
        "k2b": (filters,),
        "KT": (filters, OUT_KERNEL, OUT_KERNEL),
        "ktb": (1,),
    }


@dataclass
class NetParams:
    """All trainable arrays of the network plus shape metadata."""

    d_in: int
    n: int
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    K1: np.ndarray
    k1b: np.ndarray
    K2: np.ndarray
    k2b: np.ndarray
    KT: np.ndarray
    ktb: np.ndarray

    def __post_init__(self):
        # filter count is read from K1
        k1_shape = np.shape(self.K1)
        expected = param_shapes(self.d_in, self.n, k1_shape[0] if k1_shape else N_FILTERS)
        for name in PARAM_NAMES:
            array = np.asarray(getattr(self, name), dtype=np.float64)
            if array.shape != expected[name]:
                raise DimensionError(f"{name} has shape {array.shape}, expected {expected[name]}")
            setattr(self, name, array)

    @property
    def filters(self) -> int:
        return self.K1.shape[0]

    def arrays(self) -> list[np.ndarray]:
        """Parameter arrays in checkpoint order."""
        return [getattr(self, name) for name in PARAM_NAMES]

    def items(self) -> list[tuple[str, np.ndarray]]:
        return [(name, getattr(self, name)) for name in PARAM_NAMES]

    def copy(self):
        return type(self)(self.d_in, self.n, *(a.copy() for a in self.arrays()))

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())

    def equals(self, other: "NetParams") -> bool:
        """Bit-exact equality of shapes and values."""
        return (
            self.d_in == other.d_in
            and self.n == other.n
            and self.filters == other.filters
            and all(np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays(), strict=True))
        )

    @classmethod
    def zeros(cls, d_in: int, n: int, filters: int = N_FILTERS):
        shapes = param_shapes(d_in, n, filters)
        return cls(d_in, n, *(np.zeros(shapes[name]) for name in PARAM_NAMES))


class Gradients(NetParams):
    """Gradient arrays, shape-congruent with NetParams."""


@dataclass
class ForwardTrace:
    """Post-activation values of every hidden layer.

    Single-example traces hold fc arrays of shape (n*n,) and conv arrays of shape
    (64, n, n); batched traces add a leading example axis.
    """

    fc2_act: np.ndarray
    fc3_act: np.ndarray
    c1_act: np.ndarray
    c2_act: np.ndarray
    output: np.ndarray


def init_params(d_in: int, n: int, seed: int, filters: int = N_FILTERS) -> NetParams:
    """
    Glorot-uniform weights and zero biases.

    Each weight array is drawn from U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
    ``filters`` defaults to the full architecture; small counts keep numerical
    gradient checks affordable.
    """
    if d_in < 1:
        raise DimensionError(f"d_in must be >= 1, got {d_in}")
    if n < MIN_SIDE:
        raise DimensionError(f"n must be >= {MIN_SIDE}, got {n}")
    if filters < 1:
        raise DimensionError(f"filters must be >= 1, got {filters}")
    rng = derive_rng(seed, "init")
    pixels = n * n
    conv_area = CONV_KERNEL * CONV_KERNEL
    out_area = OUT_KERNEL * OUT_KERNEL
    fans = {
        "W1": (d_in, pixels),
        "W2": (pixels, pixels),
        "K1": (conv_area, filters * conv_area),
        "K2": (filters * conv_area, filters * conv_area),
        "KT": (filters * out_area, out_area),
    }
    shapes = param_shapes(d_in, n, filters)
    arrays = []
    for name in PARAM_NAMES:
        if name in fans:
            fan_in, fan_out = fans[name]
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            arrays.append(rng.uniform(-bound, bound, size=shapes[name]))
        else:
            arrays.append(np.zeros(shapes[name]))
    return NetParams(d_in, n, *arrays)


def _mix(x: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Channel mixing: (b, i, h, w) with (o, i) -> (b, o, h, w)."""
    return np.tensordot(x, weights, axes=([1], [1])).transpose(0, 3, 1, 2)


def conv_same(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Stride-1 zero-padded cross-correlation, (b, i, n, n) -> (b, o, n, n)."""
    size = kernels.shape[-1]
    pad = size // 2
    n = x.shape[-1]
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    out = np.zeros((x.shape[0], kernels.shape[0], n, n))
    for k in range(size):
        for l in range(size):
            out += _mix(xp[:, :, k : k + n, l : l + n], kernels[:, :, k, l])
    return out + bias[None, :, None, None]


def conv_same_backward(
    x: np.ndarray, kernels: np.ndarray, dout: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of conv_same: (dx, dkernels, dbias)."""
    size = kernels.shape[-1]
    pad = size // 2
    n = x.shape[-1]
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    dxp = np.zeros_like(xp)
    dkernels = np.zeros_like(kernels)
    for k in range(size):
        for l in range(size):
            window = xp[:, :, k : k + n, l : l + n]
            dkernels[:, :, k, l] = np.tensordot(dout, window, axes=([0, 2, 3], [0, 2, 3]))
            dxp[:, :, k : k + n, l : l + n] += np.tensordot(
                dout, kernels[:, :, k, l], axes=([1], [0])
            ).transpose(0, 3, 1, 2)
    return dxp[:, :, pad : pad + n, pad : pad + n], dkernels, dout.sum(axis=(0, 2, 3))


def deconv_same(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """
    Stride-1 transposed convolution, (b, c, n, n) -> (b, n, n).

    Input pixel (i, j) of channel c scatters kernels[c] centred on output (i, j):
    out[h, w] = sum_c sum_{k,l} x[c, h - k + p, w - l + p] * kernels[c, k, l].
    """
    size = kernels.shape[-1]
    pad = size // 2
    n = x.shape[-1]
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    out = np.zeros((x.shape[0], n, n))
    for k in range(size):
        for l in range(size):
            r, c = 2 * pad - k, 2 * pad - l
            out += np.tensordot(xp[:, :, r : r + n, c : c + n], kernels[:, k, l], axes=([1], [0]))
    return out + bias[0]


def deconv_same_backward(
    x: np.ndarray, kernels: np.ndarray, dout: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of deconv_same: (dx, dkernels, dbias)."""
    size = kernels.shape[-1]
    pad = size // 2
    n = x.shape[-1]
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    dxp = np.zeros_like(xp)
    dkernels = np.zeros_like(kernels)
    for k in range(size):
        for l in range(size):
            r, c = 2 * pad - k, 2 * pad - l
            window = xp[:, :, r : r + n, c : c + n]
            dkernels[:, k, l] = np.tensordot(dout, window, axes=([0, 1, 2], [0, 2, 3]))
            dxp[:, :, r : r + n, c : c + n] += dout[:, None, :, :] * kernels[None, :, k, l, None, None]
    return dxp[:, :, pad : pad + n, pad : pad + n], dkernels, np.array([dout.sum()])


def _check_finite(array: np.ndarray, layer: str) -> None:
    if not np.all(np.isfinite(array)):
        raise NumericError(f"Non-finite values in layer {layer}", layer=layer)


def _as_batch(p: NetParams, x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    batch = x[None, :] if single else x
    if batch.ndim != 2 or batch.shape[1] != p.d_in:
        raise DimensionError(f"Input length {batch.shape[-1]} does not match d_in={p.d_in}")
    return batch, single


def _forward_batch(p: NetParams, x: np.ndarray) -> ForwardTrace:
    n = p.n
    fc2 = np.tanh(x @ p.W1.T + p.b1)
    _check_finite(fc2, "FC2")
    fc3 = np.tanh(fc2 @ p.W2.T + p.b2)
    _check_finite(fc3, "FC3")
    c1 = np.maximum(conv_same(fc3.reshape(-1, 1, n, n), p.K1, p.k1b), 0.0)
    _check_finite(c1, "C1")
    c2 = np.maximum(conv_same(c1, p.K2, p.k2b), 0.0)
    _check_finite(c2, "C2")
    out = deconv_same(c2, p.KT, p.ktb)
    _check_finite(out, "output")
    return ForwardTrace(fc2, fc3, c1, c2, out.reshape(x.shape[0], n * n))


def _squeeze(trace: ForwardTrace) -> ForwardTrace:
    return ForwardTrace(
        trace.fc2_act[0], trace.fc3_act[0], trace.c1_act[0], trace.c2_act[0], trace.output[0]
    )


def forward(
    p: NetParams, x: np.ndarray, capture: bool = False
) -> tuple[np.ndarray, ForwardTrace | None]:
    """
    Run the network.

    Args:
        p: Parameters
        x: Input of length d_in, or a (batch, d_in) array
        capture: Also return the hidden-layer trace

    Returns:
        (output of length n*n or (batch, n*n), trace or None)

    Raises:
        DimensionError: On input length mismatch
        NumericError: If any layer produces non-finite values
    """
    batch, single = _as_batch(p, x)
    trace = _forward_batch(p, batch)
    if single:
        trace = _squeeze(trace)
    return trace.output, (trace if capture else None)


def loss(
    output: np.ndarray, target: np.ndarray, c2_act: np.ndarray, lam: float = DEFAULT_L1
) -> float:
    """Squared loss plus L1 on C2 activations: mean((out - t)^2) + lam * mean(|c2|)."""
    output = np.asarray(output, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if output.shape != target.shape:
        raise DimensionError(f"Output shape {output.shape} does not match target {target.shape}")
    residual = output - target
    return float(np.mean(residual * residual) + lam * np.mean(np.abs(c2_act)))


def backward(
    p: NetParams, x: np.ndarray, target: np.ndarray, lam: float = DEFAULT_L1
) -> tuple[float, Gradients]:
    """
    Loss and its exact gradient with respect to every parameter.

    For a batch the loss is the mean of per-example losses and the gradients are
    averaged the same way.

    Returns:
        (loss, gradients)
    """
    batch, _ = _as_batch(p, x)
    targets = np.asarray(target, dtype=np.float64).reshape(batch.shape[0], -1)
    if targets.shape[1] != p.n * p.n:
        raise DimensionError(f"Target length {targets.shape[1]} does not match n*n={p.n * p.n}")
    trace = _forward_batch(p, batch)
    value = loss(trace.output, targets, trace.c2_act, lam)

    n = p.n
    b = batch.shape[0]
    dout = (2.0 / (b * n * n)) * (trace.output - targets)
    dc2, dKT, dktb = deconv_same_backward(trace.c2_act, p.KT, dout.reshape(b, n, n))
    dc2 = dc2 + (lam / trace.c2_act.size) * np.sign(trace.c2_act)
    dz4 = dc2 * (trace.c2_act > 0)
    dc1, dK2, dk2b = conv_same_backward(trace.c1_act, p.K2, dz4)
    dz3 = dc1 * (trace.c1_act > 0)
    dimg, dK1, dk1b = conv_same_backward(trace.fc3_act.reshape(b, 1, n, n), p.K1, dz3)
    dz2 = dimg.reshape(b, n * n) * (1.0 - trace.fc3_act**2)
    dW2 = dz2.T @ trace.fc2_act
    db2 = dz2.sum(axis=0)
    dz1 = (dz2 @ p.W2) * (1.0 - trace.fc2_act**2)
    dW1 = dz1.T @ batch
    db1 = dz1.sum(axis=0)

    grads = Gradients(p.d_in, p.n, dW1, db1, dW2, db2, dK1, dk1b, dK2, dk2b, dKT, dktb)
    for name, array in grads.items():
        _check_finite(array, f"grad {name}")
    return value, grads


def combine_complex_outputs(
    real_out: np.ndarray, imag_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Magnitude and wrapped phase from separately reconstructed real/imag channels."""
    return np.hypot(real_out, imag_out), np.arctan2(imag_out, real_out)


def save_checkpoint(path: str | Path, p: NetParams, metadata: dict[str, Any] | None = None) -> Path:
    """
    Write an AMAP checkpoint.

    Args:
        path: Destination file, written atomically
        p: Parameters
        metadata: Extra JSON fields (encoding, sensor_scale, target_mode, seeds, epoch, ...)
    """
    meta = dict(metadata or {})
    meta.update(
        {
            "d_in": p.d_in,
            "n": p.n,
            "filters": p.filters,
            "layer_shapes": {
                k: list(v) for k, v in param_shapes(p.d_in, p.n, p.filters).items()
            },
        }
    )
    return write_container(path, CHECKPOINT_MAGIC, CHECKPOINT_VERSION, meta, p.arrays())


def load_checkpoint(path: str | Path) -> tuple[NetParams, dict[str, Any]]:
    """Read an AMAP checkpoint; returns (params, metadata)."""
    _, meta, payload = read_container(path, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)
    try:
        d_in, n = int(meta["d_in"]), int(meta["n"])
        filters = int(meta.get("filters", N_FILTERS))
    except (KeyError, TypeError, ValueError) as err:
        raise ArtifactMismatchError(f"{path}: checkpoint metadata lacks d_in/n") from err
    shapes = param_shapes(d_in, n, filters)
    declared = {k: tuple(v) for k, v in meta.get("layer_shapes", {}).items()}
    if declared and declared != shapes:
        raise ArtifactMismatchError(f"{path}: declared layer shapes do not match the architecture")
    arrays = split_payload(payload, [shapes[name] for name in PARAM_NAMES], str(path))
    return NetParams(d_in, n, *arrays), meta


