"""RMSProp minibatch training with multiplicative input corruption."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
from tqdm import tqdm

from automap.artifacts import atomic_write_text
from automap.config import TrainConfig
from automap.datasets import Dataset
from automap.encoders import encoding_to_dict
from automap.errors import ConfigurationError, DimensionError, NumericError
from automap.network import (
    PARAM_NAMES,
    Gradients,
    NetParams,
    backward,
    init_params,
    save_checkpoint,
)
from automap.rng import derive_rng

logger = logging.getLogger(__name__)

RMSPROP_EPS = 1e-8


@dataclass
class OptState:
    """Per-parameter running mean-square of the gradients."""

    v: NetParams
    step_count: int = 0

    @classmethod
    def zeros_like(cls, p: NetParams):
        return cls(NetParams.zeros(p.d_in, p.n, p.filters))


def corrupt_multiplicative(x: np.ndarray, level: float, rng: np.random.Generator) -> np.ndarray:
    """x * (1 + level * eps) with eps i.i.d. standard normal; level 0 returns x unchanged."""
    if level < 0:
        raise ConfigurationError(f"Corruption level must be >= 0, got {level}")
    x = np.asarray(x, dtype=np.float64)
    if level == 0:
        return x
    return x * (1.0 + level * rng.standard_normal(x.shape))


def rmsprop_step(
    p: NetParams, g: Gradients, s: OptState, cfg: TrainConfig
) -> tuple[NetParams, OptState]:
    """
    One non-centred RMSProp update.

    v <- decay * v + (1 - decay) * g^2
    p <- p - lr * g / (sqrt(v) + 1e-8)

    Returns:
        (new params, new state); the inputs are not modified
    """
    shape = (p.d_in, p.n, p.filters)
    if (g.d_in, g.n, g.filters) != shape or (s.v.d_in, s.v.n, s.v.filters) != shape:
        raise DimensionError("Parameters, gradients and optimizer state are not congruent")
    if not g.is_finite():
        raise NumericError("Non-finite gradient passed to rmsprop_step", layer="gradients")
    decay = cfg.rmsprop_decay
    new_p, new_v = [], []
    for name in PARAM_NAMES:
        grad = getattr(g, name)
        v = decay * getattr(s.v, name) + (1.0 - decay) * grad * grad
        new_v.append(v)
        new_p.append(getattr(p, name) - cfg.learning_rate * grad / (np.sqrt(v) + RMSPROP_EPS))
    return (
        NetParams(p.d_in, p.n, *new_p),
        OptState(NetParams(p.d_in, p.n, *new_v), s.step_count + 1),
    )


def _batch_gradients(
    p: NetParams,
    x: np.ndarray,
    t: np.ndarray,
    lam: float,
    pool: ThreadPoolExecutor | None,
) -> tuple[float, Gradients]:
    """
    Mean loss and gradients over a batch.

    Workers only produce per-example results; the sum runs in example order and
    is divided once, so pooled and serial runs agree bit for bit.
    """
    count = x.shape[0]

    def one(i: int) -> tuple[float, Gradients]:
        return backward(p, x[i : i + 1], t[i : i + 1], lam)

    mapper = pool.map if pool is not None else map
    value = 0.0
    arrays = [np.zeros_like(a) for a in p.arrays()]
    for example_loss, example_grads in mapper(one, range(count)):
        value += example_loss
        for acc, grad in zip(arrays, example_grads.arrays(), strict=True):
            acc += grad
    for acc in arrays:
        acc /= count
    return value / count, Gradients(p.d_in, p.n, *arrays)


def checkpoint_metadata(dataset: Dataset, cfg: TrainConfig, epoch: int) -> dict[str, Any]:
    """Everything needed to reuse a checkpoint on new sensor data."""
    return {
        "encoding": encoding_to_dict(dataset.encoding),
        "layout": dataset.layout.to_dict(),
        "sensor_scale": dataset.sensor_scale,
        "target_mode": dataset.target_mode,
        "phase_seed": dataset.phase_seed,
        "provenance": dataset.provenance,
        "seed": cfg.seed,
        "epoch": epoch,
        "config": cfg.to_dict(),
    }


def train(
    dataset: Dataset,
    cfg: TrainConfig,
    params: NetParams | None = None,
    checkpoint_dir: str | Path | None = None,
    workers: int = 1,
    progress: bool = False,
) -> tuple[NetParams, list[float]]:
    """
    Train a network on a dataset.

    Each epoch shuffles the examples with the epoch's shuffle stream, walks them
    in batches of cfg.batch_size (the last short batch is kept), corrupts the
    inputs multiplicatively and applies one RMSProp step per batch.

    Args:
        dataset: Encoded training pairs
        cfg: Hyperparameters and master seed
        params: Starting parameters; Glorot init from cfg.seed when None
        checkpoint_dir: Where epoch checkpoints go when cfg.checkpoint_every > 0
        workers: Threads computing per-example gradients within a batch
        progress: Show a tqdm progress bar over epochs

    Returns:
        (trained params, mean training loss per epoch)

    Raises:
        ConfigurationError: If dataset and params do not fit together
        NumericError: On a non-finite loss, with epoch and batch set
    """
    count = len(dataset)
    if count == 0:
        raise ConfigurationError("Cannot train on an empty dataset")
    if params is None:
        params = init_params(dataset.d_in, dataset.n, cfg.seed)
    elif (params.d_in, params.n) != (dataset.d_in, dataset.n):
        raise ConfigurationError(
            f"Network expects d_in={params.d_in}, n={params.n}; "
            f"dataset has d_in={dataset.d_in}, n={dataset.n}"
        )
    if workers < 1:
        raise ConfigurationError(f"workers must be >= 1, got {workers}")

    state = OptState.zeros_like(params)
    history: list[float] = []
    logger.info(
        "Training on %d examples (%s, n=%d, d_in=%d) for %d epochs",
        count,
        dataset.encoding.kind,
        dataset.n,
        dataset.d_in,
        cfg.epochs,
    )
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for epoch in tqdm(range(1, cfg.epochs + 1), desc="epochs", disable=not progress):
            order = derive_rng(cfg.seed, "shuffle", epoch).permutation(count)
            epoch_total = 0.0
            for batch, start in enumerate(range(0, count, cfg.batch_size)):
                idx = order[start : start + cfg.batch_size]
                noise_rng = derive_rng(cfg.seed, "corruption", epoch, batch)
                x = corrupt_multiplicative(dataset.inputs[idx], cfg.mult_noise, noise_rng)
                try:
                    value, grads = _batch_gradients(
                        params, x, dataset.targets[idx], cfg.lambda_l1, pool
                    )
                    if not np.isfinite(value):
                        raise NumericError("Non-finite training loss", layer="loss")
                    params, state = rmsprop_step(params, grads, state, cfg)
                    if not params.is_finite():
                        raise NumericError("Parameters became non-finite", layer="params")
                except NumericError as err:
                    raise NumericError(
                        f"{err} at epoch {epoch}, batch {batch}",
                        layer=err.layer,
                        epoch=epoch,
                        batch=batch,
                    ) from err
                logger.debug("epoch %d batch %d loss %.6g", epoch, batch, value)
                epoch_total += value * idx.size
            history.append(epoch_total / count)
            logger.info("epoch %d mean loss %.6g", epoch, history[-1])
            due = cfg.checkpoint_every and epoch % cfg.checkpoint_every == 0
            if checkpoint_dir is not None and due:
                save_checkpoint(
                    Path(checkpoint_dir) / f"epoch_{epoch:04d}.amap",
                    params,
                    checkpoint_metadata(dataset, cfg, epoch),
                )
    finally:
        if pool is not None:
            pool.shutdown()
    return params, history


def write_history_csv(history: list[float], path: str | Path) -> Path:
    """Write ``epoch,mean_loss`` rows (1-based epochs, repr floats)."""
    lines = ["epoch,mean_loss"]
    lines.extend(f"{epoch},{loss!r}" for epoch, loss in enumerate(history, start=1))
    return atomic_write_text(path, "\n".join(lines) + "\n")
