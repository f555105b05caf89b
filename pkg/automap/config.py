"""Training configuration and its file loaders."""

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any

from automap.errors import ConfigurationError, IngestionError


@dataclass(frozen=True)
class TrainConfig:
    """
    Hyperparameters and seeds for one training run.

    Defaults follow the reference training settings; small runs typically
    override epochs and learning_rate.

    Attributes:
        batch_size: Examples per RMSProp step
        learning_rate: Step size
        rmsprop_decay: Running mean-square decay, in [0, 1)
        momentum: Must be 0; kept for configuration compatibility
        epochs: Number of passes over the dataset
        lambda_l1: Weight of the L1 penalty on C2 activations
        mult_noise: Std of the multiplicative input corruption
        seed: Master seed for init, shuffling and corruption
        checkpoint_every: Write a checkpoint every this many epochs (0 disables)
        test_count: Held-out test images for experiments
    """

    batch_size: int = 100
    learning_rate: float = 2e-5
    rmsprop_decay: float = 0.9
    momentum: float = 0.0
    epochs: int = 100
    lambda_l1: float = 1e-4
    mult_noise: float = 0.01
    seed: int = 0
    checkpoint_every: int = 0
    test_count: int = 32

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 <= self.rmsprop_decay < 1.0:
            raise ConfigurationError(f"rmsprop_decay must be in [0, 1), got {self.rmsprop_decay}")
        if not self.learning_rate > 0.0:
            raise ConfigurationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.mult_noise < 0.0:
            raise ConfigurationError(f"mult_noise must be >= 0, got {self.mult_noise}")
        if self.momentum != 0.0:
            raise ConfigurationError("Only momentum 0.0 is supported")
        if self.epochs < 1:
            raise ConfigurationError(f"epochs must be >= 1, got {self.epochs}")
        if self.lambda_l1 < 0.0:
            raise ConfigurationError(f"lambda_l1 must be >= 0, got {self.lambda_l1}")
        if self.checkpoint_every < 0:
            raise ConfigurationError(
                f"checkpoint_every must be >= 0, got {self.checkpoint_every}"
            )
        if self.seed < 0:
            raise ConfigurationError(f"seed must be >= 0, got {self.seed}")
        if self.test_count < 1:
            raise ConfigurationError(f"test_count must be >= 1, got {self.test_count}")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def override(self, **changes: Any) -> "TrainConfig":
        """Copy with the non-None entries of changes applied."""
        return replace(self, **{k: v for k, v in changes.items() if v is not None})


def _coerce(name: str, value: Any, kind: type) -> Any:
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int | float) or value != int(value):
            raise ConfigurationError(f"Config key {name!r} must be an integer, got {value!r}")
        return int(value)
    if isinstance(value, bool) or not isinstance(value, int | float):
        raise ConfigurationError(f"Config key {name!r} must be a number, got {value!r}")
    return float(value)


def load_config_from_dict(
    config: dict[str, Any], base: TrainConfig | None = None
) -> TrainConfig:
    """
    Build a TrainConfig from a dictionary.

    Config format:
        ```yaml
        batch_size: 100
        learning_rate: 0.0002
        epochs: 50
        seed: 3
        ```

    Args:
        config: Mapping of field names to values; missing keys keep their defaults
        base: Config to start from instead of the defaults

    Returns:
        TrainConfig

    Raises:
        ConfigurationError: On unknown keys or badly typed values
    """
    if not isinstance(config, dict):
        raise ConfigurationError(f"Config must be a mapping, got {type(config).__name__}")
    types = {f.name: (int if f.type in (int, "int") else float) for f in fields(TrainConfig)}
    unknown = sorted(set(config) - set(types))
    if unknown:
        raise ConfigurationError(f"Unknown config keys: {', '.join(unknown)}")
    values = {name: _coerce(name, value, types[name]) for name, value in config.items()}
    return replace(base or TrainConfig(), **values)


def _check_exists(path: Path) -> None:
    if not path.exists():
        raise IngestionError(f"Config file not found: {path}")


def load_config_from_json(path: str | Path) -> TrainConfig:
    """Load a TrainConfig from a JSON file."""
    path = Path(path)
    _check_exists(path)
    try:
        config = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise ConfigurationError(f"{path} is not valid JSON: {err}") from err
    return load_config_from_dict(config)


def load_config_from_yaml(path: str | Path) -> TrainConfig:
    """
    Load a TrainConfig from a YAML file.

    Raises:
        ImportError: If PyYAML is not installed
        IngestionError: If the file doesn't exist
    """
    try:
        import yaml  # type: ignore[import-untyped]
    except ImportError as err:
        raise ImportError("PyYAML is required. Install with: pip install pyyaml") from err

    path = Path(path)
    _check_exists(path)
    with path.open() as f:
        config = yaml.safe_load(f)

    return load_config_from_dict(config or {})


def load_config_from_toml(path: str | Path) -> TrainConfig:
    """
    Load a TrainConfig from a TOML file.

    Raises:
        ImportError: If tomli/tomllib is not installed
        IngestionError: If the file doesn't exist
    """
    path = Path(path)
    _check_exists(path)

    # Try tomllib (Python 3.11+)
    try:
        import tomllib

        with path.open("rb") as f:
            config = tomllib.load(f)
    except ImportError:
        try:
            import tomli

            with path.open("rb") as f:
                config = tomli.load(f)
        except ImportError as err:
            raise ImportError("tomli is required. Install with: pip install tomli") from err

    return load_config_from_dict(config)


_LOADERS = {
    ".json": load_config_from_json,
    ".yaml": load_config_from_yaml,
    ".yml": load_config_from_yaml,
    ".toml": load_config_from_toml,
}


def load_config(path: str | Path) -> TrainConfig:
    """Load a TrainConfig, choosing the format from the file suffix."""
    path = Path(path)
    loader = _LOADERS.get(path.suffix.lower())
    if loader is None:
        raise ConfigurationError(
            f"Unsupported config format {path.suffix!r}; use one of {', '.join(sorted(_LOADERS))}"
        )
    return loader(path)
