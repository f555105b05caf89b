"""automap - learned sensor-to-image reconstruction with conventional baselines."""

from automap.analysis import (
    ActivationStats,
    analyze_network,
    capture_stats,
    export_fc_weights,
    kernel_gallery,
    load_fc_weights,
    stats_to_json,
)
from automap.baselines import (
    BaselineResult,
    gridding_recon,
    ifft_recon,
    kaczmarz,
    kaczmarz_art,
    zero_fill_recon,
)
from automap.config import (
    TrainConfig,
    load_config,
    load_config_from_dict,
    load_config_from_json,
    load_config_from_toml,
    load_config_from_yaml,
)
from automap.datasets import (
    Corpus,
    Dataset,
    build_dataset,
    load_corpus,
    load_corpus_file,
    load_dataset,
    noise_corpus,
    save_corpus,
    save_dataset,
    synth_corpus,
)
from automap.encoders import (
    EncodingOperator,
    PhaseMap,
    SensorLayout,
    SensorVec,
    apply_phase,
    encode,
    encoding_from_json,
    encoding_to_json,
    make_encoding,
    scatter_to_grid,
    sensor_layout,
    synthesize_phase_map,
)
from automap.errors import (
    ArtifactMismatchError,
    AutomapError,
    ConfigurationError,
    ConstructionError,
    DegenerateSignalError,
    DimensionError,
    DomainError,
    IngestionError,
    NumericError,
    UsageError,
)
from automap.evaluation import (
    ExperimentReport,
    Metrics,
    add_awgn_snr,
    compute_metrics,
    evaluate_checkpoint,
    run_experiment,
    run_phase_experiment,
    run_sparsity_experiment,
    validate_report,
    wrapped_phase_error,
)
from automap.network import (
    ForwardTrace,
    Gradients,
    NetParams,
    backward,
    combine_complex_outputs,
    forward,
    init_params,
    load_checkpoint,
    loss,
    save_checkpoint,
)
from automap.numerics import (
    KTrajectory,
    Sinogram,
    dft2,
    idft2,
    nudft,
    nudft_adjoint,
    radon_adjoint,
    radon_forward,
)
from automap.pipeline import PipelineRunner, parse_pipeline
from automap.training import OptState, corrupt_multiplicative, rmsprop_step, train
from automap.version import __version__

__all__ = [
    "ActivationStats",
    "ArtifactMismatchError",
    "AutomapError",
    "BaselineResult",
    "ConfigurationError",
    "ConstructionError",
    "Corpus",
    "Dataset",
    "DegenerateSignalError",
    "DimensionError",
    "DomainError",
    "EncodingOperator",
    "ExperimentReport",
    "ForwardTrace",
    "Gradients",
    "IngestionError",
    "KTrajectory",
    "Metrics",
    "NetParams",
    "NumericError",
    "OptState",
    "PhaseMap",
    "PipelineRunner",
    "SensorLayout",
    "SensorVec",
    "Sinogram",
    "TrainConfig",
    "UsageError",
    "__version__",
    "add_awgn_snr",
    "analyze_network",
    "apply_phase",
    "backward",
    "build_dataset",
    "capture_stats",
    "combine_complex_outputs",
    "compute_metrics",
    "corrupt_multiplicative",
    "dft2",
    "encode",
    "encoding_from_json",
    "encoding_to_json",
    "evaluate_checkpoint",
    "export_fc_weights",
    "forward",
    "gridding_recon",
    "idft2",
    "ifft_recon",
    "init_params",
    "kaczmarz",
    "kaczmarz_art",
    "kernel_gallery",
    "load_checkpoint",
    "load_config",
    "load_config_from_dict",
    "load_config_from_json",
    "load_config_from_toml",
    "load_config_from_yaml",
    "load_corpus",
    "load_corpus_file",
    "load_dataset",
    "load_fc_weights",
    "loss",
    "make_encoding",
    "noise_corpus",
    "nudft",
    "nudft_adjoint",
    "parse_pipeline",
    "radon_adjoint",
    "radon_forward",
    "rmsprop_step",
    "run_experiment",
    "run_phase_experiment",
    "run_sparsity_experiment",
    "save_checkpoint",
    "save_corpus",
    "save_dataset",
    "scatter_to_grid",
    "sensor_layout",
    "stats_to_json",
    "synth_corpus",
    "synthesize_phase_map",
    "train",
    "validate_report",
    "wrapped_phase_error",
    "zero_fill_recon",
]
