"""Multi-scale modeling of irregularly sampled multivariate time series.

The package couples a minimal float64 autodiff engine with a model that
re-grids each variate through a learned, differentiable warping
transform, encodes the result with alternating temporal/variate
attention, and pools every scale into one prediction.
"""

from .tensor import Parameter, Tensor, grad_check
from .optim import AdamState, OptimizerError, adam_step
from .dataio import (
    Batch,
    DatasetFormatError,
    GridInstance,
    NormalizationStats,
    apply_normalization,
    batch,
    build_grid,
    fit_normalization,
    load_dataset,
    write_dataset,
)
from .encoder import InputEncoder
from .warp import WARP_MODES, WarpLayer
from .attention import AttentionBlock, MultiHeadAttention
from .decoder import TASKS, AttentionPool, Decoder
from .model import ModelConfig, ModelOutput, MultiScaleModel
from .metrics import (
    binary_auprc,
    binary_auroc,
    evaluate_predictions,
    macro_auprc,
    macro_auroc,
    summarize_runs,
)
from .synthetic import GeneratorSpec, generate_dataset, generate_instance, write_splits
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
# the train() entry point stays in its submodule: exporting it here would
# shadow the tswarp.train module attribute itself
from .train import DivergenceError, TrainConfig, TrainResult, evaluate_model
from .checks import GRADIENT_TOLERANCE, run_gradient_suite
from .config import (
    ConfigError,
    generator_spec_from_file,
    model_config_from_file,
    train_config_from_file,
)
from .export import export_alignment
from .plots import render_alignment, render_history

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "AttentionBlock",
    "AttentionPool",
    "Batch",
    "CheckpointError",
    "ConfigError",
    "DatasetFormatError",
    "Decoder",
    "DivergenceError",
    "GRADIENT_TOLERANCE",
    "GeneratorSpec",
    "GridInstance",
    "InputEncoder",
    "ModelConfig",
    "ModelOutput",
    "MultiHeadAttention",
    "MultiScaleModel",
    "NormalizationStats",
    "OptimizerError",
    "Parameter",
    "TASKS",
    "Tensor",
    "TrainConfig",
    "TrainResult",
    "WARP_MODES",
    "WarpLayer",
    "adam_step",
    "apply_normalization",
    "batch",
    "binary_auprc",
    "binary_auroc",
    "build_grid",
    "evaluate_model",
    "evaluate_predictions",
    "export_alignment",
    "fit_normalization",
    "generate_dataset",
    "generate_instance",
    "generator_spec_from_file",
    "grad_check",
    "load_checkpoint",
    "load_dataset",
    "macro_auprc",
    "macro_auroc",
    "model_config_from_file",
    "render_alignment",
    "render_history",
    "run_gradient_suite",
    "save_checkpoint",
    "summarize_runs",
    "train_config_from_file",
    "write_dataset",
    "write_splits",
]
