#!/usr/bin/env python
from __future__ import annotations

# Version information
try:
    from actkit.__version__ import __version__  # type: ignore
except ImportError:
    __version__ = "0.1.0a1"

from actkit.act_core import (
    ACTGraph,
    GramGap,
    LossDecomposition,
    TrainConfig,
    TrainRecord,
    TrainResult,
    TrainTrace,
    build_act_graph,
    collapse_statistics,
    cross_correlation,
    empirical_loss,
    inner_solution,
    loss_decomposition,
    train,
)
from actkit.augmentation import (
    AugmentationQuality,
    AugmentationSet,
    PairBatch,
    Transform,
    TransformKind,
    apply,
    estimate_quality,
    lipschitz_constant,
    sample_pair,
    sample_pairs,
)
from actkit.autodiff import (
    Matrix,
    Tape,
    backward_gradients,
    evaluate_graph,
    finite_difference_check,
    finite_difference_norm_error,
)
from actkit.config import ExperimentConfig, load_config, parse_config
from actkit.diagnostics import (
    DiagnosticsReport,
    class_centers,
    estimate_R,
    max_center_alignment,
    prior_gap,
    run_diagnostics,
    theta_certificate,
    verify_alignment_bound,
    wasserstein1,
)
from actkit.downstream import (
    LabeledSet,
    ProbeModel,
    error_rate,
    evaluate_downstream,
    fit_linear_probe,
    knn_predict,
    predict_probe,
)
from actkit.encoder import (
    EncoderParams,
    forward,
    init_params,
    kappa,
    load_checkpoint,
    project_kappa,
    save_checkpoint,
)
from actkit.exceptions import (
    ACTError,
    ConfigurationError,
    DataError,
    InvariantViolationError,
    NumericalError,
    OperationError,
    ShapeError,
)
from actkit.synthgen import SyntheticConfig, generate_source, generate_target

# this_file: src/actkit/__init__.py
"""actkit - adversarial contrastive training at desk scale.

Train small norm-constrained ReLU encoders with an alignment loss plus an
adversarial divergence penalty, transfer them to a shifted target domain
with a few labels, and measure the quantities that certify the transfer.
"""

# Define what's exported with "from actkit import *"
__all__ = [
    "ACTError",
    "ACTGraph",
    "AugmentationQuality",
    "AugmentationSet",
    "ConfigurationError",
    "DataError",
    "DiagnosticsReport",
    "EncoderParams",
    "ExperimentConfig",
    "GramGap",
    "InvariantViolationError",
    "LabeledSet",
    "LossDecomposition",
    "Matrix",
    "NumericalError",
    "OperationError",
    "PairBatch",
    "ProbeModel",
    "ShapeError",
    "SyntheticConfig",
    "Tape",
    "TrainConfig",
    "TrainRecord",
    "TrainResult",
    "TrainTrace",
    "Transform",
    "TransformKind",
    "__version__",
    "apply",
    "backward_gradients",
    "build_act_graph",
    "class_centers",
    "collapse_statistics",
    "cross_correlation",
    "empirical_loss",
    "error_rate",
    "estimate_R",
    "estimate_quality",
    "evaluate_downstream",
    "evaluate_graph",
    "finite_difference_check",
    "finite_difference_norm_error",
    "fit_linear_probe",
    "forward",
    "generate_source",
    "generate_target",
    "init_params",
    "inner_solution",
    "kappa",
    "knn_predict",
    "lipschitz_constant",
    "load_checkpoint",
    "load_config",
    "loss_decomposition",
    "max_center_alignment",
    "parse_config",
    "predict_probe",
    "prior_gap",
    "project_kappa",
    "run_diagnostics",
    "sample_pair",
    "sample_pairs",
    "save_checkpoint",
    "theta_certificate",
    "train",
    "verify_alignment_bound",
    "wasserstein1",
]
