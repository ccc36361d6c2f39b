"""Temporal knowledge-graph embeddings with time as quaternion rotations."""
from .data import (Dataset, FilterIndex, Quadruple, RawFact, Vocabulary, bin_timestamps, build_filter_index,
                   load_dataset, negative_samples, parse_quadruple_file)
from .estimator import RotateQVS
from .evaluation import EvalReport, evaluate, metrics, rank
from .exceptions import (BadAxisError, EmptyRanksError, InfeasibleSpecError, MalformedLineError,
                         ShapeMismatchError, UnknownDatasetError, UnknownLabelError, ZeroNormError)
from .model import (ModelParams, ScoreBreakdown, gradients, init_params, load_checkpoint, loss,
                    save_checkpoint, score, time_specific_entity)
from .patterns import (cosine_similarity, deduction_check, evolution_histogram, inversion_residual,
                       real_part_magnitude, temporal_transport)
from .quaternion import Quaternion, QuaternionVector, UnitQuaternion
from .synthetic import SyntheticSpec, generate
from .training import AdagradState, TrainConfig, adagrad_step, default_config, train

__version__ = "0.1.0"

__all__ = [
    "AdagradState", "BadAxisError", "Dataset", "EmptyRanksError", "EvalReport", "FilterIndex",
    "InfeasibleSpecError", "MalformedLineError", "ModelParams", "Quadruple", "Quaternion", "QuaternionVector",
    "RawFact", "RotateQVS", "ScoreBreakdown", "ShapeMismatchError", "SyntheticSpec", "TrainConfig",
    "UnitQuaternion", "UnknownDatasetError", "UnknownLabelError", "Vocabulary", "ZeroNormError", "adagrad_step",
    "bin_timestamps", "build_filter_index", "cosine_similarity", "deduction_check", "default_config",
    "evaluate", "evolution_histogram", "generate", "gradients", "init_params", "inversion_residual",
    "load_checkpoint", "load_dataset", "loss", "metrics", "negative_samples", "parse_quadruple_file", "rank",
    "real_part_magnitude", "save_checkpoint", "score", "temporal_transport", "time_specific_entity", "train",
]
