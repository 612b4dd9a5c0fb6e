"""Attentional graph-network parking-slot detection on synthetic scenes."""

from .autodiff import Tensor, grad_check
from .detector import GridMap, MarkingPoint, decode_points, point_loss
from .discriminator import (LossWeights, SlotPrediction, assemble_predictions,
                            line_loss, total_loss)
from .encoder import NodeFeatures, bilinear_sample, encode_points
from .errors import (CheckpointError, DataError, DimensionError, FormatError,
                     GenerationError, ParameterError, SlotGnnError,
                     TrainingError)
from .estimator import SlotDetector
from .evaluation import (EvalReport, SimilarityReport, evaluate_records,
                         similarity_report)
from .gnn import attention_weights, gnn_forward
from .params import (GnnConfig, ModelConfig, ModelParams, init_params,
                     load_checkpoint, save_checkpoint)
from .pipeline import infer, infer_image
from .render import read_ppm, render_overlay, write_ppm
from .scenes import (SceneConfig, SceneRecord, generate_dataset,
                     generate_scene, read_dataset, write_dataset)
from .training import AdamState, TrainConfig, adam_step, fit_records, train

__version__ = "0.1.0"

__all__ = [
    "Tensor", "grad_check",
    "GridMap", "MarkingPoint", "decode_points", "point_loss",
    "LossWeights", "SlotPrediction", "assemble_predictions", "line_loss",
    "total_loss",
    "NodeFeatures", "bilinear_sample", "encode_points",
    "SlotGnnError", "DimensionError", "ParameterError", "DataError",
    "FormatError", "CheckpointError", "GenerationError", "TrainingError",
    "SlotDetector",
    "EvalReport", "SimilarityReport", "evaluate_records", "similarity_report",
    "attention_weights", "gnn_forward",
    "GnnConfig", "ModelConfig", "ModelParams", "init_params",
    "load_checkpoint", "save_checkpoint",
    "infer", "infer_image",
    "read_ppm", "render_overlay", "write_ppm",
    "SceneConfig", "SceneRecord", "generate_dataset", "generate_scene",
    "read_dataset", "write_dataset",
    "AdamState", "TrainConfig", "adam_step", "fit_records", "train",
    "__version__",
]
