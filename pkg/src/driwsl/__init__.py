"""Importance-weighted variational inference and learning for scene-graph CRFs."""

from .bounds import draw_batch, dreg_gradient, iw_bound, joint_log_weights, naive_iwae_gradient
from .config import RunConfig, load_config, parse_config
from .emd import EmdConfig, mirror_ascent
from .errors import DriwslError
from .graph import SceneGraph
from .inference import InferenceResult, infer_graph, infer_many
from .learning import Example, TrainConfig, train
from .metrics import MetricsReport, evaluate, predict
from .model import ModelConfig, PotentialModel, load_checkpoint, save_checkpoint
from .oracle import exact_inference
from .sampler import Temperature, anneal, gumbel_softmax
from .synthetic import SyntheticDatasetSpec, generate, random_instance

__version__ = "0.1.0"

__all__ = [
    "DriwslError", "EmdConfig", "Example", "InferenceResult", "MetricsReport", "ModelConfig",
    "PotentialModel", "RunConfig", "SceneGraph", "SyntheticDatasetSpec", "Temperature",
    "TrainConfig", "anneal", "draw_batch", "dreg_gradient", "evaluate", "exact_inference",
    "generate", "gumbel_softmax", "infer_graph", "infer_many", "iw_bound", "joint_log_weights",
    "load_checkpoint", "load_config", "mirror_ascent", "naive_iwae_gradient", "parse_config",
    "predict", "random_instance", "save_checkpoint", "train",
]
