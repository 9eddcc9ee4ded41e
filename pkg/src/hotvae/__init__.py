"""Two-branch VAE with an attention message-passing label decoder for multi-label classification."""

from .config import RunConfig
from .data import Dataset, label_stats, load_dataset
from .label_decoder import LabelGraph, build_prior_graph, complete_graph
from .model import HotVAE, ModelShape, init_model, predict_proba
from .training import evaluate, load_checkpoint, predict, save_checkpoint, train

__all__ = [
    "RunConfig", "Dataset", "label_stats", "load_dataset", "LabelGraph", "build_prior_graph",
    "complete_graph", "HotVAE", "ModelShape", "init_model", "predict_proba", "evaluate",
    "load_checkpoint", "predict", "save_checkpoint", "train",
]
