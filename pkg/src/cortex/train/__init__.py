from ..data.dataset import split_dataset, split_indices
from .checkpoint import checkpoint_bytes, checkpoint_from_bytes, load_checkpoint, save_checkpoint, topology_hash
from .config import TrainConfig, load_config, parse_config_text
from .loop import TrainResult, epoch_order, evaluate_model, train
from .losses import cross_entropy_loss, inverse_frequency_weights
from .model import Model, build_mri_model
from .optim import clip_by_global_norm, optimizer_step

__all__ = [
    "split_dataset",
    "split_indices",
    "checkpoint_bytes",
    "checkpoint_from_bytes",
    "load_checkpoint",
    "save_checkpoint",
    "topology_hash",
    "TrainConfig",
    "load_config",
    "parse_config_text",
    "TrainResult",
    "epoch_order",
    "evaluate_model",
    "train",
    "cross_entropy_loss",
    "inverse_frequency_weights",
    "Model",
    "build_mri_model",
    "clip_by_global_norm",
    "optimizer_step",
]
