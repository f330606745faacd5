"""Clip classifier: network, sampling, training, inference and cross-validation."""

from .checkpoint import load_checkpoint, load_into, save_checkpoint
from .inference import ClipClassification, classify_clip, classify_clips, prepare_input
from .network import DESK_CONFIG, Network, NetworkConfig, build_network
from .sampling import balanced_epoch_sampler
from .training import TrainConfig, train

__all__ = ["ClipClassification", "DESK_CONFIG", "Network", "NetworkConfig", "TrainConfig", "balanced_epoch_sampler",
           "build_network", "classify_clip", "classify_clips", "load_checkpoint", "load_into", "prepare_input",
           "save_checkpoint", "train"]
