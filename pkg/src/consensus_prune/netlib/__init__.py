"""Desk-scale networks, training and representation extraction."""

from .checkpoint import ModelCheckpoint, checkpoint_from_model, load_checkpoint, save_checkpoint
from .data import Dataset, Probes, load_csv_dir, load_npz, select_probes, synthetic_images, synthetic_tabular
from .models import build_model, param_count
from .spec import ArchitectureSpec, BlockSpec, LayerRef, StageSpec, resnet_cifar_spec, transformer_tabular_spec
from .train import Augmentation, TrainConfig, accuracy, extract_representation, finetune, train

__all__ = [
    "ArchitectureSpec", "Augmentation", "BlockSpec", "Dataset", "LayerRef", "ModelCheckpoint", "Probes",
    "StageSpec", "TrainConfig", "accuracy", "build_model", "checkpoint_from_model", "extract_representation",
    "finetune", "load_checkpoint", "load_csv_dir", "load_npz", "param_count", "resnet_cifar_spec",
    "save_checkpoint", "select_probes", "synthetic_images", "synthetic_tabular", "train",
    "transformer_tabular_spec",
]
