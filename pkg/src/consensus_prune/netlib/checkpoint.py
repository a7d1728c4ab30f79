"""In-memory checkpoints and their on-disk form.

On disk a checkpoint is a directory holding ``architecture.json``,
``weights.npz`` (one array per state-dict entry, keys like
``blocks.s1_b2.branch.0.weight``) and ``meta.json``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from ..errors import CorruptCheckpoint
from .models import build_model
from .spec import ArchitectureSpec

ARCH_FILE = "architecture.json"
WEIGHTS_FILE = "weights.npz"
META_FILE = "meta.json"


@dataclass
class ModelCheckpoint:
    architecture: ArchitectureSpec
    weights: dict[str, torch.Tensor]
    meta: dict = field(default_factory=dict)

    def to_model(self) -> nn.Module:
        model = build_model(self.architecture, seed=0)
        expected = set(model.state_dict())
        missing, orphan = expected - set(self.weights), set(self.weights) - expected
        if missing or orphan:
            raise CorruptCheckpoint(
                f"weights do not match architecture (missing={sorted(missing)[:5]}, orphan={sorted(orphan)[:5]})"
            )
        model.load_state_dict(self.weights, strict=True)
        model.eval()
        return model

    def validate(self) -> None:
        self.to_model()


def checkpoint_from_model(model: nn.Module, meta: dict | None = None) -> ModelCheckpoint:
    weights = {k: v.detach().clone() for k, v in model.state_dict().items()}
    return ModelCheckpoint(model.spec, weights, dict(meta or {}))


def save_checkpoint(ckpt: ModelCheckpoint, path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    (path / ARCH_FILE).write_text(ckpt.architecture.to_json())
    arrays = {k: v.detach().cpu().numpy() for k, v in ckpt.weights.items()}
    with open(path / WEIGHTS_FILE, "wb") as fh:
        np.savez(fh, **arrays)
    (path / META_FILE).write_text(json.dumps(ckpt.meta, indent=2, sort_keys=True) + "\n")
    return path


def load_checkpoint(path) -> ModelCheckpoint:
    path = Path(path)
    try:
        spec = ArchitectureSpec.from_json((path / ARCH_FILE).read_text())
        with np.load(path / WEIGHTS_FILE) as npz:
            weights = {k: torch.from_numpy(npz[k].copy()) for k in npz.files}
        meta_file = path / META_FILE
        meta = json.loads(meta_file.read_text()) if meta_file.exists() else {}
    except FileNotFoundError:
        raise
    except (OSError, ValueError) as exc:
        raise CorruptCheckpoint(f"cannot read checkpoint at {path}: {exc}") from exc
    ckpt = ModelCheckpoint(spec, weights, meta)
    ckpt.validate()
    return ckpt
