"""Supervised training, fine-tuning, accuracy and feature extraction."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import torch
import torch.nn.functional as F
from torch import nn

from ..errors import InvalidProbes, TrainingDiverged
from ..metrics import RepresentationMatrix
from .checkpoint import ModelCheckpoint, checkpoint_from_model
from .data import Dataset, Probes

log = logging.getLogger(__name__)


@dataclass
class Augmentation:
    random_crop: bool = True
    horizontal_flip: bool = True
    crop_padding: int = 2


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 128
    lr: float = 0.05
    lr_schedule: str = "cosine"  # cosine | constant
    momentum: float = 0.9
    weight_decay: float = 5e-4
    seed: int = 0
    augmentation: Augmentation = field(default_factory=Augmentation)

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.lr_schedule not in ("cosine", "constant"):
            raise ValueError(f"unknown lr schedule {self.lr_schedule!r}")


def augment_batch(x: torch.Tensor, aug: Augmentation, gen: torch.Generator) -> torch.Tensor:
    """Random crop (zero padding) and horizontal flip for NCHW image batches."""
    n = x.shape[0]
    if aug.random_crop and aug.crop_padding > 0:
        p = aug.crop_padding
        padded = F.pad(x, (p, p, p, p))
        offs = torch.randint(0, 2 * p + 1, (n, 2), generator=gen)
        h, w = x.shape[2:]
        out = torch.empty_like(x)
        for dy in range(2 * p + 1):
            for dx in range(2 * p + 1):
                sel = (offs[:, 0] == dy) & (offs[:, 1] == dx)
                if sel.any():
                    out[sel] = padded[sel, :, dy:dy + h, dx:dx + w]
        x = out
    if aug.horizontal_flip:
        flip = torch.rand(n, generator=gen) < 0.5
        x = torch.where(flip[:, None, None, None], x.flip(3), x)
    return x


@torch.no_grad()
def predict(model: nn.Module, x: torch.Tensor, batch_size: int = 512) -> torch.Tensor:
    model.eval()
    return torch.cat([model(x[i:i + batch_size]).argmax(1) for i in range(0, len(x), batch_size)])


def accuracy(model: nn.Module, x: torch.Tensor, y: torch.Tensor, batch_size: int = 512) -> float:
    """Top-1 accuracy in percent."""
    if len(x) == 0:
        return 0.0
    return 100.0 * (predict(model, x, batch_size) == y).double().mean().item()


def train(model: nn.Module, data: Dataset, cfg: TrainConfig) -> ModelCheckpoint:
    """SGD with momentum; mutates ``model`` and returns a checkpoint of it.

    Shuffling and augmentation draw from a generator seeded with
    ``cfg.seed``, so reruns on one thread are bit-identical.
    """
    gen = torch.Generator().manual_seed(cfg.seed)
    opt = torch.optim.SGD(model.parameters(), lr=cfg.lr, momentum=cfg.momentum,
                          weight_decay=cfg.weight_decay, nesterov=cfg.momentum > 0)
    n = len(data.x_train)
    steps_per_epoch = max(1, math.ceil(n / cfg.batch_size))
    total = cfg.epochs * steps_per_epoch
    sched = (torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=max(total, 1))
             if cfg.lr_schedule == "cosine" else None)
    use_aug = data.kind == "image"
    history = []
    for epoch in range(cfg.epochs):
        model.train()
        order = torch.randperm(n, generator=gen)
        running, seen = 0.0, 0
        for i in range(0, n, cfg.batch_size):
            idx = order[i:i + cfg.batch_size]
            xb, yb = data.x_train[idx], data.y_train[idx]
            if use_aug:
                xb = augment_batch(xb, cfg.augmentation, gen)
            loss = F.cross_entropy(model(xb), yb)
            if not torch.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, step {i // cfg.batch_size}")
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
            if sched is not None:
                sched.step()
            running += loss.item() * len(idx)
            seen += len(idx)
        history.append(running / seen)
        log.info("epoch %d/%d loss %.4f", epoch + 1, cfg.epochs, history[-1])
    meta = {
        "epochs": cfg.epochs,
        "seed": cfg.seed,
        "augmentation": asdict(cfg.augmentation),
        "loss_history": history,
        "train_acc": accuracy(model, data.x_train, data.y_train),
        "test_acc": accuracy(model, data.x_test, data.y_test),
    }
    model.eval()
    return checkpoint_from_model(model, meta)


def finetune(ckpt: ModelCheckpoint, data: Dataset, cfg: TrainConfig) -> ModelCheckpoint:
    """Continue training from ``ckpt``; the architecture is left untouched."""
    out = train(ckpt.to_model(), data, cfg)
    out.meta = {**ckpt.meta, **out.meta, "finetune_epochs": cfg.epochs}
    return out


@torch.no_grad()
def extract_representation(model: nn.Module, probes, batch_size: int = 256) -> RepresentationMatrix:
    """Features right before the classifier, one row per probe, in probe order."""
    if not isinstance(probes, Probes):
        x = torch.as_tensor(probes)
        if x.shape[0] == 0:
            raise InvalidProbes("probe set is empty")
        probes = Probes(x, tuple(range(x.shape[0])))
    model.eval()
    feats = torch.cat([model.features(probes.x[i:i + batch_size]) for i in range(0, len(probes.x), batch_size)])
    return RepresentationMatrix(feats.double().numpy(), probes.ids)
