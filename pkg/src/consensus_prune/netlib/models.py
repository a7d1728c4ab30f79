"""Torch modules built from an :class:`ArchitectureSpec`.

Both families expose ``features(x)`` (the representation right before the
classifier) and ``residual_branches(ref)``, the submodules whose outputs are
added onto the identity path of block ``ref``.
"""

from __future__ import annotations

import torch
from torch import nn

from ..errors import SpecError
from .spec import ArchitectureSpec, BlockSpec, LayerRef


def _conv3x3(cin, cout, stride=1):
    return nn.Conv2d(cin, cout, 3, stride=stride, padding=1, bias=False)


class ResidualBlock(nn.Module):
    """relu(f(x) + shortcut(x)), f = conv-bn-relu-conv-bn."""

    def __init__(self, spec: BlockSpec):
        super().__init__()
        self.branch = nn.Sequential(
            _conv3x3(spec.in_width, spec.width, spec.stride),
            nn.BatchNorm2d(spec.width),
            nn.ReLU(inplace=True),
            _conv3x3(spec.width, spec.width),
            nn.BatchNorm2d(spec.width),
        )
        if spec.stride != 1 or spec.in_width != spec.width:
            self.shortcut = nn.Sequential(
                nn.Conv2d(spec.in_width, spec.width, 1, stride=spec.stride, bias=False),
                nn.BatchNorm2d(spec.width),
            )
        else:
            self.shortcut = nn.Identity()
        self.act = nn.ReLU(inplace=True)

    def forward(self, x):
        return self.act(self.branch(x) + self.shortcut(x))

    def branches(self):
        return [self.branch]


class EncoderBlock(nn.Module):
    """Pre-norm transformer encoder block: x + attn(ln(x)), then + ffn(ln(.))."""

    def __init__(self, spec: BlockSpec):
        super().__init__()
        d = spec.width
        self.norm1 = nn.LayerNorm(d)
        self.attn = nn.MultiheadAttention(d, spec.heads, batch_first=True)
        self.norm2 = nn.LayerNorm(d)
        self.ffn = nn.Sequential(nn.Linear(d, spec.projection_dim), nn.GELU(), nn.Linear(spec.projection_dim, d))

    def forward(self, x):
        h = self.norm1(x)
        x = x + self.attn(h, h, h, need_weights=False)[0]
        return x + self.ffn(self.norm2(x))

    def branches(self):
        return [self.attn, self.ffn]


class ResNetCifar(nn.Module):
    def __init__(self, spec: ArchitectureSpec):
        super().__init__()
        self.spec = spec
        self.stem = nn.Sequential(
            _conv3x3(spec.input_shape[0], spec.stem_width),
            nn.BatchNorm2d(spec.stem_width),
            nn.ReLU(inplace=True),
        )
        self.blocks = nn.ModuleDict({b.block_id.key: ResidualBlock(b) for b in spec.blocks()})
        self.head = nn.Linear(spec.feature_dim, spec.num_classes)
        for m in self.modules():
            if isinstance(m, nn.Conv2d):
                nn.init.kaiming_normal_(m.weight, mode="fan_out", nonlinearity="relu")

    def features(self, x):
        x = self.stem(x)
        for block in self.blocks.values():
            x = block(x)
        return x.mean(dim=(2, 3))

    def forward(self, x):
        return self.head(self.features(x))

    def residual_branches(self, ref: LayerRef):
        return self.blocks[ref.key].branches()


class TabularTransformer(nn.Module):
    def __init__(self, spec: ArchitectureSpec):
        super().__init__()
        self.spec = spec
        tokens, feats = spec.input_shape
        d = spec.stem_width
        self.stem = nn.Linear(feats, d)
        self.pos = nn.Parameter(torch.zeros(tokens, d))
        nn.init.normal_(self.pos, std=0.02)
        self.blocks = nn.ModuleDict({b.block_id.key: EncoderBlock(b) for b in spec.blocks()})
        self.norm = nn.LayerNorm(d)
        self.head = nn.Linear(d, spec.num_classes)

    def features(self, x):
        x = self.stem(x) + self.pos
        for block in self.blocks.values():
            x = block(x)
        return self.norm(x.mean(dim=1))

    def forward(self, x):
        return self.head(self.features(x))

    def residual_branches(self, ref: LayerRef):
        return self.blocks[ref.key].branches()


_FAMILIES = {"resnet_cifar": ResNetCifar, "transformer_tabular": TabularTransformer}


def build_model(spec: ArchitectureSpec, seed: int = 0) -> nn.Module:
    """Fresh model with initialization fully determined by ``seed``."""
    if not isinstance(spec, ArchitectureSpec):
        raise SpecError(f"expected an ArchitectureSpec, got {type(spec).__name__}")
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return _FAMILIES[spec.family](spec)


def block_prefix(ref: LayerRef) -> str:
    return f"blocks.{ref.key}."


def param_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
