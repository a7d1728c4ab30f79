"""Declarative network descriptions: the unit on which surgery operates."""

from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass, replace
from typing import Iterator, Sequence

from ..errors import SpecError

FAMILIES = ("resnet_cifar", "transformer_tabular")
BLOCK_KINDS = ("residual_identity", "residual_downsample", "transformer_encoder")

_REF_RE = re.compile(r"^s(\d+)\.b(\d+)$")


@dataclass(frozen=True, order=True)
class LayerRef:
    """(stage, position) of a block in the *original* network.

    Ids are never renumbered after surgery, so audit trails stay readable
    and weight names stay stable across removals.
    """

    stage: int
    index: int

    def __str__(self) -> str:
        return f"s{self.stage}.b{self.index}"

    @property
    def key(self) -> str:
        return f"s{self.stage}_b{self.index}"

    @classmethod
    def parse(cls, text: str) -> "LayerRef":
        m = _REF_RE.match(text.strip())
        if not m:
            raise SpecError(f"malformed layer reference {text!r}; expected e.g. 's1.b2'")
        return cls(int(m.group(1)), int(m.group(2)))


@dataclass(frozen=True)
class BlockSpec:
    block_id: LayerRef
    kind: str
    in_width: int
    width: int
    stride: int = 1
    heads: int = 0
    projection_dim: int = 0
    removable: bool = True


@dataclass(frozen=True)
class StageSpec:
    blocks: tuple[BlockSpec, ...]


@dataclass(frozen=True)
class ArchitectureSpec:
    family: str
    input_shape: tuple[int, ...]
    num_classes: int
    stem_width: int
    stages: tuple[StageSpec, ...]

    def __post_init__(self):
        validate_spec(self)

    # -- navigation ------------------------------------------------------

    def blocks(self) -> Iterator[BlockSpec]:
        for stage in self.stages:
            yield from stage.blocks

    def block(self, ref: LayerRef) -> BlockSpec:
        for b in self.blocks():
            if b.block_id == ref:
                return b
        raise SpecError(f"no block {ref} in this architecture")

    def stage_of(self, ref: LayerRef) -> StageSpec:
        for stage in self.stages:
            if any(b.block_id == ref for b in stage.blocks):
                return stage
        raise SpecError(f"no block {ref} in this architecture")

    @property
    def feature_dim(self) -> int:
        return self.stages[-1].blocks[-1].width

    @property
    def num_blocks(self) -> int:
        return sum(len(s.blocks) for s in self.stages)

    def without(self, ref: LayerRef) -> "ArchitectureSpec":
        """Same architecture minus block ``ref``; no eligibility check here."""
        self.block(ref)
        stages = tuple(
            StageSpec(tuple(b for b in s.blocks if b.block_id != ref)) for s in self.stages
        )
        return replace(self, stages=stages)

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        d = asdict(self)
        d["input_shape"] = list(self.input_shape)
        for stage in d["stages"]:
            for b in stage["blocks"]:
                b["block_id"] = str(LayerRef(**b["block_id"]))
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "ArchitectureSpec":
        try:
            stages = tuple(
                StageSpec(tuple(
                    BlockSpec(**{**b, "block_id": LayerRef.parse(b["block_id"])})
                    for b in s["blocks"]
                ))
                for s in d["stages"]
            )
            return cls(
                family=d["family"],
                input_shape=tuple(d["input_shape"]),
                num_classes=d["num_classes"],
                stem_width=d["stem_width"],
                stages=stages,
            )
        except (KeyError, TypeError) as exc:
            raise SpecError(f"malformed architecture document: {exc}") from exc

    @classmethod
    def from_json(cls, text: str) -> "ArchitectureSpec":
        return cls.from_dict(json.loads(text))


def validate_spec(spec: ArchitectureSpec) -> None:
    if spec.family not in FAMILIES:
        raise SpecError(f"unknown family {spec.family!r}")
    if spec.num_classes < 2:
        raise SpecError("need at least two classes")
    if not spec.stages:
        raise SpecError("architecture has no stages")
    if spec.family == "resnet_cifar" and len(spec.input_shape) != 3:
        raise SpecError("resnet_cifar expects input_shape (C, H, W)")
    if spec.family == "transformer_tabular":
        if len(spec.input_shape) != 2:
            raise SpecError("transformer_tabular expects input_shape (tokens, features)")
        if len(spec.stages) != 1:
            raise SpecError("transformer_tabular uses a single stage")
    seen = set()
    prev_width = spec.stem_width
    for stage in spec.stages:
        if len(stage.blocks) < 2:
            raise SpecError("every stage must keep at least two blocks")
        for pos, b in enumerate(stage.blocks):
            if b.kind not in BLOCK_KINDS:
                raise SpecError(f"{b.block_id}: unknown block kind {b.kind!r}")
            if b.block_id in seen:
                raise SpecError(f"duplicate block id {b.block_id}")
            seen.add(b.block_id)
            if b.in_width != prev_width:
                raise SpecError(f"{b.block_id}: input width {b.in_width} != incoming {prev_width}")
            if spec.family == "resnet_cifar":
                if pos == 0 and (b.kind != "residual_downsample" or b.removable):
                    raise SpecError(f"{b.block_id}: first block of a stage must be a non-removable downsample block")
                if pos > 0 and (b.kind != "residual_identity" or b.stride != 1 or b.in_width != b.width):
                    raise SpecError(f"{b.block_id}: inner blocks must be shape-preserving identity blocks")
            else:
                if b.kind != "transformer_encoder":
                    raise SpecError(f"{b.block_id}: transformer stages hold encoder blocks only")
                if b.heads < 1 or b.width % b.heads:
                    raise SpecError(f"{b.block_id}: model dim {b.width} not divisible by {b.heads} heads")
                if b.in_width != b.width or b.projection_dim < 1:
                    raise SpecError(f"{b.block_id}: encoder blocks must preserve width and have a projection dim")
                if pos in (0, len(stage.blocks) - 1) and b.removable:
                    raise SpecError(f"{b.block_id}: first/last encoder blocks are protected")
            prev_width = b.width


def resnet_cifar_spec(
    blocks_per_stage: Sequence[int] = (3, 3, 3),
    widths: Sequence[int] = (16, 32, 64),
    input_shape: Sequence[int] = (3, 32, 32),
    num_classes: int = 10,
) -> ArchitectureSpec:
    """CIFAR-style ResNet; ``(3, 3, 3)`` with widths 16/32/64 is ResNet-20."""
    if len(blocks_per_stage) != len(widths):
        raise SpecError("need one width per stage")
    stages = []
    prev = widths[0]
    for s, (count, w) in enumerate(zip(blocks_per_stage, widths)):
        blocks = [BlockSpec(LayerRef(s, 0), "residual_downsample", prev, w, 1 if s == 0 else 2, removable=False)]
        blocks += [BlockSpec(LayerRef(s, i), "residual_identity", w, w) for i in range(1, count)]
        stages.append(StageSpec(tuple(blocks)))
        prev = w
    return ArchitectureSpec("resnet_cifar", tuple(input_shape), num_classes, widths[0], tuple(stages))


def transformer_tabular_spec(
    num_blocks: int = 4,
    model_dim: int = 64,
    heads: int = 4,
    projection_dim: int = 128,
    input_shape: Sequence[int] = (16, 6),
    num_classes: int = 6,
) -> ArchitectureSpec:
    blocks = tuple(
        BlockSpec(
            LayerRef(0, i), "transformer_encoder", model_dim, model_dim,
            heads=heads, projection_dim=projection_dim,
            removable=0 < i < num_blocks - 1,
        )
        for i in range(num_blocks)
    )
    return ArchitectureSpec("transformer_tabular", tuple(input_shape), num_classes, model_dim, (StageSpec(blocks),))
