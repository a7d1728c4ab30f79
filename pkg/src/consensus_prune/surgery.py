"""Physical block removal and the zero-branch reference it must agree with.

For a residual block ``y_i = f_i(y_{i-1}) + y_{i-1}``, removing block ``i``
means ``y_i = y_{i-1}``. :func:`remove_block` builds a new, shallower
architecture and copies every surviving tensor; :func:`zero_branch_oracle`
keeps the original architecture but forces ``f_i`` to output zeros. Both
must produce the same network output.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .errors import CorruptCheckpoint, IneligibleLayer, OracleUndefined
from .netlib.checkpoint import ModelCheckpoint
from .netlib.models import block_prefix, build_model
from .netlib.spec import ArchitectureSpec, LayerRef

MIN_BLOCKS_PER_STAGE = 2


@dataclass(frozen=True)
class EligibilityReport:
    eligible: tuple[LayerRef, ...]
    blocked: dict


def eligible_layers(spec: ArchitectureSpec) -> EligibilityReport:
    """A block may go iff it is removable (not a stage's dimension-changing
    first block, nor a protected transformer end block) and its stage would
    still hold at least two blocks afterwards.

    Applied repeatedly this caps removals at ``k - 2`` per stage of ``k``.
    """
    eligible, blocked = [], {}
    for stage in spec.stages:
        too_small = len(stage.blocks) <= MIN_BLOCKS_PER_STAGE
        for b in stage.blocks:
            if not b.removable:
                blocked[b.block_id] = (
                    "first block of stage changes dimensions" if b.kind == "residual_downsample"
                    else "first/last encoder block is protected"
                )
            elif too_small:
                blocked[b.block_id] = f"stage would drop below {MIN_BLOCKS_PER_STAGE} blocks"
            else:
                eligible.append(b.block_id)
    return EligibilityReport(tuple(sorted(eligible)), blocked)


def _check_complete(ckpt: ModelCheckpoint) -> None:
    expected = set(build_model(ckpt.architecture).state_dict())
    if set(ckpt.weights) != expected:
        missing = sorted(expected - set(ckpt.weights))
        orphan = sorted(set(ckpt.weights) - expected)
        raise CorruptCheckpoint(f"missing={missing[:5]} orphan={orphan[:5]}")


def remove_block(ckpt: ModelCheckpoint, victim: LayerRef) -> ModelCheckpoint:
    """Checkpoint of the architecture without ``victim``; survivors copied bit-exactly.

    The victim's convolutions, normalization layers (with running stats) and
    post-sum activation disappear together with the block.
    """
    report = eligible_layers(ckpt.architecture)
    if victim not in report.eligible:
        reason = report.blocked.get(victim, "not part of this architecture")
        raise IneligibleLayer(f"{victim}: {reason}")
    _check_complete(ckpt)
    prefix = block_prefix(victim)
    weights = {k: v.clone() for k, v in ckpt.weights.items() if not k.startswith(prefix)}
    meta = dict(ckpt.meta)
    meta["removed"] = list(meta.get("removed", [])) + [str(victim)]
    return ModelCheckpoint(ckpt.architecture.without(victim), weights, meta)


def _zeros_like_output(module, inputs, output):
    if isinstance(output, tuple):
        return (torch.zeros_like(output[0]),) + output[1:]
    return torch.zeros_like(output)


@torch.no_grad()
def zero_branch_oracle(ckpt: ModelCheckpoint, victim: LayerRef, probes: torch.Tensor) -> torch.Tensor:
    """Logits of the *unpruned* model with ``victim``'s residual branch zeroed.

    Test oracle only: zeroing keeps every parameter and all the compute.
    """
    block = ckpt.architecture.block(victim)
    if block.kind == "residual_downsample":
        raise OracleUndefined(f"{victim} has a projection shortcut; no identity path to fall back to")
    model = ckpt.to_model()
    handles = [m.register_forward_hook(_zeros_like_output) for m in model.residual_branches(victim)]
    try:
        return model(probes)
    finally:
        for h in handles:
            h.remove()
