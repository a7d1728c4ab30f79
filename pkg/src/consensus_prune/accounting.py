"""FLOP, parameter, latency and carbon accounting.

FLOPs follow the 2 x multiply-accumulate convention. Counted layers:
convolutions ``2 H_out W_out C_in C_out k^2``, linear maps ``2 d_in d_out`` per
token, and self-attention ``2 (4 n d^2 + 2 n^2 d)`` per encoder block.
Normalization, activations, pooling and residual additions are not counted.
"""

from __future__ import annotations

import platform
import statistics
import time
from dataclasses import asdict, dataclass
from typing import Optional

import torch

from .errors import InvalidParameter, NegativeReduction, UnsupportedLayer
from .netlib.spec import ArchitectureSpec, BlockSpec, LayerRef

TRAIN_FLOPS_FACTOR = 3  # forward + backward ~ 3x forward


def conv_flops(h_out: int, w_out: int, c_in: int, c_out: int, k: int) -> int:
    return 2 * h_out * w_out * c_in * c_out * k * k


def linear_flops(d_in: int, d_out: int, tokens: int = 1) -> int:
    return 2 * tokens * d_in * d_out


def attention_flops(n: int, d: int) -> int:
    return 2 * (4 * n * d * d + 2 * n * n * d)


@dataclass(frozen=True)
class LayerCost:
    name: str
    kind: str
    flops: int
    params: int
    block: Optional[LayerRef] = None


def _conv_out(size: int, stride: int, k: int) -> int:
    pad = k // 2
    return (size + 2 * pad - k) // stride + 1


def _residual_block_costs(b: BlockSpec, h: int, w: int):
    ho, wo = _conv_out(h, b.stride, 3), _conv_out(w, b.stride, 3)
    name = str(b.block_id)
    costs = [
        LayerCost(f"{name}.conv1", "conv", conv_flops(ho, wo, b.in_width, b.width, 3), 9 * b.in_width * b.width, b.block_id),
        LayerCost(f"{name}.bn1", "norm", 0, 2 * b.width, b.block_id),
        LayerCost(f"{name}.conv2", "conv", conv_flops(ho, wo, b.width, b.width, 3), 9 * b.width * b.width, b.block_id),
        LayerCost(f"{name}.bn2", "norm", 0, 2 * b.width, b.block_id),
    ]
    if b.stride != 1 or b.in_width != b.width:
        costs += [
            LayerCost(f"{name}.proj", "conv", conv_flops(ho, wo, b.in_width, b.width, 1), b.in_width * b.width, b.block_id),
            LayerCost(f"{name}.proj_bn", "norm", 0, 2 * b.width, b.block_id),
        ]
    return costs, ho, wo


def _encoder_block_costs(b: BlockSpec, n: int):
    d, p, name = b.width, b.projection_dim, str(b.block_id)
    return [
        LayerCost(f"{name}.norm1", "norm", 0, 2 * d, b.block_id),
        LayerCost(f"{name}.attn", "attention", attention_flops(n, d), 4 * d * d + 4 * d, b.block_id),
        LayerCost(f"{name}.norm2", "norm", 0, 2 * d, b.block_id),
        LayerCost(f"{name}.ffn1", "linear", linear_flops(d, p, n), d * p + p, b.block_id),
        LayerCost(f"{name}.ffn2", "linear", linear_flops(p, d, n), p * d + d, b.block_id),
    ]


def layer_costs(spec: ArchitectureSpec, input_shape=None) -> list[LayerCost]:
    """Per-layer FLOPs and parameters, in forward order."""
    shape = tuple(input_shape or spec.input_shape)
    out: list[LayerCost] = []
    if spec.family == "resnet_cifar":
        c, h, w = shape
        out.append(LayerCost("stem.conv", "conv", conv_flops(h, w, c, spec.stem_width, 3), 9 * c * spec.stem_width))
        out.append(LayerCost("stem.bn", "norm", 0, 2 * spec.stem_width))
        for b in spec.blocks():
            if b.kind not in ("residual_identity", "residual_downsample"):
                raise UnsupportedLayer(f"{b.block_id}: {b.kind} in a residual network")
            costs, h, w = _residual_block_costs(b, h, w)
            out.extend(costs)
    elif spec.family == "transformer_tabular":
        n, f = shape
        d = spec.stem_width
        out.append(LayerCost("stem.embed", "linear", linear_flops(f, d, n), f * d + d))
        out.append(LayerCost("stem.pos", "embedding", 0, n * d))
        for b in spec.blocks():
            if b.kind != "transformer_encoder":
                raise UnsupportedLayer(f"{b.block_id}: {b.kind} in a transformer")
            out.extend(_encoder_block_costs(b, n))
        out.append(LayerCost("head.norm", "norm", 0, 2 * d))
    else:
        raise UnsupportedLayer(f"family {spec.family!r}")
    d = spec.feature_dim
    out.append(LayerCost("head.fc", "linear", linear_flops(d, spec.num_classes), d * spec.num_classes + spec.num_classes))
    return out


def flops_count(spec: ArchitectureSpec, input_shape=None) -> int:
    return sum(c.flops for c in layer_costs(spec, input_shape))


def params_count(spec: ArchitectureSpec) -> int:
    return sum(c.params for c in layer_costs(spec))


def block_cost(spec: ArchitectureSpec, ref: LayerRef, input_shape=None) -> tuple[int, int]:
    """(flops, params) of one block as it sits in ``spec``."""
    costs = [c for c in layer_costs(spec, input_shape) if c.block == ref]
    if not costs:
        raise InvalidParameter(f"no block {ref} in this architecture")
    return sum(c.flops for c in costs), sum(c.params for c in costs)


# -- reports ------------------------------------------------------------------


@dataclass(frozen=True)
class CostReport:
    flops: int
    params: int
    latency_ms: Optional[float] = None
    flop_reduction_pct: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def flop_reduction(base: CostReport, pruned: CostReport) -> float:
    if base.flops <= 0:
        raise InvalidParameter("baseline FLOPs must be positive")
    if pruned.flops > base.flops:
        raise NegativeReduction(f"pruned model has more FLOPs ({pruned.flops}) than the baseline ({base.flops})")
    return 100.0 * (1.0 - pruned.flops / base.flops)


def cost_report(spec: ArchitectureSpec, base: Optional[CostReport] = None, latency_ms=None) -> CostReport:
    r = CostReport(flops_count(spec), params_count(spec), latency_ms)
    if base is None:
        return r
    return CostReport(r.flops, r.params, latency_ms, flop_reduction(base, r))


def format_pct(value: float) -> str:
    """Two decimals, as in FLOP-reduction table columns (e.g. ``78.80``)."""
    return f"{value:.2f}"


def device_descriptor() -> str:
    return f"{platform.processor() or platform.machine()} / torch {torch.__version__} / threads={torch.get_num_threads()}"


@torch.no_grad()
def measure_latency(model, input_shape, repeats: int = 50, batch_size: int = 1, warmup: int = 3) -> float:
    """Median wall-clock milliseconds of one forward pass, after ``warmup`` runs."""
    if repeats < 10:
        raise InvalidParameter("need at least 10 timed repeats")
    model.eval()
    x = torch.zeros((batch_size, *input_shape))
    for _ in range(warmup):
        model(x)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        model(x)
        times.append((time.perf_counter() - t0) * 1e3)
    return statistics.median(times)


# -- energy and carbon -----------------------------------------------------------


@dataclass(frozen=True)
class CarbonEstimate:
    device_power_watts: float
    wall_hours: float
    energy_kwh: float
    carbon_intensity_kg_per_kwh: float
    co2_kg: float
    cost_usd: float

    def to_dict(self) -> dict:
        return asdict(self)


def estimate_carbon(power_watts: float, wall_hours: float, intensity: float, usd_per_hour: float = 0.0) -> CarbonEstimate:
    if min(power_watts, wall_hours, intensity, usd_per_hour) < 0:
        raise InvalidParameter("carbon inputs must be non-negative")
    return CarbonEstimate(
        device_power_watts=power_watts,
        wall_hours=wall_hours,
        energy_kwh=power_watts * wall_hours / 1000.0,
        carbon_intensity_kg_per_kwh=intensity,
        co2_kg=power_watts * wall_hours * intensity / 1000.0,
        cost_usd=wall_hours * usd_per_hour,
    )


def reduction_pct(base: float, pruned: float) -> float:
    """``100 (1 - pruned / base)``, shared by carbon, cost and energy comparisons."""
    if base <= 0:
        raise InvalidParameter("baseline must be positive")
    return 100.0 * (1.0 - pruned / base)


def training_hours(flops_per_sample: int, samples: int, epochs: int, throughput_flops: float) -> float:
    """Wall-clock hours implied by a FLOP budget at a sustained throughput."""
    if throughput_flops <= 0:
        raise InvalidParameter("throughput must be positive")
    return TRAIN_FLOPS_FACTOR * flops_per_sample * samples * epochs / throughput_flops / 3600.0
