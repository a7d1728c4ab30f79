"""Consensus criterion: per-metric ranks, summed, lowest total is pruned.

Raw scores from different metrics live on incomparable scales, so each
metric only contributes the *rank* it assigns to a layer (1 = most similar
to the reference representation). Ties are always broken towards the
smaller layer id so that campaigns are reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

from .errors import (
    DuplicateLayer,
    InconsistentTables,
    InvalidParameter,
    NoEligibleLayers,
    PruneIterationError,
)
from .metrics import MetricDescriptor, Orientation, score_layer


@dataclass(frozen=True)
class ScoreRow:
    layer_id: Hashable
    metric_name: str
    raw_score: float
    orientation: Orientation

    def __post_init__(self):
        if not math.isfinite(self.raw_score):
            raise InvalidParameter(f"non-finite score for {self.layer_id} under {self.metric_name}")

    @property
    def effective_distance(self) -> float:
        return self.raw_score if self.orientation is Orientation.DISTANCE else -self.raw_score


@dataclass(frozen=True)
class RankTable:
    metric_name: str
    ranks: dict


@dataclass(frozen=True)
class ConsensusScore:
    totals: dict


def scores_to_ranks(rows: Sequence[ScoreRow]) -> RankTable:
    if not rows:
        raise InvalidParameter("cannot rank an empty score list")
    metrics = {r.metric_name for r in rows}
    if len(metrics) != 1:
        raise InvalidParameter(f"rows mix several metrics: {sorted(metrics)}")
    layers = [r.layer_id for r in rows]
    if len(set(layers)) != len(layers):
        raise DuplicateLayer(f"duplicate layer ids in {layers}")
    ordered = sorted(rows, key=lambda r: (r.effective_distance, r.layer_id))
    ranks = {r.layer_id: i for i, r in enumerate(ordered, start=1)}
    return RankTable(rows[0].metric_name, {l: ranks[l] for l in sorted(ranks)})


def aggregate_ranks(tables: Sequence[RankTable]) -> ConsensusScore:
    if not tables:
        raise InconsistentTables("no rank tables to aggregate")
    layer_set = set(tables[0].ranks)
    for t in tables[1:]:
        if set(t.ranks) != layer_set:
            raise InconsistentTables(f"{t.metric_name} ranks a different layer set")
    return ConsensusScore({l: sum(t.ranks[l] for t in tables) for l in sorted(layer_set)})


def select_victim(score: ConsensusScore):
    if not score.totals:
        raise NoEligibleLayers("consensus score is empty")
    return min(score.totals, key=lambda l: (score.totals[l], l))


def rank_and_select(rows: Iterable[ScoreRow]):
    """Group rows by metric, rank, aggregate, pick the victim."""
    by_metric: dict[str, list[ScoreRow]] = {}
    for r in rows:
        by_metric.setdefault(r.metric_name, []).append(r)
    tables = [scores_to_ranks(rs) for rs in by_metric.values()]
    score = aggregate_ranks(tables)
    return select_victim(score), tables, score


@dataclass
class IterationAudit:
    """Everything needed to recompute a pruning decision offline."""

    iteration: int
    eligible: list
    rows: list[ScoreRow]
    tables: list[RankTable]
    score: ConsensusScore
    victim: Hashable
    metrics: list[MetricDescriptor] = field(default_factory=list)

    def to_json(self) -> dict:
        raw: dict[str, dict[str, float]] = {}
        for r in self.rows:
            raw.setdefault(r.metric_name, {})[str(r.layer_id)] = r.raw_score
        return {
            "iteration": self.iteration,
            "eligible_layers": [str(l) for l in self.eligible],
            "metrics": [
                {"name": m.name, "orientation": m.orientation.value, "params": dict(m.params)}
                for m in self.metrics
            ],
            "raw_scores": raw,
            "ranks": {t.metric_name: {str(l): r for l, r in t.ranks.items()} for t in self.tables},
            "totals": {str(l): v for l, v in self.score.totals.items()},
            "victim": str(self.victim),
        }


def prune_iteration(ckpt, eligible, probes, metrics: Sequence[MetricDescriptor], iteration: int = 0) -> IterationAudit:
    """One scoring pass: ablate every eligible block, compare, pick the victim.

    ``ckpt`` is not modified; callers apply :func:`surgery.remove_block` to the
    returned victim themselves. Candidates are scored on the raw ablated
    weights, without any fine-tuning.
    """
    from .netlib import extract_representation
    from .surgery import remove_block

    eligible = sorted(eligible)
    if not eligible:
        raise NoEligibleLayers("no eligible layers to score")
    if not metrics:
        raise InvalidParameter("need at least one metric")
    reference = extract_representation(ckpt.to_model(), probes)
    rows = []
    for layer in eligible:
        try:
            candidate = remove_block(ckpt, layer)
            rep = extract_representation(candidate.to_model(), probes)
            for m in metrics:
                rows.append(ScoreRow(layer, m.name, score_layer(m, reference, rep), m.orientation))
        except Exception as exc:
            raise PruneIterationError(layer, exc) from exc
    victim, tables, score = rank_and_select(rows)
    return IterationAudit(iteration, eligible, rows, tables, score, victim, list(metrics))
