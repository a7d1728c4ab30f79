import json

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from consensus_prune.consensus import (
    ConsensusScore,
    RankTable,
    ScoreRow,
    aggregate_ranks,
    prune_iteration,
    rank_and_select,
    scores_to_ranks,
    select_victim,
)
from consensus_prune.errors import DuplicateLayer, InconsistentTables, NoEligibleLayers, PruneIterationError
from consensus_prune.metrics import Orientation, default_metrics, score_layer
from consensus_prune.netlib import LayerRef, build_model, checkpoint_from_model, resnet_cifar_spec, select_probes
from consensus_prune.surgery import eligible_layers

D, S = Orientation.DISTANCE, Orientation.SIMILARITY
L1, L2, L3 = LayerRef(0, 1), LayerRef(0, 2), LayerRef(0, 3)


def rows(metric, orientation, scores):
    return [ScoreRow(l, metric, v, orientation) for l, v in scores.items()]


# -- oracles ------------------------------------------------------------------


def brute_force_victim(tables: list[dict]):
    """Double loop sum + linear scan; ties go to the smaller layer."""
    layers = sorted(tables[0])
    best, best_total = None, None
    for l in layers:
        total = 0
        for t in tables:
            total += t[l]
        if best_total is None or total < best_total:
            best, best_total = l, total
    return best


# -- scores_to_ranks ----------------------------------------------------------


def test_ranks_distance():
    t = scores_to_ranks(rows("p", D, {L1: 0.1, L2: 0.3, L3: 0.2}))
    assert t.ranks == {L1: 1, L3: 2, L2: 3}


def test_ranks_similarity_flip():
    t = scores_to_ranks(rows("cka", S, {L1: 0.9, L2: 0.5, L3: 0.7}))
    assert t.ranks == {L1: 1, L3: 2, L2: 3}


def test_ranks_tie_break():
    assert scores_to_ranks(rows("p", D, {L2: 0.2, L1: 0.2})).ranks == {L1: 1, L2: 2}


def test_ranks_duplicate_layer():
    with pytest.raises(DuplicateLayer):
        scores_to_ranks([ScoreRow(L1, "p", 0.1, D), ScoreRow(L1, "p", 0.2, D)])


def test_non_finite_score_rejected():
    with pytest.raises(ValueError):
        ScoreRow(L1, "p", float("nan"), D)


# -- aggregate / select -------------------------------------------------------


def test_aggregate_single_table_identity():
    t = RankTable("a", {L1: 2, L2: 1})
    assert aggregate_ranks([t]).totals == {L1: 2, L2: 1}


def test_aggregate_hand_sum():
    a = RankTable("a", {L1: 1, L2: 3, L3: 2})
    b = RankTable("b", {L1: 2, L2: 1, L3: 3})
    assert aggregate_ranks([a, b]).totals == {L1: 3, L2: 4, L3: 5}


def test_aggregate_random_vs_double_loop():
    rng = np.random.default_rng(0)
    layers = [LayerRef(0, i) for i in range(5)]
    tables = [RankTable(f"m{j}", dict(zip(layers, rng.permutation(5) + 1))) for j in range(4)]
    expected = {l: 0 for l in layers}
    for t in tables:
        for l in layers:
            expected[l] += t.ranks[l]
    assert aggregate_ranks(tables).totals == expected


def test_aggregate_mismatch():
    with pytest.raises(InconsistentTables):
        aggregate_ranks([RankTable("a", {L1: 1}), RankTable("b", {L2: 1})])


def test_select_victim_examples():
    assert select_victim(ConsensusScore({L1: 3, L2: 4, L3: 5})) == L1
    assert select_victim(ConsensusScore({L3: 6, L2: 3, L1: 3})) == L1
    with pytest.raises(NoEligibleLayers):
        select_victim(ConsensusScore({}))


def test_select_victim_linear_scan():
    rng = np.random.default_rng(1)
    layers = [LayerRef(s, i) for s in range(2) for i in range(3)]
    for _ in range(200):
        totals = dict(zip(layers, rng.integers(4, 12, size=6).tolist()))
        assert select_victim(ConsensusScore(totals)) == brute_force_victim([totals])


# -- properties ---------------------------------------------------------------


@st.composite
def rank_tables(draw):
    k = draw(st.integers(1, 8))
    m = draw(st.integers(1, 5))
    layers = [LayerRef(i // 4, i % 4) for i in range(k)]
    perms = [draw(st.permutations(range(1, k + 1))) for _ in range(m)]
    return [RankTable(f"m{j}", dict(zip(layers, p))) for j, p in enumerate(perms)]


@settings(max_examples=1000, deadline=None)
@given(rank_tables())
def test_victim_matches_brute_force(tables):
    assert select_victim(aggregate_ranks(tables)) == brute_force_victim([t.ranks for t in tables])
    totals = aggregate_ranks(tables).totals
    assert all(len(tables) <= v <= len(tables) * len(totals) for v in totals.values())


@st.composite
def raw_scores(draw):
    k = draw(st.integers(1, 8))
    m = draw(st.integers(1, 5))
    layers = [LayerRef(i // 4, i % 4) for i in range(k)]
    vals = st.floats(-5, 5, allow_nan=False)
    table = [[draw(vals) for _ in range(k)] for _ in range(m)]
    orient = [draw(st.sampled_from([D, S])) for _ in range(m)]
    return layers, table, orient


MONOTONE = [np.exp, np.arctan, lambda v: 3.0 * v + 7.0, lambda v: v**3 + v, np.tanh]


@settings(max_examples=300, deadline=None)
@given(raw_scores(), st.integers(0, len(MONOTONE) - 1), st.integers(0, 4))
def test_monotone_rescaling_invariance(data, fn_idx, which):
    layers, table, orient = data
    which %= len(table)
    fn = MONOTONE[fn_idx]

    def build(tab):
        return [ScoreRow(l, f"m{j}", float(v), orient[j]) for j, row in enumerate(tab) for l, v in zip(layers, row)]

    rescaled = [list(r) for r in table]
    rescaled[which] = [fn(v) for v in rescaled[which]]
    # strictly increasing maps can merge values in floating point; skip those
    if len(set(rescaled[which])) != len(set(table[which])):
        return
    v1, t1, s1 = rank_and_select(build(table))
    v2, t2, s2 = rank_and_select(build(rescaled))
    assert v1 == v2
    assert [t.ranks for t in t1] == [t.ranks for t in t2]
    assert s1.totals == s2.totals


@settings(max_examples=300, deadline=None)
@given(raw_scores())
def test_rank_tables_are_permutations(data):
    layers, table, orient = data
    _, tables, _ = rank_and_select(
        ScoreRow(l, f"m{j}", v, orient[j]) for j, row in enumerate(table) for l, v in zip(layers, row)
    )
    for t in tables:
        assert sorted(t.ranks.values()) == list(range(1, len(layers) + 1))


# -- prune_iteration -----------------------------------------------------------


def _randomize_bn(model, seed):
    g = torch.Generator().manual_seed(seed)
    for mod in model.modules():
        if isinstance(mod, torch.nn.BatchNorm2d):
            mod.weight.data.uniform_(0.5, 1.5, generator=g)
            mod.bias.data.normal_(0, 0.1, generator=g)
            mod.running_mean.normal_(0, 0.1, generator=g)
            mod.running_var.uniform_(0.5, 2.0, generator=g)


@pytest.fixture
def toy_ckpt():
    spec = resnet_cifar_spec((3, 3), (8, 16), (3, 8, 8), 5)
    model = build_model(spec, seed=3)
    _randomize_bn(model, 3)
    return checkpoint_from_model(model)


@pytest.fixture
def probes():
    x = torch.rand(80, 3, 8, 8, generator=torch.Generator().manual_seed(0))
    return select_probes(x, 48, seed=0)


def test_single_eligible_layer_is_victim(toy_ckpt, probes):
    audit = prune_iteration(toy_ckpt, [LayerRef(1, 2)], probes, default_metrics())
    assert audit.victim == LayerRef(1, 2)


def test_exact_reproduction_wins(toy_ckpt, probes):
    # silence s1.b1's branch: removing it reproduces the reference exactly
    w = toy_ckpt.weights
    w["blocks.s1_b1.branch.4.weight"].zero_()
    w["blocks.s1_b1.branch.4.bias"].zero_()
    audit = prune_iteration(toy_ckpt, [LayerRef(0, 2), LayerRef(1, 1)], probes, default_metrics())
    assert audit.victim == LayerRef(1, 1)
    for t in audit.tables:
        assert t.ranks[LayerRef(1, 1)] == 1


def test_matches_offline_recomputation(toy_ckpt, probes):
    eligible = list(eligible_layers(toy_ckpt.architecture).eligible)
    assert len(eligible) == 4
    metrics = default_metrics()
    audit = prune_iteration(toy_ckpt, eligible, probes, metrics)

    # offline: representations through the zero-branch path, ranks by plain sorting
    model = toy_ckpt.to_model()
    with torch.no_grad():
        ref = model.features(probes.x).double().numpy()
    reps = {}
    for l in eligible:
        handles = [m.register_forward_hook(lambda mod, i, o: torch.zeros_like(o)) for m in model.residual_branches(l)]
        with torch.no_grad():
            reps[l] = model.features(probes.x).double().numpy()
        for h in handles:
            h.remove()
    tables = []
    for m in metrics:
        vals = [score_layer(m, ref, reps[l]) for l in eligible]
        sign = -1 if m.orientation is S else 1
        order = sorted(range(len(eligible)), key=lambda i: (sign * vals[i], i))
        tables.append({eligible[i]: pos + 1 for pos, i in enumerate(order)})
    assert audit.victim == brute_force_victim(tables)
    assert [t.ranks for t in audit.tables] == tables


def test_deterministic(toy_ckpt, probes):
    a = prune_iteration(toy_ckpt, eligible_layers(toy_ckpt.architecture).eligible, probes, default_metrics())
    b = prune_iteration(toy_ckpt, eligible_layers(toy_ckpt.architecture).eligible, probes, default_metrics())
    assert a.to_json() == b.to_json()


def test_audit_record_shape(toy_ckpt, probes):
    audit = prune_iteration(toy_ckpt, eligible_layers(toy_ckpt.architecture).eligible, probes, default_metrics(), iteration=2)
    rec = json.loads(json.dumps(audit.to_json()))
    assert {"iteration", "eligible_layers", "raw_scores", "ranks", "totals", "victim"} <= set(rec)
    assert rec["iteration"] == 2
    assert set(rec["raw_scores"]) == {m.name for m in default_metrics()}
    assert set(rec["totals"]) == set(rec["eligible_layers"])
    assert rec["victim"] in rec["eligible_layers"]


def test_iteration_does_not_mutate(toy_ckpt, probes):
    before = {k: v.clone() for k, v in toy_ckpt.weights.items()}
    prune_iteration(toy_ckpt, eligible_layers(toy_ckpt.architecture).eligible, probes, default_metrics())
    assert all(torch.equal(before[k], toy_ckpt.weights[k]) for k in before)


def test_failing_candidate_identified(toy_ckpt, probes):
    with pytest.raises(PruneIterationError) as info:
        prune_iteration(toy_ckpt, [LayerRef(0, 0)], probes, default_metrics())
    assert info.value.layer == LayerRef(0, 0)


def test_no_eligible(toy_ckpt, probes):
    with pytest.raises(NoEligibleLayers):
        prune_iteration(toy_ckpt, [], probes, default_metrics())
