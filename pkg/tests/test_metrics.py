import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as nph

from consensus_prune.errors import (
    DegenerateRepresentation,
    InsufficientSamples,
    InvalidParameter,
    InvalidRepresentation,
    ShapeMismatch,
)
from consensus_prune.metrics import (
    GaussianSummary,
    Orientation,
    RepresentationMatrix,
    bures_distance,
    center_columns,
    default_metrics,
    gaussian_summary,
    interpolated_distance,
    linear_cka,
    make_metric,
    procrustes_distance,
    score_layer,
)

from oracles import (
    bures_commuting_oracle,
    bures_trace_oracle,
    cka_hsic_oracle,
    procrustes_grid_oracle,
    random_orthogonal,
)


def well_conditioned(n_max=6, d_max=4):
    """Matrices with moderate entries and non-trivial spread between rows."""
    shapes = st.tuples(st.integers(2, n_max), st.integers(1, d_max))
    elems = st.floats(-10, 10, allow_nan=False, width=64)
    return shapes.flatmap(lambda s: nph.arrays(np.float64, s, elements=elems)).filter(
        lambda a: np.linalg.norm(a - a.mean(0)) > 1e-3
    )


# -- center_columns -----------------------------------------------------------


def test_center_constant_column():
    r = center_columns(np.array([[5.0, 1.0], [5.0, 2.0], [5.0, 6.0]]))
    np.testing.assert_array_equal(r.data[:, 0], 0.0)


def test_center_hand_example():
    r = center_columns(np.array([[1.0, 2.0], [3.0, 4.0]]))
    np.testing.assert_array_equal(r.data, [[-1.0, -1.0], [1.0, 1.0]])


def test_center_idempotent():
    x = np.random.default_rng(1).standard_normal((7, 3))
    once = center_columns(x)
    np.testing.assert_allclose(center_columns(once).data, once.data, atol=1e-12)
    np.testing.assert_allclose(once.data.mean(0), 0.0, atol=1e-10)


def test_non_finite_rejected():
    with pytest.raises(InvalidRepresentation):
        center_columns(np.array([[1.0, np.nan], [0.0, 1.0]]))


# -- gaussian_summary ---------------------------------------------------------


def test_summary_identical_rows_is_ridge():
    g = gaussian_summary(np.array([[3.0, 4.0], [3.0, 4.0]]), ridge=1e-6)
    np.testing.assert_allclose(g.covariance, 1e-6 * np.eye(2), atol=1e-18)


def test_summary_hand_example():
    g = gaussian_summary(np.array([[0.0, 0.0], [2.0, 0.0]]), ridge=1e-6)
    np.testing.assert_allclose(g.mean, [1.0, 0.0])
    np.testing.assert_allclose(g.covariance, [[2.0 + 1e-6, 0.0], [0.0, 1e-6]], atol=1e-15)


def test_summary_permutation_invariant():
    x = np.random.default_rng(2).standard_normal((9, 3))
    perm = np.random.default_rng(3).permutation(9)
    a, b = gaussian_summary(x), gaussian_summary(x[perm])
    np.testing.assert_allclose(a.mean, b.mean, atol=1e-14)
    np.testing.assert_allclose(a.covariance, b.covariance, atol=1e-14)


def test_summary_needs_two_samples():
    with pytest.raises(InsufficientSamples):
        gaussian_summary(np.ones((1, 3)))


def test_summary_rejects_indefinite():
    with pytest.raises(InvalidRepresentation):
        GaussianSummary(np.zeros(2), np.diag([1.0, -1.0]))


# -- linear CKA ---------------------------------------------------------------


def test_cka_self_is_one():
    x = np.random.default_rng(4).standard_normal((20, 5))
    assert linear_cka(x, x) == pytest.approx(1.0, abs=1e-9)


def test_cka_orthogonal_and_scale_invariant():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((30, 4))
    q = random_orthogonal(4, rng)
    assert linear_cka(x, x @ q) == pytest.approx(1.0, abs=1e-9)
    assert linear_cka(x, 7.5 * x) == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("seed", range(10))
def test_cka_matches_hsic_oracle_4x2(seed):
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal((4, 2)), rng.standard_normal((4, 2))
    assert linear_cka(x, y) == pytest.approx(cka_hsic_oracle(x, y), abs=1e-9)


def test_cka_degenerate():
    with pytest.raises(DegenerateRepresentation):
        linear_cka(np.ones((4, 2)), np.random.default_rng(0).standard_normal((4, 2)))


def test_cka_allows_different_widths():
    rng = np.random.default_rng(6)
    val = linear_cka(rng.standard_normal((10, 3)), rng.standard_normal((10, 5)))
    assert 0.0 <= val <= 1.0


def test_sample_order_must_match():
    x = np.random.default_rng(7).standard_normal((4, 2))
    a = RepresentationMatrix(x, sample_ids=[0, 1, 2, 3])
    b = RepresentationMatrix(x, sample_ids=[1, 0, 2, 3])
    with pytest.raises(ShapeMismatch):
        linear_cka(a, b)


# -- Procrustes ---------------------------------------------------------------


def test_procrustes_self_zero_and_rotation():
    rng = np.random.default_rng(8)
    x = rng.standard_normal((12, 3))
    assert procrustes_distance(x, x) == pytest.approx(0.0, abs=1e-9)
    assert procrustes_distance(x, x @ random_orthogonal(3, rng)) == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_procrustes_grid_oracle_3x2(seed):
    rng = np.random.default_rng(100 + seed)
    x, y = rng.standard_normal((3, 2)), rng.standard_normal((3, 2))
    assert procrustes_distance(x, y) == pytest.approx(procrustes_grid_oracle(x, y), abs=1e-3)


def test_procrustes_agrees_with_trace_formula():
    rng = np.random.default_rng(9)
    for _ in range(50):
        x, y = rng.standard_normal((8, 3)), rng.standard_normal((8, 3))
        xc = (x - x.mean(0)) / np.linalg.norm(x - x.mean(0))
        yc = (y - y.mean(0)) / np.linalg.norm(y - y.mean(0))
        nuc = np.linalg.svd(yc.T @ xc, compute_uv=False).sum()
        assert procrustes_distance(x, y) == pytest.approx(np.sqrt(2 - 2 * nuc), abs=1e-7)


def test_procrustes_bounded():
    rng = np.random.default_rng(10)
    for _ in range(100):
        v = procrustes_distance(rng.standard_normal((5, 2)), rng.standard_normal((5, 2)))
        assert 0.0 <= v <= 2.0


def test_procrustes_errors():
    rng = np.random.default_rng(11)
    with pytest.raises(ShapeMismatch):
        procrustes_distance(rng.standard_normal((4, 2)), rng.standard_normal((4, 3)))
    with pytest.raises(DegenerateRepresentation):
        procrustes_distance(np.ones((4, 2)), rng.standard_normal((4, 2)))


# -- Bures / interpolated -----------------------------------------------------


def _diag_summary(a, mean=None):
    a = np.asarray(a, dtype=float)
    return GaussianSummary(np.zeros_like(a) if mean is None else np.asarray(mean, float), np.diag(a))


def test_bures_equal_covariances():
    rng = np.random.default_rng(12)
    g = gaussian_summary(rng.standard_normal((10, 3)))
    assert bures_distance(g, g) == pytest.approx(0.0, abs=1e-8)


@pytest.mark.parametrize("d", [1, 2, 5])
def test_bures_identity_vs_four_identity(d):
    assert bures_distance(_diag_summary(np.ones(d)), _diag_summary(4 * np.ones(d))) == pytest.approx(
        np.sqrt(d), abs=1e-12
    )


def test_bures_commuting_closed_form():
    rng = np.random.default_rng(13)
    for _ in range(50):
        a, b = rng.uniform(0, 3, 4), rng.uniform(0, 3, 4)
        got = bures_distance(_diag_summary(a), _diag_summary(b))
        assert got == pytest.approx(bures_commuting_oracle(a, b), abs=1e-6)


def test_bures_generic_vs_trace_formula():
    rng = np.random.default_rng(14)
    for _ in range(50):
        g1 = gaussian_summary(rng.standard_normal((6, 3)))
        g2 = gaussian_summary(rng.standard_normal((6, 3)))
        assert bures_distance(g1, g2) == pytest.approx(
            bures_trace_oracle(g1.covariance, g2.covariance), abs=1e-6
        )


def test_interpolated_endpoints():
    rng = np.random.default_rng(15)
    g1 = gaussian_summary(rng.standard_normal((8, 2)))
    g2 = gaussian_summary(rng.standard_normal((8, 2)))
    assert interpolated_distance(g1, g2, 0.0) == pytest.approx(bures_distance(g1, g2), abs=1e-9)
    m1, m2 = _diag_summary([1.0, 2.0], [0, 0]), _diag_summary([5.0, 0.5], [3, 4])
    assert interpolated_distance(m1, m2, 1.0) == pytest.approx(5.0, abs=1e-12)


def test_interpolated_half_commuting():
    a, b = np.array([1.0, 2.0, 0.5]), np.array([3.0, 0.2, 0.5])
    mu1, mu2 = np.array([0.0, 1.0, 2.0]), np.array([1.0, -1.0, 0.0])
    expected = np.sqrt(0.5 * np.sum((mu1 - mu2) ** 2) + 0.5 * np.sum((np.sqrt(a) - np.sqrt(b)) ** 2))
    got = interpolated_distance(_diag_summary(a, mu1), _diag_summary(b, mu2), 0.5)
    assert got == pytest.approx(expected, abs=1e-9)


@pytest.mark.parametrize("lam", [-0.1, 1.5])
def test_interpolated_rejects_weight(lam):
    g = _diag_summary([1.0])
    with pytest.raises(InvalidParameter):
        interpolated_distance(g, g, lam)


# -- dispatch -----------------------------------------------------------------


def test_metric_orientations():
    names = {m.name: m.orientation for m in default_metrics()}
    assert names == {
        "linear_cka": Orientation.SIMILARITY,
        "procrustes": Orientation.DISTANCE,
        "bures": Orientation.DISTANCE,
        "interpolated": Orientation.DISTANCE,
    }


def test_unknown_metric():
    with pytest.raises(InvalidParameter):
        make_metric("kernel_cka")


def test_score_layer_dispatch():
    rng = np.random.default_rng(16)
    r = rng.standard_normal((10, 4))
    assert score_layer(make_metric("linear_cka"), r, r) == pytest.approx(1.0)
    assert score_layer(make_metric("procrustes"), r, r) == pytest.approx(0.0, abs=1e-12)
    shuffled = r[:, rng.permutation(4)]
    m = make_metric("interpolated", lam=0.5)
    direct = interpolated_distance(gaussian_summary(r), gaussian_summary(shuffled), 0.5)
    assert score_layer(m, r, shuffled) == direct


# -- properties ---------------------------------------------------------------


@settings(max_examples=150, deadline=None)
@given(well_conditioned())
def test_self_comparison_is_perfect(x):
    for m in default_metrics():
        assert score_layer(m, x, x) == pytest.approx(m.perfect_score, abs=1e-8)


@settings(max_examples=150, deadline=None)
@given(well_conditioned(), st.integers(0, 2**32 - 1))
def test_symmetry(x, seed):
    y = x + np.random.default_rng(seed).standard_normal(x.shape)
    for m in default_metrics():
        assert score_layer(m, x, y) == pytest.approx(score_layer(m, y, x), abs=1e-6)


@settings(max_examples=150, deadline=None)
@given(well_conditioned(), st.integers(0, 2**32 - 1))
def test_row_permutation_consistency(x, seed):
    rng = np.random.default_rng(seed)
    y = x + rng.standard_normal(x.shape)
    perm = rng.permutation(x.shape[0])
    for m in default_metrics():
        assert score_layer(m, x[perm], y[perm]) == pytest.approx(score_layer(m, x, y), abs=1e-10)


@settings(max_examples=150, deadline=None)
@given(well_conditioned(), st.integers(0, 2**32 - 1))
def test_orthogonal_invariance(x, seed):
    rng = np.random.default_rng(seed)
    y = x + rng.standard_normal(x.shape)
    q1, q2 = random_orthogonal(x.shape[1], rng), random_orthogonal(x.shape[1], rng)
    assert linear_cka(x @ q1, y @ q2) == pytest.approx(linear_cka(x, y), abs=1e-8)
    assert procrustes_distance(x @ q1, y @ q2) == pytest.approx(procrustes_distance(x, y), abs=1e-8)
