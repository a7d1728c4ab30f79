"""Representation similarity and distance kernels.

Every kernel compares the penultimate-layer features ``R`` of a reference
network with the features ``R_l`` of a candidate obtained by removing one
block. Deterministic shape metrics (linear CKA, Procrustes) work on the raw
feature matrices; the stochastic metrics (Bures, interpolated) work on an
empirical Gaussian summary of each matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import (
    DegenerateRepresentation,
    InsufficientSamples,
    InvalidParameter,
    InvalidRepresentation,
    NumericalFailure,
    ShapeMismatch,
)

DEFAULT_RIDGE = 1e-6


@dataclass(frozen=True)
class RepresentationMatrix:
    """n x d feature matrix; row i belongs to ``sample_ids[i]``."""

    data: np.ndarray
    sample_ids: tuple = field(default=None)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[1] < 1:
            raise InvalidRepresentation(f"expected an n x d matrix, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise InvalidRepresentation("representation contains non-finite entries")
        ids = tuple(range(data.shape[0])) if self.sample_ids is None else tuple(self.sample_ids)
        if len(ids) != data.shape[0]:
            raise InvalidRepresentation(f"{len(ids)} sample ids for {data.shape[0]} rows")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "sample_ids", ids)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class GaussianSummary:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=np.float64))
        if cov.shape != (mean.size, mean.size):
            raise ShapeMismatch(f"covariance {cov.shape} does not match mean of length {mean.size}")
        if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-8):
            raise InvalidRepresentation("covariance is not symmetric")
        if np.linalg.eigvalsh(cov).min() < -1e-8:
            raise InvalidRepresentation("covariance is not positive semidefinite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)


class Orientation(str, Enum):
    SIMILARITY = "similarity"
    DISTANCE = "distance"


@dataclass(frozen=True)
class MetricDescriptor:
    name: str
    orientation: Orientation
    params: Mapping[str, float] = field(default_factory=dict)

    @property
    def perfect_score(self) -> float:
        return 1.0 if self.orientation is Orientation.SIMILARITY else 0.0


def _as_rep(r) -> RepresentationMatrix:
    return r if isinstance(r, RepresentationMatrix) else RepresentationMatrix(np.asarray(r))


def _check_comparable(r1: RepresentationMatrix, r2: RepresentationMatrix, same_dim: bool) -> None:
    if r1.n != r2.n:
        raise ShapeMismatch(f"sample counts differ: {r1.n} vs {r2.n}")
    if r1.sample_ids != r2.sample_ids:
        raise ShapeMismatch("sample orderings differ")
    if same_dim and r1.d != r2.d:
        raise ShapeMismatch(f"feature dimensions differ: {r1.d} vs {r2.d}")


def center_columns(r) -> RepresentationMatrix:
    r = _as_rep(r)
    return RepresentationMatrix(r.data - r.data.mean(axis=0, keepdims=True), r.sample_ids)


def gaussian_summary(r, ridge: float = DEFAULT_RIDGE) -> GaussianSummary:
    """Column means and unbiased covariance plus ``ridge * I``."""
    r = _as_rep(r)
    if r.n < 2:
        raise InsufficientSamples(f"need at least 2 samples, got {r.n}")
    mean = r.data.mean(axis=0)
    centered = r.data - mean
    cov = centered.T @ centered / (r.n - 1)
    cov = 0.5 * (cov + cov.T) + ridge * np.eye(r.d)
    return GaussianSummary(mean, cov)


def linear_cka(r1, r2) -> float:
    """Linear centered kernel alignment, in [0, 1].

    Computed in feature space as ``||Y^T X||_F^2 / (||X^T X||_F ||Y^T Y||_F)``
    on column-centered inputs, which equals the normalised HSIC of the
    linear Gram matrices.
    """
    r1, r2 = _as_rep(r1), _as_rep(r2)
    _check_comparable(r1, r2, same_dim=False)
    x = center_columns(r1).data
    y = center_columns(r2).data
    # rescaling keeps the squared norms away from under/overflow
    sx, sy = np.linalg.norm(x), np.linalg.norm(y)
    if sx == 0.0 or sy == 0.0:
        raise DegenerateRepresentation("all rows are identical after centering")
    x, y = x / sx, y / sy
    cross = np.linalg.norm(y.T @ x) ** 2
    denom = np.linalg.norm(x.T @ x) * np.linalg.norm(y.T @ y)
    return float(min(cross / denom, 1.0))


def _orthogonal_residual(a: np.ndarray, b: np.ndarray) -> float:
    # min over orthogonal Q of ||a - b Q||_F, evaluated on the residual
    # itself so identical inputs give ~1e-16 instead of sqrt(rounding).
    try:
        u, _, vt = np.linalg.svd(b.T @ a)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"SVD did not converge: {exc}") from exc
    return float(np.linalg.norm(a - b @ (u @ vt)))


def procrustes_distance(r1, r2) -> float:
    """Orthogonal Procrustes distance between centered, unit-Frobenius inputs.

    Mathematically ``sqrt(||X||^2 + ||Y||^2 - 2 ||Y^T X||_*)``; evaluated as
    the residual of the optimal rotation, which avoids cancellation near 0.
    """
    r1, r2 = _as_rep(r1), _as_rep(r2)
    _check_comparable(r1, r2, same_dim=True)
    x = center_columns(r1).data
    y = center_columns(r2).data
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx == 0.0 or ny == 0.0:
        raise DegenerateRepresentation("zero matrix after centering")
    return _orthogonal_residual(x / nx, y / ny)


def psd_sqrt(mat: np.ndarray) -> np.ndarray:
    """Symmetric square root via eigendecomposition, eigenvalues clamped at 0."""
    try:
        w, v = np.linalg.eigh(0.5 * (mat + mat.T))
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"eigendecomposition did not converge: {exc}") from exc
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def bures_distance(g1: GaussianSummary, g2: GaussianSummary) -> float:
    """Bures distance between the covariances of two Gaussian summaries.

    ``sqrt(Tr(S1 + S2 - 2 (S1^1/2 S2 S1^1/2)^1/2))`` equals the Procrustes
    residual between the symmetric square roots of ``S1`` and ``S2``.
    """
    if g1.covariance.shape != g2.covariance.shape:
        raise ShapeMismatch(f"covariances differ in shape: {g1.covariance.shape} vs {g2.covariance.shape}")
    return _orthogonal_residual(psd_sqrt(g1.covariance), psd_sqrt(g2.covariance))


def interpolated_distance(g1: GaussianSummary, g2: GaussianSummary, lam: float) -> float:
    """Blend of mean and covariance discrepancy; ``lam=0`` is Bures, ``lam=1`` the mean gap."""
    if not 0.0 <= lam <= 1.0:
        raise InvalidParameter(f"interpolation weight must lie in [0, 1], got {lam}")
    if g1.mean.shape != g2.mean.shape:
        raise ShapeMismatch("means differ in dimension")
    mean_sq = float(np.sum((g1.mean - g2.mean) ** 2))
    cov_sq = bures_distance(g1, g2) ** 2 if lam < 1.0 else 0.0
    return float(np.sqrt(lam * mean_sq + (1.0 - lam) * cov_sq))


def _gaussian_pair(r1, r2, params):
    r1, r2 = _as_rep(r1), _as_rep(r2)
    _check_comparable(r1, r2, same_dim=True)
    ridge = params.get("ridge", DEFAULT_RIDGE)
    return gaussian_summary(r1, ridge), gaussian_summary(r2, ridge)


def _bures_kernel(r1, r2, params):
    return bures_distance(*_gaussian_pair(r1, r2, params))


def _interpolated_kernel(r1, r2, params):
    return interpolated_distance(*_gaussian_pair(r1, r2, params), params.get("lam", 0.5))


KERNELS: dict[str, tuple[Orientation, Callable]] = {
    "linear_cka": (Orientation.SIMILARITY, lambda r1, r2, params: linear_cka(r1, r2)),
    "procrustes": (Orientation.DISTANCE, lambda r1, r2, params: procrustes_distance(r1, r2)),
    "bures": (Orientation.DISTANCE, _bures_kernel),
    "interpolated": (Orientation.DISTANCE, _interpolated_kernel),
}


def make_metric(name: str, **params: float) -> MetricDescriptor:
    """Descriptor for a registered kernel; ``name`` may carry a suffix after ``@``
    (e.g. ``interpolated@0.25``) to distinguish parametrised variants in reports."""
    kernel = name.split("@", 1)[0]
    if kernel not in KERNELS:
        raise InvalidParameter(f"unknown metric {name!r}; known: {sorted(KERNELS)}")
    if kernel == "interpolated":
        lam = params.setdefault("lam", 0.5)
        if not 0.0 <= lam <= 1.0:
            raise InvalidParameter(f"interpolation weight must lie in [0, 1], got {lam}")
    return MetricDescriptor(name, KERNELS[kernel][0], dict(params))


def default_metrics() -> list[MetricDescriptor]:
    return [
        make_metric("linear_cka"),
        make_metric("procrustes"),
        make_metric("bures"),
        make_metric("interpolated", lam=0.5),
    ]


def score_layer(metric: MetricDescriptor, r, r_l) -> float:
    """Raw score of candidate ``r_l`` against reference ``r`` under ``metric``.

    The orientation travels with ``metric``; ranking code is responsible for
    flipping similarity scores.
    """
    _, kernel = KERNELS[metric.name.split("@", 1)[0]]
    return float(kernel(r, r_l, metric.params))


def score_all(metrics: Sequence[MetricDescriptor], r, r_l) -> dict[str, float]:
    return {m.name: score_layer(m, r, r_l) for m in metrics}
