"""Row normalization, seeded k-means, and the raw-pixels-to-cluster-labels
pipeline (features -> optional PCA -> t-SNE -> CCA variant -> normalize ->
k-means)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import cca as cca_mod
from .caching import StageCache, content_key
from .embedding import Embedding, TsneConfig, pca_reduce, tsne
from .errors import ConfigError, DataError, LandsegError, NumericError
from .features import FeatureConfig, FeatureMatrix, assemble_features
from .raster import LabelMask, MultiBandImage


@dataclass(frozen=True)
class NormalizedVariables:
    """Unit-norm rows of the canonical variables; all-zero rows are kept
    as zeros and flagged rather than rejected."""

    z: np.ndarray
    zero_row_indices: np.ndarray


@dataclass(frozen=True)
class ClusterAssignment:
    labels: np.ndarray  # per-point cluster ids 1..K
    centroids: np.ndarray
    inertia: float
    iterations_used: int
    inertia_trace: np.ndarray = field(default_factory=lambda: np.empty(0))


def row_normalize(u_full: np.ndarray) -> NormalizedVariables:
    """Scale every row to unit Euclidean norm; zero rows stay zero and are
    reported in zero_row_indices."""
    u = np.asarray(u_full, dtype=np.float64)
    norms = np.linalg.norm(u, axis=1)
    zero_rows = np.flatnonzero(norms == 0)
    safe = np.where(norms == 0, 1.0, norms)
    return NormalizedVariables(z=u / safe[:, None], zero_row_indices=zero_rows)


def _kmeans_pp_init(z, k, rng):
    n = z.shape[0]
    centers = np.empty((k, z.shape[1]), dtype=np.float64)
    chosen = np.zeros(n, dtype=bool)
    first = int(rng.integers(n))
    centers[0] = z[first]
    chosen[first] = True
    d2 = np.einsum("ij,ij->i", z - centers[0], z - centers[0])
    for c in range(1, k):
        total = d2.sum()
        if total <= 0:
            # all remaining mass at distance zero: take the lowest-index
            # point that is not a center yet
            idx = int(np.flatnonzero(~chosen)[0])
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers[c] = z[idx]
        chosen[idx] = True
        step = np.einsum("ij,ij->i", z - centers[c], z - centers[c])
        np.minimum(d2, step, out=d2)
    return centers


def _assign(z, centers):
    """Squared distances to centers and nearest-center labels (argmin breaks
    ties toward the lowest center index)."""
    z2 = np.einsum("ij,ij->i", z, z)
    c2 = np.einsum("ij,ij->i", centers, centers)
    d = z2[:, None] + c2[None, :] - 2.0 * (z @ centers.T)
    np.maximum(d, 0.0, out=d)
    labels = np.argmin(d, axis=1)
    return d, labels


def _lloyd(z, k, rng, max_iters, tol):
    n = z.shape[0]
    centers = _kmeans_pp_init(z, k, rng)
    trace = []
    labels = np.zeros(n, dtype=np.int64)
    for it in range(1, max_iters + 1):
        d, labels = _assign(z, centers)
        point_cost = d[np.arange(n), labels]

        empties = [c for c in range(k) if not np.any(labels == c)]
        stolen = set()
        for c in empties:
            # reseed at the point currently farthest from its own centroid
            order = np.argsort(-point_cost, kind="stable")
            far = next(int(i) for i in order if int(i) not in stolen)
            stolen.add(far)
            centers[c] = z[far]
            labels[far] = c
            point_cost[far] = 0.0

        trace.append(float(point_cost.sum()))
        new_centers = np.empty_like(centers)
        for c in range(k):
            members = labels == c
            if not np.any(members):
                return None  # still empty at update time: restart failed
            new_centers[c] = z[members].mean(axis=0)
        shift = float(np.max(np.linalg.norm(new_centers - centers, axis=1)))
        centers = new_centers
        if shift <= tol:
            break
    d, labels = _assign(z, centers)
    inertia = float(d[np.arange(n), labels].sum())
    trace.append(inertia)
    for c in range(k):
        if not np.any(labels == c):
            return None
    return ClusterAssignment(labels=(labels + 1).astype(np.int32), centroids=centers,
                             inertia=inertia, iterations_used=it,
                             inertia_trace=np.asarray(trace))


def kmeans(z: np.ndarray, k: int, seed: int = 0, max_iters: int = 300,
           tol: float = 1e-6, restarts: int = 10) -> ClusterAssignment:
    """k-means++ seeded Lloyd iterations, best inertia over `restarts`
    independent seeded runs (lowest restart index wins ties); empty clusters
    are reseeded at the farthest point, and a restart that still ends with
    an empty cluster is discarded."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2:
        raise DataError("k-means expects a 2-D matrix")
    if k < 1 or k > z.shape[0]:
        raise DataError(f"K={k} invalid for {z.shape[0]} points")
    best = None
    for r in range(restarts):
        rng = np.random.default_rng([int(seed), r])
        result = _lloyd(z, k, rng, max_iters, tol)
        if result is None:
            continue
        if best is None or result.inertia < best.inertia:
            best = result
    if best is None:
        raise NumericError("k-means failed: every restart ended with an empty cluster")
    return best


# ---------------------------------------------------------------------------
# pipeline

@dataclass(frozen=True)
class SegmentConfig:
    """Bundle of every knob the pipeline consumes."""

    class_count: int
    feature: FeatureConfig = field(default_factory=FeatureConfig)
    tsne: TsneConfig = field(default_factory=TsneConfig)
    pca_dim: int = 50  # 0 disables the PCA pre-reduction
    variant: str = "rbf"
    ridge: float | None = None
    kmeans_seed: int = 0
    kmeans_restarts: int = 10
    kmeans_max_iters: int = 300
    kmeans_tol: float = 1e-6

    def __post_init__(self):
        if self.class_count < 2:
            raise ConfigError("class_count must be >= 2")
        if self.variant not in cca_mod.VARIANTS:
            raise ConfigError(f"unknown variant '{self.variant}'")
        if self.pca_dim < 0:
            raise ConfigError("pca_dim must be >= 0 (0 disables PCA)")


@dataclass(frozen=True)
class SegmentationArtifacts:
    """Cluster labels in original pixel order plus per-stage intermediates."""

    assignment: ClusterAssignment
    features: FeatureMatrix
    reduced: np.ndarray
    embedding: Embedding
    canonical: cca_mod.CanonicalResult
    normalized: NormalizedVariables

    @property
    def cluster_map(self) -> np.ndarray:
        return self.assignment.labels.reshape(self.features.height, self.features.width)


def _stage(name, fn):
    try:
        return fn()
    except LandsegError as exc:
        raise type(exc)(f"[stage {name}] {exc}") from exc


def segment(image: MultiBandImage, mask: LabelMask, config: SegmentConfig,
            cache: StageCache | None = None) -> SegmentationArtifacts:
    """Run the full pipeline on one image tile.

    `mask` is the training mask (already subsampled to the label fraction);
    every class 1..K must have at least one labeled pixel in it.  Stage
    outputs are pulled from `cache` when provided, so repeats and variant
    sweeps that share inputs reuse the feature matrix and the embedding.
    """
    if cache is None:
        cache = StageCache()
    if mask.shape != (image.height, image.width):
        raise DataError(f"mask {mask.shape} does not match image "
                        f"{(image.height, image.width)}")

    stack = image.stack()
    feat_key = content_key("features", stack, config.feature)
    feats = _stage("features", lambda: cache.get_or(
        feat_key, lambda: assemble_features(image, config.feature)))

    if config.pca_dim > 0:
        target = min(config.pca_dim, feats.data.shape[0], feats.data.shape[1])
        red_key = content_key("pca", feat_key, target)
        reduced = _stage("pca", lambda: cache.get_or(
            red_key, lambda: pca_reduce(feats.data, target)))
    else:
        red_key = content_key("pca", feat_key, "skip")
        reduced = feats.data

    emb_key = content_key("tsne", red_key, config.tsne)
    emb = _stage("tsne", lambda: cache.get_or(emb_key, lambda: tsne(reduced, config.tsne)))

    flat = mask.labels.ravel()
    labeled_idx = np.flatnonzero(flat)
    canon = _stage("cca", lambda: cca_mod.canonical_variables(
        emb.y, labeled_idx, flat[labeled_idx], config.class_count,
        variant=config.variant, ridge=config.ridge))

    normalized = _stage("normalize", lambda: row_normalize(canon.u_full))
    assignment = _stage("kmeans", lambda: kmeans(
        normalized.z, config.class_count, seed=config.kmeans_seed,
        max_iters=config.kmeans_max_iters, tol=config.kmeans_tol,
        restarts=config.kmeans_restarts))

    return SegmentationArtifacts(assignment=assignment, features=feats,
                                 reduced=reduced, embedding=emb,
                                 canonical=canon, normalized=normalized)
