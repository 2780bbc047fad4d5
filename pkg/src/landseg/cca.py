"""Canonical correlation analysis via whitening + SVD, the three design
matrices for its first view (RBF expansion, linear, quadratic polynomial),
and the label-indicator second view.

The semi-supervised transfer works as follows: the RBF design uses the
embedded labeled points as centers, the indicator matrix one-hot encodes
their classes, CCA couples the two on the labeled rows only, and the
projection is then applied to all rows, spreading label structure to the
unlabeled points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, NumericError

_EIG_FLOOR = 1e-12
_AUTO_RIDGE = 1e-6
# canonical directions with singular value below this are numerically null
# (the mean-removed indicator always has rank K-1, so the K-th direction of
# an indicator fit is noise); they are dropped and zero-padded downstream
_RANK_TOL = 1e-8

VARIANTS = ("rbf", "linear", "poly")


@dataclass(frozen=True)
class DesignMatrices:
    """First-view design: full matrix over all rows plus its labeled block."""

    phi_full: np.ndarray  # N x p, column-mean removed
    phi: np.ndarray  # N_l x p rows of phi_full at the labeled positions
    variant: str
    psi: np.ndarray | None = None  # N_l x K indicator block, mean removed
    rbf_sigma: float | None = None
    centers: np.ndarray | None = None


@dataclass(frozen=True)
class CcaModel:
    """Projection pair and canonical correlations from one fit."""

    a: np.ndarray  # p x d
    b: np.ndarray  # K x d
    correlations: np.ndarray  # d, descending in [0, 1]
    ridge: float
    d: int


@dataclass(frozen=True)
class CanonicalResult:
    """Canonical variables of all rows, padded to K columns."""

    u_full: np.ndarray  # N x K (zero-padded when d < K)
    model: CcaModel
    variant: str
    sigma: float | None = None
    effective_dim: int = 0


def rbf_sigma(y: np.ndarray, centers: np.ndarray) -> float:
    """Width heuristic: root mean squared distance between every embedded
    point and every center."""
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    if y.shape[0] < 1 or centers.shape[0] < 1:
        raise DataError("need at least one point and one center")
    sq_y = np.einsum("ij,ij->i", y, y)
    sq_c = np.einsum("ij,ij->i", centers, centers)
    total = float(np.sum(sq_y) * centers.shape[0] + np.sum(sq_c) * y.shape[0]
                  - 2.0 * np.sum((y @ centers.T)))
    mean_sq = max(total, 0.0) / (y.shape[0] * centers.shape[0])
    sigma = float(np.sqrt(mean_sq))
    if sigma == 0.0:
        raise NumericError("degenerate embedding: all points coincide with the centers")
    return sigma


def _remove_column_means(m: np.ndarray) -> np.ndarray:
    return m - m.mean(axis=0)


def build_rbf_design(y: np.ndarray, labeled_indices, sigma: float) -> DesignMatrices:
    """Gaussian RBF expansion of every row against the labeled centers,
    followed by column mean removal over all N rows.

    With the labeled points ordered first (labeled_indices == 0..N_l-1),
    `phi` is exactly the top block of `phi_full`.
    """
    if sigma <= 0:
        raise ConfigError("sigma must be positive")
    y = np.asarray(y, dtype=np.float64)
    idx = np.asarray(labeled_indices, dtype=np.int64)
    centers = y[idx]
    sq_y = np.einsum("ij,ij->i", y, y)
    sq_c = np.einsum("ij,ij->i", centers, centers)
    d = sq_y[:, None] + sq_c[None, :] - 2.0 * (y @ centers.T)
    np.maximum(d, 0.0, out=d)
    phi_full = np.exp(-d / (2.0 * sigma * sigma))
    phi_full = _remove_column_means(phi_full)
    return DesignMatrices(phi_full=phi_full, phi=phi_full[idx], variant="rbf",
                          rbf_sigma=float(sigma), centers=centers)


def build_linear_design(y: np.ndarray) -> np.ndarray:
    """The embedding itself, column-mean removed."""
    return _remove_column_means(np.asarray(y, dtype=np.float64))


def build_polynomial_design(y: np.ndarray) -> np.ndarray:
    """Embedding plus all degree-2 monomials y_a * y_b (a <= b), mean removed;
    m columns become m + m(m+1)/2."""
    y = np.asarray(y, dtype=np.float64)
    m = y.shape[1]
    quads = [y[:, a] * y[:, b] for a in range(m) for b in range(a, m)]
    design = np.column_stack([y] + quads)
    return _remove_column_means(design)


def build_indicator(labels, class_count: int) -> np.ndarray:
    """One-hot rows for labels in 1..K, then column mean removal."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1 or labels.size == 0:
        raise DataError("labels must be a nonempty 1-D array")
    if labels.min() < 1 or labels.max() > class_count:
        raise DataError(f"labels outside 1..{class_count}")
    for k in range(1, class_count + 1):
        if not np.any(labels == k):
            raise DataError(f"class {k} has no labeled sample")
    psi = np.zeros((labels.size, class_count), dtype=np.float64)
    psi[np.arange(labels.size), labels - 1] = 1.0
    return _remove_column_means(psi)


def _inv_sqrt_sym(c: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(c)
    w = np.maximum(w, _EIG_FLOOR)
    return (v / np.sqrt(w)) @ v.T


def cca_fit(phi: np.ndarray, psi: np.ndarray, ridge: float | None = None) -> CcaModel:
    """Whitening + SVD solution of CCA on mean-removed views.

    Covariances are (1/N_l) X^T X plus a ridge on both diagonal blocks
    (default 1e-6 * trace(C_phiphi) / p, since the RBF covariance estimated
    from N_l rows is singular).  Retains at most min(p, K) directions,
    dropping numerically-null ones (singular value <= 1e-8) whose
    orientation is arbitrary; correlations are clamped to [0, 1].
    """
    phi = np.asarray(phi, dtype=np.float64)
    psi = np.asarray(psi, dtype=np.float64)
    if phi.ndim != 2 or psi.ndim != 2 or phi.shape[0] != psi.shape[0]:
        raise DataError(f"view shapes disagree: {phi.shape} vs {psi.shape}")
    n_l, p = phi.shape
    k = psi.shape[1]
    if p == 0 or k == 0:
        raise DataError("views must have at least one column")

    c_pp = phi.T @ phi / n_l
    c_ss = psi.T @ psi / n_l
    c_ps = phi.T @ psi / n_l
    if not (np.all(np.isfinite(c_pp)) and np.all(np.isfinite(c_ss)) and np.all(np.isfinite(c_ps))):
        raise NumericError("non-finite covariance")
    if ridge is None:
        ridge = _AUTO_RIDGE * float(np.trace(c_pp)) / p
    if ridge < 0:
        raise ConfigError("ridge must be nonnegative")
    c_pp[np.diag_indices_from(c_pp)] += ridge
    c_ss[np.diag_indices_from(c_ss)] += ridge

    isq_pp = _inv_sqrt_sym(c_pp)
    isq_ss = _inv_sqrt_sym(c_ss)
    coupling = isq_pp @ c_ps @ isq_ss
    gamma, lam_sqrt, delta_t = np.linalg.svd(coupling)
    d = min(p, k)
    d = max(int(np.sum(lam_sqrt[:d] > _RANK_TOL)), 0)
    a = isq_pp @ gamma[:, :d]
    b = isq_ss @ delta_t[:d].T
    correlations = np.clip(lam_sqrt[:d], 0.0, 1.0)
    return CcaModel(a=a, b=b, correlations=correlations, ridge=float(ridge), d=d)


def project_canonical(phi_full: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Canonical variables of all rows: U_full = Phi_full A."""
    phi_full = np.asarray(phi_full, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    if phi_full.shape[1] != a.shape[0]:
        raise DataError(f"cannot project {phi_full.shape} through {a.shape}")
    return phi_full @ a


def _pad_columns(u: np.ndarray, k: int) -> np.ndarray:
    if u.shape[1] >= k:
        return u[:, :k]
    out = np.zeros((u.shape[0], k), dtype=u.dtype)
    out[:, :u.shape[1]] = u
    return out


def rbf_cca(y: np.ndarray, labeled_indices, labels, class_count: int,
            ridge: float | None = None) -> CanonicalResult:
    """RBF-expanded CCA trained on the labeled rows and projected onto all
    rows; returns N x K canonical variables in the original row order
    (zero-padded and `effective_dim` recorded when fewer directions exist)."""
    return canonical_variables(y, labeled_indices, labels, class_count,
                               variant="rbf", ridge=ridge)


def canonical_variables(y: np.ndarray, labeled_indices, labels, class_count: int,
                        variant: str = "rbf", ridge: float | None = None) -> CanonicalResult:
    """Fit the requested CCA variant and return canonical variables for all
    rows.  Variants differ only in the first-view design built from the
    embedding: "rbf" (Gaussian units at labeled centers), "linear" (the
    embedding itself), "poly" (embedding plus quadratic monomials)."""
    if variant not in VARIANTS:
        raise ConfigError(f"unknown CCA variant '{variant}' (expected one of {VARIANTS})")
    y = np.asarray(y, dtype=np.float64)
    idx = np.asarray(labeled_indices, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if idx.ndim != 1 or idx.size == 0:
        raise DataError("need at least one labeled point")
    if np.unique(idx).size != idx.size:
        raise DataError("labeled indices contain duplicates")
    if idx.min() < 0 or idx.max() >= y.shape[0]:
        raise DataError("labeled index out of range")
    if labels.shape != idx.shape:
        raise DataError("labels must align with labeled_indices")

    n = y.shape[0]
    n_l = idx.size
    # labeled rows move to the front so the labeled block is phi_full[:N_l]
    order = np.concatenate([idx, np.setdiff1d(np.arange(n), idx, assume_unique=False)])
    y_ord = y[order]

    sigma = None
    if variant == "rbf":
        sigma = rbf_sigma(y, y[idx])
        design = build_rbf_design(y_ord, np.arange(n_l), sigma)
        phi_full, phi = design.phi_full, design.phi
    elif variant == "linear":
        phi_full = build_linear_design(y_ord)
        phi = phi_full[:n_l]
    else:
        phi_full = build_polynomial_design(y_ord)
        phi = phi_full[:n_l]

    psi = build_indicator(labels, class_count)
    model = cca_fit(phi, psi, ridge)
    u_ord = _pad_columns(project_canonical(phi_full, model.a), class_count)

    u_full = np.empty_like(u_ord)
    u_full[order] = u_ord
    return CanonicalResult(u_full=u_full, model=model, variant=variant,
                           sigma=sigma, effective_dim=model.d)
