"""PCA pre-reduction and exact pairwise t-SNE.

The t-SNE implementation is the exact O(N^2) formulation: Gaussian joint
probabilities P calibrated per point to a target perplexity, Student-t
(1 degree of freedom) similarities Q in the map, and gradient descent on
KL(P || Q) with early exaggeration and a two-phase momentum schedule.

Two interchangeable engines compute the per-iteration gradient:

  * a float64 numpy engine (reference; used at small N and in tests),
  * a float32 numba engine that fuses the pairwise pass and never
    materializes the N x N distance matrix (used at large N).

Both are deterministic for a fixed seed.  The gradient is evaluated as
4 * (attraction - repulsion / sum(W)), which is algebraically identical to
the usual 4 * sum_j (p_ij - q_ij) (y_i - y_j) / (1 + ||y_i - y_j||^2).
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, NumericError

try:
    from . import _kernels

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency, but stay usable
    _kernels = None
    _HAVE_NUMBA = False

# below this many points the numpy engine is used even when numba is present
NUMBA_MIN_POINTS = 1024

_LSE_MAGIC = b"LSE1"
_P_FLOOR = 1e-12
_Q_FLOOR = 1e-30


@dataclass(frozen=True)
class TsneConfig:
    """Hyperparameters of the t-SNE optimizer."""

    out_dim: int = 3
    perplexity: float = 30.0
    iterations: int = 1000
    learning_rate: float = 200.0
    momentum_start: float = 0.5
    momentum_final: float = 0.8
    momentum_switch_iter: int = 250
    early_exaggeration: float = 12.0
    exaggeration_iters: int = 250
    seed: int = 0
    perplexity_tolerance: float = 1e-5
    sigma_search_max_iters: int = 50

    def __post_init__(self):
        if not 1 <= self.out_dim <= 3:
            raise ConfigError(f"out_dim must be 1..3, got {self.out_dim}")
        if self.perplexity <= 0:
            raise ConfigError("perplexity must be positive")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")


@dataclass(frozen=True)
class SimilarityModel:
    """Per-point Gaussian bandwidths and the symmetric joint matrix P."""

    sigmas: np.ndarray
    p: np.ndarray


@dataclass(frozen=True)
class Embedding:
    """Low-dimensional map plus the optimizer's KL trace.

    During the early-exaggeration phase the recorded KL values are taken
    against the exaggerated surrogate (they stay nonnegative); entries from
    `exaggeration_iters` onward are the plain objective.
    """

    y: np.ndarray
    kl_trajectory: np.ndarray


# ---------------------------------------------------------------------------
# PCA

def pca_reduce(x: np.ndarray, target_dim: int) -> np.ndarray:
    """Project mean-centered rows onto the top principal directions.

    Components are ordered by descending eigenvalue; each one's sign is
    fixed so its largest-magnitude loading is positive.
    """
    x = np.asarray(x, dtype=np.float64)
    n_rows, n_cols = x.shape
    if not 1 <= target_dim <= min(n_rows, n_cols):
        raise ConfigError(
            f"target_dim {target_dim} outside 1..min(N,n)={min(n_rows, n_cols)}"
        )
    centered = x - x.mean(axis=0)
    if not np.any(np.abs(centered) > 1e-300):
        raise NumericError("zero variance: all rows identical")
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    components = vt[:target_dim].copy()
    for r in range(target_dim):
        lead = np.argmax(np.abs(components[r]))
        if components[r, lead] < 0:
            components[r] = -components[r]
    return centered @ components.T


# ---------------------------------------------------------------------------
# pairwise distances and perplexity calibration

def _sq_dists(x: np.ndarray, dtype=np.float64) -> np.ndarray:
    """Pairwise squared Euclidean distances with +inf on the diagonal."""
    x = np.asarray(x, dtype=dtype)
    if _HAVE_NUMBA and x.shape[0] >= NUMBA_MIN_POINTS:
        d = _kernels.pairwise_sq_dists(np.ascontiguousarray(x, dtype=np.float32))
        d = d.astype(dtype, copy=False)
    else:
        sq = np.einsum("ij,ij->i", x, x)
        d = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
        np.maximum(d, 0.0, out=d)
    np.fill_diagonal(d, np.inf)
    return d


def _row_perplexities(d_rows, betas):
    """exp-of-entropy (perplexity) of the conditional distributions defined
    by rows of squared distances and precisions beta = 1/(2 sigma^2).

    Excluded entries (the self-distance) carry +inf and contribute nothing.
    """
    shifts = d_rows.min(axis=1)
    t = d_rows - shifts[:, None]
    e = np.exp(-betas[:, None] * t)  # inf -> 0
    t = np.where(np.isinf(t), 0.0, t)  # keep 0 * inf out of the moment sum
    s = e.sum(axis=1, dtype=np.float64)
    h = np.log(s) + betas * np.einsum("ij,ij->i", e, t, dtype=np.float64) / s
    return np.exp(h)


def _calibrate_from_dists(d, perplexity, tolerance, max_iters):
    """Per-row bandwidth search: geometric bracket expansion on sigma, then
    bisection until |perp(sigma) - perplexity| <= tolerance."""
    n = d.shape[0]
    if perplexity >= n:
        raise ConfigError(f"perplexity {perplexity} must be < N={n}")
    sigma = np.ones(n, dtype=np.float64)
    perp = _row_perplexities(d, 1.0 / (2.0 * sigma**2))

    lo = sigma.copy()
    hi = sigma.copy()
    # expand the upper bracket for rows whose perplexity is too small,
    # the lower bracket for rows whose perplexity is too large
    need_up = perp < perplexity
    for _ in range(64):
        if not need_up.any():
            break
        hi[need_up] *= 2.0
        rows = np.flatnonzero(need_up)
        perp_rows = _row_perplexities(d[rows], 1.0 / (2.0 * hi[rows] ** 2))
        need_up[rows] = perp_rows < perplexity
    need_down = perp > perplexity
    for _ in range(64):
        if not need_down.any():
            break
        lo[need_down] /= 2.0
        rows = np.flatnonzero(need_down)
        perp_rows = _row_perplexities(d[rows], 1.0 / (2.0 * lo[rows] ** 2))
        need_down[rows] = perp_rows > perplexity

    sigma = 0.5 * (lo + hi)
    active = np.ones(n, dtype=bool)
    for _ in range(max_iters):
        rows = np.flatnonzero(active)
        if rows.size == 0:
            break
        perp_rows = _row_perplexities(d[rows], 1.0 / (2.0 * sigma[rows] ** 2))
        done = np.abs(perp_rows - perplexity) <= tolerance
        too_big = perp_rows > perplexity
        hi[rows[too_big & ~done]] = sigma[rows[too_big & ~done]]
        lo[rows[~too_big & ~done]] = sigma[rows[~too_big & ~done]]
        active[rows[done]] = False
        still = np.flatnonzero(active)
        sigma[still] = 0.5 * (lo[still] + hi[still])
    if active.any():
        rows = np.flatnonzero(active)
        perp_rows = _row_perplexities(d[rows], 1.0 / (2.0 * sigma[rows] ** 2))
        worst = float(np.max(np.abs(perp_rows - perplexity)))
        warnings.warn(
            f"perplexity calibration: {rows.size}/{n} points did not reach "
            f"tolerance {tolerance:g} in {max_iters} bisections "
            f"(worst deviation {worst:.3g}); using bracket midpoints",
            RuntimeWarning,
            stacklevel=2,
        )
    return sigma


def calibrate_sigmas(x, perplexity, tolerance: float = 1e-5, max_iters: int = 50) -> np.ndarray:
    """Gaussian bandwidth per point such that the conditional distribution's
    exp-entropy matches `perplexity` within `tolerance`."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] < 3:
        raise DataError("need at least 3 points to calibrate bandwidths")
    return _calibrate_from_dists(_sq_dists(x), perplexity, tolerance, max_iters)


def _joint_from_dists(d, sigmas, dtype=np.float64):
    """Conditional probabilities row-normalized, then symmetrized to
    p_ij = (p_j|i + p_i|j) / (2N), floored off-diagonal at 1e-12."""
    n = d.shape[0]
    betas = 1.0 / (2.0 * np.asarray(sigmas, dtype=np.float64) ** 2)
    shifts = d.min(axis=1)
    p_cond = np.multiply(d - shifts[:, None], -betas[:, None]).astype(dtype, copy=False)
    np.exp(p_cond, out=p_cond)  # diagonal -> 0 via the inf distances
    p_cond /= p_cond.sum(axis=1, dtype=np.float64, keepdims=True).astype(dtype)
    p = p_cond + p_cond.T
    del p_cond
    p /= dtype(2.0 * n)
    np.maximum(p, dtype(_P_FLOOR), out=p)
    np.fill_diagonal(p, 0.0)
    return p


def joint_probabilities(x, sigmas) -> SimilarityModel:
    """Symmetric joint similarity matrix P for the given bandwidths."""
    sigmas = np.asarray(sigmas, dtype=np.float64)
    if np.any(sigmas <= 0):
        raise ConfigError("all bandwidths must be positive")
    d = _sq_dists(np.asarray(x, dtype=np.float64))
    return SimilarityModel(sigmas=sigmas, p=_joint_from_dists(d, sigmas))


# ---------------------------------------------------------------------------
# KL divergence and gradient (numpy reference engine)

def _kl_and_grad(p, y):
    """Exact KL(P||Q) and its gradient for the map `y` (float64)."""
    y = np.asarray(y, dtype=np.float64)
    sq = np.einsum("ij,ij->i", y, y)
    d = sq[:, None] + sq[None, :] - 2.0 * (y @ y.T)
    np.maximum(d, 0.0, out=d)
    w = 1.0 / (1.0 + d)
    np.fill_diagonal(w, 0.0)
    sum_w = w.sum()
    q = w / sum_w
    s = (p - q) * w
    grad = 4.0 * (s.sum(axis=1)[:, None] * y - s @ y)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(p > 0, p / np.maximum(q, _Q_FLOOR), 1.0)
        kl = float(np.sum(np.where(p > 0, p * np.log(ratio), 0.0)))
    return kl, grad


def _run_numpy(p, y0, cfg: TsneConfig):
    y = y0.astype(np.float64, copy=True)
    update = np.zeros_like(y)
    kl_trace = np.empty(cfg.iterations, dtype=np.float64)
    for it in range(cfg.iterations):
        exaggerated = it < cfg.exaggeration_iters
        p_eff = p * cfg.early_exaggeration if exaggerated else p
        momentum = cfg.momentum_start if it < cfg.momentum_switch_iter else cfg.momentum_final
        kl, grad = _kl_and_grad(p_eff, y)
        if not np.isfinite(kl):
            raise NumericError(f"t-SNE diverged: non-finite KL at iteration {it + 1}")
        kl_trace[it] = kl
        update = momentum * update - cfg.learning_rate * grad
        y = y + update
    return y, kl_trace


def _run_numba(p, y0, cfg: TsneConfig):
    n, m = y0.shape
    p32 = np.ascontiguousarray(p, dtype=np.float32)
    p_work = np.empty_like(p32)
    w = np.empty_like(p32)  # Student-t weights, reused as a log scratchpad
    y = np.ascontiguousarray(y0, dtype=np.float32)
    update = np.zeros_like(y)
    att = np.empty((n, m), dtype=np.float32)
    rep = np.empty((n, m), dtype=np.float32)
    sw_part = np.empty(n, dtype=np.float64)
    kl_trace = np.empty(cfg.iterations, dtype=np.float64)

    def phase_constants(buf):
        sum_p = float(buf.sum(dtype=np.float64))
        np.maximum(buf, _Q_FLOOR, out=w)
        np.log(w, out=w)
        plogp = float(np.dot(buf.ravel(), w.ravel()))
        return sum_p, plogp

    np.multiply(p32, np.float32(cfg.early_exaggeration), out=p_work)
    sum_p, plogp = phase_constants(p_work)

    for it in range(cfg.iterations):
        if it == cfg.exaggeration_iters:
            p_work[:] = p32
            sum_p, plogp = phase_constants(p_work)
        momentum = cfg.momentum_start if it < cfg.momentum_switch_iter else cfg.momentum_final

        _kernels.tsne_pass(y, p_work, w, att, rep, sw_part)
        sum_w = float(sw_part.sum())
        # KL = sum p log p - sum p log w + log(sum_w) * sum p
        np.log(w, out=w)
        p_log_w = float(np.dot(p_work.ravel(), w.ravel()))
        kl = plogp - p_log_w + np.log(sum_w) * sum_p
        if not np.isfinite(kl):
            raise NumericError(f"t-SNE diverged: non-finite KL at iteration {it + 1}")
        kl_trace[it] = kl

        grad = att - rep / np.float32(sum_w)
        grad *= np.float32(4.0)
        update *= np.float32(momentum)
        update -= np.float32(cfg.learning_rate) * grad
        y += update
    return y.astype(np.float64), kl_trace


def tsne(x, config: TsneConfig | None = None, engine: str = "auto") -> Embedding:
    """Embed rows of `x` into config.out_dim dimensions by exact t-SNE.

    Deterministic for a fixed seed; raises NumericError if the objective
    turns non-finite.  `engine` is "auto", "numpy", or "numba".
    """
    if config is None:
        config = TsneConfig()
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if n < 4:
        raise DataError(f"t-SNE needs at least 4 points, got {n}")
    if config.perplexity >= n:
        raise ConfigError(f"perplexity {config.perplexity} must be < N={n}")
    if engine not in ("auto", "numpy", "numba"):
        raise ConfigError(f"unknown engine '{engine}'")

    use_numba = _HAVE_NUMBA and (engine == "numba" or (engine == "auto" and n >= NUMBA_MIN_POINTS))
    if engine == "numba" and not _HAVE_NUMBA:
        raise ConfigError("numba engine requested but numba is unavailable")

    heavy_dtype = np.float32 if use_numba else np.float64
    d = _sq_dists(x, dtype=heavy_dtype)
    sigmas = _calibrate_from_dists(
        d, config.perplexity, config.perplexity_tolerance, config.sigma_search_max_iters
    )
    p = _joint_from_dists(d, sigmas, dtype=heavy_dtype)
    del d

    rng = np.random.default_rng(config.seed)
    y0 = rng.normal(loc=0.0, scale=1e-2, size=(n, config.out_dim))

    if use_numba:
        y, kl_trace = _run_numba(p, y0, config)
    else:
        y, kl_trace = _run_numpy(p.astype(np.float64, copy=False), y0, config)
    return Embedding(y=y, kl_trajectory=kl_trace)


# ---------------------------------------------------------------------------
# embedding file format (LSE1)

def save_embedding(embedding: Embedding | np.ndarray, path) -> None:
    y = embedding.y if isinstance(embedding, Embedding) else np.asarray(embedding)
    with open(str(path), "wb") as fh:
        fh.write(_LSE_MAGIC)
        fh.write(struct.pack("<II", y.shape[0], y.shape[1]))
        fh.write(y.astype("<f4").tobytes())


def load_embedding(path) -> np.ndarray:
    path = str(path)
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12 or data[:4] != _LSE_MAGIC:
        raise DataError(f"{path}: not an LSE1 embedding file")
    n, m = struct.unpack_from("<II", data, 4)
    need = 12 + n * m * 4
    if len(data) < need:
        raise DataError(f"{path}: truncated embedding file")
    return np.frombuffer(data[12:need], dtype="<f4").reshape(n, m).astype(np.float64)
