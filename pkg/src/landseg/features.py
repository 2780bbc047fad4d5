"""Per-pixel multi-feature extraction: cell patches, uniform LBP
histograms, and GLCM statistics, assembled into the N x n feature matrix.

Every pixel of every band maps to a block
    [cell (N_c^2) | LBP histogram (59) | GLCM stats (4)]
and band blocks are concatenated in band order, so n = M * (N_c^2 + 63).

`assemble_features` is the production path: it computes all three feature
families with integral-image box sums over a single mirror-padded copy of
each band, which is exact and fast.  The per-pixel operations
(`cell_vector`, `uniform_lbp_histogram`, `glcm`, ...) are the reference
path used by tests and small-scale callers.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, DataError
from .raster import Band, MultiBandImage

LBP_BINS = 59  # 58 uniform patterns + 1 merged non-uniform bin
GLCM_STATS = 4  # contrast, correlation, energy, homogeneity

_LSX_MAGIC = b"LSX1"

# LBP neighbor ring, anti-clockwise starting at "top"; weight of the
# i-th neighbor is 2**(i-1).
_LBP_RING = (
    (-1, 0),  # top
    (-1, -1),  # left-top
    (0, -1),  # left-middle
    (1, -1),  # left-bottom
    (1, 0),  # bottom
    (1, 1),  # right-bottom
    (0, 1),  # right-middle
    (-1, 1),  # right-top
)


def _circular_transitions(code: int) -> int:
    rot = ((code << 1) | (code >> 7)) & 0xFF
    return bin(code ^ rot).count("1")


def _uniform_bin_table() -> np.ndarray:
    """Map each 8-bit code to its histogram bin: uniform codes (<= 2
    circular transitions) get bins 0..57 in ascending code order, all
    non-uniform codes share bin 58."""
    table = np.full(256, LBP_BINS - 1, dtype=np.int64)
    uniform = [c for c in range(256) if _circular_transitions(c) <= 2]
    for slot, code in enumerate(uniform):
        table[code] = slot
    return table


UNIFORM_BIN = _uniform_bin_table()
UNIFORM_CODE_COUNT = int(np.sum(UNIFORM_BIN < LBP_BINS - 1))


@dataclass(frozen=True)
class FeatureConfig:
    """Knobs for the per-pixel feature generator."""

    cell_size: int = 7
    patch_size: int = 11
    glcm_levels: int = 8
    glcm_offset: tuple[int, int] = (0, 1)
    glcm_normalization: str = "paper"

    def __post_init__(self):
        if self.cell_size < 1 or self.cell_size % 2 == 0:
            raise ConfigError(f"cell_size must be odd and positive, got {self.cell_size}")
        if self.patch_size < 1 or self.patch_size % 2 == 0:
            raise ConfigError(f"patch_size must be odd and positive, got {self.patch_size}")
        if self.patch_size <= self.cell_size:
            raise ConfigError("patch_size must exceed cell_size")
        if self.glcm_levels < 2:
            raise ConfigError("glcm_levels must be >= 2")
        dx, dy = self.glcm_offset
        if dx == 0 and dy == 0:
            raise ConfigError("glcm_offset must be nonzero")
        if abs(dx) >= self.patch_size or abs(dy) >= self.patch_size:
            raise ConfigError("glcm_offset exceeds the patch")
        if self.glcm_normalization not in ("paper", "probability"):
            raise ConfigError(f"unknown glcm_normalization '{self.glcm_normalization}'")

    @property
    def block_size(self) -> int:
        """Feature count contributed by one band."""
        return self.cell_size**2 + LBP_BINS + GLCM_STATS

    @property
    def pad_margin(self) -> int:
        # LBP needs each patch pixel's own 8-neighborhood, hence the +1
        return max((self.cell_size - 1) // 2, (self.patch_size - 1) // 2 + 1)


@dataclass(frozen=True)
class PixelFeature:
    """Feature triple of one pixel in one band."""

    cell: np.ndarray
    lbp_hist: np.ndarray
    glcm_stats: np.ndarray

    def concatenated(self) -> np.ndarray:
        return np.concatenate([self.cell, self.lbp_hist, self.glcm_stats])


@dataclass(frozen=True)
class FeatureMatrix:
    """N x n matrix of per-pixel features, rows in row-major pixel order."""

    data: np.ndarray
    height: int
    width: int
    band_count: int

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim != 2 or d.shape[0] != self.height * self.width:
            raise DataError(f"feature matrix shape {d.shape} does not match "
                            f"{self.height}x{self.width} pixels")
        if not np.all(np.isfinite(d)):
            raise DataError("feature matrix holds non-finite entries")
        object.__setattr__(self, "data", d)

    @property
    def pixel_count(self) -> int:
        return self.data.shape[0]

    @property
    def feature_count(self) -> int:
        return self.data.shape[1]


# ---------------------------------------------------------------------------
# reference (per-pixel) operations

def _as_values(band) -> np.ndarray:
    return band.values if isinstance(band, Band) else np.asarray(band, dtype=np.float64)


def cell_vector(padded_band, x: int, y: int, cell_size: int, margin: int | None = None) -> np.ndarray:
    """Row-major flattening of the cell_size x cell_size patch centered at
    unpadded pixel (x, y); the band must be mirror-padded by >= margin."""
    values = _as_values(padded_band)
    half = (cell_size - 1) // 2
    if margin is None:
        margin = half
    if margin < half:
        raise ConfigError(f"padding {margin} too small for cell_size {cell_size}")
    h = values.shape[0] - 2 * margin
    w = values.shape[1] - 2 * margin
    if not (0 <= x < h and 0 <= y < w):
        raise DataError(f"pixel ({x}, {y}) outside the {h}x{w} image")
    cx, cy = x + margin, y + margin
    return values[cx - half:cx + half + 1, cy - half:cy + half + 1].reshape(-1).copy()


def lbp_code(band, x: int, y: int) -> int:
    """8-neighbor local binary pattern at position (x, y) of the given grid.

    Neighbors are visited anti-clockwise starting at the top; neighbor i
    contributes 2**(i-1) when its value is >= the center value.
    """
    values = _as_values(band)
    if not (1 <= x < values.shape[0] - 1 and 1 <= y < values.shape[1] - 1):
        raise DataError(f"pixel ({x}, {y}) lacks a full 8-neighborhood")
    center = values[x, y]
    code = 0
    for i, (du, dv) in enumerate(_LBP_RING):
        if values[x + du, y + dv] >= center:
            code |= 1 << i
    return code


def uniform_lbp_histogram(padded_band, x: int, y: int, patch_size: int,
                          margin: int | None = None) -> np.ndarray:
    """59-bin histogram of uniform LBP codes over the patch_size x patch_size
    patch centered at unpadded pixel (x, y).  Requires padding >=
    (patch_size-1)/2 + 1 so every patch pixel has its own neighborhood."""
    values = _as_values(padded_band)
    half = (patch_size - 1) // 2
    if margin is None:
        margin = half + 1
    if margin < half + 1:
        raise ConfigError(f"padding {margin} too small for patch_size {patch_size}")
    h = values.shape[0] - 2 * margin
    w = values.shape[1] - 2 * margin
    if not (0 <= x < h and 0 <= y < w):
        raise DataError(f"pixel ({x}, {y}) outside the {h}x{w} image")
    hist = np.zeros(LBP_BINS, dtype=np.float64)
    cx, cy = x + margin, y + margin
    for u in range(cx - half, cx + half + 1):
        for v in range(cy - half, cy + half + 1):
            hist[UNIFORM_BIN[lbp_code(values, u, v)]] += 1.0
    return hist


def quantize_patch(patch, levels: int, band_min: float, band_max: float) -> np.ndarray:
    """Linear binning of values into integer levels 1..L against the whole
    band's dynamic range; a degenerate range maps everything to level 1."""
    if band_max < band_min:
        raise ConfigError("band_max must be >= band_min")
    patch = np.asarray(patch, dtype=np.float64)
    if band_max == band_min:
        return np.ones(patch.shape, dtype=np.int64)
    scaled = 1 + np.floor(levels * (patch - band_min) / (band_max - band_min))
    return np.clip(scaled, 1, levels).astype(np.int64)


def glcm(levels, level_count: int, offset: tuple[int, int]) -> np.ndarray:
    """Co-occurrence counts g(i, j) of level pairs at the given (row, col)
    offset; pairs leaving the patch are skipped."""
    levels = np.asarray(levels)
    dx, dy = offset
    if dx == 0 and dy == 0:
        raise ConfigError("glcm offset must be nonzero")
    h, w = levels.shape
    r0, r1 = max(0, -dx), h - max(0, dx)
    c0, c1 = max(0, -dy), w - max(0, dy)
    out = np.zeros((level_count, level_count), dtype=np.int64)
    if r1 <= r0 or c1 <= c0:
        return out
    a = levels[r0:r1, c0:c1]
    b = levels[r0 + dx:r1 + dx, c0 + dy:c1 + dy]
    codes = (a - 1) * level_count + (b - 1)
    counts = np.bincount(codes.ravel(), minlength=level_count * level_count)
    return counts.reshape(level_count, level_count).astype(np.int64)


def glcm_stats(g, level_count: int | None = None, normalization: str = "paper") -> np.ndarray:
    """Contrast, correlation, energy, homogeneity of one co-occurrence matrix.

    "paper" mode evaluates the statistics on raw counts with 1/L^2 (and 1/L
    on the marginal deviations) prefactors; "probability" mode first
    normalizes g to unit mass and drops the prefactors.  A degenerate
    marginal (sigma_r * sigma_c == 0) yields correlation 0.
    """
    g = np.asarray(g, dtype=np.float64)
    if level_count is None:
        level_count = g.shape[0]
    if g.shape != (level_count, level_count):
        raise DataError(f"GLCM shape {g.shape} does not match L={level_count}")
    if np.any(g < 0):
        raise DataError("GLCM counts must be nonnegative")
    stats = _stats_from_counts(g.reshape(1, -1), level_count, normalization)
    return stats[0]


def pixel_feature(band, x: int, y: int, config: FeatureConfig) -> PixelFeature:
    """Reference per-pixel feature triple; pads the raw band internally
    (repeated mirror reflection when the band is smaller than the patch)."""
    values = _as_values(band)
    margin = config.pad_margin
    padded = np.pad(values, margin, mode="symmetric")
    cell = cell_vector(padded, x, y, config.cell_size, margin=margin)
    hist = uniform_lbp_histogram(padded, x, y, config.patch_size, margin=margin)
    half = (config.patch_size - 1) // 2
    cx, cy = x + margin, y + margin
    patch = padded[cx - half:cx + half + 1, cy - half:cy + half + 1]
    lv = quantize_patch(patch, config.glcm_levels, values.min(), values.max())
    stats = glcm_stats(glcm(lv, config.glcm_levels, config.glcm_offset),
                       config.glcm_levels, config.glcm_normalization)
    return PixelFeature(cell=cell, lbp_hist=hist, glcm_stats=stats)


# ---------------------------------------------------------------------------
# fast assembled path

def _box_sums(a: np.ndarray, win_h: int, win_w: int) -> np.ndarray:
    """Sums over all win_h x win_w windows of `a`, indexed by window
    top-left corner (integral-image trick, exact for integer input)."""
    s = np.zeros((a.shape[0] + 1, a.shape[1] + 1), dtype=a.dtype)
    np.cumsum(a, axis=0, out=s[1:, 1:])
    np.cumsum(s[1:, 1:], axis=1, out=s[1:, 1:])
    return (s[win_h:, win_w:] - s[:-win_h, win_w:]
            - s[win_h:, :-win_w] + s[:-win_h, :-win_w])


def _lbp_code_map(padded: np.ndarray) -> np.ndarray:
    """LBP codes for every interior position of `padded` (the 1-pixel
    outermost ring has no full neighborhood and is excluded)."""
    center = padded[1:-1, 1:-1]
    codes = np.zeros(center.shape, dtype=np.int64)
    h, w = padded.shape
    for i, (du, dv) in enumerate(_LBP_RING):
        shifted = padded[1 + du:h - 1 + du, 1 + dv:w - 1 + dv]
        codes |= (shifted >= center).astype(np.int64) << i
    return codes


def _stats_from_counts(counts: np.ndarray, levels: int, normalization: str) -> np.ndarray:
    """Vectorized GLCM statistics for a stack of flattened count matrices
    (rows = pixels, columns = L*L pair codes)."""
    L = levels
    counts = counts.astype(np.float64, copy=False)
    i_of = np.repeat(np.arange(1, L + 1), L).astype(np.float64)
    j_of = np.tile(np.arange(1, L + 1), L).astype(np.float64)
    absdiff = np.abs(i_of - j_of)

    if normalization == "probability":
        total = counts.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore"):
            counts = np.divide(counts, total, out=np.zeros_like(counts), where=total > 0)
        pref2, pref1 = 1.0, 1.0
    else:
        pref2, pref1 = 1.0 / L**2, 1.0 / L

    s0 = counts.sum(axis=1)
    s1r = counts @ i_of
    s1c = counts @ j_of
    s2r = counts @ (i_of * i_of)
    s2c = counts @ (j_of * j_of)
    sij = counts @ (i_of * j_of)

    contrast = pref2 * (counts @ (absdiff * absdiff))
    energy = pref2 * np.einsum("ij,ij->i", counts, counts)
    homogeneity = pref2 * (counts @ (1.0 / (1.0 + absdiff)))

    mu_r = pref2 * s1r
    mu_c = pref2 * s1c
    var_r = np.maximum(s2r - 2.0 * mu_r * s1r + mu_r * mu_r * s0, 0.0)
    var_c = np.maximum(s2c - 2.0 * mu_c * s1c + mu_c * mu_c * s0, 0.0)
    sigma_r = pref1 * np.sqrt(var_r)
    sigma_c = pref1 * np.sqrt(var_c)

    cross = sij - mu_c * s1r - mu_r * s1c + mu_r * mu_c * s0
    denom = sigma_r * sigma_c
    correlation = np.zeros_like(denom)
    ok = denom > 0
    correlation[ok] = pref2 * cross[ok] / denom[ok]

    return np.stack([contrast, correlation, energy, homogeneity], axis=1)


def _band_features(values: np.ndarray, config: FeatureConfig) -> np.ndarray:
    """All three feature families for one band, rows in row-major order."""
    h, w = values.shape
    n_pixels = h * w
    m = config.pad_margin
    padded = np.pad(values, m, mode="symmetric")

    # cell vectors
    nc = config.cell_size
    hc = (nc - 1) // 2
    windows = sliding_window_view(padded, (nc, nc))
    cells = windows[m - hc:m - hc + h, m - hc:m - hc + w].reshape(n_pixels, nc * nc)

    # uniform-LBP histograms over the larger patch
    nt = config.patch_size
    ht = (nt - 1) // 2
    codes = _lbp_code_map(padded)  # position (u,v) of padded -> codes[u-1, v-1]
    bins = UNIFORM_BIN[codes]
    hist = np.empty((n_pixels, LBP_BINS), dtype=np.float64)
    r0 = m - ht - 1  # top-left of the patch window in `bins` coordinates
    for b in range(LBP_BINS):
        sums = _box_sums((bins == b).astype(np.int64), nt, nt)
        hist[:, b] = sums[r0:r0 + h, r0:r0 + w].reshape(-1)

    # GLCM statistics on the band-range-quantized patch
    L = config.glcm_levels
    dx, dy = config.glcm_offset
    q = quantize_patch(padded, L, values.min(), values.max())
    pr0, pc0 = max(0, -dx), max(0, -dy)
    a = q[pr0:q.shape[0] - max(0, dx), pc0:q.shape[1] - max(0, dy)]
    b2 = q[pr0 + dx:q.shape[0] - max(0, dx) + dx, pc0 + dy:q.shape[1] - max(0, dy) + dy]
    pair_codes = (a - 1) * L + (b2 - 1)
    counts = np.empty((n_pixels, L * L), dtype=np.int64)
    win_h, win_w = nt - abs(dx), nt - abs(dy)
    for code in range(L * L):
        sums = _box_sums((pair_codes == code).astype(np.int64), win_h, win_w)
        counts[:, code] = sums[m - ht:m - ht + h, m - ht:m - ht + w].reshape(-1)
    stats = _stats_from_counts(counts, L, config.glcm_normalization)

    return np.concatenate([cells, hist, stats], axis=1)


def assemble_features(image: MultiBandImage, config: FeatureConfig | None = None) -> FeatureMatrix:
    """Feature matrix of a multi-band image: one row per pixel (row-major),
    band blocks [cell | lbp | glcm] concatenated in band order."""
    if config is None:
        config = FeatureConfig()
    blocks = [_band_features(band.values, config) for band in image.bands]
    data = np.concatenate(blocks, axis=1)
    return FeatureMatrix(data=data, height=image.height, width=image.width,
                         band_count=image.band_count)


# ---------------------------------------------------------------------------
# feature-matrix file format (LSX1)

def save_features(matrix: FeatureMatrix | np.ndarray, path) -> None:
    data = matrix.data if isinstance(matrix, FeatureMatrix) else np.asarray(matrix)
    with open(str(path), "wb") as fh:
        fh.write(_LSX_MAGIC)
        fh.write(struct.pack("<II", data.shape[0], data.shape[1]))
        fh.write(data.astype("<f4").tobytes())


def load_features(path) -> np.ndarray:
    path = str(path)
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12 or data[:4] != _LSX_MAGIC:
        raise DataError(f"{path}: not an LSX1 feature file")
    n, cols = struct.unpack_from("<II", data, 4)
    need = 12 + n * cols * 4
    if len(data) < need:
        raise DataError(f"{path}: truncated feature file")
    return np.frombuffer(data[12:need], dtype="<f4").reshape(n, cols).astype(np.float64)
