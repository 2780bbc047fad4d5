"""Multi-band raster containers, file I/O, padding, and tiling.

Supported raster formats:
  * PGM (P5 binary, 8- or 16-bit, 16-bit big-endian per the PGM spec)
  * PNG grayscale (8- or 16-bit), via Pillow
  * LSF1: a flat float32 format with a 16-byte header
    (magic "LSF1", u32 LE height, u32 LE width, u32 reserved)

Integer rasters are loaded at native bit depth; no [0, 1] rescaling.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .errors import ConfigError, DataError

_LSF_MAGIC = b"LSF1"


def _freeze(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Band:
    """One grayscale channel of a co-registered multi-band image."""

    values: np.ndarray  # H x W, float64
    name: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise DataError(f"band '{self.name}': expected a 2-D grid, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DataError(f"band '{self.name}': non-finite values")
        object.__setattr__(self, "values", _freeze(v))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class MultiBandImage:
    """Ordered stack of bands sharing one H x W grid."""

    bands: tuple[Band, ...]

    def __post_init__(self):
        bands = tuple(self.bands)
        if not bands:
            raise DataError("image needs at least one band")
        h, w = bands[0].shape
        for b in bands:
            if b.shape != (h, w):
                raise DataError(
                    f"band '{b.name}' is {b.shape}, expected {(h, w)} like band '{bands[0].name}'"
                )
        object.__setattr__(self, "bands", bands)

    @property
    def band_count(self) -> int:
        return len(self.bands)

    @property
    def height(self) -> int:
        return self.bands[0].height

    @property
    def width(self) -> int:
        return self.bands[0].width

    def band(self, name: str) -> Band:
        for b in self.bands:
            if b.name == name:
                return b
        raise DataError(f"no band named '{name}'")

    def stack(self) -> np.ndarray:
        """H x W x M array of band values."""
        return np.stack([b.values for b in self.bands], axis=-1)


@dataclass(frozen=True)
class LabelMask:
    """Per-pixel labels: 0 = unlabeled, 1..K = class id."""

    labels: np.ndarray  # H x W, int
    class_count: int

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if not np.issubdtype(lab.dtype, np.integer):
            raise DataError("label mask must be integer-valued")
        lab = lab.astype(np.int32, copy=True)
        if lab.ndim != 2:
            raise DataError(f"label mask must be 2-D, got shape {lab.shape}")
        if self.class_count < 1:
            raise DataError("class_count must be >= 1")
        if lab.min() < 0 or lab.max() > self.class_count:
            raise DataError(
                f"labels outside 0..{self.class_count}: range is {lab.min()}..{lab.max()}"
            )
        object.__setattr__(self, "labels", _freeze(lab))

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    def present_classes(self) -> np.ndarray:
        vals = np.unique(self.labels)
        return vals[vals > 0]

    def labeled_count(self) -> int:
        return int(np.count_nonzero(self.labels))


@dataclass(frozen=True)
class TileLayout:
    """Exact partition of an H x W image into rectangular tiles.

    Edge tiles may be smaller than the nominal size; tiles never overlap.
    """

    tile_height: int
    tile_width: int
    grid: tuple[tuple[int, int], ...] = field(default=())
    image_shape: tuple[int, int] = (0, 0)

    @classmethod
    def regular(cls, height: int, width: int, tile_height: int, tile_width: int) -> "TileLayout":
        if tile_height < 1 or tile_width < 1:
            raise ConfigError("tile dimensions must be >= 1")
        origins = tuple(
            (r, c) for r in range(0, height, tile_height) for c in range(0, width, tile_width)
        )
        return cls(tile_height, tile_width, origins, (height, width))

    @classmethod
    def single(cls, height: int, width: int) -> "TileLayout":
        return cls(height, width, ((0, 0),), (height, width))

    def tile_slices(self) -> list[tuple[tuple[int, int], slice, slice]]:
        h, w = self.image_shape
        out = []
        for r0, c0 in self.grid:
            out.append(
                ((r0, c0), slice(r0, min(r0 + self.tile_height, h)), slice(c0, min(c0 + self.tile_width, w)))
            )
        return out


@dataclass(frozen=True)
class Tile:
    """One tile of a split image, tagged with its origin for later merge."""

    image: MultiBandImage
    mask: LabelMask
    origin: tuple[int, int]


# ---------------------------------------------------------------------------
# file formats

def _read_pgm(data: bytes, path: str) -> np.ndarray:
    stream = io.BytesIO(data)

    def token():
        # skip whitespace and '#' comments between header tokens
        tok = b""
        while True:
            ch = stream.read(1)
            if ch == b"":
                raise DataError(f"{path}: truncated PGM header")
            if ch == b"#":
                while ch not in (b"\n", b""):
                    ch = stream.read(1)
                continue
            if ch.isspace():
                if tok:
                    return tok
                continue
            tok += ch

    if token() != b"P5":
        raise DataError(f"{path}: not a binary PGM (P5) file")
    width = int(token())
    height = int(token())
    maxval = int(token())
    if width < 1 or height < 1:
        raise DataError(f"{path}: bad PGM dimensions {width}x{height}")
    if not 0 < maxval < 65536:
        raise DataError(f"{path}: bad PGM maxval {maxval}")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    raw = stream.read()
    need = height * width * dtype.itemsize
    if len(raw) < need:
        raise DataError(f"{path}: truncated raster ({len(raw)} bytes, expected {need})")
    values = np.frombuffer(raw[:need], dtype=dtype).reshape(height, width)
    return values.astype(np.float64)


def _write_pgm(values: np.ndarray, path: str) -> None:
    v = np.asarray(values)
    if np.any(v < 0) or np.any(v > 65535):
        raise DataError(f"{path}: PGM supports values 0..65535 only")
    rounded = np.rint(v)
    if not np.allclose(v, rounded, atol=1e-9):
        raise DataError(f"{path}: PGM requires integer values; use the LSF format for floats")
    maxval = 255 if rounded.max() <= 255 else 65535
    dtype = np.dtype("u1") if maxval == 255 else np.dtype(">u2")
    header = f"P5\n{v.shape[1]} {v.shape[0]}\n{maxval}\n".encode()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(rounded.astype(dtype).tobytes())


def _read_png(data: bytes, path: str) -> np.ndarray:
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except Exception as exc:
        raise DataError(f"{path}: unreadable PNG ({exc})") from exc
    if img.mode not in ("L", "I", "I;16", "P", "1"):
        raise DataError(f"{path}: PNG mode '{img.mode}' is not grayscale")
    if img.mode in ("P", "1"):
        img = img.convert("L")
    return np.asarray(img).astype(np.float64)


def _write_png(values: np.ndarray, path: str) -> None:
    v = np.rint(np.asarray(values))
    if np.any(v < 0) or np.any(v > 255):
        raise DataError(f"{path}: 8-bit PNG output supports values 0..255 only")
    Image.fromarray(v.astype(np.uint8), mode="L").save(path, format="PNG")


def _read_lsf(data: bytes, path: str) -> np.ndarray:
    if len(data) < 16 or data[:4] != _LSF_MAGIC:
        raise DataError(f"{path}: not an LSF1 raster")
    height, width, _reserved = struct.unpack_from("<III", data, 4)
    if height < 1 or width < 1:
        raise DataError(f"{path}: bad LSF dimensions {height}x{width}")
    need = 16 + height * width * 4
    if len(data) < need:
        raise DataError(f"{path}: truncated raster ({len(data)} bytes, expected {need})")
    values = np.frombuffer(data[16:need], dtype="<f4").reshape(height, width)
    if not np.all(np.isfinite(values)):
        raise DataError(f"{path}: non-finite float samples")
    return values.astype(np.float64)


def _write_lsf(values: np.ndarray, path: str) -> None:
    v = np.asarray(values, dtype=np.float64)
    with open(path, "wb") as fh:
        fh.write(_LSF_MAGIC)
        fh.write(struct.pack("<III", v.shape[0], v.shape[1], 0))
        fh.write(v.astype("<f4").tobytes())


_READERS = {"pgm": _read_pgm, "png": _read_png, "lsf": _read_lsf}
_WRITERS = {"pgm": _write_pgm, "png": _write_png, "lsf": _write_lsf}


def _sniff_format(data: bytes, path: str) -> str:
    if data[:2] == b"P5":
        return "pgm"
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        return "png"
    if data[:4] == _LSF_MAGIC:
        return "lsf"
    raise DataError(f"{path}: unrecognized raster format")


def load_band(path, fmt: str = "auto", name: str = "", expect_shape=None) -> Band:
    """Load one grayscale raster as a Band.

    `fmt` is one of {"auto", "pgm", "png", "lsf"}; "auto" sniffs the
    file magic.  `expect_shape` (H, W) turns a surprise size into an error.
    """
    path = str(path)
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise DataError(f"{path}: cannot read file ({exc})") from exc
    if fmt == "auto":
        fmt = _sniff_format(data, path)
    if fmt not in _READERS:
        raise ConfigError(f"unknown raster format '{fmt}'")
    values = _READERS[fmt](data, path)
    if expect_shape is not None and tuple(values.shape) != tuple(expect_shape):
        raise DataError(f"{path}: raster is {values.shape}, expected {tuple(expect_shape)}")
    return Band(values=values, name=name or path)


def save_band(band_or_values, path, fmt: str = "auto") -> None:
    """Write a Band (or 2-D array) to disk; format from extension when auto."""
    values = band_or_values.values if isinstance(band_or_values, Band) else np.asarray(band_or_values)
    path = str(path)
    if fmt == "auto":
        ext = path.rsplit(".", 1)[-1].lower() if "." in path else ""
        fmt = {"pgm": "pgm", "png": "png", "lsf": "lsf"}.get(ext, "")
        if not fmt:
            raise ConfigError(f"{path}: cannot infer format from extension")
    if fmt not in _WRITERS:
        raise ConfigError(f"unknown raster format '{fmt}'")
    _WRITERS[fmt](values, path)


def load_label_mask(path, class_count=None, fmt: str = "auto") -> LabelMask:
    """Load an 8-bit raster of class ids (0 = unlabeled)."""
    band = load_band(path, fmt=fmt)
    labels = np.rint(band.values).astype(np.int32)
    if class_count is None:
        class_count = int(labels.max())
        if class_count < 1:
            raise DataError(f"{path}: mask holds no labeled pixels")
    return LabelMask(labels=labels, class_count=int(class_count))


def save_label_mask(mask: LabelMask, path, fmt: str = "auto") -> None:
    save_band(mask.labels.astype(np.float64), path, fmt=fmt)


# ---------------------------------------------------------------------------
# derived bands, padding, tiling

def derive_ndvi(ir: Band, red: Band) -> Band:
    """Normalized difference vegetation index (IR - R) / (IR + R).

    Pixels where IR + R == 0 map to 0 rather than NaN.
    """
    if ir.shape != red.shape:
        raise DataError(f"NDVI inputs disagree: {ir.shape} vs {red.shape}")
    num = ir.values - red.values
    den = ir.values + red.values
    out = np.divide(num, den, out=np.zeros_like(num), where=den != 0)
    return Band(values=out, name="NDVI")


def mirror_pad(band: Band, margin: int) -> Band:
    """Extend a band by `margin` pixels on every side by edge-inclusive
    mirror reflection, so the padded image is symmetric about each original
    boundary (the edge row/column itself is duplicated outward)."""
    if margin < 1:
        raise ConfigError("margin must be >= 1")
    if margin >= min(band.height, band.width):
        raise ConfigError(
            f"margin {margin} too large for a {band.height}x{band.width} band"
        )
    padded = np.pad(band.values, margin, mode="symmetric")
    return Band(values=padded, name=band.name)


def split_tiles(image: MultiBandImage, mask: LabelMask, layout: TileLayout) -> list[Tile]:
    """Cut an image + mask into tiles per the layout; tiles carry origins."""
    if layout.image_shape != (image.height, image.width):
        raise ConfigError(
            f"layout built for {layout.image_shape}, image is {(image.height, image.width)}"
        )
    if mask.shape != (image.height, image.width):
        raise DataError(f"mask is {mask.shape}, image is {(image.height, image.width)}")
    tiles = []
    for origin, rs, cs in layout.tile_slices():
        bands = tuple(Band(values=b.values[rs, cs], name=b.name) for b in image.bands)
        sub_mask = LabelMask(labels=mask.labels[rs, cs], class_count=mask.class_count)
        tiles.append(Tile(image=MultiBandImage(bands=bands), mask=sub_mask, origin=origin))
    return tiles


def merge_tiles(labeled_tiles, full_shape, class_count: int) -> LabelMask:
    """Reassemble per-tile label grids into one full-size mask.

    `labeled_tiles` is an iterable of (origin, labels_2d).  Every pixel of
    `full_shape` must be covered exactly once.
    """
    h, w = full_shape
    out = np.zeros((h, w), dtype=np.int32)
    cover = np.zeros((h, w), dtype=np.uint8)
    for origin, labels in labeled_tiles:
        labels = np.asarray(labels)
        r0, c0 = origin
        r1, c1 = r0 + labels.shape[0], c0 + labels.shape[1]
        if r0 < 0 or c0 < 0 or r1 > h or c1 > w:
            raise DataError(f"tile at {origin} with shape {labels.shape} exceeds {full_shape}")
        out[r0:r1, c0:c1] = labels
        cover[r0:r1, c0:c1] += 1
    if np.any(cover > 1):
        raise DataError("overlapping tiles")
    if np.any(cover == 0):
        raise DataError("uncovered pixel: tiles do not partition the image")
    return LabelMask(labels=out, class_count=class_count)
