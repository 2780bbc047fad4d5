"""Deterministic synthetic multi-band scenes with exact ground truth, plus
the labeled-subset sampler.  The scenes stand in for proprietary survey
data in tests and benchmarks: K textured regions (quadrant or Voronoi
layout) rendered into >= 2 bands with per-region base intensities, stripe
or checker modulation, and Gaussian noise."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .raster import Band, LabelMask, MultiBandImage, save_band, save_label_mask

LAYOUTS = ("quadrants", "voronoi")


@dataclass(frozen=True)
class RegionTexture:
    """Rendering recipe of one region: per-band base intensity plus optional
    stripe / checker square waves and white noise."""

    base: tuple[float, ...]
    noise: float = 0.0
    stripe_period: int = 0
    stripe_amplitude: float = 0.0
    checker_period: int = 0
    checker_amplitude: float = 0.0


@dataclass(frozen=True)
class SyntheticScene:
    """Scene specification; rendering is deterministic given a seed."""

    height: int
    width: int
    class_count: int
    layout: str
    textures: tuple[RegionTexture, ...]
    min_region_fraction: float = 0.05

    def __post_init__(self):
        if self.layout not in LAYOUTS:
            raise ConfigError(f"unknown layout '{self.layout}'")
        if self.class_count < 2:
            raise ConfigError("need at least 2 regions")
        if self.layout == "quadrants" and self.class_count != 4:
            raise ConfigError("quadrant layout requires exactly 4 regions")
        if len(self.textures) != self.class_count:
            raise ConfigError("one texture per region required")
        band_counts = {len(t.base) for t in self.textures}
        if len(band_counts) != 1:
            raise ConfigError("all textures must cover the same bands")
        if self.band_count < 2:
            raise ConfigError("scenes need at least 2 bands")
        if len(set(self.textures)) != self.class_count:
            raise ConfigError("textures must be pairwise distinct")

    @property
    def band_count(self) -> int:
        return len(self.textures[0].base)


def _quadrant_regions(h, w):
    regions = np.zeros((h, w), dtype=np.int32)
    regions[: h // 2, w // 2:] = 1
    regions[h // 2:, : w // 2] = 2
    regions[h // 2:, w // 2:] = 3
    return regions


def _voronoi_regions(h, w, k, min_fraction, rng):
    rows = np.arange(h)[:, None]
    cols = np.arange(w)[None, :]
    for _ in range(200):
        seeds_r = rng.uniform(0, h, size=k)
        seeds_c = rng.uniform(0, w, size=k)
        d = (rows[..., None] - seeds_r) ** 2 + (cols[..., None] - seeds_c) ** 2
        regions = np.argmin(d, axis=2).astype(np.int32)
        counts = np.bincount(regions.ravel(), minlength=k)
        if counts.min() >= min_fraction * h * w:
            return regions
    raise DataError("could not draw a Voronoi layout with all regions large enough")


def generate_scene(scene: SyntheticScene, seed: int) -> tuple[MultiBandImage, LabelMask]:
    """Render the scene: returns the multi-band image and its exact truth."""
    h, w = scene.height, scene.width
    rng = np.random.default_rng([int(seed), 0x5ce9e])
    if scene.layout == "quadrants":
        regions = _quadrant_regions(h, w)
    else:
        regions = _voronoi_regions(h, w, scene.class_count, scene.min_region_fraction, rng)

    rows = np.arange(h)[:, None]
    cols = np.arange(w)[None, :]
    bands = []
    for b in range(scene.band_count):
        values = np.zeros((h, w), dtype=np.float64)
        for k, tex in enumerate(scene.textures):
            sel = regions == k
            layer = np.full((h, w), tex.base[b])
            if tex.stripe_period > 0:
                wave = ((rows // tex.stripe_period) % 2) * 2.0 - 1.0
                layer += tex.stripe_amplitude * np.broadcast_to(wave, (h, w))
            if tex.checker_period > 0:
                wave = (((rows // tex.checker_period) + (cols // tex.checker_period)) % 2) * 2.0 - 1.0
                layer += tex.checker_amplitude * wave
            values[sel] = layer[sel]
        noise = rng.normal(size=(h, w))
        for k, tex in enumerate(scene.textures):
            if tex.noise > 0:
                sel = regions == k
                values[sel] += tex.noise * noise[sel]
        bands.append(Band(values=values, name=f"B{b + 1}"))

    mask = LabelMask(labels=regions + 1, class_count=scene.class_count)
    return MultiBandImage(bands=tuple(bands)), mask


def default_scene(layout: str, height: int = 96, width: int = 96,
                  band_count: int = 3, class_count: int = 4) -> SyntheticScene:
    """Preset textures that are pairwise separable by intensity and texture.

    The Voronoi preset keeps bases closer together and leans on texture so
    the regions are non-trivial to separate.
    """
    spread = 18.0 if layout == "voronoi" else 45.0
    textures = []
    for k in range(class_count):
        base = tuple(80.0 + spread * ((k + 1 + b) % class_count) for b in range(band_count))
        stripe_p = 4 if k % 4 == 1 else 0
        checker_p = 3 if k % 4 == 2 else 0
        textures.append(RegionTexture(
            base=base,
            noise=4.0,
            stripe_period=stripe_p,
            stripe_amplitude=18.0 if stripe_p else 0.0,
            checker_period=checker_p,
            checker_amplitude=18.0 if checker_p else 0.0,
        ))
    return SyntheticScene(height=height, width=width, class_count=class_count,
                          layout=layout, textures=tuple(textures))


def write_scene(directory, image: MultiBandImage, mask: LabelMask) -> str:
    """Write bands (LSF1 float rasters), truth (PGM), and a dataset manifest;
    returns the manifest path."""
    os.makedirs(directory, exist_ok=True)
    lines = []
    for band in image.bands:
        fname = f"{band.name.lower()}.lsf"
        save_band(band, os.path.join(directory, fname))
        lines.append(f"band {band.name} {fname}")
    save_label_mask(mask, os.path.join(directory, "truth.pgm"))
    lines.append("truth truth.pgm")
    lines.append(f"K {mask.class_count}")
    manifest = os.path.join(directory, "scene.manifest")
    with open(manifest, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return manifest


def sample_labels(truth: LabelMask, fraction: float, seed) -> LabelMask:
    """Uniform random subset of the labeled pixels (exact count via a
    shuffled prefix), re-drawn up to 100 times until every class present in
    `truth` keeps at least one pixel."""
    if not 0 < fraction <= 1:
        raise ConfigError(f"label fraction must be in (0, 1], got {fraction}")
    flat = truth.labels.ravel()
    labeled = np.flatnonzero(flat)
    if labeled.size == 0:
        raise DataError("truth mask holds no labeled pixels")
    count = max(1, int(round(fraction * labeled.size)))
    classes = np.unique(flat[labeled])
    rng = np.random.default_rng(seed)
    for _ in range(100):
        chosen = rng.permutation(labeled)[:count]
        if np.all(np.isin(classes, flat[chosen])):
            out = np.zeros_like(flat)
            out[chosen] = flat[chosen]
            return LabelMask(labels=out.reshape(truth.shape),
                             class_count=truth.class_count)
    raise DataError("a class is too rare to survive 100 sampling attempts at "
                    f"fraction {fraction}")
