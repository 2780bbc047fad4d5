"""Batch orchestration: dataset manifests, repeated runs, tiling, per-tile
cluster-to-class anchoring, and the variant comparison harness.

A dataset manifest is a plain-text key-value file (paths relative to the
manifest's directory):

    band IR ir.lsf
    band R  red.lsf
    band B1 extra.pgm
    truth   truth.pgm
    K       4
    ndvi    on          # optional; needs bands named IR and R

A run writes `run_manifest.txt` recording every hyperparameter and seed;
feeding that file back reproduces the run byte for byte.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

import numpy as np

from .caching import StageCache
from .clustering import SegmentConfig, segment
from .embedding import TsneConfig
from .errors import ConfigError, DataError
from .evaluation import (EvalReport, class_report_csv, confusion_csv, evaluate,
                         hungarian_map, summary_text)
from .features import FeatureConfig
from .raster import (LabelMask, MultiBandImage, TileLayout, derive_ndvi,
                     load_band, load_label_mask, merge_tiles, save_label_mask,
                     split_tiles)
from .synth import sample_labels


@dataclass(frozen=True)
class RunConfig:
    """Everything one batch run depends on."""

    manifest_path: str
    output_dir: str = ""
    feature: FeatureConfig = field(default_factory=FeatureConfig)
    tsne: TsneConfig = field(default_factory=TsneConfig)
    pca_dim: int = 50
    variant: str = "rbf"
    ridge: float | None = None
    label_fraction: float = 0.05
    tile_size: int = 0  # 0 = process the image whole
    repeats: int = 1
    sampler_seed: int = 0
    kmeans_seed: int = 0
    reuse_embedding: bool = True
    kmeans_restarts: int = 10

    def __post_init__(self):
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        if not 0 < self.label_fraction <= 1:
            raise ConfigError("label_fraction must be in (0, 1]")
        if self.tile_size < 0:
            raise ConfigError("tile_size must be >= 0")


@dataclass(frozen=True)
class RunResult:
    reports: tuple[EvalReport, ...]
    merged_maps: tuple[LabelMask, ...]
    mean_accuracy: float
    std_accuracy: float
    mean_iou_per_class: np.ndarray

    @property
    def accuracies(self) -> np.ndarray:
        return np.array([r.accuracy for r in self.reports])


# ---------------------------------------------------------------------------
# dataset manifest

def _parse_keyvalue(path) -> list[tuple[str, list[str]]]:
    entries = []
    try:
        with open(str(path)) as fh:
            for raw in fh:
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                parts = line.split()
                entries.append((parts[0], parts[1:]))
    except OSError as exc:
        raise DataError(f"{path}: cannot read manifest ({exc})") from exc
    return entries


def load_dataset(manifest_path) -> tuple[MultiBandImage, LabelMask]:
    """Load the bands (plus derived NDVI when requested) and the truth mask
    described by a dataset manifest."""
    manifest_path = str(manifest_path)
    base = os.path.dirname(os.path.abspath(manifest_path))
    bands = []
    truth_path = None
    class_count = None
    want_ndvi = False
    for key, args in _parse_keyvalue(manifest_path):
        if key == "band":
            if len(args) != 2:
                raise ConfigError(f"{manifest_path}: 'band' needs a name and a path")
            name, rel = args
            bands.append(load_band(os.path.join(base, rel), name=name))
        elif key == "truth":
            truth_path = os.path.join(base, args[0])
        elif key == "K":
            class_count = int(args[0])
        elif key == "ndvi":
            want_ndvi = args[0].lower() in ("on", "true", "1", "yes")
        else:
            raise ConfigError(f"{manifest_path}: unknown manifest key '{key}'")
    if not bands:
        raise ConfigError(f"{manifest_path}: no bands listed")
    if truth_path is None:
        raise ConfigError(f"{manifest_path}: no truth mask listed")
    if class_count is None:
        raise ConfigError(f"{manifest_path}: missing K")

    if want_ndvi:
        names = [b.name for b in bands]
        if "IR" not in names or "R" not in names:
            raise ConfigError("NDVI derivation needs bands named IR and R")
        image_tmp = MultiBandImage(bands=tuple(bands))
        bands.append(derive_ndvi(image_tmp.band("IR"), image_tmp.band("R")))

    image = MultiBandImage(bands=tuple(bands))
    truth = load_label_mask(truth_path, class_count=class_count)
    if truth.shape != (image.height, image.width):
        raise DataError(f"truth mask {truth.shape} does not match image "
                        f"{(image.height, image.width)}")
    return image, truth


# ---------------------------------------------------------------------------
# run manifest (emitted record of a run; feeding it back reproduces the run)

def run_manifest_text(config: RunConfig) -> str:
    f, t = config.feature, config.tsne
    lines = [
        f"manifest {config.manifest_path}",
        f"variant {config.variant}",
        f"ridge {'auto' if config.ridge is None else repr(float(config.ridge))}",
        f"label_fraction {float(config.label_fraction)!r}",
        f"tile_size {config.tile_size}",
        f"repeats {config.repeats}",
        f"sampler_seed {config.sampler_seed}",
        f"kmeans_seed {config.kmeans_seed}",
        f"kmeans_restarts {config.kmeans_restarts}",
        f"reuse_embedding {int(config.reuse_embedding)}",
        f"pca_dim {config.pca_dim}",
        f"cell_size {f.cell_size}",
        f"patch_size {f.patch_size}",
        f"glcm_levels {f.glcm_levels}",
        f"glcm_offset {f.glcm_offset[0]},{f.glcm_offset[1]}",
        f"glcm_normalization {f.glcm_normalization}",
        f"out_dim {t.out_dim}",
        f"perplexity {float(t.perplexity)!r}",
        f"tsne_iterations {t.iterations}",
        f"learning_rate {float(t.learning_rate)!r}",
        f"tsne_seed {t.seed}",
    ]
    return "\n".join(lines) + "\n"


def config_from_run_manifest(path, output_dir: str = "") -> RunConfig:
    kv = {key: args for key, args in _parse_keyvalue(path)}

    def one(key):
        if key not in kv:
            raise ConfigError(f"{path}: run manifest misses '{key}'")
        return kv[key][0]

    ridge_raw = one("ridge")
    dx, dy = one("glcm_offset").split(",")
    feature = FeatureConfig(
        cell_size=int(one("cell_size")), patch_size=int(one("patch_size")),
        glcm_levels=int(one("glcm_levels")), glcm_offset=(int(dx), int(dy)),
        glcm_normalization=one("glcm_normalization"))
    tsne = TsneConfig(
        out_dim=int(one("out_dim")), perplexity=float(one("perplexity")),
        iterations=int(one("tsne_iterations")),
        learning_rate=float(one("learning_rate")), seed=int(one("tsne_seed")))
    return RunConfig(
        manifest_path=one("manifest"), output_dir=output_dir, feature=feature,
        tsne=tsne, pca_dim=int(one("pca_dim")), variant=one("variant"),
        ridge=None if ridge_raw == "auto" else float(ridge_raw),
        label_fraction=float(one("label_fraction")),
        tile_size=int(one("tile_size")), repeats=int(one("repeats")),
        sampler_seed=int(one("sampler_seed")), kmeans_seed=int(one("kmeans_seed")),
        reuse_embedding=bool(int(one("reuse_embedding"))),
        kmeans_restarts=int(one("kmeans_restarts")))


# ---------------------------------------------------------------------------
# the run itself

def _segment_tile(tile, train: LabelMask, seg_cfg: SegmentConfig,
                  cache: StageCache) -> np.ndarray:
    """Segment one tile and anchor its cluster ids to global class ids via
    the tile's training pixels.

    Classes absent from the tile are dropped for the tile-local clustering
    (contiguous local ids); a tile whose training mask holds a single class
    is assigned that class wholesale, since there is nothing to cluster.
    """
    flat_train = train.labels.ravel()
    labeled = np.flatnonzero(flat_train)
    present = np.unique(flat_train[labeled])
    if present.size == 1:
        return np.full(train.shape, int(present[0]), dtype=np.int64)

    # global class ids -> contiguous 1..K_local for this tile
    to_local = np.zeros(train.class_count + 1, dtype=np.int64)
    to_local[present] = np.arange(1, present.size + 1)
    local_train = LabelMask(labels=to_local[train.labels], class_count=present.size)
    local_cfg = replace(seg_cfg, class_count=int(present.size))

    artifacts = segment(tile.image, local_train, local_cfg, cache=cache)
    perm = hungarian_map(artifacts.assignment.labels[labeled],
                         to_local[flat_train[labeled]], present.size)
    return present[perm[artifacts.cluster_map - 1] - 1]


def run_pipeline(config: RunConfig, cache: StageCache | None = None) -> RunResult:
    """Per tile: sample the training labels, segment, anchor clusters to
    classes via the tile's training pixels; merge tiles; evaluate against
    the full truth.  Repeats run with incremented seeds; with
    `reuse_embedding` (default) the t-SNE stage is shared across repeats."""
    image, truth = load_dataset(config.manifest_path)
    k = truth.class_count
    if config.tile_size > 0:
        layout = TileLayout.regular(image.height, image.width,
                                    config.tile_size, config.tile_size)
    else:
        layout = TileLayout.single(image.height, image.width)
    tiles = split_tiles(image, truth, layout)
    if cache is None:
        cache = StageCache()

    reports = []
    merged_maps = []
    for rep in range(config.repeats):
        tsne_cfg = config.tsne if config.reuse_embedding else replace(
            config.tsne, seed=config.tsne.seed + rep)
        seg_cfg = SegmentConfig(
            class_count=k, feature=config.feature, tsne=tsne_cfg,
            pca_dim=config.pca_dim, variant=config.variant, ridge=config.ridge,
            kmeans_seed=config.kmeans_seed + rep,
            kmeans_restarts=config.kmeans_restarts)
        pieces = []
        for t_idx, tile in enumerate(tiles):
            train = sample_labels(tile.mask, config.label_fraction,
                                  seed=[config.sampler_seed + rep, t_idx])
            try:
                class_map = _segment_tile(tile, train, seg_cfg, cache)
            except Exception as exc:
                raise type(exc)(f"[tile {t_idx} at {tile.origin}] {exc}") from exc
            pieces.append((tile.origin, class_map))
        merged = merge_tiles(pieces, (image.height, image.width), k)
        merged_maps.append(merged)
        reports.append(evaluate(merged.labels.ravel(), truth))

    accs = np.array([r.accuracy for r in reports])
    ious = np.stack([r.per_class_iou for r in reports])
    return RunResult(reports=tuple(reports), merged_maps=tuple(merged_maps),
                     mean_accuracy=float(accs.mean()),
                     std_accuracy=float(accs.std(ddof=0)),
                     mean_iou_per_class=ious.mean(axis=0))


def aggregate_summary(config: RunConfig, result: RunResult) -> str:
    lines = [
        f"variant {config.variant}",
        f"repeats {config.repeats}",
        f"mean_accuracy {result.mean_accuracy:.6f}",
        f"std_accuracy {result.std_accuracy:.6f}",
    ]
    for k, iou in enumerate(result.mean_iou_per_class):
        lines.append(f"class {k + 1} mean_iou {iou:.6f}")
    return "\n".join(lines) + "\n"


def write_run_artifacts(config: RunConfig, result: RunResult) -> None:
    """Emit the run manifest, aggregate summary, and per-repeat label
    rasters + metric reports under config.output_dir (deterministic bytes)."""
    out = config.output_dir
    if not out:
        raise ConfigError("output_dir is not set")
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "run_manifest.txt"), "w") as fh:
        fh.write(run_manifest_text(config))
    with open(os.path.join(out, "summary.txt"), "w") as fh:
        fh.write(aggregate_summary(config, result))
    for rep, (report, merged) in enumerate(zip(result.reports, result.merged_maps)):
        rep_dir = os.path.join(out, f"repeat_{rep:02d}")
        os.makedirs(rep_dir, exist_ok=True)
        save_label_mask(merged, os.path.join(rep_dir, "segmentation.pgm"))
        with open(os.path.join(rep_dir, "class_report.csv"), "w") as fh:
            fh.write(class_report_csv(report))
        with open(os.path.join(rep_dir, "confusion.csv"), "w") as fh:
            fh.write(confusion_csv(report))
        with open(os.path.join(rep_dir, "summary.txt"), "w") as fh:
            fh.write(summary_text(report))


def bench(config: RunConfig, variants=("rbf", "poly", "linear")) -> dict[str, RunResult]:
    """Run every variant on the same data with shared stage cache (one
    t-SNE embedding feeds all variants) and identical seeds."""
    cache = StageCache()
    results = {}
    for variant in variants:
        results[variant] = run_pipeline(replace(config, variant=variant), cache=cache)
    return results


def bench_table(results: dict[str, RunResult]) -> str:
    lines = ["variant,mean_accuracy,std_accuracy,mean_iou"]
    for variant, res in results.items():
        mean_iou = float(res.mean_iou_per_class.mean())
        lines.append(f"{variant},{res.mean_accuracy:.6f},{res.std_accuracy:.6f},{mean_iou:.6f}")
    return "\n".join(lines) + "\n"
