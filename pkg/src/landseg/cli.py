"""Batch command line: synth, features, embed, segment, eval, bench.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 numeric
failure.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import embedding as emb_mod
from .embedding import TsneConfig
from .errors import ConfigError, DataError, LandsegError, NumericError
from .features import FeatureConfig, load_features, save_features, assemble_features
from .harness import (RunConfig, bench, bench_table, config_from_run_manifest,
                      load_dataset, run_pipeline, write_run_artifacts)
from .evaluation import class_report_csv, confusion_csv, evaluate, summary_text
from .raster import load_label_mask
from .synth import default_scene, generate_scene, write_scene


def _add_feature_flags(p):
    p.add_argument("--cell-size", type=int, default=7)
    p.add_argument("--patch-size", type=int, default=11)
    p.add_argument("--glcm-levels", type=int, default=8)
    p.add_argument("--glcm-offset", default="0,1", help="row,col pair offset")
    p.add_argument("--glcm-normalization", choices=["paper", "probability"],
                   default="paper")


def _feature_config(args) -> FeatureConfig:
    try:
        dx, dy = (int(v) for v in args.glcm_offset.split(","))
    except ValueError as exc:
        raise ConfigError(f"bad --glcm-offset '{args.glcm_offset}'") from exc
    return FeatureConfig(cell_size=args.cell_size, patch_size=args.patch_size,
                         glcm_levels=args.glcm_levels, glcm_offset=(dx, dy),
                         glcm_normalization=args.glcm_normalization)


def _add_tsne_flags(p):
    p.add_argument("--perplexity", type=float, default=30.0)
    p.add_argument("--tsne-iters", type=int, default=1000)
    p.add_argument("--learning-rate", type=float, default=200.0)
    p.add_argument("--out-dim", type=int, default=3)
    p.add_argument("--tsne-seed", type=int, default=0)
    p.add_argument("--pca-dim", type=int, default=50, help="0 skips PCA")


def _tsne_config(args) -> TsneConfig:
    return TsneConfig(out_dim=args.out_dim, perplexity=args.perplexity,
                      iterations=args.tsne_iters, learning_rate=args.learning_rate,
                      seed=args.tsne_seed)


def _add_run_flags(p):
    _add_feature_flags(p)
    _add_tsne_flags(p)
    p.add_argument("--variant", choices=["rbf", "linear", "poly"], default="rbf")
    p.add_argument("--ridge", default="auto",
                   help="ridge added to both covariance blocks, or 'auto'")
    p.add_argument("--label-fraction", type=float, default=0.05)
    p.add_argument("--tile-size", type=int, default=0, help="0 processes the image whole")
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--seed", type=int, default=0,
                   help="master seed; sampler/kmeans seeds default to it")
    p.add_argument("--sampler-seed", type=int, default=None)
    p.add_argument("--kmeans-seed", type=int, default=None)
    p.add_argument("--no-reuse-embedding", action="store_true",
                   help="recompute t-SNE per repeat with incremented seeds")


def _run_config(args) -> RunConfig:
    ridge = None if args.ridge == "auto" else float(args.ridge)
    sampler_seed = args.seed if args.sampler_seed is None else args.sampler_seed
    kmeans_seed = args.seed if args.kmeans_seed is None else args.kmeans_seed
    return RunConfig(manifest_path=args.manifest, output_dir=args.outdir,
                     feature=_feature_config(args), tsne=_tsne_config(args),
                     pca_dim=args.pca_dim, variant=args.variant, ridge=ridge,
                     label_fraction=args.label_fraction, tile_size=args.tile_size,
                     repeats=args.repeats, sampler_seed=sampler_seed,
                     kmeans_seed=kmeans_seed,
                     reuse_embedding=not args.no_reuse_embedding)


def _cmd_synth(args):
    scene = default_scene(args.layout, height=args.size, width=args.size,
                          band_count=args.bands, class_count=args.classes)
    image, mask = generate_scene(scene, seed=args.seed)
    manifest = write_scene(args.out, image, mask)
    print(f"wrote scene manifest {manifest}")


def _cmd_features(args):
    image, _truth = load_dataset(args.manifest)
    matrix = assemble_features(image, _feature_config(args))
    save_features(matrix, args.features_out)
    print(f"wrote {matrix.pixel_count}x{matrix.feature_count} features to {args.features_out}")


def _cmd_embed(args):
    x = load_features(args.features)
    if args.pca_dim > 0:
        x = emb_mod.pca_reduce(x, min(args.pca_dim, x.shape[0], x.shape[1]))
    result = emb_mod.tsne(x, _tsne_config(args))
    emb_mod.save_embedding(result, args.embedding_out)
    print(f"wrote {result.y.shape[0]}x{result.y.shape[1]} embedding to {args.embedding_out} "
          f"(final KL {result.kl_trajectory[-1]:.4f})")


def _cmd_segment(args):
    if args.rerun:
        config = config_from_run_manifest(args.rerun, output_dir=args.outdir)
    else:
        if not args.manifest:
            raise ConfigError("--manifest is required unless --rerun is given")
        config = _run_config(args)
    result = run_pipeline(config)
    write_run_artifacts(config, result)
    print(f"mean accuracy {result.mean_accuracy:.4f} "
          f"+/- {result.std_accuracy:.4f} over {config.repeats} repeat(s); "
          f"artifacts in {config.output_dir}")


def _cmd_eval(args):
    pred = load_label_mask(args.pred, class_count=args.classes)
    truth = load_label_mask(args.truth, class_count=args.classes)
    report = evaluate(pred.labels.ravel(), truth)
    os.makedirs(args.outdir, exist_ok=True)
    with open(os.path.join(args.outdir, "class_report.csv"), "w") as fh:
        fh.write(class_report_csv(report))
    with open(os.path.join(args.outdir, "confusion.csv"), "w") as fh:
        fh.write(confusion_csv(report))
    with open(os.path.join(args.outdir, "summary.txt"), "w") as fh:
        fh.write(summary_text(report))
    print(summary_text(report), end="")


def _cmd_bench(args):
    config = _run_config(args)
    variants = tuple(v.strip() for v in args.variants.split(",") if v.strip())
    results = bench(config, variants=variants)
    table = bench_table(results)
    os.makedirs(args.outdir, exist_ok=True)
    with open(os.path.join(args.outdir, "comparison.csv"), "w") as fh:
        fh.write(table)
    print(table, end="")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="landseg",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic textured scene")
    p.add_argument("--out", required=True)
    p.add_argument("--layout", choices=["quadrants", "voronoi"], default="quadrants")
    p.add_argument("--size", type=int, default=96)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--bands", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_synth)

    p = sub.add_parser("features", help="compute the feature matrix of a dataset")
    p.add_argument("--manifest", required=True)
    p.add_argument("--features-out", required=True)
    _add_feature_flags(p)
    p.set_defaults(fn=_cmd_features)

    p = sub.add_parser("embed", help="t-SNE a feature matrix file")
    p.add_argument("--features", required=True)
    p.add_argument("--embedding-out", required=True)
    _add_tsne_flags(p)
    p.set_defaults(fn=_cmd_embed)

    p = sub.add_parser("segment", help="run the full pipeline on a dataset")
    p.add_argument("--manifest")
    p.add_argument("--outdir", required=True)
    p.add_argument("--rerun", help="re-run from an emitted run_manifest.txt")
    _add_run_flags(p)
    p.set_defaults(fn=_cmd_segment)

    p = sub.add_parser("eval", help="score a label raster against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--classes", type=int, default=None)
    p.add_argument("--outdir", required=True)
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("bench", help="compare CCA variants on one dataset")
    p.add_argument("--manifest", required=True)
    p.add_argument("--outdir", required=True)
    p.add_argument("--variants", default="rbf,poly,linear")
    _add_run_flags(p)
    p.set_defaults(fn=_cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except LandsegError as exc:  # pragma: no cover - base-class safety net
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
