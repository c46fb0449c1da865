"""Command-line entry points.

Subcommands: ``gen-data``, ``split``, ``train``, ``eval``, ``sweep``,
``embed-export``.  Exit codes: 0 success, 1 usage/parameter problems,
2 data problems, 3 numeric failures.  Every artifact written carries the
config hash so outputs can be audited against their settings.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, dataset, evaluation, synthcorpus
from .config import (
    ExperimentConfig,
    canonical_text,
    config_hash,
    load_config,
)
from .encoder import (
    EncoderState,
    color_histogram_embed,
    embed,
    load_checkpoint,
    save_checkpoint,
)
from .errors import (
    CompatLearnError,
    ConfigError,
    DataError,
    NumericError,
    ParameterError,
    UsageError,
)
from .training import train

logger = logging.getLogger(__name__)

BASELINE_COLOR_HIST = "color-hist"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="compatlearn", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset directory")
    p.add_argument("--outfits", type=int, required=True)
    p.add_argument("--themes", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--image-size", type=int, default=64)
    p.add_argument("--items-min", type=int, default=3)
    p.add_argument("--items-max", type=int, default=4)
    p.add_argument("--noise-std", type=float, default=0.02)

    p = sub.add_parser("split", help="write splits.json for a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--val-fraction", type=float, default=0.15)
    p.add_argument("--test-fraction", type=float, default=0.15)

    p = sub.add_parser("train", help="run the training loop from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="override out_dir from the config")
    p.add_argument("--seed", type=int, default=None, help="override train_seed")

    p = sub.add_parser("eval", help="evaluate a checkpoint (or baseline) on the test split")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--baseline", choices=[BASELINE_COLOR_HIST], default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None, help="metrics file path (default: metrics.json)")
    p.add_argument("--seed", type=int, default=None, help="override eval_seed")

    p = sub.add_parser("sweep", help="train+eval over a parameter grid")
    p.add_argument("--kind", choices=["alpha", "unlabeled-batch"], required=True)
    p.add_argument("--grid", required=True, help="comma-separated grid values")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="override out_dir from the config")
    p.add_argument("--seed", type=int, default=None, help="override train_seed")

    p = sub.add_parser("embed-export", help="write item embeddings as CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--baseline", choices=[BASELINE_COLOR_HIST], default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--hist-bins", type=int, default=6)
    return parser


def _load_catalog(root) -> dataset.Catalog:
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"dataset directory not found: {root}")
    return dataset.load_polyvore_layout(root)


def _resolve_split(root, catalog, cfg: ExperimentConfig, ckpt_meta: dict | None = None,
                   ignore_split_file: bool = False) -> dataset.SplitSpec:
    """splits.json wins, then checkpoint metadata, then the config values."""
    if not ignore_split_file:
        split = dataset.load_split(root, catalog)
        if split is not None:
            logger.info("using splits.json from %s", root)
            return split
    if ckpt_meta and "alpha" in ckpt_meta:
        return dataset.split_catalog(
            catalog,
            alpha=float(ckpt_meta["alpha"]),
            seed=int(ckpt_meta["split_seed"]),
            val_fraction=float(ckpt_meta.get("val_fraction", cfg.val_fraction)),
            test_fraction=float(ckpt_meta.get("test_fraction", cfg.test_fraction)),
        )
    return dataset.split_catalog(
        catalog, cfg.alpha, cfg.split_seed, cfg.val_fraction, cfg.test_fraction
    )


def _baseline_embedder(bins: int):
    return lambda batch: np.stack(
        [color_histogram_embed(img, bins) for img in batch]
    )


def _evaluate_on_outfits(catalog, outfits, ground_truth, embed_fn, eval_seed, stream_tag):
    rng = np.random.default_rng(np.random.SeedSequence((eval_seed, stream_tag)))
    questions = evaluation.generate_fitb_questions(outfits, catalog, ground_truth, rng)
    examples = evaluation.generate_compat_examples(outfits, catalog, ground_truth, rng)
    ids = evaluation.collect_item_ids(questions, examples)
    vectors = evaluation.compute_item_embeddings(catalog, ids, embed_fn)
    return evaluation.evaluate_embeddings(questions, examples, vectors)


def _write_metrics(path, metrics: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(metrics, fh, sort_keys=True, indent=1)
        fh.write("\n")
    return path


def cmd_gen_data(args) -> int:
    spec = synthcorpus.SynthSpec(
        n_outfits=args.outfits,
        items_per_outfit=(args.items_min, args.items_max),
        n_themes=args.themes,
        image_size=args.image_size,
        noise_std=args.noise_std,
        seed=args.seed,
    )
    catalog, ground_truth = synthcorpus.generate_corpus(spec)
    dataset.write_catalog(catalog, args.out, ground_truth=ground_truth)
    print(
        f"wrote {len(catalog.items)} items in {len(catalog.outfits)} outfits "
        f"({args.themes} themes) to {args.out}"
    )
    return 0


def cmd_split(args) -> int:
    catalog = _load_catalog(args.data)
    split = dataset.split_catalog(
        catalog, args.alpha, args.seed, args.val_fraction, args.test_fraction
    )
    path = dataset.write_split(args.data, split)
    print(
        f"wrote {path}: {len(split.labeled_outfit_ids)} labeled outfits, "
        f"{len(split.unlabeled_item_ids)} unlabeled items, "
        f"{len(split.validation_outfit_ids)} val / {len(split.test_outfit_ids)} test outfits"
    )
    return 0


def run_train(cfg: ExperimentConfig, out_dir: Path,
              ignore_split_file: bool = False) -> dict:
    """Train per config; write checkpoints, the log, and validation metrics.

    Returns a dict with artifact paths, the final validation metrics and the
    in-memory train result (for callers like the sweep driver).
    """
    if not cfg.dataset_root:
        raise ConfigError("config is missing dataset_root")
    catalog = _load_catalog(cfg.dataset_root)
    split = _resolve_split(cfg.dataset_root, catalog, cfg,
                           ignore_split_file=ignore_split_file)
    ground_truth = dataset.load_ground_truth(cfg.dataset_root)
    chash = config_hash(cfg)

    result = train(
        catalog,
        split,
        cfg.encoder_config(),
        cfg.train_config(),
        ground_truth=ground_truth,
        eval_seed=cfg.eval_seed,
    )

    out_dir.mkdir(parents=True, exist_ok=True)
    meta = {
        "alpha": split.alpha,
        "split_seed": split.seed,
        "val_fraction": cfg.val_fraction,
        "test_fraction": cfg.test_fraction,
        "best_epoch": result.log.best_epoch,
        "config_hash": chash,
    }
    best_path = save_checkpoint(out_dir / "best.ckpt", result.best_state, meta)
    last_path = save_checkpoint(out_dir / "last.ckpt", result.last_state, meta)
    with open(out_dir / "trainlog.ndjson", "w", encoding="utf-8") as fh:
        result.log.write_ndjson(fh, config_hash=chash)
    (out_dir / "config_used.txt").write_text(canonical_text(cfg), encoding="utf-8")

    val_outfits = [o for o in catalog.outfits if o.id in split.validation_outfit_ids]
    val_metrics = None
    if val_outfits:
        metrics = _evaluate_on_outfits(
            catalog,
            val_outfits,
            ground_truth,
            lambda batch: embed(result.best_state, batch),
            cfg.eval_seed,
            stream_tag=0x5A11DA7E,
        )
        metrics.update(
            seed=cfg.eval_seed, checkpoint=str(best_path), config_hash=chash
        )
        val_metrics = metrics
        _write_metrics(out_dir / "val_metrics.json", metrics)

    return {
        "best_checkpoint": best_path,
        "last_checkpoint": last_path,
        "trainlog": out_dir / "trainlog.ndjson",
        "val_metrics": val_metrics,
        "result": result,
        "config_hash": chash,
    }


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = ExperimentConfig(**{**cfg.__dict__, "train_seed": args.seed})
    out_dir = Path(args.out) if args.out else Path(cfg.out_dir)
    artifacts = run_train(cfg, out_dir)
    result = artifacts["result"]
    if result.log.aborted:
        raise NumericError(f"training aborted: {result.log.aborted}")
    print(
        f"trained {cfg.epochs} epochs; best epoch {result.log.best_epoch}; "
        f"checkpoints in {out_dir}"
    )
    return 0


def run_eval(
    data_root,
    checkpoint=None,
    baseline=None,
    cfg: ExperimentConfig | None = None,
    eval_seed: int | None = None,
    out_path=None,
    hist_bins: int = 6,
) -> tuple[dict, Path]:
    """Evaluate on the test split; returns (metrics, metrics_path)."""
    if (checkpoint is None) == (baseline is None):
        raise UsageError("exactly one of --checkpoint / --baseline is required")
    cfg = cfg or ExperimentConfig()
    seed = cfg.eval_seed if eval_seed is None else eval_seed
    catalog = _load_catalog(data_root)
    ground_truth = dataset.load_ground_truth(data_root)

    if checkpoint is not None:
        state, meta = load_checkpoint(checkpoint)
        embed_fn = lambda batch: embed(state, batch)  # noqa: E731
        checkpoint_name = str(checkpoint)
    else:
        meta = None
        embed_fn = _baseline_embedder(hist_bins)
        checkpoint_name = f"baseline:{baseline}"

    split = _resolve_split(data_root, catalog, cfg, ckpt_meta=meta)
    test_outfits = [o for o in catalog.outfits if o.id in split.test_outfit_ids]
    if not test_outfits:
        raise DataError("the resolved split has no test outfits")

    metrics = _evaluate_on_outfits(
        catalog, test_outfits, ground_truth, embed_fn, seed, stream_tag=0x7E57
    )
    metrics.update(seed=seed, checkpoint=checkpoint_name, config_hash=config_hash(cfg))
    path = _write_metrics(out_path or Path("metrics.json"), metrics)
    return metrics, path


def cmd_eval(args) -> int:
    cfg = load_config(args.config) if args.config else None
    metrics, path = run_eval(
        args.data,
        checkpoint=args.checkpoint,
        baseline=args.baseline,
        cfg=cfg,
        eval_seed=args.seed,
        out_path=args.out,
        hist_bins=cfg.hist_bins if cfg else 6,
    )
    print(
        f"fitb_accuracy={metrics['fitb_accuracy']:.4f} "
        f"compat_auc={metrics['compat_auc']:.4f} -> {path}"
    )
    return 0


def _parse_grid(kind: str, text: str):
    values = [v.strip() for v in text.split(",") if v.strip()]
    if not values:
        raise UsageError("empty sweep grid")
    return [float(v) if kind == "alpha" else int(v) for v in values]


def _check_grid_value(kind: str, value):
    if kind == "alpha" and not 0.0 < value <= 1.0:
        raise ParameterError(f"alpha grid value {value} outside (0, 1]")
    if kind == "unlabeled-batch" and value < 3:
        raise ParameterError(f"unlabeled batch grid value {value} must be >= 3")


def run_sweep(kind: str, grid, cfg: ExperimentConfig, out_dir: Path) -> Path:
    """Train+eval per grid point with shared seeds; emit CSV and plots.

    Failed points are recorded in the CSV with status=failed and the sweep
    continues.  Returns the CSV path.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for value in grid:
        tag = f"{kind}_{value}"
        point_dir = out_dir / tag.replace(".", "p")
        try:
            _check_grid_value(kind, value)
            if kind == "alpha":
                point_cfg = ExperimentConfig(**{**cfg.__dict__, "alpha": value})
            else:
                point_cfg = ExperimentConfig(**{**cfg.__dict__, "unlabeled_batch": value})
            artifacts = run_train(point_cfg, point_dir,
                                  ignore_split_file=(kind == "alpha"))
            metrics, _ = run_eval(
                point_cfg.dataset_root,
                checkpoint=artifacts["best_checkpoint"],
                cfg=point_cfg,
                out_path=point_dir / "metrics.json",
            )
            rows.append(
                {
                    "value": value,
                    "compat_auc": metrics["compat_auc"],
                    "fitb_accuracy": metrics["fitb_accuracy"],
                    "status": "ok",
                }
            )
        except CompatLearnError as exc:
            logger.error("sweep point %s=%s failed: %s", kind, value, exc)
            rows.append(
                {"value": value, "compat_auc": "", "fitb_accuracy": "", "status": "failed"}
            )

    csv_path = out_dir / f"sweep_{kind}.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# kind={kind} config_hash={config_hash(cfg)}\n")
        writer = csv.DictWriter(fh, fieldnames=["value", "compat_auc", "fitb_accuracy", "status"])
        writer.writeheader()
        writer.writerows(rows)

    _plot_sweep(kind, rows, out_dir)
    return csv_path


def _plot_sweep(kind: str, rows, out_dir: Path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    ok = [r for r in rows if r["status"] == "ok"]
    for metric, label in (("compat_auc", "Compatibility AUC"), ("fitb_accuracy", "FITB accuracy")):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        if ok:
            ax.plot([r["value"] for r in ok], [r[metric] for r in ok], marker="o")
        ax.set_xlabel("label fraction" if kind == "alpha" else "unlabeled batch size")
        ax.set_ylabel(label)
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        fig.savefig(out_dir / f"sweep_{kind}_{metric}.png", dpi=120)
        plt.close(fig)


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = ExperimentConfig(**{**cfg.__dict__, "train_seed": args.seed})
    grid = _parse_grid(args.kind, args.grid)
    out_dir = Path(args.out) if args.out else Path(cfg.out_dir)
    csv_path = run_sweep(args.kind, grid, cfg, out_dir)
    print(f"sweep complete -> {csv_path}")
    return 0


def cmd_embed_export(args) -> int:
    if (args.checkpoint is None) == (args.baseline is None):
        raise UsageError("exactly one of --checkpoint / --baseline is required")
    catalog = _load_catalog(args.data)
    if args.checkpoint is not None:
        state, _ = load_checkpoint(args.checkpoint)
        embed_fn = lambda batch: embed(state, batch)  # noqa: E731
        source = str(args.checkpoint)
    else:
        embed_fn = _baseline_embedder(args.hist_bins)
        source = f"baseline:{args.baseline}"
    ids = sorted(catalog.items)
    vectors = evaluation.compute_item_embeddings(catalog, ids, embed_fn)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    dim = len(next(iter(vectors.values())))
    with open(out, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# source={source}\n")
        writer = csv.writer(fh)
        writer.writerow(["item_id"] + [f"e{i}" for i in range(dim)])
        for iid in ids:
            writer.writerow([iid] + [repr(float(v)) for v in vectors[iid]])
    print(f"wrote {len(ids)} x {dim} embeddings to {out}")
    return 0


_COMMANDS = {
    "gen-data": cmd_gen_data,
    "split": cmd_split,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "embed-export": cmd_embed_export,
}


def main(argv=None) -> int:
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except (UsageError, ConfigError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
