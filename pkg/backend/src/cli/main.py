"""
respscope command line: extract, train, eval, embed, report, selfcheck.

Exit codes: 0 success, 1 validation failure, 2 I/O error.
Flags carry paths, verbosity, worker counts and the seed; everything else
comes from the YAML configs or a run config.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from rich.table import Table

from src.dsp.features import extract_to_cache
from src.ingest.labels import TaskId, TaskLevel
from src.ingest.manifest import CACHE_NAME, load_manifest, save_manifest_cache
from src.reporting.report import report
from src.reporting.selfcheck import selfcheck
from src.training.checkpoint import load_checkpoint
from src.training.engine import train
from src.training.evaluation import EMBEDDINGS_FILE, dump_embeddings, evaluate
from src.training.feature_store import FeatureSet
from src.utils.config_manager import get_config_manager
from src.utils.errors import ConfigError, DataIOError, FeatureStoreError, ValidationFailure
from src.utils.logging_setup import configure_logging, console

logger = logging.getLogger(__name__)

SPLITS = ("test", "validation", "train", "all")


def cmd_extract(args: argparse.Namespace) -> int:
    manager = get_config_manager()
    ingest = manager.ingest()
    level = TaskLevel(args.level)
    if args.task is not None and TaskId(args.task).level is not level:
        raise ConfigError(f"{args.task} uses {TaskId(args.task).level.value}-level items, not {level.value}")

    workers = args.workers or 1
    manifest = load_manifest(
        args.root,
        default_time_unit=ingest.default_time_unit,
        validation_fraction=ingest.validation_fraction,
        split_seed=ingest.split_seed if args.seed is None else args.seed,
        workers=workers,
    )
    for issue in manifest.issues:
        logger.warning("Skipped %s: %s", issue.path, issue.message)
    logger.info("Event labels: %s", manifest.label_histogram().to_dict())
    logger.info("Recording labels: %s", manifest.quality_histogram().to_dict())

    out = Path(args.out)
    save_manifest_cache(manifest, out / CACHE_NAME)
    index = extract_to_cache(
        manifest, level, out, manager.frontend(), ingest.include_pq_events, workers, task=args.task
    )
    logger.info("Extracted %d %s-level items into %s", len(index), level.value, out)
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    manager = get_config_manager()
    cfg = manager.load_run_config(args.config) if args.config else manager.train_config()
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.workers is not None:
        updates["workers"] = args.workers
    if updates:
        cfg = cfg.model_copy(update=updates)

    result = train(cfg, args.features, args.out, show_progress=not args.quiet)
    last = result.history.iloc[-1]
    logger.info(
        "Finished %d epochs: total loss %.4f, training accuracy %.3f; best %s %.4f at epoch %d",
        len(result.history),
        last["total"],
        last["train_accuracy"],
        result.selection,
        result.best_value,
        result.best_epoch,
    )
    return 0


def _features_for(args: argparse.Namespace, info: dict) -> Path:
    features = args.features or info.get("features")
    if not features:
        raise FeatureStoreError("No feature directory given and the checkpoint does not record one; pass --features")
    return Path(features)


def cmd_eval(args: argparse.Namespace) -> int:
    model, train_cfg, info = load_checkpoint(args.checkpoint)
    task = TaskId(args.task) if args.task else model.cfg.task
    pool = FeatureSet.load(_features_for(args, info), task)

    split = args.split
    if split is None:
        present = set(pool.splits)
        split = next((s for s in ("test", "validation") if s in present), "all")
        logger.info("Evaluating on the %s split", split)
    data = pool if split == "all" else pool.subset(split)
    if not len(data):
        raise FeatureStoreError(f"No {split} items in the feature cache")

    out = Path(args.out) if args.out else Path(args.checkpoint).parent / f"eval_{task.value}_{split}"
    batch = train_cfg.eval_batch_size if train_cfg else 64
    result = evaluate(
        model, data, task, out, batch_size=batch, extra={"split": split, "checkpoint": str(args.checkpoint)}
    )

    table = Table(title=f"{model.cfg.label} on {task.display_name} ({split}, {len(data)} items)")
    for name in result.report.raw():
        table.add_column(name, justify="right")
    table.add_row(*("n/a" if v is None else f"{v:.1f}" for v in result.report.rounded().values()))
    console.print(table)
    return 0


def cmd_embed(args: argparse.Namespace) -> int:
    model, train_cfg, info = load_checkpoint(args.checkpoint)
    data = FeatureSet.load(_features_for(args, info), model.cfg.task)
    out = Path(args.out) if args.out else Path(args.checkpoint).parent / EMBEDDINGS_FILE
    batch = train_cfg.eval_batch_size if train_cfg else 64
    dump_embeddings(model, data, out, batch_size=batch)
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    run = report(args.run_dirs, args.out)
    console.print(run.to_markdown())
    return 0


def cmd_selfcheck(args: argparse.Namespace) -> int:
    summary = selfcheck(args.features)
    table = Table(title="respscope self-check")
    table.add_column("check")
    table.add_column("result")
    table.add_column("detail")
    for r in summary.results:
        table.add_row(r.name, "ok" if r.passed else "FAILED", r.detail)
    console.print(table)
    summary.raise_for_failures()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="respscope", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--verbose", "-v", action="store_true", help="Debug logging with tracebacks")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="Ingest a dataset and cache GA/WA/WM features")
    p.add_argument("--root", required=True, type=Path, help="Directory of WAV files and annotation JSON")
    p.add_argument("--level", required=True, choices=[lvl.value for lvl in TaskLevel])
    p.add_argument("--out", required=True, type=Path, help="Feature cache directory")
    p.add_argument("--task", choices=[t.value for t in TaskId], help="Check that the level suits this task")
    p.add_argument("--seed", type=int, help="Overrides the configured split seed")
    p.add_argument("--workers", type=int, help="Extraction threads")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="Train a system on a feature cache")
    p.add_argument("--config", type=Path, help="Run config (JSON or YAML) merged over the defaults")
    p.add_argument("--features", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--seed", type=int, help="Overrides the configured training seed")
    p.add_argument("--workers", type=int, help="Batch-building threads")
    p.add_argument("--quiet", action="store_true", help="No progress bar")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="Challenge metrics of a checkpoint")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--task", choices=[t.value for t in TaskId])
    p.add_argument("--features", type=Path, help="Defaults to the cache the checkpoint was trained on")
    p.add_argument("--split", choices=SPLITS, help="Defaults to test, else validation, else all")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("embed", help="Dump branch and combined embeddings as CSV")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--features", type=Path)
    p.add_argument("--out", type=Path, help=f"Defaults to {EMBEDDINGS_FILE} next to the checkpoint")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("report", help="Aggregate evaluation runs into report.md / report.json")
    p.add_argument("run_dirs", nargs="+", type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("selfcheck", help="Metric oracles, gradient checks and shape contracts")
    p.add_argument("--features", type=Path, help="Also check a feature cache")
    p.set_defaults(func=cmd_selfcheck)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(verbose=args.verbose)
    try:
        return args.func(args)
    except ValidationFailure as e:
        logger.error(str(e), exc_info=args.verbose)
        return 1
    except (DataIOError, OSError) as e:
        logger.error(str(e), exc_info=args.verbose)
        return 2
    except KeyboardInterrupt:
        logger.error("Interrupted")
        return 130


if __name__ == "__main__":
    sys.exit(main())
