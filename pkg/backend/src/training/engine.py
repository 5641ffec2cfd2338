"""
Training loop: balanced augmented batches -> forward -> weighted KL +
contrastive objective -> Adam, with per-epoch history and checkpoints.
"""

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
import pandas as pd
from rich.progress import BarColumn, MofNCompleteColumn, Progress, TextColumn, TimeElapsedColumn

from src.augment.batching import AugmentedBatch, BatchBuilder, BatchPrefetcher
from src.autodiff.tensor import backward
from src.metrics.challenge import evaluate_predictions
from src.model.system import RespiratorySystem
from src.objectives.losses import LossWeights, system_losses, total_loss
from src.training.checkpoint import save_checkpoint
from src.training.evaluation import embedding_distance_ratio, run_inference
from src.training.feature_store import FeatureSet
from src.training.optimizer import Adam
from src.utils.config_manager import TrainConfig
from src.utils.errors import ConfigError, ShapeError, TrainingDivergedError
from src.utils.logging_setup import console

logger = logging.getLogger(__name__)

HISTORY_FILE = "history.csv"
RUN_CONFIG_FILE = "run_config.json"
BEST_CHECKPOINT = "best.rspk"
LAST_CHECKPOINT = "last.rspk"

__all__ = ["Trainer", "TrainResult", "train", "embedding_distance_ratio"]


@dataclass
class TrainResult:
    history: pd.DataFrame
    best_epoch: int
    best_value: float
    selection: str
    out_dir: Optional[Path] = None
    step_losses: List[float] = field(default_factory=list)


class Trainer:
    """
    Owns the model parameters and the optimizer. Batch construction may run
    on worker threads; batch order only depends on the augmentation seed.
    """

    def __init__(
        self,
        cfg: TrainConfig,
        train_set: FeatureSet,
        val_set: Optional[FeatureSet] = None,
        out_dir: Optional[Union[str, Path]] = None,
        model: Optional[RespiratorySystem] = None,
        info: Optional[Dict[str, object]] = None,
    ):
        system_cfg = cfg.system
        if tuple(system_cfg.input_shape) != train_set.input_shape:
            raise ShapeError(
                f"Features are {train_set.input_shape} but the system expects {tuple(system_cfg.input_shape)}"
            )
        if train_set.task is not system_cfg.task:
            raise ConfigError(f"Training features are for {train_set.task.value}, system for {system_cfg.task.value}")

        self.cfg = cfg
        self.train_set = train_set
        self.val_set = val_set if val_set is not None and len(val_set) else None
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.model = model or RespiratorySystem(system_cfg)
        self.params = list(self.model.parameters())
        self.optimizer = Adam(self.params, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
        self.weights = LossWeights(*system_cfg.loss_weights)
        self.builder = BatchBuilder(
            train_set.inputs,
            train_set.labels,
            system_cfg.num_classes,
            cfg.augmentation,
            class_names=system_cfg.task.class_names,
        )
        self.prefetcher = BatchPrefetcher(self.builder, cfg.workers, cfg.prefetch)
        self.clamps: Counter = Counter()
        self.info = dict(info or {})
        self.epochs_done = 0
        self.rows: List[Dict[str, float]] = []
        self.best_value, self.best_epoch = -np.inf, -1

    @property
    def steps_per_epoch(self) -> int:
        return self.cfg.steps_per_epoch or self.builder.steps_per_epoch()

    def train_step(self, batch: AugmentedBatch) -> Dict[str, float]:
        """One Adam update on one augmented batch; returns the loss row"""
        model = self.model
        model.train()
        model.set_rng(np.random.default_rng([self.cfg.seed, batch.batch_index, 1]))
        self.optimizer.zero_grad()

        out = model(batch.inputs)
        include = ~batch.mixed_mask if self.cfg.objectives.mixup_pair_label == "exclude" else None
        parts = system_losses(
            out,
            batch.soft_labels,
            batch.dominant_labels,
            self.params,
            self.cfg.objectives,
            self.weights,
            rng=np.random.default_rng([self.cfg.seed, batch.batch_index, 2]),
            include=include,
            clamp_counter=self.clamps,
        )
        loss = total_loss(parts, self.weights)
        row = parts.as_floats()
        row["total"] = loss.item()
        if not all(np.isfinite(v) for v in row.values()):
            self._dump_diverged(batch, row)

        backward(loss, self.params)
        self.optimizer.step()
        return row

    def _dump_diverged(self, batch: AugmentedBatch, row: Dict[str, float]) -> None:
        bad = sorted(k for k, v in row.items() if not np.isfinite(v))
        where = ""
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            dump = self.out_dir / f"diverged_batch_{batch.batch_index}.npz"
            np.savez(
                dump,
                inputs=batch.inputs,
                soft_labels=batch.soft_labels,
                indices=batch.indices,
                hard_labels=batch.hard_labels,
            )
            where = f"; batch written to {dump}"
        raise TrainingDivergedError(
            f"Loss became non-finite at batch {batch.batch_index} ({', '.join(bad)}){where}",
            batch.batch_index,
        )

    def training_accuracy(self) -> float:
        """Accuracy of the prediction head on the un-augmented training pool"""
        pred = run_inference(self.model, self.train_set.inputs, self.cfg.eval_batch_size)["prediction"]
        return float(np.mean(pred == self.train_set.labels))

    def validation_score(self) -> Optional[float]:
        if self.val_set is None:
            return None
        pred = run_inference(self.model, self.val_set.inputs, self.cfg.eval_batch_size)["prediction"]
        _, report = evaluate_predictions(self.val_set.labels, pred, self.cfg.system.task)
        return report.score

    def fit(self, epochs: Optional[int] = None, show_progress: bool = True) -> TrainResult:
        """Run `epochs` more epochs; repeated calls continue the same run"""
        epochs = epochs or self.cfg.epochs
        steps = self.steps_per_epoch
        selection = "val_score" if self.val_set is not None else "train_accuracy"
        step_losses: List[float] = []
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            (self.out_dir / RUN_CONFIG_FILE).write_text(
                json.dumps(self.cfg.model_dump(mode="json"), indent=2), encoding="utf-8"
            )

        logger.info(
            "Training %s on %s: %d items, %d epochs x %d steps of %d",
            self.cfg.system.label,
            self.cfg.system.task.display_name,
            len(self.train_set),
            epochs,
            steps,
            self.builder.batch_size,
        )
        progress = Progress(
            TextColumn("[bold]epoch {task.fields[epoch]}"),
            BarColumn(),
            MofNCompleteColumn(),
            TextColumn("loss {task.fields[loss]:.4f}"),
            TimeElapsedColumn(),
            console=console,
            transient=True,
            disable=not show_progress,
        )
        with progress:
            bar = progress.add_task("train", total=steps, epoch=0, loss=0.0)
            for _ in range(epochs):
                epoch = self.epochs_done + 1
                progress.reset(bar, total=steps, epoch=epoch, loss=0.0)
                batch_rows = []
                first = self.epochs_done * steps
                for batch in self.prefetcher.iterate(range(first, first + steps)):
                    row = self.train_step(batch)
                    batch_rows.append(row)
                    step_losses.append(row["total"])
                    progress.update(bar, advance=1, loss=row["total"])

                record = pd.DataFrame(batch_rows).mean().to_dict()
                record["epoch"] = epoch
                record["train_accuracy"] = self.training_accuracy()
                record["val_score"] = self.validation_score()
                record["kl_clamps"] = sum(self.clamps.values())
                self.rows.append(record)
                self.epochs_done = epoch
                logger.info(
                    "epoch %d: total %.4f, train acc %.3f, val Score %s",
                    epoch,
                    record["total"],
                    record["train_accuracy"],
                    "n/a" if record["val_score"] is None else f"{record['val_score']:.2f}",
                )

                value = record[selection]
                improved = value is not None and value > self.best_value
                if improved:
                    self.best_value, self.best_epoch = value, epoch
                if self.out_dir is not None:
                    self._write_epoch(epoch, improved, selection, value)

        history = pd.DataFrame(self.rows).set_index("epoch")
        return TrainResult(history, self.best_epoch, float(self.best_value), selection, self.out_dir, step_losses)

    def _write_epoch(self, epoch: int, improved: bool, selection: str, value) -> None:
        pd.DataFrame(self.rows).set_index("epoch").to_csv(self.out_dir / HISTORY_FILE)
        info = {**self.info, "epoch": epoch, "selection": selection, "value": value}
        save_checkpoint(self.out_dir / LAST_CHECKPOINT, self.model, self.cfg, info)
        if improved:
            save_checkpoint(self.out_dir / BEST_CHECKPOINT, self.model, self.cfg, info)
            logger.debug("New best %s %.4f at epoch %d", selection, value, epoch)


def train(
    cfg: TrainConfig,
    features: Union[str, Path, FeatureSet],
    out_dir: Optional[Union[str, Path]] = None,
    epochs: Optional[int] = None,
    show_progress: bool = True,
) -> TrainResult:
    """
    Train on the `train` split of a feature cache (or a loaded FeatureSet)
    and select checkpoints on its `validation` split when one exists.
    """
    pool = features if isinstance(features, FeatureSet) else FeatureSet.load(features, cfg.system.task)
    train_set = pool.subset("train")
    if not len(train_set):
        train_set = pool
        logger.warning("No items marked train; training on all %d items", len(pool))
    val_set = pool.subset("validation")
    info = {} if isinstance(features, FeatureSet) else {"features": str(Path(features).resolve())}
    return Trainer(cfg, train_set, val_set, out_dir, info=info).fit(epochs, show_progress)
