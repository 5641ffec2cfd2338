"""
Inference, challenge evaluation and embedding export.
"""

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Sequence, Union

import numpy as np
import pandas as pd
from sklearn.metrics import pairwise_distances

from src.autodiff.tensor import Tensor, no_grad
from src.ingest.labels import TaskId
from src.metrics.challenge import ConfusionMatrix, MetricReport, evaluate_predictions
from src.model.system import RespiratorySystem
from src.training.feature_store import FeatureSet
from src.utils.errors import ConfigError, ShapeError

logger = logging.getLogger(__name__)

PREDICTIONS_FILE = "predictions.csv"
EVALUATION_FILE = "evaluation.json"
EMBEDDINGS_FILE = "embeddings.csv"


def run_inference(model: RespiratorySystem, inputs: np.ndarray, batch_size: int = 64) -> Dict[str, np.ndarray]:
    """
    Eval-mode forward over [N, 3, F, T] in chunks. Returns every head's
    distributions (p_wa, p_ga, p_wm, p_comb), the branch embeddings
    (e_wa, e_ga, e_wm), the combined feature (a) and the prediction.
    """
    was_training = model.training
    model.eval()
    chunks: Dict[str, list] = {}
    try:
        with no_grad():
            for start in range(0, inputs.shape[0], batch_size):
                out = model(Tensor(inputs[start : start + batch_size]))
                rows = {name: t.data for name, t in out.distributions().items()}
                rows.update({f"e_{kind.value.lower()}": e.data for kind, e in out.embeddings.items()})
                if out.combined is not None:
                    rows["a"] = out.combined.data
                rows["prediction"] = out.predict()
                for name, value in rows.items():
                    chunks.setdefault(name, []).append(value)
    finally:
        model.train(was_training)
    return {name: np.concatenate(parts) for name, parts in chunks.items()}


def config_digest(cfg) -> str:
    """Short sha256 of a pydantic config in canonical JSON"""
    canonical = json.dumps(cfg.model_dump(mode="json"), sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


def predict(model: RespiratorySystem, inputs: np.ndarray, batch_size: int = 64) -> np.ndarray:
    return run_inference(model, inputs, batch_size)["prediction"]


def embedding_distance_ratio(embeddings: np.ndarray, labels: Sequence[int]) -> float:
    """Mean within-class Euclidean distance / mean cross-class distance"""
    labels = np.asarray(labels)
    d = pairwise_distances(np.asarray(embeddings, dtype=np.float64))
    upper = np.triu(np.ones_like(d, dtype=bool), k=1)
    same = labels[:, None] == labels[None, :]
    within, cross = d[upper & same], d[upper & ~same]
    if within.size == 0 or cross.size == 0:
        raise ShapeError("Distance ratio needs at least two classes and one same-class pair")
    return float(within.mean() / max(cross.mean(), 1e-12))


@dataclass
class EvaluationResult:
    task: TaskId
    confusion: ConfusionMatrix
    report: MetricReport
    predictions: pd.DataFrame

    def to_dict(self) -> Dict[str, object]:
        return {
            "task": self.task.value,
            "task_name": self.task.display_name,
            "class_names": list(self.task.class_names),
            "n_items": int(len(self.predictions)),
            "confusion_matrix": self.confusion.to_list(),
            "metrics": self.report.as_dict(),
        }


def evaluate(
    model: RespiratorySystem,
    features: FeatureSet,
    task: Optional[Union[TaskId, str]] = None,
    out_dir: Optional[Union[str, Path]] = None,
    batch_size: int = 64,
    extra: Optional[Dict[str, object]] = None,
) -> EvaluationResult:
    """
    Argmax of the combination head (or the single head of an individual
    branch) scored with the challenge metrics.
    """
    task = TaskId(task or model.cfg.task)
    if task is not model.cfg.task:
        raise ConfigError(f"Checkpoint was trained for {model.cfg.task.value}, not {task.value}")
    if features.task is not task:
        raise ConfigError(f"Features are labelled for {features.task.value}, not {task.value}")

    pred = predict(model, features.inputs, batch_size)
    cm, report = evaluate_predictions(features.labels, pred, task)
    names = task.class_names
    predictions = pd.DataFrame(
        {
            "id": features.item_ids,
            "true_label": [names[i] for i in features.labels],
            "predicted_label": [names[i] for i in pred],
        }
    )
    result = EvaluationResult(task, cm, report, predictions)
    logger.info(
        "%s on %s (%d items): %s",
        model.cfg.label,
        task.display_name,
        len(predictions),
        report.rounded(),
    )

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        predictions.to_csv(out_dir / PREDICTIONS_FILE, index=False)
        doc = result.to_dict()
        doc.update(
            system=model.cfg.label,
            variant=model.cfg.variant.value,
            branch=model.cfg.branch.value if model.cfg.branch else None,
            seed=model.cfg.seed,
            config_digest=config_digest(model.cfg),
            **(extra or {}),
        )
        (out_dir / EVALUATION_FILE).write_text(json.dumps(doc, indent=2), encoding="utf-8")
    return result


def dump_embeddings(
    model: RespiratorySystem,
    features: FeatureSet,
    out_path: Union[str, Path],
    batch_size: int = 64,
) -> pd.DataFrame:
    """One row per item: id, label, split, then e_wa_*, e_ga_*, e_wm_* and a_* columns"""
    outputs = run_inference(model, features.inputs, batch_size)
    names = features.task.class_names
    frame = pd.DataFrame(
        {
            "id": features.item_ids,
            "label": [names[i] for i in features.labels],
            "split": features.splits,
        }
    )
    blocks = [frame]
    for key in ("e_wa", "e_ga", "e_wm", "a"):
        if key in outputs:
            values = outputs[key]
            blocks.append(pd.DataFrame(values, columns=[f"{key}_{i}" for i in range(values.shape[1])]))
    table = pd.concat(blocks, axis=1)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(out_path, index=False)
    logger.info("Wrote %d embeddings to %s", len(table), out_path)
    return table
