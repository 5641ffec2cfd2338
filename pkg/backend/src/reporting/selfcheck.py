"""
Installation self-check: metric oracles against published challenge
results, small gradient checks and the shape contracts of the pipeline.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Tuple, Union

import numpy as np

from src.autodiff import ops
from src.autodiff.gradcheck import finite_diff_check
from src.autodiff.tensor import Tensor, precision
from src.dsp.features import extract_features, load_feature_triple
from src.dsp.types import Waveform
from src.ingest.labels import TaskId, TaskLevel
from src.metrics.challenge import scores
from src.metrics.reference_tables import KNOWN_INCONSISTENT, VARIANT_RESULTS, cell_mismatches, score_mismatches
from src.model.config import INPUT_SHAPES, Variant
from src.model.heads import combiner_linear
from src.model.system import RespiratorySystem
from src.objectives.losses import contrastive_terms, kl_loss
from src.training.feature_store import read_feature_index
from src.utils.config_manager import ConfigManager, get_config_manager
from src.utils.errors import SelfCheckFailure

logger = logging.getLogger(__name__)

GRAD_TOLERANCE = 1e-5


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class SelfCheckSummary:
    results: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    @property
    def failures(self) -> List[CheckResult]:
        return [r for r in self.results if not r.passed]

    def raise_for_failures(self) -> None:
        if not self.passed:
            names = ", ".join(f"{r.name} ({r.detail})" for r in self.failures)
            raise SelfCheckFailure(f"{len(self.failures)} self-check(s) failed: {names}")


def check_metric_oracle(scores_fn=scores) -> CheckResult:
    missed = []
    for cell in VARIANT_RESULTS:
        for metric in cell_mismatches(cell, scores_fn):
            if (cell.task, cell.system, metric) not in KNOWN_INCONSISTENT:
                missed.append(f"{cell.task.value}/{cell.system}/{metric}")
    detail = f"{len(VARIANT_RESULTS)} cells" if not missed else "mismatch: " + ", ".join(missed)
    return CheckResult("metric oracle", not missed, detail)


def check_score_oracle(scores_fn=scores) -> CheckResult:
    missed = score_mismatches(scores_fn)
    detail = "4 tasks" if not missed else "mismatch: " + ", ".join(missed)
    return CheckResult("score oracle", not missed, detail)


def _gradient_cases(rng: np.random.Generator) -> List[Tuple[str, Callable, List[Tensor]]]:
    def leaf(*shape):
        return Tensor(rng.normal(size=shape), requires_grad=True)

    x4, k4 = leaf(2, 2, 5, 6), leaf(3, 2, 3, 3)
    w_conv = rng.normal(size=(2, 3, 5, 6))
    xb, gb, bb = leaf(6, 4), leaf(4), leaf(4)
    w_bn = rng.normal(size=(6, 4))
    running = (np.zeros(4), np.ones(4))
    logits = leaf(4, 3)
    w_soft = rng.normal(size=(4, 3))
    xr = leaf(2, 3, 4, 5)
    w_rn = rng.normal(size=(2, 3, 4, 5))
    es = [leaf(3, 6) for _ in range(3)]
    ws = [leaf(6) for _ in range(4)]
    y = rng.dirichlet(np.ones(3), size=4)
    ei, ej = (Tensor(0.3 * rng.normal(size=(5, 4)), requires_grad=True) for _ in range(2))
    same = np.array([1, 0, 1, 0, 0])

    return [
        ("conv2d", lambda t: ops.sum(ops.mul(ops.conv2d(t[0], t[1]), w_conv)), [x4, k4]),
        (
            "batch_norm",
            lambda t: ops.sum(ops.mul(ops.batch_norm(t[0], t[1], t[2], *map(np.copy, running)), w_bn)),
            [xb, gb, bb],
        ),
        ("softmax", lambda t: ops.sum(ops.mul(ops.softmax(t[0]), w_soft)), [logits]),
        ("resnorm", lambda t: ops.sum(ops.mul(ops.resnorm(t[0], 0.4), w_rn)), [xr]),
        ("linear combiner", lambda t: ops.sum(ops.square(combiner_linear(*t))), es + ws),
        ("kl loss", lambda t: kl_loss(y, ops.softmax(t[0]), [t[0]], 1e-2), [logits]),
        ("contrastive loss", lambda t: ops.sum(contrastive_terms(t[0], t[1], same, 1.0)), [ei, ej]),
    ]


def check_gradients(seed: int = 0) -> CheckResult:
    worst, failed = 0.0, []
    with precision("float64"):
        for name, f, inputs in _gradient_cases(np.random.default_rng(seed)):
            err = finite_diff_check(f, inputs, max_coords=12, rng=np.random.default_rng(seed))
            worst = max(worst, err)
            if not err < GRAD_TOLERANCE:
                failed.append(f"{name} {err:.2e}")
    detail = f"max relative error {worst:.1e}" if not failed else ", ".join(failed)
    return CheckResult("gradient checks", not failed, detail)


def check_feature_shapes(manager: ConfigManager) -> CheckResult:
    cfg = manager.frontend()
    problems = []
    for level in TaskLevel:
        t = np.arange(int(2.0 * cfg.target_rate)) / cfg.target_rate
        wave = Waveform(np.sin(2 * np.pi * 500.0 * t), cfg.target_rate)
        triple = extract_features(wave, level, cfg)
        expected = INPUT_SHAPES[level]
        shapes = {g.shape for g in triple.stack()}
        if shapes != {tuple(expected)}:
            problems.append(f"{level.value}: {sorted(shapes)} != {expected}")
    detail = "GA/WA/WM grids at both levels" if not problems else "; ".join(problems)
    return CheckResult("feature shapes", not problems, detail)


def check_system_outputs(manager: ConfigManager, batch: int = 4) -> CheckResult:
    """System III on a batch of 4 (down-scaled backbone): four distributions summing to 1"""
    dev = (manager.variants_raw.get("development") or {}).get("system_overrides") or {}
    cfg = manager.system_config(Variant.SYSTEM_III, TaskId.T1_2, overrides=dev)
    model = RespiratorySystem(cfg).eval()
    x = np.random.default_rng(0).normal(size=(batch, 3) + tuple(cfg.input_shape))
    dists = model(x).distributions()
    problems = []
    if len(dists) != 4:
        problems.append(f"{len(dists)} distributions")
    for name, p in dists.items():
        if p.shape != (batch, cfg.num_classes) or not np.allclose(p.data.sum(axis=-1), 1.0, atol=1e-6):
            problems.append(name)
    detail = f"{', '.join(dists)} on {cfg.input_shape}" if not problems else "bad: " + ", ".join(problems)
    return CheckResult("system outputs", not problems, detail)


def check_feature_cache(features_dir: Union[str, Path]) -> CheckResult:
    """Cached triples have the grid size of their level"""
    index = read_feature_index(features_dir)
    level = TaskLevel(index["level"])
    items = index.get("items", [])
    if not items:
        return CheckResult("feature cache", False, f"{features_dir} lists no items")
    triple = load_feature_triple(Path(features_dir) / items[0]["file"])
    shapes = {g.shape for g in triple.stack()}
    ok = shapes == {tuple(INPUT_SHAPES[level])}
    return CheckResult("feature cache", ok, f"{len(items)} {level.value} items, grids {sorted(shapes)}")


def selfcheck(
    features_dir: Optional[Union[str, Path]] = None,
    scores_fn=scores,
    manager: Optional[ConfigManager] = None,
    include_pipeline: bool = True,
) -> SelfCheckSummary:
    """
    Run every check and return the summary; a missing or unreadable
    `features_dir` raises FeatureStoreError.
    """
    manager = manager or get_config_manager()
    summary = SelfCheckSummary()
    checks: List[Callable[[], CheckResult]] = [
        lambda: check_metric_oracle(scores_fn),
        lambda: check_score_oracle(scores_fn),
        check_gradients,
    ]
    if include_pipeline:
        checks += [lambda: check_feature_shapes(manager), lambda: check_system_outputs(manager)]
    if features_dir is not None:
        checks.append(lambda: check_feature_cache(features_dir))

    for check in checks:
        result = check()
        summary.results.append(result)
        log = logger.info if result.passed else logger.error
        log("%s: %s (%s)", result.name, "ok" if result.passed else "FAILED", result.detail)
    return summary
