"""
Aggregate evaluation runs into one results table (markdown + JSON).

Rows are systems, and each task contributes SE/SP, AS/HS and Score columns.
"""

import json
import logging
import platform
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

from jinja2 import Environment, FileSystemLoader

from src.ingest.labels import TaskId
from src.metrics.challenge import MetricReport
from src.metrics.reference_tables import SYSTEM_COLUMNS
from src.training.evaluation import EVALUATION_FILE
from src.utils.errors import DataIOError

logger = logging.getLogger(__name__)

REPORT_MARKDOWN = "report.md"
REPORT_JSON = "report.json"
TEMPLATE_DIR = Path(__file__).parent / "templates"
VERSIONED_PACKAGES = ("numpy", "scipy", "scikit-learn", "pandas", "pydantic", "soundfile")
MISSING = "n/a"


@dataclass
class RunEntry:
    """One evaluation.json"""

    system: str
    task: TaskId
    report: MetricReport
    seed: Optional[int] = None
    config_digest: str = ""
    n_items: int = 0
    source: str = ""

    @classmethod
    def from_file(cls, path: Path) -> "RunEntry":
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
            metrics = doc["metrics"]
            report = MetricReport.model_validate({**metrics["raw"], "undefined": metrics.get("undefined", [])})
            return cls(
                system=doc["system"],
                task=TaskId(doc["task"]),
                report=report,
                seed=doc.get("seed"),
                config_digest=doc.get("config_digest", ""),
                n_items=int(doc.get("n_items", 0)),
                source=str(path.parent),
            )
        except (OSError, json.JSONDecodeError) as e:
            raise DataIOError(f"Cannot read {path}: {e}") from e
        except (KeyError, ValueError) as e:
            raise DataIOError(f"{path} is not an evaluation result: {e}") from e


def _pair(a: Optional[float], b: Optional[float]) -> str:
    return f"{_fmt(a)}/{_fmt(b)}"


def _fmt(value: Optional[float]) -> str:
    return MISSING if value is None else f"{value:.1f}"


def _system_order(name: str):
    base = name.split(" (seed")[0]
    rank = SYSTEM_COLUMNS.index(base) if base in SYSTEM_COLUMNS else len(SYSTEM_COLUMNS)
    return rank, name


def package_versions() -> Dict[str, str]:
    versions = {"python": platform.python_version()}
    for name in VERSIONED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "not installed"
    return versions


@dataclass
class RunReport:
    entries: List[RunEntry]
    versions: Dict[str, str] = field(default_factory=package_versions)

    def row_name(self, entry: RunEntry) -> str:
        """System label, suffixed with the seed when one system has runs of several seeds"""
        seeds = {e.seed for e in self.entries if e.system == entry.system}
        return entry.system if len(seeds) == 1 else f"{entry.system} (seed {entry.seed})"

    @property
    def tasks(self) -> List[TaskId]:
        present = {e.task for e in self.entries}
        return [t for t in TaskId if t in present]

    @property
    def systems(self) -> List[str]:
        return sorted({self.row_name(e) for e in self.entries}, key=_system_order)

    def cells(self) -> Dict[str, Dict[TaskId, RunEntry]]:
        table: Dict[str, Dict[TaskId, RunEntry]] = {}
        for entry in self.entries:
            name = self.row_name(entry)
            row = table.setdefault(name, {})
            if entry.task in row:
                logger.warning("Several runs for %s on %s; keeping %s", name, entry.task.value, entry.source)
            row[entry.task] = entry
        return table

    def to_markdown(self) -> str:
        tasks = self.tasks
        header = "| System |" + "".join(
            f" {t.display_name} SE/SP | {t.display_name} AS/HS | {t.display_name} Score |" for t in tasks
        )
        rule = "|---|" + "---|---|---|" * len(tasks)
        cells = self.cells()
        lines = []
        for name in self.systems:
            parts = [f"| {name} |"]
            for task in tasks:
                entry = cells[name].get(task)
                if entry is None:
                    parts.append(f" {MISSING} | {MISSING} | {MISSING} |")
                    continue
                r = entry.report.rounded()
                parts.append(f" {_pair(r['SE'], r['SP'])} | {_pair(r['AS'], r['HS'])} | {_fmt(r['Score'])} |")
            lines.append("".join(parts))

        env = Environment(
            loader=FileSystemLoader(str(TEMPLATE_DIR)),
            trim_blocks=True,
            lstrip_blocks=True,
            keep_trailing_newline=True,
            autoescape=False,
        )
        return env.get_template("report.md.j2").render(
            entries=self.entries,
            header=header,
            rule=rule,
            lines=lines,
            versions=self.versions,
        )

    def to_dict(self) -> Dict[str, Any]:
        rows = []
        for entry in self.entries:
            rows.append(
                {
                    "system": self.row_name(entry),
                    "task": entry.task.value,
                    "raw": entry.report.raw(),
                    "rounded": entry.report.rounded(),
                    "undefined": list(entry.report.undefined),
                    "seed": entry.seed,
                    "config_digest": entry.config_digest,
                    "n_items": entry.n_items,
                    "source": entry.source,
                }
            )
        return {
            "versions": self.versions,
            "tasks": [t.value for t in self.tasks],
            "systems": self.systems,
            "rows": rows,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def find_evaluations(run_dirs: Sequence[Union[str, Path]]) -> List[Path]:
    """evaluation.json files in (or below) each run directory, in argument order"""
    found: List[Path] = []
    for run_dir in run_dirs:
        run_dir = Path(run_dir)
        if run_dir.is_file() and run_dir.name == EVALUATION_FILE:
            found.append(run_dir)
            continue
        if not run_dir.is_dir():
            raise DataIOError(f"Run directory {run_dir} does not exist")
        hits = sorted(run_dir.rglob(EVALUATION_FILE))
        if not hits:
            raise DataIOError(f"No {EVALUATION_FILE} under {run_dir}; run `eval --out {run_dir}` first")
        found.extend(hits)
    return found


def report(run_dirs: Sequence[Union[str, Path]], out_dir: Optional[Union[str, Path]] = None) -> RunReport:
    run = RunReport([RunEntry.from_file(p) for p in find_evaluations(run_dirs)])
    logger.info("Report over %d runs: %s", len(run.entries), ", ".join(run.systems))
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / REPORT_MARKDOWN).write_text(run.to_markdown(), encoding="utf-8")
        (out_dir / REPORT_JSON).write_text(run.to_json(), encoding="utf-8")
        logger.info("Wrote %s and %s to %s", REPORT_MARKDOWN, REPORT_JSON, out_dir)
    return run
