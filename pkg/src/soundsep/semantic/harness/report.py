"""Collate evaluation results into one row per setting."""

import csv
import math
import logging
from typing import Any, Iterable, Sequence
from pathlib import Path

from soundsep.semantic.exceptions import LoadError
from soundsep.semantic.harness.config import Setting
from soundsep.semantic.harness.records import (
    EVAL_GLOB,
    RECORD_NAME,
    RunRecord,
    RunStatus,
    EvalReport,
    atomic_write_json,
)

logger = logging.getLogger(__name__)


def find_reports(roots: Iterable[str | Path]) -> list[EvalReport]:
    """Validation reports of completed runs plus every `eval-*.json` found."""
    reports = []
    for root in roots:
        root = Path(root)
        for path in sorted(root.rglob(RECORD_NAME)):
            try:
                record = RunRecord.load(path)
            except LoadError:
                logger.warning("skipping unreadable run record %s", path)
                continue
            if record.status is RunStatus.Completed and record.eval_report is not None:
                reports.append(record.eval_report)
        for path in sorted(root.rglob(EVAL_GLOB)):
            try:
                reports.append(EvalReport.load(path))
            except LoadError:
                logger.warning("skipping unreadable report %s", path)
    return reports


def column_name(basis: str, split: str, stage: int) -> str:
    return f"{basis}/{split}/stage{stage}"


def _matrix_order(setting: str) -> int:
    order = [s.value for s in Setting]
    return order.index(setting) if setting in order else len(order)


def collate(reports: Sequence[EvalReport]) -> list[dict[str, Any]]:
    """Best mean SI-SDRi per setting and (basis, split, stage), in matrix order."""
    best: dict[str, dict[str, float]] = {}
    for report in reports:
        cells = best.setdefault(report.setting, {})
        for stage in range(1, report.num_stages + 1):
            key = column_name(report.basis, report.split, stage)
            value = report.mean(stage)
            if math.isfinite(value) and value > cells.get(key, -math.inf):
                cells[key] = value
    return [
        {"setting": setting, **best[setting]}
        for setting in sorted(best, key=_matrix_order)
    ]


def write_report(rows: Sequence[dict[str, Any]], out_path: str | Path):
    """Write `<out_path>.csv` and `<out_path>.json`; missing cells stay empty."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    columns = sorted({k for row in rows for k in row if k != "setting"})
    with open(out_path.with_suffix(".csv"), "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["setting", *columns], restval="")
        writer.writeheader()
        for row in rows:
            writer.writerow(
                {k: (f"{v:.3f}" if isinstance(v, float) else v) for k, v in row.items()}
            )
    atomic_write_json(out_path.with_suffix(".json"), {"rows": list(rows)})
