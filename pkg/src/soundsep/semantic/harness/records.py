import os
import csv
import enum
import json
import math
import logging
from typing import Any
from pathlib import Path
from dataclasses import field, asdict, dataclass

import numpy as np
from typing_extensions import Self

from soundsep.semantic.exceptions import LoadError, ConfigurationError

logger = logging.getLogger(__name__)

RECORD_NAME = "run.json"
CHECKPOINT_NAME = "checkpoint.bin"
REPORT_NAME = "eval.csv"
EVAL_GLOB = "eval-*.json"


class RunStatus(str, enum.Enum):
    Completed = "completed"
    Failed = "failed"


def atomic_write_json(path: str | Path, data: dict[str, Any]):
    """Write JSON through a temporary sibling and an atomic rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, path)


@dataclass(frozen=True)
class EvalRow:
    """Scores of one evaluated example."""

    example_id: str
    si_sdri: tuple[float, ...]
    """Mean SI-SDRi over sources, one value per separator stage."""

    permutations: tuple[tuple[int, ...], ...]
    """Estimate-to-reference assignment used for each stage."""

    agreement: float | None = None
    """Share of frames where the top class of the mixture matches the top class
    of the soft-OR of the final estimates; None without a classifier."""


@dataclass
class EvalReport:
    setting: str
    split: str
    rows: list[EvalRow] = field(default_factory=list)
    basis: str = ""

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def num_stages(self) -> int:
        return len(self.rows[0].si_sdri) if self.rows else 0

    def mean(self, stage: int | None = None) -> float:
        """Mean SI-SDRi of `stage` (1-based), the last stage when None."""
        if not self.rows:
            return math.nan
        index = self.num_stages - 1 if stage is None else stage - 1
        return sum(row.si_sdri[index] for row in self.rows) / len(self.rows)

    def median(self, stage: int | None = None) -> float:
        if not self.rows:
            return math.nan
        index = self.num_stages - 1 if stage is None else stage - 1
        return float(np.median([row.si_sdri[index] for row in self.rows]))

    def agreement_rate(self) -> float | None:
        """Mean classifier agreement over the rows that carry one."""
        values = [row.agreement for row in self.rows if row.agreement is not None]
        return float(np.mean(values)) if values else None

    def summary(self) -> dict[str, float]:
        out = {}
        for s in range(1, self.num_stages + 1):
            out[f"si_sdri_stage{s}"] = self.mean(s)
            out[f"si_sdri_median_stage{s}"] = self.median(s)
        agreement = self.agreement_rate()
        if agreement is not None:
            out["agreement_rate"] = agreement
        return out

    def to_dict(self) -> dict[str, Any]:
        return {
            "setting": self.setting,
            "split": self.split,
            "basis": self.basis,
            "summary": self.summary(),
            "rows": [asdict(row) for row in self.rows],
        }

    @classmethod
    def from_dict(cls, values: dict[str, Any]) -> Self:
        rows = [
            EvalRow(
                example_id=row["example_id"],
                si_sdri=tuple(row["si_sdri"]),
                permutations=tuple(tuple(p) for p in row["permutations"]),
                agreement=row.get("agreement"),
            )
            for row in values.get("rows", [])
        ]
        return cls(values["setting"], values["split"], rows, values.get("basis", ""))

    def write_csv(self, path: str | Path):
        stages = range(1, self.num_stages + 1)
        header = ["example_id"]
        header += [f"si_sdri_stage{s}" for s in stages]
        header += [f"permutation_stage{s}" for s in stages]
        header.append("agreement")
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(header)
            for row in self.rows:
                scores = [f"{v:.6f}" for v in row.si_sdri]
                perms = [" ".join(map(str, p)) for p in row.permutations]
                agreement = "" if row.agreement is None else f"{row.agreement:.6f}"
                writer.writerow([row.example_id, *scores, *perms, agreement])

    def write_json(self, path: str | Path):
        atomic_write_json(path, self.to_dict())

    @classmethod
    def load(cls, path: str | Path) -> Self:
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, KeyError, json.JSONDecodeError) as e:
            raise LoadError(f"cannot read evaluation report {path}: {e}") from e


@dataclass
class RunRecord:
    """Everything one training run leaves behind; written once, never rewritten."""

    run_id: str
    config: dict[str, Any]
    seed: int
    status: RunStatus = RunStatus.Completed
    loss_trace: list[dict[str, float]] = field(default_factory=list)
    """Loss terms of every step; guided settings carry `ce_*` entries."""

    validation: list[dict[str, float]] = field(default_factory=list)
    """Validation events as {step, si_sdri}."""

    best_step: int = 0
    best_si_sdri: float = math.nan
    eval_report: EvalReport | None = None
    wall_clock: float = 0.0
    """Seconds spent in `train`."""

    diagnostics: dict[str, Any] = field(default_factory=dict)

    @property
    def setting(self) -> str:
        return self.config.get("setting", "")

    def to_dict(self) -> dict[str, Any]:
        values = asdict(self)
        values["status"] = self.status.value
        values["eval_report"] = self.eval_report.to_dict() if self.eval_report else None
        return values

    def write(self, path: str | Path):
        path = Path(path)
        if path.exists():
            raise ConfigurationError(f"run record {path} already exists")
        atomic_write_json(path, self.to_dict())
        logger.info("wrote run record %s (%s)", path, self.status.value)

    @classmethod
    def load(cls, path: str | Path) -> Self:
        try:
            values = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise LoadError(f"cannot read run record {path}: {e}") from e
        report = values.pop("eval_report", None)
        values["status"] = RunStatus(values["status"])
        record = cls(**values)
        if report is not None:
            record.eval_report = EvalReport.from_dict(report)
        return record
