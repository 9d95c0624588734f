import csv
import math
import logging
import itertools
from typing import Any, Mapping, Sequence
from pathlib import Path
from functools import partial

import tomlkit
from tqdm.contrib.concurrent import process_map

from soundsep.semantic.base import ExampleStoreABC
from soundsep.semantic.exceptions import ConfigurationError
from soundsep.semantic.harness.train import train
from soundsep.semantic.harness.config import ExperimentConfig, env_overrides
from soundsep.semantic.harness.records import (
    RECORD_NAME,
    RunRecord,
    RunStatus,
    atomic_write_json,
)
from soundsep.semantic.classifier.network import SoundClassifier

logger = logging.getLogger(__name__)

GRID_TABLE = "grid"
SUMMARY_NAME = "summary"


def expand_grid(
    base: Mapping[str, Any], grid: Mapping[str, Sequence[Any]]
) -> list[ExperimentConfig]:
    """Cartesian product of the `grid` axes on top of the `base` values."""
    for key, values in grid.items():
        if isinstance(values, (str, bytes)) or not isinstance(values, Sequence):
            raise ConfigurationError(f"grid axis {key} must be a list of values")
        if len(values) == 0:
            raise ConfigurationError(f"grid axis {key} is empty")
    keys = list(grid)
    configs = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        config = ExperimentConfig.from_mapping({**base, **dict(zip(keys, combo))})
        config.validate()
        configs.append(config)
    return configs


def load_grid(
    path: str | Path, environ: Mapping[str, str] | None = None
) -> list[ExperimentConfig]:
    """Flat base keys plus a `[grid]` table of lists; environment overrides the base."""
    try:
        values = tomlkit.parse(Path(path).read_text()).unwrap()
    except FileNotFoundError:
        raise ConfigurationError(f"no grid file at {path}") from None
    grid = values.pop(GRID_TABLE, {})
    values.update(env_overrides(environ))
    return expand_grid(values, grid)


def _varied_keys(configs: Sequence[Mapping[str, Any]]) -> list[str]:
    keys = [k for k in configs[0] if k != "options"] if configs else []
    return [k for k in keys if len({repr(c.get(k)) for c in configs}) > 1]


def run_one(
    task: tuple[int, ExperimentConfig],
    store: ExampleStoreABC,
    out_dir: Path,
    classifier: SoundClassifier | None = None,
) -> RunRecord:
    """Train one grid point in its own directory; failures become failed records."""
    index, config = task
    run_id = f"{index:03d}-{config.setting.value}-{config.config_hash()[:8]}"
    run_dir = out_dir / run_id
    try:
        _, record = train(config, store, run_dir, classifier, run_id=run_id)
    except Exception as e:
        logger.exception("run %s failed", run_id)
        if (run_dir / RECORD_NAME).exists():
            return RunRecord.load(run_dir / RECORD_NAME)
        record = RunRecord(
            run_id=run_id,
            config=config.to_mapping(),
            seed=config.seed,
            status=RunStatus.Failed,
            diagnostics={"error": type(e).__name__, "message": str(e)},
        )
        record.write(run_dir / RECORD_NAME)
    return record


def _score(record: RunRecord) -> float:
    return record.best_si_sdri if math.isfinite(record.best_si_sdri) else -math.inf


def summary_rows(records: Sequence[RunRecord]) -> list[dict[str, Any]]:
    """One row per run, best validation SI-SDRi first."""
    varied = _varied_keys([r.config for r in records])
    rows = []
    for record in sorted(records, key=_score, reverse=True):
        row = {
            "run_id": record.run_id,
            "setting": record.setting,
            "status": record.status.value,
            "best_step": record.best_step,
            "val_si_sdri": record.best_si_sdri,
        }
        row.update({k: record.config.get(k) for k in varied})
        rows.append(row)
    return rows


def write_summary(
    records: Sequence[RunRecord], out_dir: str | Path
) -> list[dict[str, Any]]:
    rows = summary_rows(records)
    out_dir = Path(out_dir)
    atomic_write_json(out_dir / f"{SUMMARY_NAME}.json", {"runs": rows})
    if rows:
        with open(out_dir / f"{SUMMARY_NAME}.csv", "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)
    return rows


def sweep(
    configs: Sequence[ExperimentConfig],
    store: ExampleStoreABC,
    out_dir: str | Path,
    classifier: SoundClassifier | None = None,
    workers: int = 1,
) -> list[RunRecord]:
    """Train every config in isolation and write a summary table."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = list(enumerate(configs))
    logger.info("sweeping %d runs into %s", len(tasks), out_dir)
    run = partial(run_one, store=store, out_dir=out_dir, classifier=classifier)
    if workers > 1:
        records = process_map(run, tasks, max_workers=workers, chunksize=1)
    else:
        records = [run(task) for task in tasks]

    failed = sum(r.status is RunStatus.Failed for r in records)
    logger.info("sweep finished: %d runs, %d failed", len(records), failed)
    write_summary(records, out_dir)
    return list(records)
