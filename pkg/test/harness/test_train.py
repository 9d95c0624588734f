import math
from unittest.mock import patch

import numpy as np
import torch
import pytest

from soundsep.semantic.clip import Split
from soundsep.semantic.exceptions import TrainingError, ConfigurationError
from soundsep.semantic.harness.model import SeparationSystem
from soundsep.semantic.harness.config import SETTINGS, Setting
from soundsep.semantic.harness.train import (
    Trainer,
    train,
    draw_batch,
    guidance_targets,
    guidance_predictions,
)
from soundsep.semantic.harness.records import (
    RECORD_NAME,
    REPORT_NAME,
    CHECKPOINT_NAME,
    RunRecord,
    RunStatus,
)
from soundsep.semantic.harness.evaluate import evaluate
from soundsep.semantic.harness.checkpoint import Checkpoint


def test_draw_batch(store):
    rng = np.random.default_rng(0)
    batch = draw_batch(store, store.ids(Split.Train), 3, rng)
    assert batch.mixtures.shape == (3, 1600)
    assert batch.sources.shape == (3, 2, 1600)
    assert torch.allclose(batch.sources.sum(dim=1), batch.mixtures, atol=1e-6)


def test_baseline_run(tmp_path, store, make_config):
    config = make_config("baseline_tdcn", options={"validate_every": 1, "log_every": 1})
    checkpoint, record = train(config, store, tmp_path / "run", run_id="r")

    assert record.status is RunStatus.Completed
    assert [t["step"] for t in record.loss_trace] == [1, 2]
    assert set(record.loss_trace[0]) == {"step", "total", "sep_stage1"}
    assert [v["step"] for v in record.validation] == [1, 2]
    assert record.best_step in (1, 2)
    assert math.isfinite(record.best_si_sdri)
    assert record.eval_report.split == "validation"
    assert len(record.eval_report) == 1
    assert checkpoint.step == record.best_step

    for name in (RECORD_NAME, REPORT_NAME, CHECKPOINT_NAME):
        assert (tmp_path / "run" / name).is_file()
    saved = Checkpoint.load(tmp_path / "run" / CHECKPOINT_NAME)
    assert saved.to_bytes() == checkpoint.to_bytes()
    assert RunRecord.load(tmp_path / "run" / RECORD_NAME).run_id == "r"


def test_runs_are_reproducible(store, make_config):
    first, _ = train(make_config("baseline_tdcn"), store)
    second, _ = train(make_config("baseline_tdcn"), store)
    assert first.to_bytes() == second.to_bytes()


def test_iterative_run_records_both_stages(store, make_config):
    _, record = train(make_config("baseline_itdcn", max_steps=1), store)
    assert {"sep_stage1", "sep_stage2", "isep"} <= set(record.loss_trace[0])
    assert record.eval_report.num_stages == 2


def test_frozen_classifier_is_untouched(store, classifier, make_config):
    config = make_config("pretrained_mixture")
    checkpoint, record = train(config, store, None, classifier)
    assert record.status is RunStatus.Completed
    for name, array in checkpoint.with_prefix("classifier").items():
        original = classifier.state_dict()[name.replace("/", ".")]
        assert np.array_equal(array, original.numpy()), name


def test_guided_run_logs_cross_entropy(store, classifier, make_config):
    config = make_config("guided_finetuned_mixture", max_steps=1)
    _, record = train(config, store, None, classifier)
    assert "ce_mixture_stage1" in record.loss_trace[0]

    _, record = train(
        make_config("guided_finetuned_all_iter", max_steps=1), store, None, classifier
    )
    terms = set(record.loss_trace[0])
    assert {"ce_mixture_stage1", "ce_mixture_stage2", "ce_sources_stage2"} <= terms


def test_oracle_run(store, classifier, make_config):
    config = make_config("oracle_soft_or", max_steps=1)
    _, record = train(config, store, None, classifier)
    assert record.status is RunStatus.Completed


def test_binary_mask_only_evaluates(tmp_path, store, make_config):
    checkpoint, record = train(make_config("oracle_binary_mask"), store, tmp_path)
    assert checkpoint.tensors == {}
    assert record.loss_trace == []
    assert record.best_si_sdri > 0
    assert (tmp_path / CHECKPOINT_NAME).is_file()


def test_guidance_targets_and_predictions(store, classifier, make_config):
    system = SeparationSystem(
        make_config("guided_finetuned_all_iter"), 3, 2, 16000, classifier
    )
    batch = draw_batch(store, store.ids(Split.Train), 2, np.random.default_rng(0))

    targets = guidance_targets(classifier, batch.sources)
    assert targets.soft_or.shape == (2, 11, 3)
    assert targets.sources.shape == (2, 2, 11, 3)
    assert not targets.soft_or.requires_grad

    predictions = guidance_predictions(system(batch.mixtures))
    assert predictions.mixture_stage1.shape == (2, 11, 3)
    assert predictions.mixture_stage2.shape == (2, 11, 3)
    assert predictions.sources_stage2.shape == (2, 2, 11, 3)


def test_guided_trainer_needs_classifier(classifier, make_config):
    config = make_config("guided_finetuned_mixture")
    system = SeparationSystem(config, 3, 2, 16000, classifier)
    with pytest.raises(ConfigurationError):
        Trainer(system, config)


def test_failed_run_writes_record(tmp_path, store, make_config):
    error = TrainingError("diverged", {"step": 1, "term": "total"})
    with patch.object(Trainer, "step", side_effect=error):
        with pytest.raises(TrainingError):
            train(make_config("baseline_tdcn"), store, tmp_path)

    record = RunRecord.load(tmp_path / RECORD_NAME)
    assert record.status is RunStatus.Failed
    assert record.diagnostics["term"] == "total"
    assert not (tmp_path / CHECKPOINT_NAME).exists()


def test_finished_run_directory_is_refused(tmp_path, store, make_config):
    train(make_config("baseline_tdcn", max_steps=1), store, tmp_path)
    with pytest.raises(ConfigurationError):
        train(make_config("baseline_tdcn", max_steps=1), store, tmp_path)


@pytest.mark.parametrize("setting", list(Setting))
def test_every_setting_trains_and_evaluates(setting, store, classifier, make_config):
    config = make_config(setting, max_steps=1)
    checkpoint, record = train(config, store, None, classifier)
    assert record.status is RunStatus.Completed
    assert record.setting == setting.value

    report = evaluate(checkpoint, store, Split.Test)
    assert report.setting == setting.value
    assert len(report) == 2
    assert report.num_stages == max(SETTINGS[setting].stages, 1)
    assert all(math.isfinite(v) for v in report.summary().values())


def test_fixed_batch_loss_drops(store, make_config):
    config = make_config("baseline_tdcn", learning_rate=3e-3)
    torch.manual_seed(config.seed)
    system = SeparationSystem(config, 3, 2, 16000)
    trainer = Trainer(system, config)
    batch = draw_batch(store, store.ids(Split.Train), 2, np.random.default_rng(0))

    totals = [trainer.step(batch, step)["total"] for step in range(1, 201)]
    assert all(math.isfinite(t) for t in totals)
    assert totals[-1] < totals[0]
