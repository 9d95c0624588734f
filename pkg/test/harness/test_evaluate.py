import math

import torch
import pytest

from soundsep.semantic.clip import Split
from soundsep.semantic.base import MockStore, MemoryStore
from soundsep.semantic.exceptions import ConfigurationError
from soundsep.semantic.objectives.metrics import SNR_CAP_DB, si_sdr_db
from soundsep.semantic.harness.model import SeparationSystem, system_checkpoint
from soundsep.semantic.harness.config import SETTINGS, Setting
from soundsep.semantic.harness.evaluate import (
    SI_SDR_FLOOR_DB,
    evaluate,
    score_example,
    classifier_agreement,
    system_estimator,
    evaluate_estimator,
    identity_estimator,
    binary_mask_estimator,
)


def test_identity_scores_zero(store):
    report = evaluate_estimator(identity_estimator, store, Split.Test, setting="identity")
    assert len(report) == 2
    assert report.num_stages == 1
    assert math.isclose(report.mean(), 0.0, abs_tol=1e-9)


def test_binary_mask_improves(store):
    report = evaluate_estimator(binary_mask_estimator(), store, Split.Validation)
    assert report.mean() > 0.0
    assert all(len(row.permutations[0]) == 2 for row in report.rows)


def test_score_example_aligns_permutation(store):
    example = store.example(store.ids(Split.Test)[0])
    (estimates,) = binary_mask_estimator()(example)
    straight = score_example(example, [estimates])
    swapped = score_example(example, [estimates.flip(0)])

    assert straight.permutations == ((0, 1),)
    assert swapped.permutations == ((1, 0),)
    assert math.isclose(straight.si_sdri[0], swapped.si_sdri[0], rel_tol=1e-9)


def test_threaded_evaluation_matches(store):
    serial = evaluate_estimator(binary_mask_estimator(), store, Split.Test)
    threaded = evaluate_estimator(binary_mask_estimator(), store, Split.Test, workers=2)
    assert [r.example_id for r in threaded.rows] == [r.example_id for r in serial.rows]
    assert math.isclose(threaded.mean(), serial.mean(), rel_tol=1e-12)


def test_empty_split(store):
    train_only = MemoryStore(
        [store.example(i) for i in store.ids(Split.Train)], classes=3
    )
    with pytest.raises(ConfigurationError):
        evaluate_estimator(identity_estimator, train_only, Split.Test)


def test_max_examples(store):
    report = evaluate_estimator(identity_estimator, store, Split.Test, max_examples=1)
    assert len(report) == 1


def test_system_estimator_stages(store, make_config):
    system = SeparationSystem(make_config("baseline_itdcn"), 3, 2, 16000).eval()
    example = store.example(store.ids(Split.Test)[0])
    stages = system_estimator(system)(example)
    assert len(stages) == 2
    assert stages[1].shape == (2, 1600)

    row = score_example(example, stages)
    assert len(row.si_sdri) == 2


def test_evaluate_checkpoint(store, make_config):
    config = make_config("baseline_tdcn")
    system = SeparationSystem(config, 3, 2, 16000)
    report = evaluate(system_checkpoint(system, config, 3, 2, 16000), store)
    assert report.setting == "baseline_tdcn"
    assert report.split == "test"
    assert report.basis == "stft"
    assert math.isfinite(report.mean())

    oracle = make_config("oracle_binary_mask")
    report = evaluate(system_checkpoint(None, oracle, 3, 2, 16000), store)
    assert report.mean() > 0.0


def test_silent_estimate_scores_floor(store):
    example = store.example(store.ids(Split.Test)[0])
    (estimates,) = binary_mask_estimator()(example)
    silent = estimates.clone()
    silent[1] = 0.0

    row = score_example(example, [silent])
    assert math.isfinite(row.si_sdri[0])

    references = torch.as_tensor(example.source_matrix(), dtype=torch.float64)
    aligned = references[list(row.permutations[0])]
    mixture = example.mixture.to_tensor(torch.float64).expand_as(aligned)
    baseline = si_sdr_db(aligned, mixture)
    kept = si_sdr_db(aligned[:1], silent[:1].to(torch.float64))
    expected = ((kept[0] - baseline[0]) + (SI_SDR_FLOOR_DB - baseline[1])) / 2
    assert math.isclose(row.si_sdri[0], float(expected), rel_tol=1e-9)
    assert SI_SDR_FLOOR_DB == -SNR_CAP_DB


def test_mixture_copies_agree_with_classifier(store, classifier):
    classifier.eval()
    example = store.example(store.ids(Split.Test)[0])
    mixture = example.mixture.to_tensor(torch.float64)
    copies = mixture.expand(2, -1).clone()
    assert classifier_agreement(classifier, mixture, copies) == 1.0

    row = score_example(example, identity_estimator(example), classifier)
    assert row.agreement == 1.0
    assert score_example(example, identity_estimator(example)).agreement is None


def test_agreement_is_a_frame_share(store, classifier):
    classifier.eval()
    example = store.example(store.ids(Split.Test)[0])
    (estimates,) = binary_mask_estimator()(example)
    rate = classifier_agreement(
        classifier, example.mixture.to_tensor(torch.float64), estimates
    )
    frames = classifier(example.mixture.to_tensor(torch.float32)).shape[0]
    assert 0.0 <= rate <= 1.0
    assert math.isclose(rate * frames, round(rate * frames), abs_tol=1e-9)


def test_evaluate_reports_agreement_for_embedding_settings(
    store, make_config, classifier
):
    config = make_config("pretrained_mixture")
    system = SeparationSystem(config, 3, 2, 16000, classifier=classifier)
    report = evaluate(system_checkpoint(system, config, 3, 2, 16000), store)
    assert report.agreement_rate() is not None
    assert 0.0 <= report.summary()["agreement_rate"] <= 1.0

    baseline = make_config("baseline_tdcn")
    system = SeparationSystem(baseline, 3, 2, 16000)
    report = evaluate(system_checkpoint(system, baseline, 3, 2, 16000), store)
    assert "agreement_rate" not in report.summary()
    report = evaluate(
        system_checkpoint(system, baseline, 3, 2, 16000), store, classifier=classifier
    )
    assert "agreement_rate" in report.summary()


@pytest.mark.parametrize("setting", list(Setting))
def test_only_oracle_settings_read_sources(setting, store, classifier, make_config):
    spec = SETTINGS[setting]
    if spec.trainable:
        system = SeparationSystem(make_config(setting), 3, 2, 16000, classifier).eval()
        estimator = system_estimator(system)
    else:
        estimator = binary_mask_estimator()
    tracked = MockStore([store.example(i) for i in store.ids()], classes=3)

    for example_id in tracked.ids(Split.Test):
        example = tracked.example(example_id)
        estimator(example)
        tracked.reads.mixture.assert_called_with(example_id)
        assert tracked.reads.sources.called == (spec.oracle or not spec.trainable)
        tracked.reset()
