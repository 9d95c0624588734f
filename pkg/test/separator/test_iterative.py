import numpy as np
import torch
import pytest

from soundsep.semantic.clip import AudioClip
from soundsep.semantic.embeddings import EmbeddingKind
from soundsep.semantic.exceptions import ConfigurationError
from soundsep.semantic.separator.tdcn import MaskingSeparator
from soundsep.semantic.separator.config import SeparatorConfig
from soundsep.semantic.separator.iterative import (
    IterativeSeparator,
    classify_all,
    separate_iterative,
    second_stage_config,
)
from soundsep.semantic.classifier.network import SoundClassifier, ClassifierConfig

FIRST = SeparatorConfig(
    num_blocks=2,
    bottleneck=8,
    hidden=16,
    conditioning_channels=8,
    residual_stride=0,
)


def _classifier(seed: int = 0) -> SoundClassifier:
    return SoundClassifier(ClassifierConfig(num_classes=3, widths=(4,) * 10, seed=seed))


def _mixture() -> torch.Tensor:
    generator = torch.Generator().manual_seed(0)
    return (torch.rand(1600, generator=generator) - 0.5) * 0.6


def test_second_stage_geometry():
    config = second_stage_config(FIRST, embedding_channels=9)
    assert config.input_streams == 3
    assert config.input_channels == 195
    assert config.embedding_channels == 9
    assert config.seed == FIRST.seed + 1


def test_classify_all_stacks_mixture_first():
    classifier = _classifier()
    mixture = _mixture()
    estimates = torch.stack([mixture * 0.5, mixture * 0.25])
    with torch.no_grad():
        emb = classify_all(classifier, mixture, estimates)
        assert emb.kind is EmbeddingKind.All
        assert emb.source_count == 2
        assert emb.values.shape == (33, 3)
        assert torch.allclose(emb.blocks()[0], classifier(mixture), atol=1e-6)


def test_unconditioned_iterative():
    model = IterativeSeparator(
        MaskingSeparator(FIRST), MaskingSeparator(second_stage_config(FIRST, 0))
    )
    out = model(_mixture())
    assert out.stage1.stage == 1
    assert out.stage2.stage == 2
    assert out.stage2.estimates.shape == (2, 1600)
    assert out.embeddings == {}


def test_conditioned_second_stage():
    classifier1, classifier2 = _classifier(0), _classifier(1)
    model = IterativeSeparator(
        MaskingSeparator(FIRST),
        MaskingSeparator(second_stage_config(FIRST, 9)),
        classifier1=classifier1,
        classifier2=classifier2,
    )
    assert model.classifier2 is classifier2

    out = separate_iterative(
        AudioClip(np.random.default_rng(1).uniform(-0.3, 0.3, 1600)), model
    )
    assert set(out.embeddings) == {"stage2"}
    assert out.embeddings["stage2"].values.shape == (33, 3)
    assert set(out.stage2.conditioning) == {"block01"}


def test_tied_classifier_weights():
    classifier = _classifier()
    model = IterativeSeparator(
        MaskingSeparator(FIRST),
        MaskingSeparator(second_stage_config(FIRST, 9)),
        classifier1=classifier,
        classifier2=_classifier(1),
        tie_classifier_weights=True,
    )
    assert model.classifier2 is model.classifier1


def test_conditioned_first_stage_embeds_mixture():
    first = SeparatorConfig(
        num_blocks=2,
        bottleneck=8,
        hidden=16,
        conditioning_channels=8,
        residual_stride=0,
        embedding_channels=3,
    )
    model = IterativeSeparator(
        MaskingSeparator(first),
        MaskingSeparator(second_stage_config(first, 0)),
        classifier1=_classifier(),
    )
    out = model(_mixture())
    assert set(out.embeddings) == {"stage1"}
    assert out.embeddings["stage1"].kind is EmbeddingKind.Mixture


def test_wiring_errors():
    with pytest.raises(ConfigurationError):
        IterativeSeparator(MaskingSeparator(FIRST), MaskingSeparator(FIRST))
    with pytest.raises(ConfigurationError):
        IterativeSeparator(
            MaskingSeparator(FIRST), MaskingSeparator(second_stage_config(FIRST, 9))
        )
