import numpy as np
import torch
import pytest

from soundsep.semantic.clip import AudioClip
from soundsep.semantic.embeddings import EmbeddingKind
from soundsep.semantic.exceptions import ConfigurationError
from soundsep.semantic.classifier.network import (
    SoundClassifier,
    ClassifierConfig,
    classify,
)

SMALL = ClassifierConfig(num_classes=3, widths=(4,) * 10)


def test_logits_per_frame():
    classifier = SoundClassifier(SMALL)
    waveform = torch.randn(4000) * 0.1

    logits = classifier(waveform)
    assert logits.shape == (26, 3)

    batched = classifier(torch.randn(2, 3, 4000) * 0.1)
    assert batched.shape == (2, 3, 26, 3)


def test_frames_are_classified_independently():
    classifier = SoundClassifier(SMALL)
    waveform = torch.randn(4000) * 0.1
    patches = classifier.frontend(waveform).patches

    with torch.no_grad():
        logits = classifier(waveform)
        for frame in (0, 7, 25):
            row = classifier.classify_patches(patches[frame : frame + 1])
            assert torch.allclose(row[0], logits[frame], atol=1e-5)


def test_initialisation_is_seeded():
    a = SoundClassifier(SMALL)
    b = SoundClassifier(SMALL)
    c = SoundClassifier(ClassifierConfig(num_classes=3, widths=(4,) * 10, seed=1))

    for (name, pa), (_, pb) in zip(a.named_parameters(), b.named_parameters()):
        assert torch.equal(pa, pb), name
    assert not torch.equal(a.head.weight, c.head.weight)
    assert torch.all(a.head.bias == 0)


def test_layers_run_input_to_output():
    names = [name for name, _ in SoundClassifier(SMALL).layers()]
    assert names[0] == "group01"
    assert names[-2:] == ["group10", "head"]
    assert len(names) == 11


def test_classify_clip():
    classifier = SoundClassifier(SMALL)
    clip = AudioClip(np.random.default_rng(0).uniform(-0.2, 0.2, 4000))

    emb = classify(clip, classifier, EmbeddingKind.Source, 1)
    assert emb.kind is EmbeddingKind.Source
    assert emb.source_index == 1
    assert emb.values.shape == (26, 3)
    assert not emb.values.requires_grad


def test_group_count_is_fixed():
    with pytest.raises(ConfigurationError):
        SoundClassifier(ClassifierConfig(widths=(4, 4)))
