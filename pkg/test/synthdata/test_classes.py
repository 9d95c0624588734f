import math

import numpy as np
import pytest
from scipy import fft

from soundsep.semantic.exceptions import ConfigurationError
from soundsep.semantic.synthdata.classes import (
    PEAK_LIMIT,
    GeneratorKind,
    SoundClassSpec,
    generate_source,
    default_class_specs,
)


def test_every_kind_renders_in_range():
    specs = default_class_specs(16, duration=1.0)
    assert {spec.kind for spec in specs} == set(GeneratorKind)

    for spec in specs:
        clip = generate_source(spec, seed=3)
        assert len(clip) == 16000
        assert clip.sample_rate == 16000
        assert 0.05 <= clip.rms() <= 0.5
        assert clip.peak() <= PEAK_LIMIT + 1e-12


def test_source_is_pure_function_of_seed():
    spec = default_class_specs(4, duration=0.25)[2]

    a = generate_source(spec, seed=11)
    b = generate_source(spec, seed=11)
    c = generate_source(spec, seed=12)

    assert np.array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, c.samples)


def test_classes_do_not_share_draws():
    specs = default_class_specs(2, duration=0.25)
    a = generate_source(specs[0], seed=5)
    b = generate_source(specs[1], seed=5)
    assert not np.array_equal(a.samples, b.samples)


def test_pinned_pure_tone_peaks_at_its_frequency():
    spec = SoundClassSpec(0, GeneratorKind.PureTone, freq_range=(440.0, 440.0))
    clip = generate_source(spec, seed=7)
    spectrum = np.abs(fft.rfft(clip.samples))
    freqs = fft.rfftfreq(len(clip), d=1.0 / clip.sample_rate)
    assert int(np.argmax(spectrum)) == int(np.argmin(np.abs(freqs - 440.0)))


def test_click_train_is_mostly_silent():
    spec = SoundClassSpec(
        0, GeneratorKind.ClickTrain, freq_range=(2000.0, 4000.0), mod_range=(8.0, 20.0)
    )
    clip = generate_source(spec, seed=3)
    assert np.mean(np.abs(clip.samples) > 1e-4) < 0.2

def test_class_names_are_unique():
    names = [spec.name for spec in default_class_specs(16)]
    assert len(set(names)) == len(names)
    assert names[0] == "pure-tone-200-500"


def test_inventory_repeats_with_shifted_band():
    specs = default_class_specs(20)
    assert specs[16].kind is specs[0].kind
    assert math.isclose(specs[16].freq_range[0], 200.0 * 1.15)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"freq_range": (500.0, 100.0)},
        {"freq_range": (0.0, 100.0)},
        {"freq_range": (100.0, 9000.0)},
        {"class_id": -1},
        {"duration": 0.0},
    ],
)
def test_invalid_specs_are_rejected(kwargs):
    values = {"class_id": 0, "kind": GeneratorKind.PureTone, "freq_range": (200.0, 400.0)}
    values.update(kwargs)
    with pytest.raises(ConfigurationError):
        generate_source(SoundClassSpec(**values), seed=0)
