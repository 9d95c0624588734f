import numpy as np
import pytest

from soundsep.semantic.clip import AudioClip
from soundsep.semantic.exceptions import ShapeError
from soundsep.semantic.synthdata.mixing import MIXTURE_PEAK, make_mixture


def _clip(value: float, length: int = 100) -> AudioClip:
    return AudioClip(np.full(length, value))


def test_sources_sum_to_mixture():
    rng = np.random.default_rng(0)
    sources = [AudioClip(rng.uniform(-0.5, 0.5, 400)) for _ in range(3)]

    example = make_mixture(sources, [0.0, -3.0, 4.0], seed=7)

    assert example.source_count == 3
    assert np.array_equal(example.source_matrix().sum(axis=0), example.mixture.samples)
    assert example.mixture.peak() <= MIXTURE_PEAK + 1e-12


def test_quiet_mixture_is_not_amplified():
    example = make_mixture([_clip(0.1), _clip(0.2)], [0.0, 0.0], seed=0)
    assert np.allclose(example.mixture.samples, 0.3)
    assert np.allclose(example.sources[1].samples, 0.2)


def test_loud_mixture_is_scaled_to_peak():
    example = make_mixture([_clip(0.8), _clip(0.6)], [0.0, 0.0], seed=0)
    assert np.isclose(example.mixture.peak(), MIXTURE_PEAK)
    ratio = example.sources[0].samples[0] / example.sources[1].samples[0]
    assert np.isclose(ratio, 0.8 / 0.6)


def test_gain_is_relative_in_db():
    example = make_mixture([_clip(0.1), _clip(0.1)], [0.0, -20.0], seed=0)
    assert np.isclose(example.sources[1].samples[0], 0.01)


def test_labels_are_checked():
    labels = [np.array([1, 0, 0]), np.array([0, 0, 1])]
    example = make_mixture([_clip(0.1), _clip(0.1)], [0.0, 0.0], 0, labels=labels)
    assert example.label_matrix().shape == (2, 3)

    with pytest.raises(ShapeError):
        make_mixture([_clip(0.1), _clip(0.1)], [0.0, 0.0], 0, labels=labels[:1])
    with pytest.raises(ShapeError):
        make_mixture(
            [_clip(0.1), _clip(0.1)], [0.0, 0.0], 0, labels=[labels[0], np.zeros(3)]
        )


def test_mismatched_sources_are_rejected():
    with pytest.raises(ShapeError):
        make_mixture([_clip(0.1, 100), _clip(0.1, 50)], [0.0, 0.0], seed=0)
    with pytest.raises(ShapeError):
        make_mixture([_clip(0.1)], [0.0], seed=0)
    with pytest.raises(ShapeError):
        make_mixture([_clip(0.1), _clip(0.1)], [0.0], seed=0)
