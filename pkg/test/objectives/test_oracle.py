import numpy as np
import torch
import pytest

from soundsep.semantic.clip import AudioClip
from soundsep.semantic.exceptions import ShapeError, ConfigurationError
from soundsep.semantic.frontend.basis import BasisConfig
from soundsep.semantic.objectives.oracle import binary_masks, oracle_binary_mask
from soundsep.semantic.objectives.metrics import si_sdr_improvement


def _tone(freq: float, length: int = 4000, rate: int = 16000) -> AudioClip:
    t = np.arange(length) / rate
    return AudioClip(0.3 * np.sin(2 * np.pi * freq * t), rate)


def test_binary_masks_are_one_hot():
    magnitudes = torch.tensor([[[1.0, 2.0, 3.0]], [[2.0, 2.0, 1.0]]])
    masks = binary_masks(magnitudes)
    assert masks.shape == (2, 1, 3)
    assert torch.equal(masks.sum(dim=0), torch.ones(1, 3))
    assert masks[:, 0, 1].tolist() == [1.0, 0.0]


def test_oracle_estimates_sum_to_mixture():
    low, high = _tone(300.0), _tone(3000.0)
    mixture = AudioClip(low.samples + high.samples)
    out = oracle_binary_mask(mixture, [low, high])

    assert out.stage == 0
    assert out.estimates.dtype == torch.float64
    assert out.estimates.shape == (2, 4000)
    assert np.allclose(out.estimates.sum(dim=0).numpy(), mixture.samples, atol=1e-9)


def test_oracle_separates_distant_tones():
    low, high = _tone(300.0), _tone(3000.0)
    mixture = AudioClip(low.samples + high.samples)
    estimates = oracle_binary_mask(mixture, [low, high]).clips()

    assert si_sdr_improvement(low, estimates[0], mixture) > 10.0
    assert si_sdr_improvement(high, estimates[1], mixture) > 10.0


def test_oracle_errors():
    clip = _tone(300.0)
    with pytest.raises(ConfigurationError):
        oracle_binary_mask(clip, [clip, clip], BasisConfig.learned())
    with pytest.raises(ShapeError):
        oracle_binary_mask(clip, [_tone(300.0, 3000), _tone(600.0, 3000)])
