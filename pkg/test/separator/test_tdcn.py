import numpy as np
import torch
import pytest

from soundsep.semantic.clip import AudioClip
from soundsep.semantic.embeddings import EmbeddingKind, LogitsEmbedding
from soundsep.semantic.exceptions import ShapeError, ConfigurationError
from soundsep.semantic.frontend.basis import BasisConfig
from soundsep.semantic.separator.tdcn import MaskingSeparator, separate
from soundsep.semantic.separator.config import (
    CombineMode,
    InjectionSites,
    SeparatorConfig,
)

TINY = SeparatorConfig(
    num_blocks=3,
    bottleneck=8,
    hidden=16,
    conditioning_channels=8,
    residual_stride=2,
)
CONDITIONED = SeparatorConfig(
    num_blocks=3,
    bottleneck=8,
    hidden=16,
    conditioning_channels=8,
    residual_stride=2,
    embedding_channels=3,
)


def _mixture(length: int = 800, seed: int = 0) -> torch.Tensor:
    generator = torch.Generator().manual_seed(seed)
    return (torch.rand(length, generator=generator) - 0.5) * 0.6


def _embedding(seed: int = 0, frames: int = 6) -> LogitsEmbedding:
    generator = torch.Generator().manual_seed(seed)
    return LogitsEmbedding(torch.randn(frames, 3, generator=generator) * 3)


def test_unconditioned_output():
    out = MaskingSeparator(TINY)(_mixture())

    assert out.masks.shape == (2, 19, 65)
    assert torch.all((out.masks >= 0) & (out.masks <= 1))
    assert out.estimates.shape == (2, 800)
    assert out.stage == 1
    assert out.conditioning == {}
    assert len(out.clips()) == 2


def test_batched_forward():
    out = MaskingSeparator(TINY)(torch.stack([_mixture(seed=s) for s in range(3)]))
    assert out.estimates.shape == (3, 2, 800)
    with pytest.raises(ShapeError):
        out.clips()


def test_full_masks_reconstruct_the_mixture():
    separator = MaskingSeparator(TINY).double()
    with torch.no_grad():
        separator.mask_head.weight.zero_()
        separator.mask_head.bias.fill_(50.0)
    mixture = _mixture().double()
    out = separator(mixture)
    assert torch.allclose(out.estimates[0], mixture, atol=1e-9)
    assert torch.allclose(out.estimates[1], mixture, atol=1e-9)


def test_same_seed_same_parameters():
    a, b = MaskingSeparator(CONDITIONED), MaskingSeparator(CONDITIONED)
    for pa, pb in zip(a.parameters(), b.parameters()):
        assert torch.equal(pa, pb)


def test_conditioning_changes_the_output():
    separator = MaskingSeparator(CONDITIONED)
    mixture = _mixture()
    out_a = separator(mixture, _embedding(0))
    out_b = separator(mixture, _embedding(1))

    assert set(out_a.conditioning) == {"block01"}
    assert out_a.conditioning["block01"].values.shape == (19, 8)
    assert not torch.allclose(out_a.estimates, out_b.estimates)


def test_conditioned_separator_needs_embedding():
    with pytest.raises(ConfigurationError):
        MaskingSeparator(CONDITIONED)(_mixture())


def test_unconditioned_separator_ignores_embedding():
    separator = MaskingSeparator(TINY)
    a = separator(_mixture(), _embedding())
    b = separator(_mixture())
    assert torch.equal(a.estimates, b.estimates)


def test_all_block_injection_and_gating():
    config = SeparatorConfig(
        num_blocks=3,
        bottleneck=8,
        hidden=16,
        conditioning_channels=8,
        residual_stride=2,
        embedding_channels=3,
        combine=CombineMode.Gate,
        injection_sites=InjectionSites.AllBlocks,
    )
    separator = MaskingSeparator(config)
    out = separator(_mixture(), _embedding())
    assert set(out.conditioning) == {"block01", "block02", "block03"}
    assert len(separator.conditioning_parameters()) > 0


def test_block_state():
    out = MaskingSeparator(TINY)(_mixture(), keep_state=True)
    assert len(out.state.activations) == 4
    assert out.state.residual_sets == [(), (), (0,)]
    assert all(a.shape == (19, 8) for a in out.state.activations)


def test_learned_basis_separator():
    config = SeparatorConfig(
        num_blocks=2,
        bottleneck=8,
        hidden=16,
        conditioning_channels=8,
        residual_stride=0,
        basis=BasisConfig.learned(),
    )
    out = MaskingSeparator(config)(_mixture())
    assert out.masks.shape == (2, 19, 256)
    assert out.estimates.shape == (2, 800)


def test_separate_clip():
    clip = AudioClip(np.random.default_rng(0).uniform(-0.3, 0.3, 800))
    out = separate(clip, _embedding(), MaskingSeparator(CONDITIONED))
    assert not out.estimates.requires_grad
    assert out.conditioning["block01"].provenance is EmbeddingKind.Mixture


def test_extra_inputs_are_checked():
    separator = MaskingSeparator(TINY)
    with pytest.raises(ConfigurationError):
        separator(_mixture(), extra_inputs=torch.zeros(2, 800))
