from typing import Sequence

import torch
import torch.nn.functional as F

from soundsep.semantic.clip import AudioClip
from soundsep.semantic.exceptions import ShapeError, ConfigurationError
from soundsep.semantic.frontend.basis import (
    BasisKind,
    BasisCoeffs,
    BasisConfig,
    StftBasis,
)
from soundsep.semantic.separator.tdcn import SeparatorOutput
from soundsep.semantic.objectives.metrics import stack_clips


def binary_masks(source_magnitudes: torch.Tensor) -> torch.Tensor:
    """(N, W, C) magnitudes -> one-hot masks; ties go to the lowest source index."""
    winner = torch.argmax(source_magnitudes, dim=0)
    return F.one_hot(winner, source_magnitudes.shape[0]).movedim(-1, 0).to(
        source_magnitudes.dtype
    )


def oracle_binary_mask(
    mixture: AudioClip,
    references: Sequence[AudioClip],
    basis: BasisConfig | None = None,
) -> SeparatorOutput:
    """Ideal binary STFT mask: each bin goes to the loudest reference."""
    basis = basis or BasisConfig.stft(sample_rate=mixture.sample_rate)
    if basis.kind is not BasisKind.Stft:
        raise ConfigurationError("the binary-mask oracle works on the STFT basis")
    refs = stack_clips(references)
    if refs.shape[-1] != len(mixture):
        raise ShapeError(
            f"references have {refs.shape[-1]} samples, mixture {len(mixture)}"
        )

    stft = StftBasis(basis).double()
    with torch.no_grad():
        mix = stft.encode(mixture.to_tensor(torch.float64))
        masks = binary_masks(stft.encode(refs).values)
        masked = BasisCoeffs(
            masks * mix.values, mix.phase.unsqueeze(0), mix.length, mix.config
        )
        estimates = stft.decode(masked)
    return SeparatorOutput(
        masks=masks, estimates=estimates, stage=0, sample_rate=mixture.sample_rate
    )
