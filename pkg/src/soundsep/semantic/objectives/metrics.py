import math
from typing import Sequence

import torch

from soundsep.semantic.clip import AudioClip
from soundsep.semantic.exceptions import DomainError, ShapeError

SNR_EPS = 1e-6
"""Error energy is floored at SNR_EPS times the signal energy, capping ratios."""

SNR_CAP_DB = -10.0 * math.log10(SNR_EPS)


def _energy(x: torch.Tensor) -> torch.Tensor:
    return x.pow(2).sum(dim=-1)


def _check_pair(reference: torch.Tensor, estimate: torch.Tensor):
    if reference.shape != estimate.shape:
        raise ShapeError(
            f"reference {tuple(reference.shape)} and estimate {tuple(estimate.shape)} differ"
        )


def _capped_ratio_db(signal: torch.Tensor, error: torch.Tensor) -> torch.Tensor:
    return 10.0 * torch.log10(signal / torch.maximum(error, SNR_EPS * signal))


def snr_db(reference: torch.Tensor, estimate: torch.Tensor) -> torch.Tensor:
    """SNR over the last axis, in dB, capped at `SNR_CAP_DB`."""
    _check_pair(reference, estimate)
    signal = _energy(reference)
    if torch.any(signal == 0):
        raise DomainError("SNR is undefined for an all-zero reference")
    return _capped_ratio_db(signal, _energy(reference - estimate))


def si_sdr_db(reference: torch.Tensor, estimate: torch.Tensor) -> torch.Tensor:
    """Scale-invariant SDR over the last axis, in dB, capped at `SNR_CAP_DB`."""
    _check_pair(reference, estimate)
    ref_energy = _energy(reference)
    if torch.any(ref_energy == 0):
        raise DomainError("SI-SDR is undefined for an all-zero reference")
    if torch.any(_energy(estimate) == 0):
        raise DomainError("SI-SDR is undefined for an all-zero estimate")
    gamma = (reference * estimate).sum(dim=-1, keepdim=True) / ref_energy.unsqueeze(-1)
    target = gamma * reference
    return _capped_ratio_db(_energy(target), _energy(target - estimate))


def _as_tensor(clip: AudioClip | torch.Tensor) -> torch.Tensor:
    if isinstance(clip, AudioClip):
        return clip.to_tensor(torch.float64)
    return clip


def stack_clips(clips: Sequence[AudioClip] | torch.Tensor) -> torch.Tensor:
    """(N, T) tensor from a sequence of equal-length clips."""
    if isinstance(clips, torch.Tensor):
        return clips
    lengths = {len(c) for c in clips}
    if len(lengths) > 1:
        raise ShapeError(f"clips have different lengths {sorted(lengths)}")
    return torch.stack([_as_tensor(c) for c in clips])


def snr(reference: AudioClip, estimate: AudioClip) -> float:
    return float(snr_db(_as_tensor(reference), _as_tensor(estimate)))


def si_sdr(reference: AudioClip, estimate: AudioClip) -> float:
    return float(si_sdr_db(_as_tensor(reference), _as_tensor(estimate)))


def si_sdr_improvement(
    reference: AudioClip, estimate: AudioClip, mixture: AudioClip
) -> float:
    """SI-SDR gain of `estimate` over the unprocessed mixture."""
    ref = _as_tensor(reference)
    gain = si_sdr_db(ref, _as_tensor(estimate)) - si_sdr_db(ref, _as_tensor(mixture))
    return float(gain)
