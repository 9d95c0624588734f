from dataclasses import dataclass

import numpy as np
import torch
import librosa
import torch.nn as nn
import torch.nn.functional as F

from soundsep.semantic.clip import DEFAULT_SAMPLE_RATE, AudioClip
from soundsep.semantic.exceptions import ShapeError


@dataclass(frozen=True)
class MelConfig:
    """Log-mel frontend feeding the sound classifier."""

    sample_rate: int = DEFAULT_SAMPLE_RATE
    window_ms: float = 25.0
    hop_ms: float = 10.0
    fft_size: int = 512
    num_mels: int = 64
    fmin: float = 125.0
    fmax: float = 7500.0
    patch_frames: int = 96
    """Mel frames per classifier patch."""

    log_offset: float = 1e-5

    @property
    def window(self) -> int:
        return int(round(self.window_ms * self.sample_rate / 1000))

    @property
    def hop(self) -> int:
        return int(round(self.hop_ms * self.sample_rate / 1000))

    @property
    def pad_before(self) -> int:
        return (self.patch_frames - 1) // 2

    @property
    def pad_after(self) -> int:
        return self.patch_frames // 2

    def frame_count(self, length: int) -> int:
        return length // self.hop + 1


@dataclass(frozen=True, eq=False)
class MelPatchSet:
    """Log-mel frames (F, mels) and one centred patch (F, patch_frames, mels) per
    frame."""

    mel_frames: torch.Tensor
    patches: torch.Tensor

    @property
    def num_frames(self) -> int:
        return self.mel_frames.shape[-2]


def mel_filterbank(config: MelConfig) -> np.ndarray:
    """Triangular HTK-scale filters (mels, fft_size // 2 + 1), rows summing to 1."""
    bank = librosa.filters.mel(
        sr=config.sample_rate,
        n_fft=config.fft_size,
        n_mels=config.num_mels,
        fmin=config.fmin,
        fmax=config.fmax,
        htk=True,
        norm=None,
    )
    return bank / bank.sum(axis=1, keepdims=True)


def mel_center_frequencies(config: MelConfig) -> np.ndarray:
    edges = librosa.mel_frequencies(
        n_mels=config.num_mels + 2, fmin=config.fmin, fmax=config.fmax, htk=True
    )
    return edges[1:-1]


class MelFrontend(nn.Module):
    """Waveform (..., T) to log-mel frames and classifier patches."""

    def __init__(self, config: MelConfig | None = None):
        super().__init__()
        self.config = config or MelConfig()
        self.register_buffer(
            "filterbank",
            torch.as_tensor(mel_filterbank(self.config), dtype=torch.float32),
            persistent=False,
        )
        self.register_buffer(
            "window",
            torch.hann_window(self.config.window, periodic=True),
            persistent=False,
        )

    def log_mel(self, waveform: torch.Tensor) -> torch.Tensor:
        """(..., T) -> (..., F, mels) with centred, reflection-padded framing."""
        cfg = self.config
        length = waveform.shape[-1]
        if length < cfg.window:
            raise ShapeError(f"{length} samples is shorter than one mel window")
        lead = waveform.shape[:-1]
        spec = torch.stft(
            waveform.reshape(-1, length),
            n_fft=cfg.fft_size,
            hop_length=cfg.hop,
            win_length=cfg.window,
            window=self.window.to(waveform.dtype),
            center=True,
            pad_mode="reflect",
            return_complex=True,
        )
        power = spec.real.pow(2) + spec.imag.pow(2)
        mel = self.filterbank.to(power.dtype) @ power
        out = torch.log(mel + cfg.log_offset).transpose(-1, -2)
        return out.reshape(*lead, *out.shape[-2:])

    def patches(self, log_mel: torch.Tensor) -> torch.Tensor:
        """(..., F, mels) -> (..., F, patch_frames, mels), padded with silence."""
        cfg = self.config
        silence = float(np.log(cfg.log_offset))
        padded = F.pad(
            log_mel.transpose(-1, -2),
            (cfg.pad_before, cfg.pad_after),
            value=silence,
        )
        return padded.unfold(-1, cfg.patch_frames, 1).movedim(-3, -1)

    def forward(self, waveform: torch.Tensor) -> MelPatchSet:
        frames = self.log_mel(waveform)
        return MelPatchSet(mel_frames=frames, patches=self.patches(frames))


def mel_patches(clip: AudioClip, config: MelConfig | None = None) -> MelPatchSet:
    frontend = MelFrontend(config or MelConfig(sample_rate=clip.sample_rate))
    with torch.no_grad():
        return frontend(clip.to_tensor())
