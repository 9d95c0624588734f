import math
import enum
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from soundsep.semantic.clip import DEFAULT_SAMPLE_RATE, AudioClip
from soundsep.semantic.exceptions import ShapeError, ConfigurationError


class BasisKind(str, enum.Enum):
    """Analysis/synthesis transform used by the separator."""

    Stft = "stft"
    Learned = "learned"


@dataclass(frozen=True)
class BasisConfig:
    """Framing and size of an analysis/synthesis basis."""

    kind: BasisKind = BasisKind.Stft
    window_ms: float = 5.0
    hop_ms: float = 2.5
    num_coeffs: int = 65
    """Channels C per frame: `fft_size // 2 + 1` for the STFT basis."""

    fft_size: int = 128
    """Zero-padded transform length, STFT basis only."""

    sample_rate: int = DEFAULT_SAMPLE_RATE

    @classmethod
    def stft(cls, **kwargs) -> "BasisConfig":
        return cls(kind=BasisKind.Stft, num_coeffs=65, fft_size=128, **kwargs)

    @classmethod
    def learned(cls, **kwargs) -> "BasisConfig":
        return cls(kind=BasisKind.Learned, num_coeffs=256, **kwargs)

    @classmethod
    def for_kind(cls, kind: BasisKind | str) -> "BasisConfig":
        return cls.stft() if BasisKind(kind) is BasisKind.Stft else cls.learned()

    @property
    def window(self) -> int:
        return int(round(self.window_ms * self.sample_rate / 1000))

    @property
    def hop(self) -> int:
        return int(round(self.hop_ms * self.sample_rate / 1000))

    def validate(self):
        if self.hop <= 0 or self.hop > self.window:
            raise ConfigurationError(
                f"hop ({self.hop}) must be positive and at most the window ({self.window})"
            )
        if self.kind is BasisKind.Stft:
            if self.fft_size < self.window:
                raise ConfigurationError("fft size must cover the window")
            if self.num_coeffs != self.fft_size // 2 + 1:
                raise ConfigurationError(
                    f"stft basis has {self.fft_size // 2 + 1} coefficients, "
                    f"not {self.num_coeffs}"
                )
        elif self.num_coeffs <= 0:
            raise ConfigurationError("learned basis needs at least one coefficient")

    def frame_count(self, length: int) -> int:
        """Frames covering `length` samples; a trailing partial frame is zero-padded."""
        if length < self.window:
            raise ShapeError(
                f"{length} samples is shorter than one window ({self.window})"
            )
        return 1 + math.ceil((length - self.window) / self.hop)

    def padded_length(self, length: int) -> int:
        return self.window + (self.frame_count(length) - 1) * self.hop


@dataclass(frozen=True, eq=False)
class BasisCoeffs:
    """Nonnegative analysis coefficients shaped (..., W, C) plus synthesis side-info."""

    values: torch.Tensor
    phase: torch.Tensor | None
    """Unit-modulus STFT phase shaped like `values`; None for the learned basis."""

    length: int
    """Number of samples of the analysed signal."""

    config: BasisConfig

    @property
    def num_frames(self) -> int:
        return self.values.shape[-2]

    def with_values(self, values: torch.Tensor) -> "BasisCoeffs":
        if values.shape[-2:] != self.values.shape[-2:]:
            raise ShapeError(
                f"coefficients shaped {tuple(values.shape[-2:])} do not match the "
                f"analysed geometry {tuple(self.values.shape[-2:])}"
            )
        return BasisCoeffs(values, self.phase, self.length, self.config)


def hann_window(length: int, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """Hann window sampled at half-integer points.

    Endpoints are nonzero and adjacent windows at 50% overlap sum to exactly one.
    """
    n = torch.arange(length, dtype=torch.float64) + 0.5
    return torch.sin(math.pi * n / length).pow(2).to(dtype)


def frame_signal(waveform: torch.Tensor, config: BasisConfig) -> torch.Tensor:
    """(..., T) -> (..., W, window), zero-padding the final partial frame."""
    length = waveform.shape[-1]
    padded = F.pad(waveform, (0, config.padded_length(length) - length))
    return padded.unfold(-1, config.window, config.hop)


def overlap_add(frames: torch.Tensor, config: BasisConfig) -> torch.Tensor:
    """(..., W, window) -> (..., padded length) by summing overlapping frames."""
    *lead, num_frames, window = frames.shape
    total = config.window + (num_frames - 1) * config.hop
    cols = frames.reshape(-1, num_frames, window).transpose(1, 2)
    out = F.fold(
        cols,
        output_size=(1, total),
        kernel_size=(1, window),
        stride=(1, config.hop),
    )
    return out.reshape(*lead, total)


class StftBasis(nn.Module):
    """Magnitude STFT analysis; synthesis reuses the analysed phase."""

    def __init__(self, config: BasisConfig):
        super().__init__()
        config.validate()
        self.config = config
        self.register_buffer("window", hann_window(config.window), persistent=False)

    def encode(self, waveform: torch.Tensor) -> BasisCoeffs:
        frames = frame_signal(waveform, self.config) * self.window.to(waveform.dtype)
        spec = torch.fft.rfft(frames, n=self.config.fft_size)
        magnitude = spec.abs()
        phase = torch.polar(torch.ones_like(magnitude), torch.angle(spec.detach()))
        return BasisCoeffs(magnitude, phase, waveform.shape[-1], self.config)

    def magnitude(self, waveform: torch.Tensor) -> torch.Tensor:
        return self.encode(waveform).values

    def decode(self, coeffs: BasisCoeffs) -> torch.Tensor:
        if coeffs.phase is None:
            raise ShapeError("stft synthesis needs the analysed phase")
        if coeffs.phase.shape[-2:] != coeffs.values.shape[-2:]:
            raise ShapeError("coefficient and phase geometry differ")
        spec = coeffs.values * coeffs.phase
        frames = torch.fft.irfft(spec, n=self.config.fft_size)
        frames = frames[..., : self.config.window]
        window = self.window.to(frames.dtype)
        ola = overlap_add(frames, self.config)
        norm = overlap_add(
            window.expand(coeffs.num_frames, self.config.window), self.config
        )
        return (ola / norm)[..., : coeffs.length]


class LearnedBasis(nn.Module):
    """Learned framed encoder with ReLU and a transposed linear decoder."""

    def __init__(self, config: BasisConfig, generator: torch.Generator | None = None):
        super().__init__()
        config.validate()
        self.config = config
        bound = 1.0 / math.sqrt(config.window)
        self.encoder = nn.Parameter(torch.empty(config.num_coeffs, config.window))
        self.decoder = nn.Parameter(torch.empty(config.num_coeffs, config.window))
        with torch.no_grad():
            self.encoder.uniform_(-bound, bound, generator=generator)
            self.decoder.uniform_(-bound, bound, generator=generator)
        self.activation = nn.ReLU()

    def encode(self, waveform: torch.Tensor) -> BasisCoeffs:
        frames = frame_signal(waveform, self.config)
        values = self.activation(frames @ self.encoder.t())
        return BasisCoeffs(values, None, waveform.shape[-1], self.config)

    def magnitude(self, waveform: torch.Tensor) -> torch.Tensor:
        return self.encode(waveform).values

    def decode(self, coeffs: BasisCoeffs) -> torch.Tensor:
        if coeffs.values.shape[-1] != self.config.num_coeffs:
            raise ShapeError(
                f"expected {self.config.num_coeffs} channels, got {coeffs.values.shape[-1]}"
            )
        frames = coeffs.values @ self.decoder
        return overlap_add(frames, self.config)[..., : coeffs.length]


def make_basis(
    config: BasisConfig, generator: torch.Generator | None = None
) -> StftBasis | LearnedBasis:
    if config.kind is BasisKind.Stft:
        return StftBasis(config)
    return LearnedBasis(config, generator=generator)


def _resolve(config: BasisConfig, params: LearnedBasis | None):
    if params is not None:
        return params
    return make_basis(config, generator=torch.Generator().manual_seed(0))


def _dtype_of(basis: StftBasis | LearnedBasis) -> torch.dtype:
    if isinstance(basis, LearnedBasis):
        return basis.encoder.dtype
    return torch.float64


def analyze(
    clip: AudioClip, config: BasisConfig, params: LearnedBasis | None = None
) -> BasisCoeffs:
    """Encode one clip; `params` carries learned-basis weights."""
    if len(clip) == 0:
        raise ShapeError("cannot analyse an empty clip")
    basis = _resolve(config, params)
    with torch.no_grad():
        return basis.encode(clip.to_tensor(_dtype_of(basis)))


def synthesize(
    masked: BasisCoeffs, config: BasisConfig, params: LearnedBasis | None = None
) -> AudioClip:
    """Decode masked coefficients back to a clip of the analysed length."""
    basis = _resolve(config, params)
    dtype = _dtype_of(basis)
    with torch.no_grad():
        waveform = basis.decode(masked.with_values(masked.values.to(dtype)))
    return AudioClip.from_tensor(waveform, config.sample_rate)
