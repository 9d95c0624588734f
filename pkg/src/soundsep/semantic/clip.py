import enum
from dataclasses import field, dataclass

import numpy as np
import torch
from typing_extensions import Self

from soundsep.semantic.exceptions import ShapeError

DEFAULT_SAMPLE_RATE = 16000
DEFAULT_DURATION = 3.0


class Split(str, enum.Enum):
    """Dataset partition an example belongs to."""

    Train = "train"
    Validation = "validation"
    Test = "test"


def num_samples(sample_rate: int, duration: float) -> int:
    """Number of samples of a clip lasting `duration` seconds."""
    return int(round(sample_rate * duration))


@dataclass(frozen=True, eq=False)
class AudioClip:
    """Fixed-rate mono waveform, the signal currency of every module."""

    samples: np.ndarray
    """Real amplitudes, one per sample."""

    sample_rate: int = DEFAULT_SAMPLE_RATE
    """Sampling rate in Hz."""

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ShapeError(f"audio clip must be mono, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ShapeError("audio clip contains non-finite samples")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        """Length in seconds."""
        return len(self) / self.sample_rate

    def rms(self) -> float:
        if len(self) == 0:
            return 0.0
        return float(np.sqrt(np.mean(self.samples**2)))

    def peak(self) -> float:
        if len(self) == 0:
            return 0.0
        return float(np.max(np.abs(self.samples)))

    def scaled(self, gain: float) -> "AudioClip":
        return AudioClip(self.samples * gain, self.sample_rate)

    def to_tensor(self, dtype: torch.dtype = torch.float32) -> torch.Tensor:
        return torch.as_tensor(self.samples, dtype=dtype)

    @classmethod
    def from_tensor(cls, waveform: torch.Tensor, sample_rate: int) -> Self:
        return cls(waveform.detach().cpu().double().numpy(), sample_rate)

    @classmethod
    def silence(
        cls, duration: float = DEFAULT_DURATION, sample_rate: int = DEFAULT_SAMPLE_RATE
    ) -> Self:
        return cls(np.zeros(num_samples(sample_rate, duration)), sample_rate)


@dataclass(frozen=True)
class ClipGeometry:
    """Rate and length shared by every clip of a dataset."""

    sample_rate: int = DEFAULT_SAMPLE_RATE
    duration: float = DEFAULT_DURATION
    length: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "length", num_samples(self.sample_rate, self.duration))

    def check(self, clip: AudioClip):
        if clip.sample_rate != self.sample_rate or len(clip) != self.length:
            raise ShapeError(
                f"expected {self.length} samples at {self.sample_rate} Hz, "
                f"got {len(clip)} samples at {clip.sample_rate} Hz"
            )
