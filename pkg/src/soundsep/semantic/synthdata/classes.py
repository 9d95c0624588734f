"""Parametric sound classes standing in for a labelled sound-effects library."""

import enum
from typing import Callable
from dataclasses import dataclass

import numpy as np
from scipy import signal

from soundsep.semantic.clip import (
    DEFAULT_DURATION,
    DEFAULT_SAMPLE_RATE,
    AudioClip,
    num_samples,
)
from soundsep.semantic.exceptions import ConfigurationError

RMS_RANGE = (0.1, 0.3)
PEAK_LIMIT = 0.99
CLICK_LENGTH = 48
FILTER_ORDER = 4


class GeneratorKind(str, enum.Enum):
    """Signal family a sound class is drawn from."""

    PureTone = "pure-tone"
    HarmonicStack = "harmonic-stack"
    Chirp = "chirp"
    LowpassNoise = "lowpass-noise"
    BandpassNoise = "bandpass-noise"
    HighpassNoise = "highpass-noise"
    AmNoise = "am-noise"
    ClickTrain = "click-train"


def _check_range(name: str, bounds: tuple[float, float], upper: float | None = None):
    lo, hi = bounds
    if not (np.isfinite(lo) and np.isfinite(hi)) or lo <= 0 or hi < lo:
        raise ConfigurationError(f"{name} range {bounds} is empty or non-positive")
    if upper is not None and hi >= upper:
        raise ConfigurationError(f"{name} range {bounds} reaches Nyquist ({upper} Hz)")


@dataclass(frozen=True)
class SoundClassSpec:
    """Recipe for the clips of one synthetic sound class."""

    class_id: int
    """Index of the class in the multi-hot label vector."""

    kind: GeneratorKind
    """Signal family."""

    freq_range: tuple[float, float]
    """Frequency bounds in Hz (tone frequency, chirp endpoints, filter cutoff or
    band centre, depending on `kind`)."""

    mod_range: tuple[float, float] = (2.0, 8.0)
    """Modulation or click rate bounds in Hz."""

    bandwidth_range: tuple[float, float] = (200.0, 800.0)
    """Band width bounds in Hz for band-limited noise."""

    sample_rate: int = DEFAULT_SAMPLE_RATE
    duration: float = DEFAULT_DURATION

    @property
    def name(self) -> str:
        lo, hi = self.freq_range
        return f"{self.kind.value}-{int(lo)}-{int(hi)}"

    @property
    def nyquist(self) -> float:
        return self.sample_rate / 2

    def validate(self):
        if self.class_id < 0:
            raise ConfigurationError(
                f"class id must be nonnegative, got {self.class_id}"
            )
        if self.duration <= 0:
            raise ConfigurationError(f"duration must be positive, got {self.duration}")
        _check_range("frequency", self.freq_range, self.nyquist)
        _check_range("modulation", self.mod_range, self.nyquist)
        _check_range("bandwidth", self.bandwidth_range, self.nyquist)
        if self.kind is GeneratorKind.HighpassNoise and self.freq_range[0] < 20.0:
            raise ConfigurationError("highpass cutoff must be at least 20 Hz")


def _pure_tone(spec: SoundClassSpec, rng: np.random.Generator, t: np.ndarray):
    freq = rng.uniform(*spec.freq_range)
    return np.sin(2 * np.pi * freq * t + rng.uniform(0, 2 * np.pi))


def _harmonic_stack(spec: SoundClassSpec, rng: np.random.Generator, t: np.ndarray):
    f0 = rng.uniform(*spec.freq_range)
    out = np.zeros_like(t)
    for k in range(1, 13):
        if k > 1 and k * f0 >= 0.9 * spec.nyquist:
            break
        out += np.sin(2 * np.pi * k * f0 * t + rng.uniform(0, 2 * np.pi)) / k
    return out


def _chirp(spec: SoundClassSpec, rng: np.random.Generator, t: np.ndarray):
    f_start, f_end = rng.uniform(*spec.freq_range, size=2)
    return signal.chirp(t, f0=f_start, t1=spec.duration, f1=f_end, method="linear")


def _filtered_noise(
    spec: SoundClassSpec, rng: np.random.Generator, t: np.ndarray, btype: str
) -> np.ndarray:
    noise = rng.standard_normal(t.shape[0])
    edge = 0.98 * spec.nyquist
    if btype == "bandpass":
        center = rng.uniform(*spec.freq_range)
        width = rng.uniform(*spec.bandwidth_range)
        lo = max(center - width / 2, 20.0)
        hi = min(center + width / 2, edge)
        critical: float | list[float] = [lo, max(hi, lo + 1.0)]
    else:
        critical = min(rng.uniform(*spec.freq_range), edge)
    sos = signal.butter(
        FILTER_ORDER, critical, btype=btype, fs=spec.sample_rate, output="sos"
    )
    return signal.sosfilt(sos, noise)


def _lowpass_noise(spec, rng, t):
    return _filtered_noise(spec, rng, t, "lowpass")


def _bandpass_noise(spec, rng, t):
    return _filtered_noise(spec, rng, t, "bandpass")


def _highpass_noise(spec, rng, t):
    return _filtered_noise(spec, rng, t, "highpass")


def _am_noise(spec: SoundClassSpec, rng: np.random.Generator, t: np.ndarray):
    carrier = _filtered_noise(spec, rng, t, "bandpass")
    rate = rng.uniform(*spec.mod_range)
    depth = rng.uniform(0.6, 1.0)
    envelope = 1 + depth * np.sin(2 * np.pi * rate * t + rng.uniform(0, 2 * np.pi))
    return carrier * envelope


def _click_train(spec: SoundClassSpec, rng: np.random.Generator, t: np.ndarray):
    rate = rng.uniform(*spec.mod_range)
    freq = rng.uniform(*spec.freq_range)
    period = max(int(round(spec.sample_rate / rate)), CLICK_LENGTH + 1)
    n = np.arange(CLICK_LENGTH)
    click = np.hanning(CLICK_LENGTH + 2)[1:-1] * np.sin(
        2 * np.pi * freq * n / spec.sample_rate
    )
    out = np.zeros_like(t)
    start = int(rng.integers(0, period))
    for onset in range(start, t.shape[0] - CLICK_LENGTH, period):
        out[onset : onset + CLICK_LENGTH] = click
    return out


GENERATORS: dict[
    GeneratorKind,
    Callable[[SoundClassSpec, np.random.Generator, np.ndarray], np.ndarray],
] = {
    GeneratorKind.PureTone: _pure_tone,
    GeneratorKind.HarmonicStack: _harmonic_stack,
    GeneratorKind.Chirp: _chirp,
    GeneratorKind.LowpassNoise: _lowpass_noise,
    GeneratorKind.BandpassNoise: _bandpass_noise,
    GeneratorKind.HighpassNoise: _highpass_noise,
    GeneratorKind.AmNoise: _am_noise,
    GeneratorKind.ClickTrain: _click_train,
}


def source_rng(spec: SoundClassSpec, seed: int) -> np.random.Generator:
    """Random state owned by one (class, seed) pair."""
    return np.random.default_rng([abs(seed), int(seed < 0), spec.class_id])


def generate_source(spec: SoundClassSpec, seed: int) -> AudioClip:
    """Render one clip of `spec`.

    The result depends only on `(spec, seed)`; its RMS lies in [0.05, 0.5] and its
    peak never exceeds `PEAK_LIMIT`.
    """
    spec.validate()
    rng = source_rng(spec, seed)
    t = np.arange(num_samples(spec.sample_rate, spec.duration)) / spec.sample_rate
    raw = GENERATORS[spec.kind](spec, rng, t)

    rms = np.sqrt(np.mean(raw**2))
    if rms == 0.0:
        raise ConfigurationError(f"class {spec.name} rendered silence for seed {seed}")
    samples = raw * (rng.uniform(*RMS_RANGE) / rms)
    peak = np.max(np.abs(samples))
    if peak > PEAK_LIMIT:
        samples = samples * (PEAK_LIMIT / peak)
    return AudioClip(samples, spec.sample_rate)


# (kind, frequency range) pairs cycled through by `default_class_specs`
_DEFAULT_RECIPES: list[tuple[GeneratorKind, tuple[float, float]]] = [
    (GeneratorKind.PureTone, (200.0, 500.0)),
    (GeneratorKind.HarmonicStack, (100.0, 250.0)),
    (GeneratorKind.Chirp, (500.0, 2500.0)),
    (GeneratorKind.LowpassNoise, (300.0, 600.0)),
    (GeneratorKind.BandpassNoise, (1500.0, 2500.0)),
    (GeneratorKind.HighpassNoise, (5000.0, 6000.0)),
    (GeneratorKind.AmNoise, (800.0, 1200.0)),
    (GeneratorKind.ClickTrain, (2000.0, 4000.0)),
    (GeneratorKind.PureTone, (2500.0, 4000.0)),
    (GeneratorKind.HarmonicStack, (400.0, 700.0)),
    (GeneratorKind.Chirp, (3000.0, 6500.0)),
    (GeneratorKind.LowpassNoise, (1200.0, 1800.0)),
    (GeneratorKind.BandpassNoise, (3500.0, 4500.0)),
    (GeneratorKind.HighpassNoise, (2500.0, 3500.0)),
    (GeneratorKind.AmNoise, (3000.0, 5000.0)),
    (GeneratorKind.ClickTrain, (600.0, 1200.0)),
]


def default_class_specs(
    num_classes: int = 16,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
    duration: float = DEFAULT_DURATION,
) -> list[SoundClassSpec]:
    """The desk class inventory; beyond 16 classes the recipes repeat with a shifted
    frequency band."""
    specs = []
    for class_id in range(num_classes):
        kind, (lo, hi) = _DEFAULT_RECIPES[class_id % len(_DEFAULT_RECIPES)]
        shift = 1.0 + 0.15 * (class_id // len(_DEFAULT_RECIPES))
        lo, hi = lo * shift, min(hi * shift, 0.45 * sample_rate)
        mod_range = (8.0, 20.0) if kind is GeneratorKind.ClickTrain else (2.0, 8.0)
        specs.append(
            SoundClassSpec(
                class_id=class_id,
                kind=kind,
                freq_range=(lo, max(hi, lo)),
                mod_range=mod_range,
                sample_rate=sample_rate,
                duration=duration,
            )
        )
    return specs
