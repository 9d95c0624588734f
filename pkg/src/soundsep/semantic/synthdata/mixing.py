from typing import Sequence
from dataclasses import field, dataclass

import numpy as np

from soundsep.semantic.clip import Split, AudioClip
from soundsep.semantic.exceptions import ShapeError

MIXTURE_PEAK = 0.9


@dataclass(frozen=True, eq=False)
class MixtureExample:
    """A mixture together with the gain-scaled sources that add up to it."""

    mixture: AudioClip
    sources: tuple[AudioClip, ...]
    """Stored sources; they sum to `mixture` exactly in memory."""

    gains_db: tuple[float, ...]
    """Relative gain applied to each source before peak normalization."""

    seed: int
    labels: tuple[np.ndarray, ...] = ()
    """Multi-hot class vector per source, empty when unlabelled."""

    split: Split = Split.Train
    example_id: str = field(default="")

    def __post_init__(self):
        if len(self.sources) < 2:
            raise ShapeError(
                f"a mixture needs at least 2 sources, got {len(self.sources)}"
            )
        if self.labels:
            if len(self.labels) != len(self.sources):
                raise ShapeError("one label vector per source is required")
            for label in self.labels:
                if not np.any(label):
                    raise ShapeError("every source label needs an active class")

    @property
    def source_count(self) -> int:
        return len(self.sources)

    def source_matrix(self) -> np.ndarray:
        """Sources stacked as an (N, samples) array."""
        return np.stack([source.samples for source in self.sources])

    def label_matrix(self) -> np.ndarray:
        return np.stack(self.labels)


def _check_sources(sources: Sequence[AudioClip]):
    if len(sources) == 0:
        raise ShapeError("no sources to mix")
    first = sources[0]
    for source in sources[1:]:
        if len(source) != len(first) or source.sample_rate != first.sample_rate:
            raise ShapeError(
                f"sources disagree: {len(first)} samples at {first.sample_rate} Hz vs "
                f"{len(source)} samples at {source.sample_rate} Hz"
            )


def make_mixture(
    sources: Sequence[AudioClip],
    gains_db: Sequence[float],
    seed: int,
    labels: Sequence[np.ndarray] = (),
    split: Split = Split.Train,
    example_id: str = "",
) -> MixtureExample:
    """Scale each source by its gain, then apply one common factor so the mixture
    peak stays at or below `MIXTURE_PEAK`.

    The stored sources are the scaled ones and the mixture is their sum, so
    additivity holds bit-for-bit.
    """
    _check_sources(sources)
    if len(gains_db) != len(sources):
        raise ShapeError(f"{len(gains_db)} gains for {len(sources)} sources")

    scaled = [s.samples * 10.0 ** (g / 20.0) for s, g in zip(sources, gains_db)]
    peak = np.max(np.abs(sum(scaled)))
    common = min(1.0, MIXTURE_PEAK / peak) if peak > 0 else 1.0

    stored = [samples * common for samples in scaled]
    mixture = stored[0].copy()
    for samples in stored[1:]:
        mixture += samples

    rate = sources[0].sample_rate
    return MixtureExample(
        mixture=AudioClip(mixture, rate),
        sources=tuple(AudioClip(samples, rate) for samples in stored),
        gains_db=tuple(float(g) for g in gains_db),
        seed=seed,
        labels=tuple(np.asarray(label, dtype=np.float32) for label in labels),
        split=split,
        example_id=example_id,
    )
