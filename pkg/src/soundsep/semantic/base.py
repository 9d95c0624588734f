import abc
import typing
from typing import Iterator, Sequence
from dataclasses import field, dataclass
from unittest.mock import Mock

import numpy as np

from soundsep.semantic.clip import Split, AudioClip
from soundsep.semantic.exceptions import LoadError
from soundsep.semantic.synthdata.mixing import MixtureExample
from soundsep.semantic.synthdata.dataset import DatasetManifest, load_example


class TrainerOptions(typing.TypedDict):
    log_every: int
    validate_every: int
    deterministic: bool
    workers: int
    progress: bool


def _default_trainer_args() -> TrainerOptions:
    return TrainerOptions(
        log_every=100,
        validate_every=2000,
        deterministic=True,
        workers=1,
        progress=False,
    )


def merge_trainer_options(options: TrainerOptions | dict | None) -> TrainerOptions:
    return TrainerOptions({**_default_trainer_args(), **(options or {})})


@dataclass
class ExampleStoreABC(abc.ABC):
    """Random access to mixture examples by id."""

    @property
    @abc.abstractmethod
    def num_classes(self) -> int: ...

    @abc.abstractmethod
    def ids(self, split: Split | None = None) -> list[str]:
        """Example ids of `split`, every split when None."""
        ...

    @abc.abstractmethod
    def example(self, example_id: str) -> MixtureExample: ...

    def examples(self, split: Split) -> Iterator[MixtureExample]:
        for example_id in self.ids(split):
            yield self.example(example_id)

    def labelled_sources(self, split: Split) -> Iterator[tuple[AudioClip, np.ndarray]]:
        for example in self.examples(split):
            yield from zip(example.sources, example.labels)


@dataclass
class ManifestStore(ExampleStoreABC):
    """Examples read from a rendered dataset on disk."""

    manifest: DatasetManifest

    @property
    def num_classes(self) -> int:
        return self.manifest.config.num_classes

    def ids(self, split: Split | None = None) -> list[str]:
        return self.manifest.ids(split)

    def example(self, example_id: str) -> MixtureExample:
        return load_example(self.manifest, example_id)


@dataclass
class MemoryStore(ExampleStoreABC):
    """Examples held in memory."""

    items: Sequence[MixtureExample]
    classes: int = field(kw_only=True)
    _by_id: dict[str, MixtureExample] = field(init=False, repr=False)

    def __post_init__(self):
        self._by_id = {}
        for i, example in enumerate(self.items):
            key = example.example_id or f"{example.split.value}-{i:06d}"
            if key in self._by_id:
                raise LoadError(f"duplicate example id {key!r}")
            self._by_id[key] = example

    @property
    def num_classes(self) -> int:
        return self.classes

    def ids(self, split: Split | None = None) -> list[str]:
        return [k for k, e in self._by_id.items() if split is None or e.split is split]

    def example(self, example_id: str) -> MixtureExample:
        try:
            return self._by_id[example_id]
        except KeyError:
            raise LoadError(f"no example {example_id!r} in memory") from None


_SOURCE_READS = frozenset({"sources", "source_matrix"})


class _TrackedExample:
    """Forwards to an example and reports mixture and source reads."""

    def __init__(self, example: MixtureExample, reads: Mock):
        self._example = example
        self._reads = reads

    def __getattr__(self, name: str):
        if name == "mixture":
            self._reads.mixture(self._example.example_id)
        elif name in _SOURCE_READS:
            self._reads.sources(self._example.example_id)
        return getattr(self._example, name)


@dataclass
class MockStore(MemoryStore):
    """In-memory store that records every example read, for testing purposes.

    `reads` is called with each example id; `reads.mixture` and `reads.sources`
    are called whenever the mixture or the clean sources of an example are used.
    """

    reads: Mock = field(init=False, default_factory=Mock)

    def example(self, example_id: str) -> MixtureExample:
        self.reads(example_id)
        example = super().example(example_id)
        return typing.cast(MixtureExample, _TrackedExample(example, self.reads))

    def reset(self):
        self.reads = Mock()
