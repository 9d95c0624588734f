import json
import logging
from typing import Any
from pathlib import Path
from functools import partial
from dataclasses import field, asdict, dataclass

import numpy as np
import tomlkit
import soundfile as sf
from tqdm.contrib.concurrent import process_map
from typing_extensions import Self

from soundsep.semantic.clip import (
    DEFAULT_DURATION,
    DEFAULT_SAMPLE_RATE,
    Split,
    AudioClip,
)
from soundsep.semantic.exceptions import LoadError, ConfigurationError
from soundsep.semantic.synthdata.mixing import MixtureExample, make_mixture
from soundsep.semantic.synthdata.classes import (
    SoundClassSpec,
    generate_source,
    default_class_specs,
)

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.jsonl"
CONFIG_NAME = "dataset.toml"
PCM16_SCALE = 32768.0

_SPLIT_CODES = {Split.Train: 0, Split.Validation: 1, Split.Test: 2}


@dataclass(frozen=True)
class DatasetConfig:
    """Size and randomness of a synthetic mixture dataset."""

    num_classes: int = 16
    """Number of synthetic sound classes J."""

    num_sources: int = 2
    """Sources per mixture N, each drawn from a distinct class."""

    train: int = 2000
    validation: int = 400
    test: int = 200

    seed: int = 0
    """Global seed; every clip is a pure function of it."""

    sample_rate: int = DEFAULT_SAMPLE_RATE
    duration: float = DEFAULT_DURATION

    gain_range_db: tuple[float, float] = (-5.0, 5.0)
    """Relative gains are drawn uniformly from this interval."""

    workers: int = 1
    """Processes used for rendering; the output does not depend on it."""

    def counts(self) -> dict[Split, int]:
        return {
            Split.Train: self.train,
            Split.Validation: self.validation,
            Split.Test: self.test,
        }

    def class_specs(self) -> list[SoundClassSpec]:
        return default_class_specs(self.num_classes, self.sample_rate, self.duration)

    def validate(self):
        if self.num_classes < 2:
            raise ConfigurationError(
                f"need at least 2 classes to draw distinct sources, got {self.num_classes}"
            )
        if self.num_sources < 2:
            raise ConfigurationError(f"need at least 2 sources, got {self.num_sources}")
        if self.num_sources > self.num_classes:
            raise ConfigurationError(
                f"cannot draw {self.num_sources} distinct classes out of "
                f"{self.num_classes}"
            )
        for split, count in self.counts().items():
            if count < 1:
                raise ConfigurationError(
                    f"split {split.value} needs at least 1 example"
                )
        if self.seed < 0:
            raise ConfigurationError(
                f"global seed must be nonnegative, got {self.seed}"
            )
        lo, hi = self.gain_range_db
        if hi < lo:
            raise ConfigurationError(f"empty gain range {self.gain_range_db}")

    def to_toml(self) -> str:
        doc = tomlkit.document()
        for key, value in asdict(self).items():
            doc[key] = list(value) if isinstance(value, tuple) else value
        return tomlkit.dumps(doc)

    @classmethod
    def from_mapping(cls, values: dict[str, Any]) -> "DatasetConfig":
        known = cls.__dataclass_fields__.keys()
        unknown = set(values) - set(known)
        if unknown:
            raise ConfigurationError(f"unknown dataset keys: {sorted(unknown)}")
        values = dict(values)
        if "gain_range_db" in values:
            values["gain_range_db"] = tuple(float(v) for v in values["gain_range_db"])
        return cls(**values)


@dataclass(frozen=True)
class ManifestEntry:
    """One manifest record; paths are relative to the manifest directory."""

    id: str
    split: Split
    mixture_path: str
    source_paths: tuple[str, ...]
    labels: tuple[tuple[int, ...], ...]
    gains_db: tuple[float, ...]
    seed: int

    def to_json(self) -> str:
        record = {
            "id": self.id,
            "split": self.split.value,
            "mixture_path": self.mixture_path,
            "source_paths": list(self.source_paths),
            "labels": [list(label) for label in self.labels],
            "gains_db": list(self.gains_db),
            "seed": self.seed,
        }
        return json.dumps(record, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> Self:
        try:
            record = json.loads(line)
            return cls(
                id=record["id"],
                split=Split(record["split"]),
                mixture_path=record["mixture_path"],
                source_paths=tuple(record["source_paths"]),
                labels=tuple(tuple(int(v) for v in lab) for lab in record["labels"]),
                gains_db=tuple(float(g) for g in record["gains_db"]),
                seed=int(record["seed"]),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise LoadError(f"corrupt manifest line {line[:60]!r}: {e}") from e


@dataclass
class DatasetManifest:
    """Index of a rendered dataset."""

    root: Path
    config: DatasetConfig
    entries: list[ManifestEntry] = field(default_factory=list)
    _by_id: dict[str, ManifestEntry] = field(init=False, repr=False)

    def __post_init__(self):
        self._by_id = {}
        for entry in self.entries:
            if entry.id in self._by_id:
                raise LoadError(f"duplicate example id {entry.id!r}")
            self._by_id[entry.id] = entry

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, example_id: str) -> bool:
        return example_id in self._by_id

    def entry(self, example_id: str) -> ManifestEntry:
        try:
            return self._by_id[example_id]
        except KeyError:
            raise LoadError(f"no example {example_id!r} in {self.root}") from None

    def ids(self, split: Split | None = None) -> list[str]:
        return [e.id for e in self.entries if split is None or e.split is split]

    def write(self):
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / CONFIG_NAME).write_text(self.config.to_toml())
        with open(self.root / MANIFEST_NAME, "w") as f:
            for entry in self.entries:
                f.write(entry.to_json() + "\n")

    @classmethod
    def load(cls, root: str | Path) -> "DatasetManifest":
        root = Path(root)
        try:
            config = DatasetConfig.from_mapping(
                tomlkit.parse((root / CONFIG_NAME).read_text()).unwrap()
            )
            lines = (root / MANIFEST_NAME).read_text().splitlines()
        except FileNotFoundError as e:
            raise LoadError(f"no dataset at {root}: {e}") from e

        entries = [ManifestEntry.from_json(line) for line in lines if line.strip()]
        for entry in entries:
            for path in (entry.mixture_path, *entry.source_paths):
                if not (root / path).is_file():
                    raise LoadError(f"example {entry.id!r} references missing {path}")
        return cls(root=root, config=config, entries=entries)


def write_wav(path: Path, clip: AudioClip):
    """Write `clip` as 16-bit PCM; quantization rounds to the nearest step."""
    quantized = np.clip(np.round(clip.samples * PCM16_SCALE), -32768, 32767)
    sf.write(path, quantized.astype(np.int16), clip.sample_rate, subtype="PCM_16")


def read_wav(path: Path) -> AudioClip:
    try:
        data, rate = sf.read(path, dtype="int16", always_2d=False)
    except (sf.LibsndfileError, RuntimeError, OSError) as e:
        raise LoadError(f"cannot decode {path}: {e}") from e
    if data.ndim != 1:
        raise LoadError(f"{path} is not mono")
    return AudioClip(data.astype(np.float64) / PCM16_SCALE, rate)


def example_seed(config: DatasetConfig, split: Split, index: int) -> int:
    """Seed of one example; unique per (split, index) so splits never share one."""
    return (config.seed << 48) | (_SPLIT_CODES[split] << 40) | (index << 8)


def render_example(config: DatasetConfig, split: Split, index: int) -> MixtureExample:
    """Draw classes and gains for one example and render it in memory."""
    seed = example_seed(config, split, index)
    rng = np.random.default_rng([config.seed, _SPLIT_CODES[split], index])
    specs = config.class_specs()

    classes = rng.choice(config.num_classes, size=config.num_sources, replace=False)
    gains = rng.uniform(*config.gain_range_db, size=config.num_sources)
    sources = [
        generate_source(specs[int(c)], seed + i) for i, c in enumerate(classes)
    ]
    labels = []
    for c in classes:
        label = np.zeros(config.num_classes, dtype=np.float32)
        label[int(c)] = 1.0
        labels.append(label)
    return make_mixture(
        sources,
        [float(g) for g in gains],
        seed,
        labels=labels,
        split=split,
        example_id=f"{split.value}-{index:06d}",
    )


def _render_and_write(
    task: tuple[Split, int], config: DatasetConfig, root: Path
) -> ManifestEntry:
    split, index = task
    example = render_example(config, split, index)
    folder = Path(split.value)
    (root / folder).mkdir(parents=True, exist_ok=True)

    mixture_path = folder / f"{example.example_id}_mix.wav"
    write_wav(root / mixture_path, example.mixture)
    source_paths = []
    for i, source in enumerate(example.sources):
        path = folder / f"{example.example_id}_s{i}.wav"
        write_wav(root / path, source)
        source_paths.append(str(path))

    return ManifestEntry(
        id=example.example_id,
        split=split,
        mixture_path=str(mixture_path),
        source_paths=tuple(source_paths),
        labels=tuple(
            tuple(int(v) for v in np.flatnonzero(label)) for label in example.labels
        ),
        gains_db=example.gains_db,
        seed=example.seed,
    )


def build_dataset(config: DatasetConfig, out_dir: str | Path) -> DatasetManifest:
    """Render every split of `config` under `out_dir` and write the manifest."""
    config.validate()
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)

    tasks = [
        (split, index)
        for split, count in config.counts().items()
        for index in range(count)
    ]
    logger.info("rendering %d examples into %s", len(tasks), root)
    render = partial(_render_and_write, config=config, root=root)
    if config.workers > 1:
        entries = process_map(render, tasks, max_workers=config.workers, chunksize=8)
    else:
        entries = [render(task) for task in tasks]

    manifest = DatasetManifest(root=root, config=config, entries=list(entries))
    manifest.write()
    return manifest


def _labels_to_multi_hot(labels: tuple[tuple[int, ...], ...], num_classes: int):
    out = []
    for active in labels:
        label = np.zeros(num_classes, dtype=np.float32)
        label[list(active)] = 1.0
        out.append(label)
    return out


def load_example(manifest: DatasetManifest, example_id: str) -> MixtureExample:
    entry = manifest.entry(example_id)
    mixture = read_wav(manifest.root / entry.mixture_path)
    sources = tuple(read_wav(manifest.root / p) for p in entry.source_paths)
    return MixtureExample(
        mixture=mixture,
        sources=sources,
        gains_db=entry.gains_db,
        seed=entry.seed,
        labels=tuple(_labels_to_multi_hot(entry.labels, manifest.config.num_classes)),
        split=entry.split,
        example_id=entry.id,
    )
