"""Binary checkpoint container.

Layout: an 8-byte little-endian header length, the UTF-8 JSON header, then every
tensor as little-endian float32 in header order.
"""

import os
import json
import struct
import hashlib
import logging
import dataclasses
from typing import Any, Callable, Iterator
from pathlib import Path
from dataclasses import field, dataclass

import numpy as np
import torch
import torch.nn as nn
from typing_extensions import Self

from soundsep.semantic.exceptions import LoadError, ShapeError, ConfigurationError
from soundsep.semantic.frontend.mel import MelConfig
from soundsep.semantic.classifier.network import SoundClassifier, ClassifierConfig

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
CLASSIFIER_PREFIX = "classifier"
_LENGTH = struct.Struct("<Q")
_FLOAT = np.dtype("<f4")


@dataclass(eq=False)
class Checkpoint:
    config_hash: str
    step: int
    tensors: dict[str, np.ndarray] = field(default_factory=dict)
    """Named float32 arrays, in payload order."""

    metadata: dict[str, Any] = field(default_factory=dict)
    """Free-form JSON stored in the header (the config mapping, scores)."""

    def header(self) -> dict[str, Any]:
        index, offset = [], 0
        for name, array in self.tensors.items():
            index.append({"name": name, "shape": list(array.shape), "offset": offset})
            offset += array.size * _FLOAT.itemsize
        return {
            "format_version": FORMAT_VERSION,
            "config_hash": self.config_hash,
            "step": self.step,
            "tensors": index,
            "metadata": self.metadata,
        }

    def to_bytes(self) -> bytes:
        header = json.dumps(
            self.header(), sort_keys=True, separators=(",", ":")
        ).encode()
        payload = b"".join(
            np.ascontiguousarray(a, dtype=_FLOAT).tobytes()
            for a in self.tensors.values()
        )
        return _LENGTH.pack(len(header)) + header + payload

    @classmethod
    def from_bytes(cls, data: bytes) -> Self:
        if len(data) < _LENGTH.size:
            raise LoadError("checkpoint is truncated")
        (length,) = _LENGTH.unpack_from(data)
        start = _LENGTH.size + length
        if start > len(data):
            raise LoadError("checkpoint header runs past the end of the file")
        try:
            header = json.loads(data[_LENGTH.size : start].decode())
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise LoadError(f"corrupt checkpoint header: {e}") from e
        if header.get("format_version") != FORMAT_VERSION:
            raise LoadError(
                f"unsupported checkpoint format {header.get('format_version')}"
            )

        payload = memoryview(data)[start:]
        tensors = {}
        for entry in header["tensors"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape, dtype=np.int64))
            begin, end = entry["offset"], entry["offset"] + count * _FLOAT.itemsize
            if begin < 0 or end > len(payload):
                raise LoadError(f"tensor {entry['name']} lies outside the payload")
            tensors[entry["name"]] = (
                np.frombuffer(payload[begin:end], dtype=_FLOAT).reshape(shape).copy()
            )
        return cls(
            config_hash=header["config_hash"],
            step=int(header["step"]),
            tensors=tensors,
            metadata=header.get("metadata", {}),
        )

    def save(self, path: str | Path):
        """Write atomically through a temporary sibling file."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_bytes(self.to_bytes())
        os.replace(tmp, path)
        logger.info(
            "saved checkpoint %s (step %d, %d tensors)",
            path,
            self.step,
            len(self.tensors),
        )

    @classmethod
    def load(cls, path: str | Path) -> Self:
        try:
            data = Path(path).read_bytes()
        except OSError as e:
            raise LoadError(f"cannot read checkpoint {path}: {e}") from e
        return cls.from_bytes(data)

    def with_prefix(self, prefix: str) -> dict[str, np.ndarray]:
        """Tensors under `prefix/`, with the prefix stripped."""
        head = prefix.rstrip("/") + "/"
        return {
            k[len(head) :]: v for k, v in self.tensors.items() if k.startswith(head)
        }


def slash_name(key: str) -> str:
    return key.replace(".", "/")


def module_tensors(
    module: nn.Module, prefix: str = "", rename: Callable[[str], str] = slash_name
) -> Iterator[tuple[str, np.ndarray]]:
    """`prefix/<name>` for every tensor of `module`, named by `rename(key)`."""
    for key, value in module.state_dict().items():
        name = rename(key)
        array = value.detach().cpu().numpy().copy()
        yield (f"{prefix}/{name}" if prefix else name), array


def load_module_tensors(
    module: nn.Module,
    tensors: dict[str, np.ndarray],
    rename: Callable[[str], str] = slash_name,
):
    """Copy `tensors` (keys relative to `module`, named by `rename`) into `module`."""
    state = module.state_dict()
    expected = {rename(key): key for key in state}
    missing = set(expected) - set(tensors)
    unexpected = set(tensors) - set(expected)
    if missing or unexpected:
        raise ShapeError(
            f"checkpoint does not match the model: missing {sorted(missing)[:5]}, "
            f"unexpected {sorted(unexpected)[:5]}"
        )
    with torch.no_grad():
        for name, key in expected.items():
            target = state[key]
            array = tensors[name]
            if tuple(array.shape) != tuple(target.shape):
                raise ShapeError(
                    f"{name} has shape {tuple(array.shape)}, the model expects "
                    f"{tuple(target.shape)}"
                )
            target.copy_(torch.from_numpy(array).to(target.dtype))


def check_hash(checkpoint: Checkpoint, expected: str):
    if checkpoint.config_hash != expected:
        raise ConfigurationError(
            f"checkpoint was trained with config {checkpoint.config_hash}, "
            f"the current wiring is {expected}"
        )


def classifier_config_mapping(config: ClassifierConfig) -> dict[str, Any]:
    values = dataclasses.asdict(config)
    values["widths"] = list(config.widths)
    values["downsample_groups"] = list(config.downsample_groups)
    return values


def classifier_config_from_mapping(values: dict[str, Any]) -> ClassifierConfig:
    try:
        return ClassifierConfig(
            num_classes=int(values["num_classes"]),
            widths=tuple(values["widths"]),
            downsample_groups=tuple(values["downsample_groups"]),
            mel=MelConfig(**values["mel"]),
            seed=int(values["seed"]),
        )
    except (KeyError, TypeError) as e:
        raise LoadError(f"checkpoint holds no usable classifier config: {e}") from e


def classifier_checkpoint(
    classifier: SoundClassifier, step: int = 0, **metadata: Any
) -> Checkpoint:
    """Pretrained classifier checkpoint; tensors are `classifier/<layer>/<tensor>`."""
    config = classifier_config_mapping(classifier.config)
    payload = json.dumps(config, sort_keys=True).encode()
    digest = hashlib.sha256(payload).hexdigest()[:16]
    return Checkpoint(
        config_hash=digest,
        step=step,
        tensors=dict(module_tensors(classifier, CLASSIFIER_PREFIX)),
        metadata={"classifier": config, **metadata},
    )


def save_classifier(classifier: SoundClassifier, path: str | Path, **metadata: Any):
    classifier_checkpoint(classifier, **metadata).save(path)


def load_classifier(path: str | Path) -> SoundClassifier:
    checkpoint = Checkpoint.load(path)
    if "classifier" not in checkpoint.metadata:
        raise LoadError(f"{path} is not a classifier checkpoint")
    config = classifier_config_from_mapping(checkpoint.metadata["classifier"])
    classifier = SoundClassifier(config)
    load_module_tensors(classifier, checkpoint.with_prefix(CLASSIFIER_PREFIX))
    return classifier
