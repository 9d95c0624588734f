import re
import copy
from dataclasses import field, dataclass

import torch
import torch.nn as nn

from soundsep.semantic.embeddings import (
    EmbeddingKind,
    LogitsEmbedding,
    soft_or,
    assemble,
)
from soundsep.semantic.base import ExampleStoreABC
from soundsep.semantic.exceptions import LoadError, ConfigurationError
from soundsep.semantic.harness.config import ExperimentConfig
from soundsep.semantic.separator.tdcn import SeparatorOutput, MaskingSeparator
from soundsep.semantic.separator.iterative import (
    IterativeSeparator,
    second_stage_config,
)
from soundsep.semantic.classifier.network import SoundClassifier
from soundsep.semantic.classifier.training import set_trainable
from soundsep.semantic.harness.checkpoint import (
    Checkpoint,
    check_hash,
    slash_name,
    module_tensors,
    load_module_tensors,
    classifier_config_mapping,
    classifier_config_from_mapping,
)

_STAGE_KEY = re.compile(r"separator/stages/(\d+)/")


@dataclass(frozen=True, eq=False)
class SystemOutput:
    stages: list[SeparatorOutput]
    embeddings: dict[str, LogitsEmbedding] = field(default_factory=dict)

    @property
    def final(self) -> SeparatorOutput:
        return self.stages[-1]


def source_embeddings(
    classifier: SoundClassifier, sources: torch.Tensor
) -> list[LogitsEmbedding]:
    """One embedding per clean source of (..., N, T) `sources`."""
    logits = classifier(sources)
    return [
        LogitsEmbedding(logits[..., i, :, :], EmbeddingKind.Source, source_index=i)
        for i in range(sources.shape[-2])
    ]


class SeparationSystem(nn.Module):
    """Classifier(s) and separator stage(s) wired for one experiment setting.

    Only oracle settings accept `oracle_sources` in `forward`; every other
    setting sees nothing but the mixture.
    """

    def __init__(
        self,
        config: ExperimentConfig,
        num_classes: int,
        num_sources: int,
        sample_rate: int,
        classifier: SoundClassifier | None = None,
    ):
        super().__init__()
        spec = config.spec
        if not spec.trainable:
            raise ConfigurationError(f"{config.setting.value} has no trainable system")
        if spec.needs_classifier:
            if classifier is None:
                raise ConfigurationError(
                    f"{config.setting.value} needs a pretrained classifier checkpoint"
                )
            if classifier.num_classes != num_classes:
                raise ConfigurationError(
                    f"classifier has {classifier.num_classes} classes, data {num_classes}"
                )
            classifier = copy.deepcopy(classifier)
            set_trainable(classifier, config.freeze_policy())
        else:
            classifier = None

        self.config = config
        self.spec = spec
        self.num_sources = num_sources
        self.classifier = classifier

        stage1_config = config.separator_config(num_classes, num_sources, sample_rate)
        if spec.stages == 1:
            self.separator = MaskingSeparator(stage1_config)
        else:
            classifier2 = None
            stage2_channels = 0
            if spec.stage2_conditioned:
                stage2_channels = (num_sources + 1) * num_classes
                classifier2 = classifier
                if not config.tie_classifier_weights:
                    classifier2 = copy.deepcopy(classifier)
            self.separator = IterativeSeparator(
                MaskingSeparator(stage1_config, stage=1),
                MaskingSeparator(
                    second_stage_config(stage1_config, stage2_channels), stage=2
                ),
                classifier2=classifier2,
            )

    def frozen_snapshot(self) -> dict[str, torch.Tensor]:
        return {
            n: p.detach().clone()
            for n, p in self.named_parameters()
            if not p.requires_grad
        }

    def trainable_parameters(self) -> list[nn.Parameter]:
        return [p for p in self.parameters() if p.requires_grad]

    def tensor_name(self, key: str) -> str:
        """Checkpoint name of a state_dict key, stages under `separator/stage<k>/`."""
        name = slash_name(key)
        match = _STAGE_KEY.match(name)
        if match:
            return f"separator/stage{int(match[1]) + 1}/{name[match.end() :]}"
        if self.spec.stages == 1 and name.startswith("separator/"):
            return "separator/stage1/" + name.removeprefix("separator/")
        return name

    def stage1_embedding(
        self, mixture: torch.Tensor, oracle_sources: torch.Tensor | None
    ) -> LogitsEmbedding | None:
        kind = self.spec.stage1_embedding
        if kind is None:
            return None
        if kind is EmbeddingKind.Mixture:
            return self.classifier.embed(mixture)
        if oracle_sources is None:
            raise ConfigurationError(
                f"{self.config.setting.value} needs the clean sources"
            )
        sources = source_embeddings(self.classifier, oracle_sources)
        if kind is EmbeddingKind.All:
            return assemble(kind, self.classifier.embed(mixture), sources)
        return soft_or(sources)

    def forward(
        self, mixture: torch.Tensor, oracle_sources: torch.Tensor | None = None
    ) -> SystemOutput:
        if oracle_sources is not None and not self.spec.oracle:
            raise ConfigurationError(
                f"{self.config.setting.value} must not see the clean sources"
            )
        embedding = self.stage1_embedding(mixture, oracle_sources)
        if self.spec.stages == 1:
            out = self.separator(mixture, embedding)
            embeddings = {"stage1": embedding} if embedding is not None else {}
            return SystemOutput([out], embeddings)

        result = self.separator(mixture, stage1_embedding=embedding)
        return SystemOutput([result.stage1, result.stage2], dict(result.embeddings))


def store_geometry(store: ExampleStoreABC) -> tuple[int, int]:
    """(num_sources, sample_rate) shared by the examples of `store`."""
    ids = store.ids()
    if not ids:
        raise ConfigurationError("the example store is empty")
    example = store.example(ids[0])
    return example.source_count, example.mixture.sample_rate


def system_checkpoint(
    system: SeparationSystem | None,
    config: ExperimentConfig,
    num_classes: int,
    num_sources: int,
    sample_rate: int,
    step: int = 0,
) -> Checkpoint:
    """Every tensor of `system` plus what it takes to rebuild the wiring."""
    metadata = {
        "config": config.to_mapping(),
        "num_classes": num_classes,
        "num_sources": num_sources,
        "sample_rate": sample_rate,
    }
    tensors = {}
    if system is not None:
        if system.classifier is not None:
            metadata["classifier"] = classifier_config_mapping(system.classifier.config)
        tensors = dict(module_tensors(system, rename=system.tensor_name))
    return Checkpoint(config.config_hash(), step, tensors, metadata)


def restore_system(
    checkpoint: Checkpoint,
) -> tuple[ExperimentConfig, SeparationSystem | None]:
    """Rebuild the config and system a checkpoint was saved from."""
    meta = checkpoint.metadata
    try:
        config = ExperimentConfig.from_mapping(meta["config"])
        geometry = (
            int(meta["num_classes"]),
            int(meta["num_sources"]),
            int(meta["sample_rate"]),
        )
    except KeyError as e:
        raise LoadError(f"checkpoint metadata lacks {e}") from None
    check_hash(checkpoint, config.config_hash())
    if not config.spec.trainable:
        return config, None

    classifier = None
    if config.spec.needs_classifier:
        if "classifier" not in meta:
            raise LoadError("checkpoint of an embedding setting holds no classifier")
        classifier = SoundClassifier(classifier_config_from_mapping(meta["classifier"]))
    system = SeparationSystem(config, *geometry, classifier=classifier)
    load_module_tensors(system, checkpoint.tensors, rename=system.tensor_name)
    return config, system
