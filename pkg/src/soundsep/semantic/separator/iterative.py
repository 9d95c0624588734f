from dataclasses import field, replace, dataclass

import torch
import torch.nn as nn

from soundsep.semantic.clip import AudioClip
from soundsep.semantic.embeddings import EmbeddingKind, LogitsEmbedding
from soundsep.semantic.exceptions import ConfigurationError
from soundsep.semantic.separator.tdcn import SeparatorOutput, MaskingSeparator
from soundsep.semantic.separator.config import SeparatorConfig
from soundsep.semantic.classifier.network import SoundClassifier


def second_stage_config(
    first: SeparatorConfig, embedding_channels: int
) -> SeparatorConfig:
    """Stage-2 geometry: the mixture plus N first-stage estimates as input."""
    return replace(
        first,
        input_streams=1 + first.num_sources,
        embedding_channels=embedding_channels,
        seed=first.seed + 1,
    )


@dataclass(frozen=True, eq=False)
class IterativeOutput:
    stage1: SeparatorOutput
    stage2: SeparatorOutput
    embeddings: dict[str, LogitsEmbedding] = field(default_factory=dict)
    """Conditioning used by each stage, keyed `stage1` / `stage2`."""


def classify_all(
    classifier: SoundClassifier, mixture: torch.Tensor, estimates: torch.Tensor
) -> LogitsEmbedding:
    """[V_m; V_s1; ..; V_sN] for (..., T) mixtures and (..., N, T) estimates."""
    signals = torch.cat([mixture.unsqueeze(-2), estimates], dim=-2)
    logits = classifier(signals)
    return LogitsEmbedding(
        logits.flatten(-3, -2), EmbeddingKind.All, source_count=estimates.shape[-2]
    )


class IterativeSeparator(nn.Module):
    """Two separator stages; the second sees the first stage's estimates.

    `classifier1` embeds the mixture for stage 1 and `classifier2` embeds the
    mixture and the stage-1 estimates for stage 2. With `tie_classifier_weights`
    both stages share `classifier1`.
    """

    def __init__(
        self,
        stage1: MaskingSeparator,
        stage2: MaskingSeparator,
        classifier1: SoundClassifier | None = None,
        classifier2: SoundClassifier | None = None,
        tie_classifier_weights: bool = False,
    ):
        super().__init__()
        num_sources = stage1.config.num_sources
        if stage2.config.input_streams != 1 + num_sources:
            raise ConfigurationError(
                f"stage 2 must take the mixture and {num_sources} estimates, "
                f"it takes {stage2.config.input_streams} inputs"
            )
        if stage2.config.num_sources != num_sources:
            raise ConfigurationError(
                "both stages must estimate the same number of sources"
            )
        if tie_classifier_weights:
            classifier2 = classifier1
        if stage2.config.conditioned and classifier2 is None:
            raise ConfigurationError("a conditioned second stage needs a classifier")

        stage1.stage, stage2.stage = 1, 2
        self.stages = nn.ModuleList([stage1, stage2])
        self.classifier1 = classifier1
        self.classifier2 = classifier2
        self.tie_classifier_weights = tie_classifier_weights

    @property
    def stage1(self) -> MaskingSeparator:
        return self.stages[0]

    @property
    def stage2(self) -> MaskingSeparator:
        return self.stages[1]

    def forward(
        self, mixture: torch.Tensor, stage1_embedding: LogitsEmbedding | None = None
    ) -> IterativeOutput:
        embeddings = {}
        if self.stage1.config.conditioned and stage1_embedding is None:
            if self.classifier1 is None:
                raise ConfigurationError(
                    "a conditioned first stage needs a classifier or an embedding"
                )
            stage1_embedding = self.classifier1.embed(mixture)
        if stage1_embedding is not None and self.stage1.config.conditioned:
            embeddings["stage1"] = stage1_embedding
        first = self.stage1(mixture, stage1_embedding)

        stage2_embedding = None
        if self.stage2.config.conditioned:
            stage2_embedding = classify_all(self.classifier2, mixture, first.estimates)
            embeddings["stage2"] = stage2_embedding
        second = self.stage2(mixture, stage2_embedding, extra_inputs=first.estimates)
        return IterativeOutput(first, second, embeddings)


def separate_iterative(
    mixture: AudioClip, params: IterativeSeparator
) -> IterativeOutput:
    """Inference on one clip with both stages and their classifiers."""
    dtype = next(params.parameters()).dtype
    with torch.no_grad():
        return params(mixture.to_tensor(dtype))
