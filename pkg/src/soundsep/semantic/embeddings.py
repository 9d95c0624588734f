"""Embedding algebra over classifier logits.

Embeddings are logit tensors shaped (..., F, J). Fusion and pooling happen in
probability space and come back through the logit, so every operation here maps
logits to logits.
"""

import enum
from typing import Sequence
from dataclasses import dataclass

import torch

from soundsep.semantic.exceptions import DomainError, ShapeError, ConfigurationError

PROB_EPS = 1e-7
"""Probabilities are clamped to [PROB_EPS, 1 - PROB_EPS] so logits stay finite."""


class EmbeddingKind(str, enum.Enum):
    Mixture = "mixture"
    Source = "source"
    All = "all"
    SoftOr = "soft_or"


@dataclass(frozen=True, eq=False)
class LogitsEmbedding:
    """Classifier logits of one clip (or a batch of clips), rows are frames."""

    values: torch.Tensor
    """(..., rows, J) logits."""

    kind: EmbeddingKind = EmbeddingKind.Mixture
    source_index: int | None = None
    """Which source produced a `Source` embedding."""

    source_count: int = 0
    """N for `All` embeddings, which hold N + 1 blocks ordered [mixture, s_1 .. s_N]."""

    channel_stacked: bool = False
    """`All` blocks sit side by side on the class axis instead of the row axis."""

    def __post_init__(self):
        if self.values.dim() < 2:
            raise ShapeError(
                f"embedding needs (frames, classes), got {tuple(self.values.shape)}"
            )
        if self.kind is EmbeddingKind.Source and self.source_index is None:
            raise ShapeError("a source embedding needs its source index")
        if self.kind is EmbeddingKind.All:
            if self.source_count < 1:
                raise ShapeError("an `all` embedding needs at least one source block")
            axis = -1 if self.channel_stacked else -2
            if self.values.shape[axis] % self.num_blocks != 0:
                raise ShapeError(
                    f"{self.values.shape[axis]} is not divisible into "
                    f"{self.num_blocks} blocks"
                )

    @property
    def num_blocks(self) -> int:
        return self.source_count + 1 if self.kind is EmbeddingKind.All else 1

    @property
    def num_rows(self) -> int:
        return self.values.shape[-2]

    @property
    def num_frames(self) -> int:
        """Frames per block."""
        if self.channel_stacked:
            return self.num_rows
        return self.num_rows // self.num_blocks

    @property
    def num_classes(self) -> int:
        """Classes per block."""
        if self.channel_stacked:
            return self.values.shape[-1] // self.num_blocks
        return self.values.shape[-1]

    @property
    def num_channels(self) -> int:
        return self.values.shape[-1]

    def blocks(self) -> list[torch.Tensor]:
        """Per-block tensors shaped (..., F, J)."""
        if self.channel_stacked:
            return list(torch.split(self.values, self.num_classes, dim=-1))
        return list(torch.split(self.values, self.num_frames, dim=-2))

    def replace(self, values: torch.Tensor, **changes) -> "LogitsEmbedding":
        fields = dict(
            kind=self.kind,
            source_index=self.source_index,
            source_count=self.source_count,
            channel_stacked=self.channel_stacked,
        )
        fields.update(changes)
        return LogitsEmbedding(values, **fields)

    def detach(self) -> "LogitsEmbedding":
        return self.replace(self.values.detach())


@dataclass(frozen=True, eq=False)
class ProbTensor:
    """Class probabilities; carries the layout of the embedding it came from."""

    values: torch.Tensor
    source: LogitsEmbedding | None = None


@dataclass(frozen=True, eq=False)
class ConditioningInput:
    """Projected and normalized conditioning shaped (..., W, B')."""

    values: torch.Tensor
    provenance: EmbeddingKind

    def __post_init__(self):
        if not torch.all(torch.isfinite(self.values)):
            raise DomainError("conditioning input is not finite")

    @property
    def num_frames(self) -> int:
        return self.values.shape[-2]


def to_prob(embedding: LogitsEmbedding) -> ProbTensor:
    probs = torch.sigmoid(embedding.values).clamp(PROB_EPS, 1.0 - PROB_EPS)
    return ProbTensor(probs, source=embedding)


def _logit(probs: torch.Tensor) -> torch.Tensor:
    if torch.any(probs <= 0.0) or torch.any(probs >= 1.0):
        raise DomainError("probabilities must lie strictly inside (0, 1)")
    return torch.log(probs) - torch.log1p(-probs)


def to_logits(prob: ProbTensor) -> LogitsEmbedding:
    values = _logit(prob.values)
    if prob.source is None:
        return LogitsEmbedding(values)
    return prob.source.replace(values)


def _check_same_shape(embeddings: Sequence[LogitsEmbedding]):
    first = embeddings[0].values.shape
    for emb in embeddings[1:]:
        if emb.values.shape != first:
            raise ShapeError(
                f"embeddings disagree in shape: {tuple(first)} vs {tuple(emb.values.shape)}"
            )


def soft_or_probs(probs: Sequence[torch.Tensor]) -> torch.Tensor:
    """1 - prod_i (1 - P_i), clamped."""
    complement = torch.ones_like(probs[0])
    for p in probs:
        complement = complement * (1.0 - p)
    return (1.0 - complement).clamp(PROB_EPS, 1.0 - PROB_EPS)


def soft_or(source_embeddings: Sequence[LogitsEmbedding]) -> LogitsEmbedding:
    """Probability that at least one source holds each class, as logits."""
    if len(source_embeddings) == 0:
        raise ShapeError("soft-OR needs at least one embedding")
    _check_same_shape(source_embeddings)
    fused = soft_or_probs([to_prob(e).values for e in source_embeddings])
    return LogitsEmbedding(_logit(fused), EmbeddingKind.SoftOr)


def assemble(
    kind: EmbeddingKind | str,
    mixture_emb: LogitsEmbedding,
    source_embs: Sequence[LogitsEmbedding] | None = None,
) -> LogitsEmbedding:
    """Build the mixture, all or soft-OR embedding fed to the separator."""
    kind = EmbeddingKind(kind)
    if kind is EmbeddingKind.Mixture:
        return mixture_emb.replace(mixture_emb.values, kind=EmbeddingKind.Mixture)
    if not source_embs:
        raise ConfigurationError(f"the {kind.value} embedding needs the sources")

    if kind is EmbeddingKind.SoftOr:
        return soft_or(source_embs)
    if kind is EmbeddingKind.All:
        _check_same_shape([mixture_emb, *source_embs])
        values = torch.cat(
            [mixture_emb.values, *(e.values for e in source_embs)], dim=-2
        )
        return LogitsEmbedding(values, EmbeddingKind.All, source_count=len(source_embs))
    raise ConfigurationError(f"cannot assemble a {kind.value} embedding")


def resample_indices(num_frames: int, num_out: int) -> torch.Tensor:
    """Row `w` of the output repeats input row floor(w * F / W)."""
    if num_out < 1:
        raise ShapeError(f"cannot resample to {num_out} frames")
    return torch.arange(num_out) * num_frames // num_out


def resample_to_frames(embedding: LogitsEmbedding, num_out: int) -> LogitsEmbedding:
    """Repeat frames to a W-row grid; `All` blocks end up stacked on the class axis."""
    index = resample_indices(embedding.num_frames, num_out).to(embedding.values.device)
    blocks = [block.index_select(-2, index) for block in embedding.blocks()]
    if len(blocks) == 1:
        return embedding.replace(blocks[0])
    return embedding.replace(torch.cat(blocks, dim=-1), channel_stacked=True)


def time_pool(embedding: LogitsEmbedding) -> LogitsEmbedding:
    """Mean over frames in probability space; each block keeps a single row."""
    pooled = [
        to_prob(embedding.replace(block)).values.mean(dim=-2, keepdim=True)
        for block in embedding.blocks()
    ]
    axis = -1 if embedding.channel_stacked else -2
    values = _logit(torch.cat(pooled, dim=axis))
    return embedding.replace(values)
