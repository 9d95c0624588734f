import torch
import torch.nn as nn

from soundsep.semantic.embeddings import (
    LogitsEmbedding,
    ConditioningInput,
    time_pool,
    resample_to_frames,
)
from soundsep.semantic.exceptions import ShapeError, ConfigurationError
from soundsep.semantic.separator.config import (
    CombineMode,
    SigmoidKind,
    EmbeddingTiming,
    SeparatorConfig,
)

NORM_EPS = 1e-5


class TrainableSigmoid(nn.Module):
    """alpha / (1 + exp(beta * (x0 - x))), starting as the logistic function."""

    def __init__(self):
        super().__init__()
        self.alpha = nn.Parameter(torch.ones(()))
        self.beta = nn.Parameter(torch.ones(()))
        self.x0 = nn.Parameter(torch.zeros(()))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.alpha * torch.sigmoid(self.beta * (x - self.x0))


def make_squashing(kind: SigmoidKind) -> nn.Module:
    if kind is SigmoidKind.Trainable:
        return TrainableSigmoid()
    if kind is SigmoidKind.Fixed:
        return nn.Sigmoid()
    return nn.Identity()


class GlobalNorm(nn.Module):
    """Standardize over every (frame, channel) entry, then per-channel scale/shift.

    Inputs are (..., W, C). A constant input maps to zero.
    """

    def __init__(self, channels: int, eps: float = NORM_EPS):
        super().__init__()
        self.eps = eps
        self.scale = nn.Parameter(torch.ones(channels))
        self.shift = nn.Parameter(torch.zeros(channels))

    def standardize(self, x: torch.Tensor) -> torch.Tensor:
        mean = x.mean(dim=(-2, -1), keepdim=True)
        var = (x - mean).pow(2).mean(dim=(-2, -1), keepdim=True)
        return (x - mean) / var.clamp(min=self.eps**2).sqrt()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.standardize(x) * self.scale + self.shift


class ConditioningInjector(nn.Module):
    """Turn classifier logits into a (W, B') conditioning tensor for one site."""

    def __init__(self, config: SeparatorConfig):
        super().__init__()
        self.config = config
        self.squash = make_squashing(config.sigmoid_kind)
        self.projection = nn.Linear(
            config.embedding_channels, config.conditioning_channels
        )
        self.norm = GlobalNorm(config.conditioning_channels)

    def pre_projection(
        self, embedding: LogitsEmbedding, num_frames: int
    ) -> torch.Tensor:
        if not torch.all(torch.isfinite(embedding.values)):
            raise ShapeError("conditioning embedding is not finite")
        if self.config.embedding_timing is EmbeddingTiming.TimeInvariant:
            embedding = time_pool(embedding)
        resampled = resample_to_frames(embedding, num_frames)
        if resampled.num_channels != self.config.embedding_channels:
            raise ShapeError(
                f"embedding has {resampled.num_channels} channels, the injector "
                f"expects {self.config.embedding_channels}"
            )
        return self.squash(resampled.values)

    def forward(self, embedding: LogitsEmbedding, num_frames: int) -> ConditioningInput:
        values = self.norm(self.projection(self.pre_projection(embedding, num_frames)))
        return ConditioningInput(values, embedding.kind)


def inject_conditioning(
    embedding: LogitsEmbedding,
    site_params: ConditioningInjector,
    num_frames: int,
) -> ConditioningInput:
    return site_params(embedding, num_frames)


def combine(
    v_in: ConditioningInput, y_prev: torch.Tensor, mode: CombineMode | str
) -> torch.Tensor:
    """Merge conditioning (..., W, B') with activations (..., W, B) over channels."""
    mode = CombineMode(mode)
    if v_in.values.shape[-2] != y_prev.shape[-2]:
        raise ShapeError(
            f"conditioning has {v_in.values.shape[-2]} frames, activations {y_prev.shape[-2]}"
        )
    if mode is CombineMode.Gate:
        if v_in.values.shape[-1] != y_prev.shape[-1]:
            raise ConfigurationError(
                f"gating needs B == B', got B={y_prev.shape[-1]}, "
                f"B'={v_in.values.shape[-1]}"
            )
        return v_in.values * y_prev
    values = v_in.values.expand(*y_prev.shape[:-1], v_in.values.shape[-1])
    return torch.cat([values, y_prev], dim=-1)
