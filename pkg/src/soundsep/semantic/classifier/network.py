import math
from typing import Iterator
from dataclasses import field, dataclass

import torch
import torch.nn as nn

from soundsep.semantic.clip import AudioClip
from soundsep.semantic.embeddings import EmbeddingKind, LogitsEmbedding
from soundsep.semantic.frontend.mel import MelConfig, MelFrontend
from soundsep.semantic.exceptions import ConfigurationError

NUM_GROUPS = 10


@dataclass(frozen=True)
class ClassifierConfig:
    """Shape of the depthwise-separable patch classifier."""

    num_classes: int = 16
    """Number of output logits J."""

    widths: tuple[int, ...] = (16, 32, 32, 64, 64, 64, 64, 64, 64, 64)
    """Output channels of each separable group."""

    downsample_groups: tuple[int, ...] = (2, 4, 6)
    """1-based groups whose depthwise convolution has stride 2."""

    mel: MelConfig = field(default_factory=MelConfig)
    seed: int = 0
    """Seed of the parameter initialisation."""

    def validate(self):
        if len(self.widths) != NUM_GROUPS:
            raise ConfigurationError(
                f"the classifier has exactly {NUM_GROUPS} separable groups, "
                f"got {len(self.widths)} widths"
            )
        if self.num_classes < 1:
            raise ConfigurationError("the classifier needs at least one class")


class SeparableGroup(nn.Module):
    """Depthwise 3x3 convolution, pointwise 1x1 convolution with bias, ReLU."""

    def __init__(self, in_channels: int, out_channels: int, stride: int):
        super().__init__()
        self.depthwise = nn.Conv2d(
            in_channels,
            in_channels,
            kernel_size=3,
            stride=stride,
            padding=1,
            groups=in_channels,
            bias=False,
        )
        self.pointwise = nn.Conv2d(in_channels, out_channels, kernel_size=1, bias=True)
        self.activation = nn.ReLU()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.activation(self.pointwise(self.depthwise(x)))


def _fan_in_uniform(weight: torch.Tensor, generator: torch.Generator):
    fan_in = weight[0].numel()
    bound = math.sqrt(6.0 / fan_in)
    with torch.no_grad():
        weight.uniform_(-bound, bound, generator=generator)


class SoundClassifier(nn.Module):
    """MobileNet-style classifier emitting one logit vector per mel frame.

    Every frame's centred patch is classified independently, so the logits of a
    clip equal the row-wise application of the network to its patches.
    """

    def __init__(self, config: ClassifierConfig | None = None):
        super().__init__()
        self.config = config = config or ClassifierConfig()
        config.validate()
        self.frontend = MelFrontend(config.mel)

        in_channels = 1
        for index, width in enumerate(config.widths, start=1):
            stride = 2 if index in config.downsample_groups else 1
            self.add_module(
                self.group_name(index), SeparableGroup(in_channels, width, stride)
            )
            in_channels = width
        self.head = nn.Linear(in_channels, config.num_classes)
        self.reset_parameters()

    @staticmethod
    def group_name(index: int) -> str:
        return f"group{index:02d}"

    def reset_parameters(self):
        generator = torch.Generator().manual_seed(self.config.seed)
        for _, layer in self.layers():
            for name, param in layer.named_parameters():
                if name.endswith("bias"):
                    nn.init.zeros_(param)
                else:
                    _fan_in_uniform(param, generator)

    @property
    def num_classes(self) -> int:
        return self.config.num_classes

    def layers(self) -> Iterator[tuple[str, nn.Module]]:
        """Layer units from input to output: the separable groups, then the head."""
        for index in range(1, NUM_GROUPS + 1):
            name = self.group_name(index)
            yield name, getattr(self, name)
        yield "head", self.head

    def classify_patches(self, patches: torch.Tensor) -> torch.Tensor:
        """(..., patch_frames, mels) -> (..., J)."""
        lead = patches.shape[:-2]
        x = patches.reshape(-1, 1, *patches.shape[-2:])
        for name, layer in self.layers():
            if name == "head":
                break
            x = layer(x)
        pooled = x.mean(dim=(-2, -1))
        return self.head(pooled).reshape(*lead, self.num_classes)

    def forward(self, waveform: torch.Tensor) -> torch.Tensor:
        """(..., T) -> logits (..., F, J)."""
        patch_set = self.frontend(waveform)
        return self.classify_patches(patch_set.patches)

    def embed(
        self,
        waveform: torch.Tensor,
        kind: EmbeddingKind = EmbeddingKind.Mixture,
        source_index: int | None = None,
    ) -> LogitsEmbedding:
        return LogitsEmbedding(self(waveform), kind, source_index=source_index)

    def trainable_parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters() if p.requires_grad)


def classify(
    clip: AudioClip,
    params: SoundClassifier,
    kind: EmbeddingKind = EmbeddingKind.Mixture,
    source_index: int | None = None,
) -> LogitsEmbedding:
    """Per-frame logits (F, J) of one clip."""
    dtype = next(params.parameters()).dtype
    with torch.no_grad():
        return params.embed(clip.to_tensor(dtype), kind, source_index)
