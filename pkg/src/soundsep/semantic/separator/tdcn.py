from dataclasses import field, dataclass

import torch
import torch.nn as nn

from soundsep.semantic.clip import DEFAULT_SAMPLE_RATE, AudioClip
from soundsep.semantic.embeddings import LogitsEmbedding, ConditioningInput
from soundsep.semantic.exceptions import ShapeError, ConfigurationError
from soundsep.semantic.frontend.basis import BasisCoeffs, make_basis
from soundsep.semantic.separator.config import SeparatorConfig
from soundsep.semantic.separator.conditioning import (
    GlobalNorm,
    ConditioningInjector,
    combine,
)

RESIDUAL_DECAY = 0.9
"""Block i starts with residual scale RESIDUAL_DECAY ** i."""


@dataclass(frozen=True, eq=False)
class BlockState:
    """Activations y_0 (bottleneck output) .. y_K and the residual set of each block."""

    activations: list[torch.Tensor]
    residual_sets: list[tuple[int, ...]]


@dataclass(frozen=True, eq=False)
class SeparatorOutput:
    masks: torch.Tensor
    """(..., N, W, C) values in [0, 1]."""

    estimates: torch.Tensor
    """(..., N, T) waveforms, T equal to the mixture length."""

    stage: int = 1
    sample_rate: int = DEFAULT_SAMPLE_RATE
    conditioning: dict[str, ConditioningInput] = field(default_factory=dict)
    state: BlockState | None = None

    @property
    def num_sources(self) -> int:
        return self.estimates.shape[-2]

    def clips(self) -> list[AudioClip]:
        if self.estimates.dim() != 2:
            raise ShapeError("clips are only defined for an unbatched output")
        return [AudioClip.from_tensor(e, self.sample_rate) for e in self.estimates]


class DilatedBlock(nn.Module):
    """1x1 expansion, PReLU, norm, dilated depthwise conv, PReLU, norm, then 1x1
    residual and skip projections. Inputs are (..., W, M)."""

    def __init__(self, in_channels: int, config: SeparatorConfig, dilation: int):
        super().__init__()
        hidden = config.hidden
        self.expand = nn.Linear(in_channels, hidden)
        self.activation1 = nn.PReLU()
        self.norm1 = GlobalNorm(hidden)
        self.depthwise = nn.Conv1d(
            hidden,
            hidden,
            config.kernel_size,
            padding=dilation * (config.kernel_size - 1) // 2,
            dilation=dilation,
            groups=hidden,
        )
        self.activation2 = nn.PReLU()
        self.norm2 = GlobalNorm(hidden)
        self.residual = nn.Linear(hidden, config.bottleneck)
        self.skip = nn.Linear(hidden, config.bottleneck)

    def forward(self, u: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        h = self.norm1(self.activation1(self.expand(u)))
        h = self.depthwise(h.transpose(-1, -2)).transpose(-1, -2)
        h = self.norm2(self.activation2(h))
        return self.residual(h), self.skip(h)


class MaskingSeparator(nn.Module):
    """Stacked dilated blocks predicting one sigmoid mask per source.

    Parameters are drawn under `config.seed`, so two separators built from the same
    config start identical.
    """

    def __init__(self, config: SeparatorConfig, stage: int = 1):
        super().__init__()
        config.validate()
        self.config = config
        self.stage = stage

        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(config.seed)
            self.basis = make_basis(config.basis)
            self.input_norm = GlobalNorm(config.input_channels)
            self.bottleneck = nn.Linear(config.input_channels, config.bottleneck)
            self.injectors = nn.ModuleDict(
                {
                    self.site_name(i): ConditioningInjector(config)
                    for i in range(config.num_blocks)
                    if config.injects_at(i)
                }
            )
            self.blocks = nn.ModuleList(
                DilatedBlock(config.block_input_channels(i), config, dilation)
                for i, dilation in enumerate(config.dilations)
            )
            self.residual_scales = nn.Parameter(
                torch.tensor([RESIDUAL_DECAY**i for i in range(config.num_blocks)])
            )
            self.mask_activation = nn.PReLU()
            self.mask_head = nn.Linear(
                config.bottleneck, config.num_sources * config.basis.num_coeffs
            )

    @staticmethod
    def site_name(index: int) -> str:
        return f"block{index + 1:02d}"

    def conditioning_parameters(self) -> list[nn.Parameter]:
        return list(self.injectors.parameters())

    def analyze_inputs(
        self, mixture: torch.Tensor, extra_inputs: torch.Tensor | None
    ) -> tuple[BasisCoeffs, torch.Tensor]:
        """Mixture coefficients and the (..., W, C * streams) input features."""
        coeffs = self.basis.encode(mixture)
        streams = [coeffs.values]
        expected = self.config.input_streams - 1
        if expected:
            if extra_inputs is None or extra_inputs.shape[-2] != expected:
                raise ConfigurationError(
                    f"stage {self.stage} expects {expected} estimate inputs besides the mixture"
                )
            extra = self.basis.encode(extra_inputs).values
            streams.extend(extra.unbind(-3))
        elif extra_inputs is not None:
            raise ConfigurationError(
                f"stage {self.stage} takes only the mixture as input"
            )
        return coeffs, torch.cat(streams, dim=-1)

    def forward(
        self,
        mixture: torch.Tensor,
        embedding: LogitsEmbedding | None = None,
        extra_inputs: torch.Tensor | None = None,
        keep_state: bool = False,
    ) -> SeparatorOutput:
        """Separate (..., T) mixtures; `extra_inputs` are (..., N, T) estimates."""
        config = self.config
        if not config.conditioned:
            embedding = None
        elif embedding is None:
            raise ConfigurationError(
                "this separator is conditioned and needs an embedding"
            )

        coeffs, features = self.analyze_inputs(mixture, extra_inputs)
        num_frames = coeffs.num_frames
        activations = [self.bottleneck(self.input_norm(features))]
        residual_sets = []
        conditioning: dict[str, ConditioningInput] = {}
        skip_sum = torch.zeros_like(activations[0])

        for i, block in enumerate(self.blocks):
            sources = config.residual_sources(i)
            residual_sets.append(sources)
            x = activations[-1]
            for j in sources:
                x = x + activations[j]
            u = x
            if config.injects_at(i):
                name = self.site_name(i)
                conditioning[name] = self.injectors[name](embedding, num_frames)
                u = combine(conditioning[name], x, config.combine)
            res, skip = block(u)
            activations.append(res + self.residual_scales[i] * x)
            skip_sum = skip_sum + skip

        logits = self.mask_head(self.mask_activation(skip_sum))
        masks = torch.sigmoid(logits).unflatten(
            -1, (config.num_sources, config.basis.num_coeffs)
        )
        masks = masks.movedim(-2, -3)
        masked = BasisCoeffs(
            masks * coeffs.values.unsqueeze(-3),
            coeffs.phase.unsqueeze(-3) if coeffs.phase is not None else None,
            coeffs.length,
            coeffs.config,
        )
        return SeparatorOutput(
            masks=masks,
            estimates=self.basis.decode(masked),
            stage=self.stage,
            sample_rate=config.basis.sample_rate,
            conditioning=conditioning,
            state=BlockState(activations, residual_sets) if keep_state else None,
        )


def separate(
    mixture: AudioClip,
    embedding: LogitsEmbedding | None,
    params: MaskingSeparator,
) -> SeparatorOutput:
    """Inference on one clip."""
    dtype = next(params.parameters()).dtype
    with torch.no_grad():
        return params(mixture.to_tensor(dtype), embedding)
