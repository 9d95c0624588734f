import enum
from dataclasses import field, dataclass

from soundsep.semantic.exceptions import ConfigurationError
from soundsep.semantic.frontend.basis import BasisConfig


class SigmoidKind(str, enum.Enum):
    """Squashing applied to embedding logits before projection."""

    NoneRaw = "none_raw"
    Fixed = "fixed"
    Trainable = "trainable"


class CombineMode(str, enum.Enum):
    Concat = "concat"
    Gate = "gate"


class InjectionSites(str, enum.Enum):
    FirstLayerOnly = "first_layer_only"
    AllBlocks = "all_blocks"


class EmbeddingTiming(str, enum.Enum):
    TimeVarying = "time_varying"
    TimeInvariant = "time_invariant"


@dataclass(frozen=True)
class SeparatorConfig:
    """Geometry of one masking separator stage and of its conditioning path."""

    num_sources: int = 2
    """N, one mask per source."""

    num_blocks: int = 8
    """Dilated blocks; block i uses dilation 2**i."""

    bottleneck: int = 128
    """B, channels carried between blocks."""

    hidden: int = 256
    """Channels inside each dilated block."""

    conditioning_channels: int = 128
    """B', channels of the projected conditioning input."""

    embedding_channels: int = 0
    """J', channels of the embedding fed to the injectors; 0 disables conditioning."""

    kernel_size: int = 3
    residual_stride: int = 4
    """Block i also sums the output of block i - residual_stride; 0 disables it."""

    input_streams: int = 1
    """Signals analysed as input: the mixture, plus N estimates in a second stage."""

    sigmoid_kind: SigmoidKind = SigmoidKind.Trainable
    combine: CombineMode = CombineMode.Concat
    injection_sites: InjectionSites = InjectionSites.FirstLayerOnly
    embedding_timing: EmbeddingTiming = EmbeddingTiming.TimeVarying
    basis: BasisConfig = field(default_factory=BasisConfig)
    seed: int = 0

    @property
    def conditioned(self) -> bool:
        return self.embedding_channels > 0

    @property
    def dilations(self) -> list[int]:
        return [2**i for i in range(self.num_blocks)]

    @property
    def input_channels(self) -> int:
        return self.basis.num_coeffs * self.input_streams

    def block_input_channels(self, index: int) -> int:
        """M for block `index` (0-based); B + B' where conditioning is concatenated."""
        if (
            self.conditioned
            and self.combine is CombineMode.Concat
            and self.injects_at(index)
        ):
            return self.bottleneck + self.conditioning_channels
        return self.bottleneck

    def injects_at(self, index: int) -> bool:
        if not self.conditioned:
            return False
        return self.injection_sites is InjectionSites.AllBlocks or index == 0

    def residual_sources(self, index: int) -> tuple[int, ...]:
        """Earlier activations (0 = bottleneck output) summed into block `index`'s
        input besides the previous one."""
        if self.residual_stride == 0:
            return ()
        source = index - self.residual_stride
        return (source,) if source >= 0 else ()

    def validate(self):
        if self.bottleneck <= 0 or self.conditioning_channels <= 0:
            raise ConfigurationError("B and B' must be positive")
        if self.num_blocks < 1 or self.hidden < 1:
            raise ConfigurationError("need at least one block with positive width")
        if self.num_sources < 1:
            raise ConfigurationError("need at least one source")
        if self.input_streams < 1:
            raise ConfigurationError("need at least the mixture as input")
        if self.residual_stride == 1 or self.residual_stride < 0:
            raise ConfigurationError(
                "residual stride must be 0 or at least 2; the previous block is always summed"
            )
        if self.kernel_size % 2 == 0:
            raise ConfigurationError("dilated kernels must have odd size")
        gated = self.combine is CombineMode.Gate
        if gated and self.bottleneck != self.conditioning_channels:
            raise ConfigurationError(
                f"gating needs B == B', got B={self.bottleneck}, B'={self.conditioning_channels}"
            )
        self.basis.validate()
