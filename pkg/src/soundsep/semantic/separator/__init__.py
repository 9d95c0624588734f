from .tdcn import (
    BlockState as BlockState,
    DilatedBlock as DilatedBlock,
    SeparatorOutput as SeparatorOutput,
    MaskingSeparator as MaskingSeparator,
    separate as separate,
)
from .config import (
    CombineMode as CombineMode,
    SigmoidKind as SigmoidKind,
    InjectionSites as InjectionSites,
    EmbeddingTiming as EmbeddingTiming,
    SeparatorConfig as SeparatorConfig,
)
from .iterative import (
    IterativeOutput as IterativeOutput,
    IterativeSeparator as IterativeSeparator,
    classify_all as classify_all,
    separate_iterative as separate_iterative,
    second_stage_config as second_stage_config,
)
from .conditioning import (
    GlobalNorm as GlobalNorm,
    TrainableSigmoid as TrainableSigmoid,
    ConditioningInjector as ConditioningInjector,
    combine as combine,
    make_squashing as make_squashing,
    inject_conditioning as inject_conditioning,
)
