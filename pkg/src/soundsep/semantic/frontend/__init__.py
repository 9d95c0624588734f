from .mel import (
    MelConfig as MelConfig,
    MelFrontend as MelFrontend,
    MelPatchSet as MelPatchSet,
    mel_patches as mel_patches,
    mel_filterbank as mel_filterbank,
    mel_center_frequencies as mel_center_frequencies,
)
from .basis import (
    BasisKind as BasisKind,
    StftBasis as StftBasis,
    BasisCoeffs as BasisCoeffs,
    BasisConfig as BasisConfig,
    LearnedBasis as LearnedBasis,
    analyze as analyze,
    make_basis as make_basis,
    synthesize as synthesize,
    hann_window as hann_window,
)
