from .pit import (
    MAX_PIT_SOURCES as MAX_PIT_SOURCES,
    LossBreakdown as LossBreakdown,
    PermutationAssignment as PermutationAssignment,
    reorder as reorder,
    pit_loss as pit_loss,
    iterative_loss as iterative_loss,
    pairwise_losses as pairwise_losses,
    separation_loss as separation_loss,
)
from .guided import (
    CeVariant as CeVariant,
    CeWeights as CeWeights,
    GuidanceTargets as GuidanceTargets,
    GuidancePredictions as GuidancePredictions,
    guided_total_loss as guided_total_loss,
    sigmoid_cross_entropy as sigmoid_cross_entropy,
)
from .oracle import (
    binary_masks as binary_masks,
    oracle_binary_mask as oracle_binary_mask,
)
from .metrics import (
    SNR_EPS as SNR_EPS,
    SNR_CAP_DB as SNR_CAP_DB,
    snr as snr,
    si_sdr as si_sdr,
    snr_db as snr_db,
    si_sdr_db as si_sdr_db,
    stack_clips as stack_clips,
    si_sdr_improvement as si_sdr_improvement,
)
