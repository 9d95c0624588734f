import enum
import math
from typing import Sequence
from dataclasses import dataclass

import torch
import torch.nn.functional as F

from soundsep.semantic.embeddings import LogitsEmbedding
from soundsep.semantic.exceptions import ShapeError, ConfigurationError
from soundsep.semantic.objectives.pit import (
    LossBreakdown,
    PermutationAssignment,
    reorder,
)


class CeVariant(str, enum.Enum):
    """`full` is the binary cross entropy; `positive_only` keeps its positive term."""

    Full = "full"
    PositiveOnly = "positive_only"


def _values(v: LogitsEmbedding | torch.Tensor) -> torch.Tensor:
    return v.values if isinstance(v, LogitsEmbedding) else v


def sigmoid_cross_entropy(
    v_target: LogitsEmbedding | torch.Tensor,
    v_pred: LogitsEmbedding | torch.Tensor,
    variant: CeVariant | str = CeVariant.Full,
) -> torch.Tensor:
    """Mean cross entropy in bits between sigmoid(v_target) and sigmoid(v_pred)."""
    target, pred = _values(v_target), _values(v_pred)
    if target.shape != pred.shape:
        raise ShapeError(
            f"target logits {tuple(target.shape)} and predictions {tuple(pred.shape)} differ"
        )
    p = torch.sigmoid(target)
    # -log sigmoid(x) = softplus(-x), -log(1 - sigmoid(x)) = softplus(x)
    nats = p * F.softplus(-pred)
    if CeVariant(variant) is CeVariant.Full:
        nats = nats + (1.0 - p) * F.softplus(pred)
    return nats.mean() / math.log(2.0)


@dataclass(frozen=True)
class CeWeights:
    mixture_stage1: float = 1.0
    mixture_stage2: float = 1.0
    sources_stage2: float = 1.0


@dataclass(frozen=True, eq=False)
class GuidanceTargets:
    soft_or: torch.Tensor
    """V_or, (..., F, J) logits fused from the clean sources."""

    sources: torch.Tensor | None = None
    """V_s, (..., N, F, J) logits of each clean reference source."""


@dataclass(frozen=True, eq=False)
class GuidancePredictions:
    mixture_stage1: torch.Tensor | None = None
    """V^_m of the first stage, (..., F, J)."""

    mixture_stage2: torch.Tensor | None = None
    sources_stage2: torch.Tensor | None = None
    """V^_s of the second stage, (..., N, F, J) in estimate order."""


def guided_total_loss(
    separation: LossBreakdown,
    targets: GuidanceTargets,
    predictions: GuidancePredictions,
    assignments: Sequence[PermutationAssignment] | None = None,
    variant: CeVariant | str = CeVariant.Full,
    weights: CeWeights = CeWeights(),
) -> LossBreakdown:
    """Add the embedding-guidance cross entropies to a separation loss.

    With one separator stage the total is L_sep + CE(V_or, V^_m). With two it is
    L_isep + CE(V_or, V^_m(1)) + CE(V_or, V^_m(2)) + CE(V_s, V^_s(2)), where the V_s
    rows follow the stage-2 assignment so target i is the reference matched to
    estimate i.
    """
    if predictions.mixture_stage1 is None:
        raise ConfigurationError("guided training needs the stage-1 mixture embedding")
    terms = {
        "mixture_stage1": weights.mixture_stage1
        * sigmoid_cross_entropy(targets.soft_or, predictions.mixture_stage1, variant)
    }

    if len(separation.separation) == 2:
        if predictions.mixture_stage2 is None or predictions.sources_stage2 is None:
            raise ConfigurationError(
                "iterative guided training needs stage-2 mixture and source embeddings"
            )
        if targets.sources is None:
            raise ConfigurationError("iterative guided training needs source targets")
        if assignments is None:
            assignments = separation.assignments[1]
        aligned = reorder(targets.sources, assignments, item_dims=2)
        terms["mixture_stage2"] = weights.mixture_stage2 * sigmoid_cross_entropy(
            targets.soft_or, predictions.mixture_stage2, variant
        )
        terms["sources_stage2"] = weights.sources_stage2 * sigmoid_cross_entropy(
            aligned, predictions.sources_stage2, variant
        )

    total = separation.total
    for term in terms.values():
        total = total + term
    return LossBreakdown(
        total=total,
        separation=separation.separation,
        cross_entropy=terms,
        assignments=separation.assignments,
    )
