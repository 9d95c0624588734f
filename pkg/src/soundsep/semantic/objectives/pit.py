import math
from typing import Sequence
from itertools import permutations
from dataclasses import field, dataclass

import torch

from soundsep.semantic.clip import AudioClip
from soundsep.semantic.exceptions import ShapeError, TrainingError, ConfigurationError
from soundsep.semantic.objectives.metrics import snr_db, stack_clips

MAX_PIT_SOURCES = 4


@dataclass(frozen=True, eq=False)
class PermutationAssignment:
    """Best estimate-to-reference assignment of one example."""

    permutation: tuple[int, ...]
    """permutation[i] is the reference matched to estimate i."""

    loss_matrix: torch.Tensor
    """(N, N) loss of estimate i against reference j, detached."""

    def __post_init__(self):
        assert sorted(self.permutation) == list(
            range(len(self.permutation))
        ), f"{self.permutation} is not a permutation"

    @property
    def is_identity(self) -> bool:
        return self.permutation == tuple(range(len(self.permutation)))


@dataclass(frozen=True, eq=False)
class LossBreakdown:
    """Loss terms of one training step; `total` is what gets backpropagated."""

    total: torch.Tensor
    separation: tuple[torch.Tensor, ...] = ()
    """L_sep of each stage."""

    cross_entropy: dict[str, torch.Tensor] = field(default_factory=dict)
    assignments: tuple[tuple[PermutationAssignment, ...], ...] = ()
    """Per stage, one assignment per batch item."""

    @property
    def iterative(self) -> torch.Tensor | None:
        """L_isep, the sum of both stages' separation losses."""
        if len(self.separation) < 2:
            return None
        return self.separation[0] + self.separation[1]

    def as_dict(self) -> dict[str, float]:
        terms = {"total": float(self.total.detach())}
        for i, term in enumerate(self.separation, start=1):
            terms[f"sep_stage{i}"] = float(term.detach())
        if self.iterative is not None:
            terms["isep"] = float(self.iterative.detach())
        for name, term in self.cross_entropy.items():
            terms[f"ce_{name}"] = float(term.detach())
        return terms

    def check_finite(self, step: int | None = None):
        terms = self.as_dict()
        bad = [name for name, value in terms.items() if not math.isfinite(value)]
        if bad:
            raise TrainingError(
                f"non-finite loss terms {bad}",
                {"step": step, "terms": terms, "term": bad[0]},
            )


def pairwise_losses(references: torch.Tensor, estimates: torch.Tensor) -> torch.Tensor:
    """(..., N, N) matrix of -SNR(reference j, estimate i) at [i, j]."""
    n = references.shape[-2]
    lead, length = references.shape[:-2], references.shape[-1]
    refs = references.unsqueeze(-3).expand(*lead, n, n, length)
    ests = estimates.unsqueeze(-2).expand_as(refs)
    return -snr_db(refs, ests)


def _best_permutation(matrix: torch.Tensor) -> tuple[tuple[int, ...], torch.Tensor]:
    n = matrix.shape[-1]
    best, best_value = None, None
    for perm in permutations(range(n)):
        value = sum(matrix[i, perm[i]] for i in range(n)) / n
        if best_value is None or float(value) < float(best_value):
            best, best_value = perm, value
    return best, best_value


def pit_loss(
    references: torch.Tensor | Sequence[AudioClip],
    estimates: torch.Tensor | Sequence[AudioClip],
) -> tuple[torch.Tensor, list[PermutationAssignment]]:
    """Permutation-invariant negative SNR, averaged over sources and batch items.

    Every permutation is tried in lexicographic order and the first minimum wins,
    so ties go to the lexicographically smallest permutation.
    """
    references, estimates = stack_clips(references), stack_clips(estimates)
    if references.shape[-2] != estimates.shape[-2]:
        raise ShapeError(
            f"{estimates.shape[-2]} estimates for {references.shape[-2]} references"
        )
    if references.shape[-2] > MAX_PIT_SOURCES:
        raise ConfigurationError(
            f"exhaustive PIT supports at most {MAX_PIT_SOURCES} sources"
        )

    matrices = pairwise_losses(references, estimates)
    flat = matrices.reshape(-1, *matrices.shape[-2:])
    losses, assignments = [], []
    for matrix in flat:
        perm, value = _best_permutation(matrix)
        losses.append(value)
        assignments.append(PermutationAssignment(perm, matrix.detach()))
    return torch.stack(losses).mean(), assignments


def reorder(
    rows: torch.Tensor, assignments: Sequence[PermutationAssignment], item_dims: int
) -> torch.Tensor:
    """Put rows[..., permutation[i], ...] at position i for each batch item.

    `rows` is (*batch, N, *item) with `item_dims` trailing dimensions and one
    assignment per flattened batch item.
    """
    batch_dims = rows.dim() - item_dims - 1
    flat = rows.reshape(len(assignments), *rows.shape[batch_dims:])
    picked = torch.stack(
        [item[list(a.permutation)] for item, a in zip(flat, assignments)]
    )
    return picked.reshape(rows.shape)


def iterative_loss(
    stage1: tuple[torch.Tensor, torch.Tensor],
    stage2: tuple[torch.Tensor, torch.Tensor],
) -> LossBreakdown:
    """L_isep = L_sep(stage 1) + L_sep(stage 2), each with its own best permutation."""
    loss1, assign1 = pit_loss(*stage1)
    loss2, assign2 = pit_loss(*stage2)
    return LossBreakdown(
        total=loss1 + loss2,
        separation=(loss1, loss2),
        assignments=(tuple(assign1), tuple(assign2)),
    )


def separation_loss(references: torch.Tensor, estimates: torch.Tensor) -> LossBreakdown:
    loss, assign = pit_loss(references, estimates)
    return LossBreakdown(total=loss, separation=(loss,), assignments=(tuple(assign),))
