import math
from itertools import permutations

import numpy as np
import torch
import pytest

from soundsep.semantic.exceptions import ShapeError, TrainingError, ConfigurationError
from soundsep.semantic.objectives.pit import (
    LossBreakdown,
    PermutationAssignment,
    reorder,
    pit_loss,
    iterative_loss,
    pairwise_losses,
    separation_loss,
)


def _refs(n: int = 2, length: int = 200, seed: int = 0) -> torch.Tensor:
    generator = torch.Generator().manual_seed(seed)
    return torch.randn(n, length, generator=generator, dtype=torch.float64)


def test_pairwise_matrix():
    refs = _refs()
    ests = refs.flip(0) * 0.5
    matrix = pairwise_losses(refs, ests)
    assert matrix.shape == (2, 2)
    assert math.isclose(float(matrix[0, 1]), -10 * math.log10(4.0), rel_tol=1e-9)


def test_swapped_estimates_are_matched():
    refs = _refs()
    noise = _refs(seed=1) * 0.1
    ests = refs.flip(0) + noise

    loss, assignments = pit_loss(refs, ests)
    assert assignments[0].permutation == (1, 0)
    assert not assignments[0].is_identity

    aligned, _ = pit_loss(refs.flip(0), ests)
    assert math.isclose(float(loss), float(aligned), rel_tol=1e-12)


def test_ties_pick_identity():
    refs = _refs()
    same = refs.mean(dim=0, keepdim=True).expand(2, -1)
    _, assignments = pit_loss(refs, same)
    assert assignments[0].permutation == (0, 1)


def test_batched_assignments():
    refs = torch.stack([_refs(seed=s) for s in range(3)])
    ests = torch.stack([refs[0], refs[1].flip(0), refs[2]]) * 0.9
    loss, assignments = pit_loss(refs, ests)

    assert [a.permutation for a in assignments] == [(0, 1), (1, 0), (0, 1)]
    assert math.isclose(float(loss), -10 * math.log10(100.0), rel_tol=1e-9)


def test_pit_gradient_reaches_estimates():
    refs = _refs()
    ests = (refs * 0.7).requires_grad_(True)
    loss, _ = pit_loss(refs, ests)
    loss.backward()
    assert ests.grad is not None
    assert torch.any(ests.grad != 0)


def test_pit_limits():
    with pytest.raises(ShapeError):
        pit_loss(_refs(2), _refs(3))
    with pytest.raises(ConfigurationError):
        pit_loss(_refs(5), _refs(5, seed=1))


def test_reorder_rows():
    rows = torch.arange(2 * 2 * 3 * 4, dtype=torch.float64).reshape(2, 2, 3, 4)
    eye = torch.zeros(2, 2)
    assignments = [PermutationAssignment((1, 0), eye), PermutationAssignment((0, 1), eye)]

    out = reorder(rows, assignments, item_dims=2)
    assert torch.equal(out[0, 0], rows[0, 1])
    assert torch.equal(out[0, 1], rows[0, 0])
    assert torch.equal(out[1], rows[1])


def test_invalid_permutation():
    with pytest.raises(AssertionError):
        PermutationAssignment((0, 0), torch.zeros(2, 2))


def test_iterative_loss_terms():
    refs = _refs()
    breakdown = iterative_loss((refs, refs * 0.5), (refs, refs.flip(0) * 0.9))

    terms = breakdown.as_dict()
    assert set(terms) == {"total", "sep_stage1", "sep_stage2", "isep"}
    assert math.isclose(terms["total"], terms["sep_stage1"] + terms["sep_stage2"])
    assert breakdown.assignments[1][0].permutation == (1, 0)


def test_single_stage_has_no_isep():
    refs = _refs()
    terms = separation_loss(refs, refs * 0.5).as_dict()
    assert set(terms) == {"total", "sep_stage1"}


def test_non_finite_terms_are_reported():
    breakdown = LossBreakdown(
        total=torch.tensor(float("nan")),
        separation=(torch.tensor(1.0),),
        cross_entropy={"mixture_stage1": torch.tensor(float("inf"))},
    )
    with pytest.raises(TrainingError) as info:
        breakdown.check_finite(step=7)
    assert info.value.diagnostics["step"] == 7
    assert info.value.diagnostics["term"] == "total"
    LossBreakdown(total=torch.tensor(1.0)).check_finite()


def _brute_force(refs: np.ndarray, ests: np.ndarray) -> dict[tuple[int, ...], float]:
    """Mean -SNR of every assignment, estimate i matched to reference perm[i]."""
    n = refs.shape[0]
    values = {}
    for perm in permutations(range(n)):
        matched = refs[list(perm)]
        snrs = 10 * np.log10(np.sum(matched**2, -1) / np.sum((matched - ests) ** 2, -1))
        values[perm] = -float(np.mean(snrs))
    return values


@pytest.mark.parametrize("n", [2, 3, 4])
def test_pit_matches_brute_force(n):
    rng = np.random.default_rng(n)
    for _ in range(200):
        refs = rng.standard_normal((n, 64))
        shuffle = rng.permutation(n)
        ests = refs[shuffle] * rng.uniform(0.3, 1.5, (n, 1))
        ests = ests + rng.standard_normal((n, 64)) * rng.uniform(0.05, 1.0, (n, 1))

        loss, (assignment,) = pit_loss(torch.as_tensor(refs), torch.as_tensor(ests))
        values = _brute_force(refs, ests)
        best = min(values.values())
        assert math.isclose(float(loss), best, rel_tol=1e-9, abs_tol=1e-9)
        chosen = values[assignment.permutation]
        assert math.isclose(chosen, best, rel_tol=1e-9, abs_tol=1e-9)


def test_ties_pick_lexicographically_smallest():
    refs = _refs(3, seed=3)
    shared = refs[1] + refs[2]
    ests = torch.stack([shared, shared, refs[0] * 0.9])
    _, (assignment,) = pit_loss(refs, ests)
    assert assignment.permutation == (1, 2, 0)

    refs = _refs(4, seed=4)
    shared = refs[1] + refs[2]
    ests = torch.stack([shared, shared, refs[0] * 0.9, refs[3] * 0.9])
    _, (assignment,) = pit_loss(refs, ests)
    assert assignment.permutation == (1, 2, 0, 3)
