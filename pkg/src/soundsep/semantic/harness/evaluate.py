import logging
from typing import Callable, Sequence
from pathlib import Path

import torch
from tqdm import tqdm
from tqdm.contrib.concurrent import thread_map

from soundsep.semantic.base import ExampleStoreABC
from soundsep.semantic.embeddings import LogitsEmbedding, soft_or
from soundsep.semantic.clip import Split
from soundsep.semantic.exceptions import ConfigurationError
from soundsep.semantic.synthdata.mixing import MixtureExample
from soundsep.semantic.frontend.basis import BasisConfig
from soundsep.semantic.objectives.pit import pit_loss
from soundsep.semantic.objectives.oracle import oracle_binary_mask
from soundsep.semantic.objectives.metrics import SNR_CAP_DB, si_sdr_db
from soundsep.semantic.harness.config import Setting
from soundsep.semantic.harness.model import SeparationSystem, restore_system
from soundsep.semantic.harness.records import EvalRow, EvalReport
from soundsep.semantic.harness.checkpoint import Checkpoint
from soundsep.semantic.classifier.network import SoundClassifier

logger = logging.getLogger(__name__)

Estimator = Callable[[MixtureExample], Sequence[torch.Tensor]]
"""Maps an example to the (N, T) estimates of each separator stage."""


SI_SDR_FLOOR_DB = -SNR_CAP_DB
"""Score of an all-zero estimate, the lowest value SI-SDR can otherwise reach."""


def _si_sdr_or_floor(references: torch.Tensor, estimates: torch.Tensor) -> torch.Tensor:
    silent = estimates.pow(2).sum(-1) == 0
    if not silent.any():
        return si_sdr_db(references, estimates)
    logger.warning(
        "%d silent estimate(s) scored at %.1f dB", int(silent.sum()), SI_SDR_FLOOR_DB
    )
    safe = torch.where(silent.unsqueeze(-1), references, estimates)
    return si_sdr_db(references, safe).masked_fill(silent, SI_SDR_FLOOR_DB)


def classifier_agreement(
    classifier: SoundClassifier, mixture: torch.Tensor, estimates: torch.Tensor
) -> float:
    """Share of frames whose top mixture class is the top soft-OR estimate class."""
    dtype = next(classifier.parameters()).dtype
    with torch.no_grad():
        mixture_logits = classifier(mixture.to(dtype))
        estimate_logits = classifier(estimates.to(dtype))
    fused = soft_or([LogitsEmbedding(logits) for logits in estimate_logits])
    match = mixture_logits.argmax(-1) == fused.values.argmax(-1)
    return float(match.to(torch.float64).mean())


def score_example(
    example: MixtureExample,
    stage_estimates: Sequence[torch.Tensor],
    classifier: SoundClassifier | None = None,
) -> EvalRow:
    """PIT-aligned SI-SDRi of every stage's estimates.

    With a `classifier`, the row also records how often the final estimates
    keep the mixture's top class.
    """
    references = torch.as_tensor(example.source_matrix(), dtype=torch.float64)
    mixture = example.mixture.to_tensor(torch.float64)
    scores, permutations = [], []
    for estimates in stage_estimates:
        estimates = estimates.detach().to(torch.float64)
        _, (assignment,) = pit_loss(references, estimates)
        aligned = references[list(assignment.permutation)]
        baseline = si_sdr_db(aligned, mixture.expand_as(aligned))
        gain = _si_sdr_or_floor(aligned, estimates) - baseline
        scores.append(float(gain.mean()))
        permutations.append(assignment.permutation)
    agreement = None
    if classifier is not None:
        final = stage_estimates[-1].detach()
        agreement = classifier_agreement(classifier, mixture, final)
    return EvalRow(example.example_id, tuple(scores), tuple(permutations), agreement)


def identity_estimator(example: MixtureExample) -> list[torch.Tensor]:
    """Copies the mixture to every output."""
    mixture = example.mixture.to_tensor(torch.float64)
    return [mixture.expand(example.source_count, -1).clone()]


def binary_mask_estimator(basis: BasisConfig | None = None) -> Estimator:
    def estimate(example: MixtureExample) -> list[torch.Tensor]:
        return [oracle_binary_mask(example.mixture, example.sources, basis).estimates]

    return estimate


def system_estimator(system: SeparationSystem) -> Estimator:
    """Runs `system` on the mixture; oracle settings also get the clean sources."""
    dtype = next(system.parameters()).dtype

    def estimate(example: MixtureExample) -> list[torch.Tensor]:
        mixture = example.mixture.to_tensor(dtype)
        sources = None
        if system.spec.oracle:
            sources = torch.stack([s.to_tensor(dtype) for s in example.sources])
        with torch.no_grad():
            out = system(mixture, oracle_sources=sources)
        return [stage.estimates for stage in out.stages]

    return estimate


def evaluate_estimator(
    estimator: Estimator,
    store: ExampleStoreABC,
    split: Split = Split.Test,
    setting: str = "",
    basis: str = "",
    max_examples: int | None = None,
    workers: int = 1,
    progress: bool = False,
    classifier: SoundClassifier | None = None,
) -> EvalReport:
    ids = store.ids(split)
    if max_examples is not None:
        ids = ids[:max_examples]
    if not ids:
        raise ConfigurationError(f"split {split.value} has no examples to evaluate")

    def score(example_id: str) -> EvalRow:
        example = store.example(example_id)
        return score_example(example, estimator(example), classifier)

    if workers > 1:
        rows = thread_map(score, ids, max_workers=workers, disable=not progress)
    else:
        rows = [score(i) for i in tqdm(ids, disable=not progress, desc="evaluate")]
    return EvalReport(setting, split.value, list(rows), basis)


def evaluate(
    checkpoint: Checkpoint | str | Path,
    store: ExampleStoreABC,
    split: Split = Split.Test,
    max_examples: int | None = None,
    workers: int = 1,
    classifier: SoundClassifier | None = None,
) -> EvalReport:
    """Mean SI-SDRi of a trained setting over `split`, every stage reported.

    Agreement rates use `classifier`, falling back to the system's own one.
    """
    if not isinstance(checkpoint, Checkpoint):
        checkpoint = Checkpoint.load(checkpoint)
    config, system = restore_system(checkpoint)
    if config.setting is Setting.OracleBinaryMask:
        sample_rate = int(checkpoint.metadata["sample_rate"])
        estimator = binary_mask_estimator(BasisConfig.stft(sample_rate=sample_rate))
    else:
        system.eval()
        estimator = system_estimator(system)

    if classifier is None and system is not None:
        classifier = system.classifier
    report = evaluate_estimator(
        estimator,
        store,
        split,
        setting=config.setting.value,
        basis=config.basis.value,
        max_examples=max_examples,
        workers=workers,
        progress=config.options["progress"],
        classifier=classifier,
    )
    logger.info(
        "%s on %s: %s over %d examples",
        config.setting.value,
        split.value,
        ", ".join(f"{k} {v:.3f}" for k, v in report.summary().items()),
        len(report),
    )
    return report
