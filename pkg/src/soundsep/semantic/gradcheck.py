"""Finite-difference verification of reverse-mode parameter gradients."""

from typing import Callable
from dataclasses import field, dataclass

import numpy as np
import torch
import torch.nn as nn

from soundsep.semantic.embeddings import LogitsEmbedding
from soundsep.semantic.exceptions import TrainingError, ConfigurationError
from soundsep.semantic.objectives.pit import pit_loss
from soundsep.semantic.separator.tdcn import MaskingSeparator
from soundsep.semantic.classifier.network import SoundClassifier

LossFn = Callable[[], torch.Tensor]

DEFAULT_STEP = 1e-5
DEFAULT_SAMPLES = 100
RELATIVE_FLOOR = 1e-5
"""Denominator floor for the relative error of near-zero gradients."""

MAX_SKIPS_PER_SAMPLE = 20


@dataclass(frozen=True)
class GradCheckReport:
    max_relative_error: float
    checked: int
    """Parameters compared against central differences."""

    skipped: int
    """Samples discarded because a perturbation crossed an activation kink."""

    worst: tuple[str, int] | None = None
    frozen_gradients: dict[str, float] = field(default_factory=dict)
    """Largest absolute analytic gradient of each frozen parameter, all zero."""


class _KinkRecorder:
    """Forward hooks recording which side of zero every rectifier input sits on."""

    KINKED = (nn.ReLU, nn.PReLU, nn.LeakyReLU)

    def __init__(self, module: nn.Module):
        self.patterns: list[torch.Tensor] = []
        self.handles = [
            m.register_forward_hook(self._record)
            for m in module.modules()
            if isinstance(m, self.KINKED)
        ]

    def _record(self, module, inputs, output):
        self.patterns.append(inputs[0].detach() > 0)

    def capture(self, loss_fn: LossFn) -> tuple[float, list[torch.Tensor]]:
        self.patterns = []
        with torch.no_grad():
            value = float(loss_fn())
        return value, self.patterns

    def close(self):
        for handle in self.handles:
            handle.remove()


def _same_pattern(a: list[torch.Tensor], b: list[torch.Tensor]) -> bool:
    return len(a) == len(b) and all(torch.equal(x, y) for x, y in zip(a, b))


def analytic_gradients(module: nn.Module, loss_fn: LossFn) -> dict[str, torch.Tensor]:
    """Backpropagated gradient of every parameter; frozen ones come back as zeros."""
    module.zero_grad(set_to_none=True)
    loss_fn().backward()
    grads = {}
    for name, p in module.named_parameters():
        if p.grad is None:
            grads[name] = torch.zeros_like(p)
        else:
            grads[name] = p.grad.detach().clone()
    module.zero_grad(set_to_none=True)
    return grads


def grad_check(
    module: nn.Module,
    loss_fn: LossFn,
    num_samples: int = DEFAULT_SAMPLES,
    step: float = DEFAULT_STEP,
    seed: int = 0,
) -> GradCheckReport:
    """Compare analytic gradients of `loss_fn` against central differences.

    Parameters are sampled uniformly over the scalar entries of every trainable
    tensor. A sample whose perturbation flips any rectifier input is redrawn,
    since the loss is not differentiable across that kink; too many redraws
    raise `TrainingError`.
    """
    params = dict(module.named_parameters())
    if any(p.dtype != torch.float64 for p in params.values()):
        raise ConfigurationError("gradient checks need double-precision parameters")

    trainable = [(n, p) for n, p in params.items() if p.requires_grad]
    if not trainable:
        raise ConfigurationError("no trainable parameters to check")
    grads = analytic_gradients(module, loss_fn)
    frozen = {
        n: float(grads[n].abs().max()) for n, p in params.items() if not p.requires_grad
    }

    sizes = np.array([p.numel() for _, p in trainable], dtype=np.float64)
    rng = np.random.default_rng(seed)
    recorder = _KinkRecorder(module)
    try:
        _, base = recorder.capture(loss_fn)
        worst, max_err, checked, skipped = None, 0.0, 0, 0
        while checked < num_samples:
            if skipped > MAX_SKIPS_PER_SAMPLE * num_samples:
                raise TrainingError(
                    f"only {checked} of {num_samples} samples avoided a rectifier kink",
                    {"checked": checked, "skipped": skipped},
                )
            which = int(rng.choice(len(trainable), p=sizes / sizes.sum()))
            name, p = trainable[which]
            index = int(rng.integers(p.numel()))
            flat = p.data.view(-1)
            original = float(flat[index])

            flat[index] = original + step
            plus, plus_pattern = recorder.capture(loss_fn)
            flat[index] = original - step
            minus, minus_pattern = recorder.capture(loss_fn)
            flat[index] = original

            if not (
                _same_pattern(base, plus_pattern) and _same_pattern(base, minus_pattern)
            ):
                skipped += 1
                continue

            numeric = (plus - minus) / (2 * step)
            analytic = float(grads[name].view(-1)[index])
            scale = max(abs(analytic), abs(numeric), RELATIVE_FLOOR)
            err = abs(analytic - numeric) / scale
            if worst is None or err > max_err:
                max_err, worst = err, (name, index)
            checked += 1
    finally:
        recorder.close()

    return GradCheckReport(
        max_relative_error=max_err,
        checked=checked,
        skipped=skipped,
        worst=worst,
        frozen_gradients=frozen,
    )


def weighted_output_loss(
    forward: Callable[[torch.Tensor], torch.Tensor], inputs: torch.Tensor, seed: int = 0
) -> LossFn:
    """Scalar loss mean(w * forward(inputs)) with fixed random weights `w`."""
    with torch.no_grad():
        shape = forward(inputs).shape
    generator = torch.Generator().manual_seed(seed)
    weights = torch.randn(shape, generator=generator, dtype=torch.float64)

    def loss_fn() -> torch.Tensor:
        return (forward(inputs) * weights).mean()

    return loss_fn


def grad_check_classifier(
    classifier: SoundClassifier,
    patches: torch.Tensor,
    num_samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
) -> GradCheckReport:
    """Check the trainable classifier layers on a (frames, patch_frames, mels) batch."""
    loss_fn = weighted_output_loss(classifier.classify_patches, patches, seed)
    return grad_check(classifier, loss_fn, num_samples, seed=seed)


def grad_check_separator(
    separator: MaskingSeparator,
    mixture: torch.Tensor,
    targets: torch.Tensor,
    embedding: LogitsEmbedding | None = None,
    num_samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
) -> GradCheckReport:
    """Check the separator through the permutation-invariant SNR loss on `targets`."""

    def loss_fn() -> torch.Tensor:
        loss, _ = pit_loss(targets, separator(mixture, embedding).estimates)
        return loss

    return grad_check(separator, loss_fn, num_samples, seed=seed)
