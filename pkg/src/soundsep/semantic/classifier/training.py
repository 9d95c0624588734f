import enum
import math
import logging
from dataclasses import field, dataclass

import numpy as np
import torch
import torch.nn.functional as F
from tqdm import tqdm
from sklearn.metrics import average_precision_score

from soundsep.semantic.base import (
    TrainerOptions,
    ExampleStoreABC,
    _default_trainer_args,
    merge_trainer_options,
)
from soundsep.semantic.clip import Split
from soundsep.semantic.exceptions import TrainingError, ConfigurationError
from soundsep.semantic.classifier.network import SoundClassifier, ClassifierConfig

logger = logging.getLogger(__name__)


class FreezeMode(str, enum.Enum):
    Frozen = "frozen"
    LastK = "last_k"
    All = "all"


@dataclass(frozen=True)
class FreezePolicy:
    """Which classifier layers receive gradient updates.

    Layers count back from the output: the head is layer 1, separable group 10
    is layer 2, and so on.
    """

    mode: FreezeMode = FreezeMode.Frozen
    k: int = 0

    @classmethod
    def frozen(cls) -> "FreezePolicy":
        return cls(FreezeMode.Frozen)

    @classmethod
    def all(cls) -> "FreezePolicy":
        return cls(FreezeMode.All)

    @classmethod
    def last(cls, k: int) -> "FreezePolicy":
        return cls(FreezeMode.LastK, k)

    @classmethod
    def parse(cls, text: str) -> "FreezePolicy":
        """Accepts `frozen`, `all` and `last_<k>`."""
        text = text.strip().lower()
        if text.startswith("last_"):
            try:
                return cls.last(int(text.removeprefix("last_")))
            except ValueError:
                raise ConfigurationError(f"bad freeze policy {text!r}") from None
        try:
            return cls(FreezeMode(text))
        except ValueError:
            raise ConfigurationError(f"bad freeze policy {text!r}") from None

    def __str__(self) -> str:
        if self.mode is FreezeMode.LastK:
            return f"last_{self.k}"
        return self.mode.value


def set_trainable(params: SoundClassifier, policy: FreezePolicy) -> SoundClassifier:
    """Set `requires_grad` on every classifier parameter according to `policy`."""
    layers = list(params.layers())[::-1]
    if policy.mode is FreezeMode.LastK and not 1 <= policy.k <= len(layers):
        raise ConfigurationError(
            f"last_k needs 1 <= k <= {len(layers)} layers, got k={policy.k}"
        )

    for p in params.parameters():
        p.requires_grad_(False)
    if policy.mode is FreezeMode.All:
        selected = layers
    elif policy.mode is FreezeMode.LastK:
        selected = layers[: policy.k]
    else:
        selected = []
    for _, layer in selected:
        for p in layer.parameters():
            p.requires_grad_(True)
    return params


def trainable_layers(params: SoundClassifier) -> list[str]:
    return [
        name
        for name, layer in params.layers()
        if any(p.requires_grad for p in layer.parameters())
    ]


@dataclass(frozen=True)
class PretrainConfig:
    """Supervised pretraining on single-source clips."""

    steps: int = 50_000
    batch_size: int = 8
    learning_rate: float = 1e-3
    seed: int = 0
    map_floor: float = 0.0
    """Validation mAP below this raises a TrainingError."""

    max_validation_clips: int = 200
    options: TrainerOptions = field(default_factory=_default_trainer_args)


@dataclass(frozen=True)
class ClassifierScores:
    mean_average_precision: float
    accuracy: float
    """Frame-level binary accuracy at threshold 0.5."""

    loss: float


def frame_targets(labels: torch.Tensor, num_frames: int) -> torch.Tensor:
    """(..., J) clip labels broadcast to (..., F, J)."""
    return labels.unsqueeze(-2).expand(*labels.shape[:-1], num_frames, labels.shape[-1])


def mean_average_precision(targets: np.ndarray, scores: np.ndarray) -> float:
    """Mean over classes with at least one positive frame."""
    per_class = [
        average_precision_score(targets[:, c], scores[:, c])
        for c in range(targets.shape[1])
        if targets[:, c].any()
    ]
    return float(np.mean(per_class)) if per_class else math.nan


@dataclass
class ClassifierTrainer:
    classifier: SoundClassifier
    config: PretrainConfig = field(default_factory=PretrainConfig)
    rng_state: np.random.Generator | None = field(default=None, kw_only=True)
    losses: list[float] = field(init=False, default_factory=list)
    optimizer: torch.optim.Optimizer = field(init=False)

    def __post_init__(self):
        if self.rng_state is None:
            self.rng_state = np.random.default_rng(self.config.seed)
        trainable = [p for p in self.classifier.parameters() if p.requires_grad]
        if not trainable:
            raise ConfigurationError("the classifier has no trainable parameters")
        self.optimizer = torch.optim.Adam(trainable, lr=self.config.learning_rate)

    @property
    def dtype(self) -> torch.dtype:
        return next(self.classifier.parameters()).dtype

    def step(self, waveforms: torch.Tensor, labels: torch.Tensor) -> float:
        """One Adam step on a batch of (B, T) waveforms with (B, J) labels."""
        self.classifier.train()
        logits = self.classifier(waveforms)
        loss = F.binary_cross_entropy_with_logits(
            logits, frame_targets(labels.to(logits.dtype), logits.shape[-2])
        )
        value = float(loss.detach())
        if not math.isfinite(value):
            diagnostics = {
                "step": len(self.losses),
                "last_finite_loss": self.losses[-1] if self.losses else None,
                "term": "classifier_bce",
            }
            logger.error("classifier loss became non-finite: %s", diagnostics)
            raise TrainingError("classifier pretraining diverged", diagnostics)

        self.optimizer.zero_grad()
        loss.backward()
        self.optimizer.step()
        self.losses.append(value)
        return value

    def fit(self, store: ExampleStoreABC, steps: int) -> list[float]:
        """Train on the labelled sources of the train split, each read once."""
        options = merge_trainer_options(self.config.options)
        clips = list(store.labelled_sources(Split.Train))
        if not clips:
            raise ConfigurationError("no labelled training clips")
        waves = torch.stack([clip.to_tensor(self.dtype) for clip, _ in clips])
        labels = np.stack([label for _, label in clips])
        labels = torch.as_tensor(labels, dtype=self.dtype)

        progress = tqdm(range(steps), disable=not options["progress"], desc="pretrain")
        for step in progress:
            picks = torch.as_tensor(
                self.rng_state.integers(len(clips), size=self.config.batch_size)
            )
            loss = self.step(waves[picks], labels[picks])
            if options["log_every"] and (step + 1) % options["log_every"] == 0:
                logger.info("pretrain step %d loss %.5f", step + 1, loss)
        return self.losses

    def evaluate(
        self, store: ExampleStoreABC, split: Split = Split.Validation
    ) -> ClassifierScores:
        self.classifier.eval()
        targets, scores, losses = [], [], []
        with torch.no_grad():
            for n, (clip, label) in enumerate(store.labelled_sources(split)):
                if n >= self.config.max_validation_clips:
                    break
                logits = self.classifier(clip.to_tensor(self.dtype))
                target = frame_targets(
                    torch.as_tensor(label, dtype=logits.dtype), logits.shape[-2]
                )
                losses.append(float(F.binary_cross_entropy_with_logits(logits, target)))
                targets.append(target.numpy())
                scores.append(torch.sigmoid(logits).numpy())
        if not targets:
            raise ConfigurationError(f"no labelled clips in split {split.value}")

        y_true = np.concatenate(targets) > 0.5
        y_score = np.concatenate(scores)
        return ClassifierScores(
            mean_average_precision=mean_average_precision(y_true, y_score),
            accuracy=float(np.mean((y_score > 0.5) == y_true)),
            loss=float(np.mean(losses)),
        )


def pretrain(
    store: ExampleStoreABC,
    config: PretrainConfig | None = None,
    classifier: SoundClassifier | None = None,
) -> SoundClassifier:
    """Train every classifier layer on single-source clips with per-frame BCE."""
    config = config or PretrainConfig()
    if classifier is None:
        classifier = SoundClassifier(
            ClassifierConfig(num_classes=store.num_classes, seed=config.seed)
        )
    set_trainable(classifier, FreezePolicy.all())
    if config.steps == 0:
        return classifier

    trainer = ClassifierTrainer(classifier, config)
    trainer.fit(store, config.steps)
    scores = trainer.evaluate(store)
    logger.info(
        "classifier validation mAP %.4f accuracy %.4f loss %.5f",
        scores.mean_average_precision,
        scores.accuracy,
        scores.loss,
    )
    if scores.mean_average_precision < config.map_floor:
        raise TrainingError(
            f"validation mAP {scores.mean_average_precision:.4f} is below the "
            f"floor {config.map_floor}",
            {"scores": scores, "steps": config.steps},
        )
    return classifier
