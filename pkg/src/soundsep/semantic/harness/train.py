"""Training loop of one experiment setting."""

import copy
import time
import uuid
import logging
from pathlib import Path
from dataclasses import dataclass

import numpy as np
import torch
from tqdm import tqdm

from soundsep.semantic.base import ExampleStoreABC
from soundsep.semantic.clip import Split
from soundsep.semantic.embeddings import EmbeddingKind, soft_or
from soundsep.semantic.exceptions import TrainingError, ConfigurationError
from soundsep.semantic.objectives.pit import (
    LossBreakdown,
    iterative_loss,
    separation_loss,
)
from soundsep.semantic.objectives.guided import (
    GuidanceTargets,
    GuidancePredictions,
    guided_total_loss,
)
from soundsep.semantic.harness.model import (
    SystemOutput,
    SeparationSystem,
    store_geometry,
    system_checkpoint,
    source_embeddings,
)
from soundsep.semantic.harness.config import ExperimentConfig
from soundsep.semantic.harness.records import (
    RECORD_NAME,
    REPORT_NAME,
    CHECKPOINT_NAME,
    RunRecord,
    RunStatus,
)
from soundsep.semantic.harness.evaluate import (
    system_estimator,
    evaluate_estimator,
    binary_mask_estimator,
)
from soundsep.semantic.harness.checkpoint import Checkpoint
from soundsep.semantic.frontend.basis import BasisConfig
from soundsep.semantic.classifier.network import SoundClassifier
from soundsep.semantic.classifier.training import FreezePolicy, set_trainable

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Batch:
    mixtures: torch.Tensor
    """(B, T)"""

    sources: torch.Tensor
    """(B, N, T)"""


def draw_batch(
    store: ExampleStoreABC,
    ids: list[str],
    batch_size: int,
    rng: np.random.Generator,
    dtype: torch.dtype = torch.float32,
) -> Batch:
    picks = rng.integers(len(ids), size=batch_size)
    mixtures, sources = [], []
    for pick in picks:
        example = store.example(ids[int(pick)])
        mixtures.append(example.mixture.to_tensor(dtype))
        sources.append(torch.as_tensor(example.source_matrix(), dtype=dtype))
    return Batch(torch.stack(mixtures), torch.stack(sources))


def guidance_targets(target_classifier: SoundClassifier, sources: torch.Tensor):
    """V_or and V_s of the clean sources under the frozen pretrained classifier."""
    with torch.no_grad():
        embeddings = source_embeddings(target_classifier, sources)
    return GuidanceTargets(
        soft_or=soft_or(embeddings).values,
        sources=torch.stack([e.values for e in embeddings], dim=-3),
    )


def guidance_predictions(output: SystemOutput) -> GuidancePredictions:
    stage1 = output.embeddings.get("stage1")
    stage2 = output.embeddings.get("stage2")
    if stage2 is None:
        return GuidancePredictions(mixture_stage1=stage1.values if stage1 else None)
    assert stage2.kind is EmbeddingKind.All, "stage 2 sees the all embedding"
    blocks = stage2.blocks()
    return GuidancePredictions(
        mixture_stage1=stage1.values if stage1 else None,
        mixture_stage2=blocks[0],
        sources_stage2=torch.stack(blocks[1:], dim=-3),
    )


@dataclass
class Trainer:
    """Adam over the trainable parameters of one SeparationSystem."""

    system: SeparationSystem
    config: ExperimentConfig
    target_classifier: SoundClassifier | None = None
    """Frozen pretrained classifier producing the guidance targets."""

    def __post_init__(self):
        if self.config.spec.guided and self.target_classifier is None:
            raise ConfigurationError("guided settings need the pretrained classifier")
        if self.target_classifier is not None:
            self.target_classifier = set_trainable(
                copy.deepcopy(self.target_classifier), FreezePolicy.frozen()
            )
        self.optimizer = torch.optim.Adam(
            self.system.trainable_parameters(), lr=self.config.learning_rate
        )

    def loss(self, batch: Batch) -> LossBreakdown:
        spec = self.config.spec
        oracle_sources = batch.sources if spec.oracle else None
        output = self.system(batch.mixtures, oracle_sources=oracle_sources)
        if spec.stages == 1:
            loss = separation_loss(batch.sources, output.final.estimates)
        else:
            loss = iterative_loss(
                (batch.sources, output.stages[0].estimates),
                (batch.sources, output.stages[1].estimates),
            )
        if spec.guided:
            loss = guided_total_loss(
                loss,
                guidance_targets(self.target_classifier, batch.sources),
                guidance_predictions(output),
                variant=self.config.ce_variant,
                weights=self.config.ce_weights(),
            )
        return loss

    def step(self, batch: Batch, step: int) -> dict[str, float]:
        self.system.train()
        loss = self.loss(batch)
        loss.check_finite(step)
        self.optimizer.zero_grad()
        loss.total.backward()
        self.optimizer.step()
        return loss.as_dict()


def _seed_everything(config: ExperimentConfig) -> np.random.Generator:
    torch.manual_seed(config.seed)
    if config.options["deterministic"]:
        torch.set_num_threads(1)
    return np.random.default_rng(config.seed)


def _new_run_id(config: ExperimentConfig) -> str:
    return f"{config.setting.value}-{config.config_hash()[:8]}-{uuid.uuid4().hex[:8]}"


def train(
    config: ExperimentConfig,
    store: ExampleStoreABC,
    out_dir: str | Path | None = None,
    classifier: SoundClassifier | None = None,
    run_id: str | None = None,
) -> tuple[Checkpoint, RunRecord]:
    """Train `config.setting` on the train split of `store`.

    The best checkpoint by validation SI-SDRi is kept and returned. With
    `out_dir` the checkpoint, the run record and the validation report are
    written there; a failed run still writes its record before raising.
    """
    config.validate()
    spec = config.spec
    num_classes = store.num_classes
    num_sources, sample_rate = store_geometry(store)
    run_id = run_id or _new_run_id(config)
    record = RunRecord(run_id=run_id, config=config.to_mapping(), seed=config.seed)
    started = time.perf_counter()
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None and (out_dir / RECORD_NAME).exists():
        raise ConfigurationError(f"{out_dir} already holds a finished run")

    def finish(checkpoint: Checkpoint | None):
        record.wall_clock = time.perf_counter() - started
        if out_dir is None:
            return
        out_dir.mkdir(parents=True, exist_ok=True)
        if checkpoint is not None:
            checkpoint.save(out_dir / CHECKPOINT_NAME)
        if record.eval_report is not None:
            record.eval_report.write_csv(out_dir / REPORT_NAME)
        record.write(out_dir / RECORD_NAME)

    options = config.options
    validation = dict(
        split=Split.Validation,
        setting=config.setting.value,
        basis=config.basis.value,
        max_examples=config.validation_examples,
        workers=options["workers"],
    )

    if not spec.trainable:
        logger.info(
            "%s has no parameters to train, evaluating only", config.setting.value
        )
        basis = BasisConfig.stft(sample_rate=sample_rate)
        estimator = binary_mask_estimator(basis)
        record.eval_report = evaluate_estimator(estimator, store, **validation)
        record.best_si_sdri = record.eval_report.mean()
        checkpoint = system_checkpoint(
            None, config, num_classes, num_sources, sample_rate
        )
        finish(checkpoint)
        return checkpoint, record

    rng = _seed_everything(config)
    system = SeparationSystem(config, num_classes, num_sources, sample_rate, classifier)
    trainer = Trainer(system, config, classifier if spec.guided else None)
    frozen = system.frozen_snapshot()
    train_ids = store.ids(Split.Train)
    if not train_ids:
        raise ConfigurationError("the train split is empty")

    best_state = None
    step = 0

    def validate():
        nonlocal best_state
        system.eval()
        report = evaluate_estimator(
            system_estimator(system), store, classifier=system.classifier, **validation
        )
        score = report.mean()
        record.validation.append({"step": step, "si_sdri": score})
        logger.info("step %d validation SI-SDRi %.3f dB", step, score)
        if best_state is None or score > record.best_si_sdri:
            best_state = copy.deepcopy(system.state_dict())
            record.best_step, record.best_si_sdri = step, score
            record.eval_report = report
            logger.info("new best checkpoint at step %d", step)

    try:
        for step in tqdm(
            range(1, config.max_steps + 1),
            disable=not options["progress"],
            desc="train",
        ):
            batch = draw_batch(store, train_ids, config.batch_size, rng)
            terms = trainer.step(batch, step)
            record.loss_trace.append({"step": step, **terms})
            if options["log_every"] and step % options["log_every"] == 0:
                logger.info(
                    "step %d %s",
                    step,
                    " ".join(f"{k} {v:.4f}" for k, v in terms.items()),
                )
            if options["validate_every"] and step % options["validate_every"] == 0:
                validate()
        if not record.validation or record.validation[-1]["step"] != step:
            validate()
    except TrainingError as e:
        logger.error("run %s failed: %s %s", run_id, e, e.diagnostics)
        record.status = RunStatus.Failed
        record.diagnostics = dict(e.diagnostics)
        finish(None)
        raise

    params = dict(system.named_parameters())
    for name, before in frozen.items():
        if not torch.equal(before, params[name]):
            record.status = RunStatus.Failed
            record.diagnostics = {"changed_frozen_parameter": name}
            finish(None)
            raise TrainingError(f"frozen parameter {name} changed", record.diagnostics)

    system.load_state_dict(best_state)
    checkpoint = system_checkpoint(
        system, config, num_classes, num_sources, sample_rate, step=record.best_step
    )
    finish(checkpoint)
    return checkpoint, record
