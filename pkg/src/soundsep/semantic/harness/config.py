import os
import enum
import json
import hashlib
import logging
import dataclasses
from typing import Any, Mapping
from pathlib import Path
from dataclasses import field, dataclass

import tomlkit

from soundsep.semantic.base import TrainerOptions, _default_trainer_args
from soundsep.semantic.embeddings import EmbeddingKind
from soundsep.semantic.exceptions import ConfigurationError
from soundsep.semantic.frontend.basis import BasisKind, BasisConfig
from soundsep.semantic.objectives.guided import CeVariant, CeWeights
from soundsep.semantic.separator.config import (
    CombineMode,
    SigmoidKind,
    InjectionSites,
    EmbeddingTiming,
    SeparatorConfig,
)
from soundsep.semantic.classifier.training import FreezeMode, FreezePolicy

logger = logging.getLogger(__name__)

ENV_PREFIX = "SOUNDSEP_"


class Setting(str, enum.Enum):
    """Rows of the experiment matrix."""

    BaselineTdcn = "baseline_tdcn"
    BaselineItdcn = "baseline_itdcn"
    PretrainedMixture = "pretrained_mixture"
    FinetunedMixture = "finetuned_mixture"
    GuidedFinetunedMixture = "guided_finetuned_mixture"
    PretrainedAllIter = "pretrained_all_iter"
    FinetunedAllIter = "finetuned_all_iter"
    GuidedFinetunedAllIter = "guided_finetuned_all_iter"
    OracleAll = "oracle_all"
    OracleSoftOr = "oracle_soft_or"
    OracleBinaryMask = "oracle_binary_mask"


@dataclass(frozen=True)
class SettingSpec:
    """How one setting wires classifier, separator stages and losses."""

    stages: int
    """Separator stages; 0 for the binary-mask oracle."""

    stage1_embedding: EmbeddingKind | None = None
    """Conditioning of stage 1: the mixture embedding, or an oracle embedding."""

    stage2_conditioned: bool = False
    """Stage 2 sees [V^_m; V^_s1; ..] of the mixture and stage-1 estimates."""

    finetune: bool = False
    guided: bool = False

    @property
    def oracle(self) -> bool:
        """Needs the clean sources at inference time."""
        return self.stage1_embedding in (EmbeddingKind.All, EmbeddingKind.SoftOr)

    @property
    def needs_classifier(self) -> bool:
        return self.stage1_embedding is not None or self.stage2_conditioned

    @property
    def trainable(self) -> bool:
        return self.stages > 0


SETTINGS: dict[Setting, SettingSpec] = {
    Setting.BaselineTdcn: SettingSpec(stages=1),
    Setting.BaselineItdcn: SettingSpec(stages=2),
    Setting.PretrainedMixture: SettingSpec(1, EmbeddingKind.Mixture),
    Setting.FinetunedMixture: SettingSpec(1, EmbeddingKind.Mixture, finetune=True),
    Setting.GuidedFinetunedMixture: SettingSpec(
        1, EmbeddingKind.Mixture, finetune=True, guided=True
    ),
    Setting.PretrainedAllIter: SettingSpec(2, EmbeddingKind.Mixture, True),
    Setting.FinetunedAllIter: SettingSpec(
        2, EmbeddingKind.Mixture, True, finetune=True
    ),
    Setting.GuidedFinetunedAllIter: SettingSpec(
        2, EmbeddingKind.Mixture, True, finetune=True, guided=True
    ),
    Setting.OracleAll: SettingSpec(1, EmbeddingKind.All),
    Setting.OracleSoftOr: SettingSpec(1, EmbeddingKind.SoftOr),
    Setting.OracleBinaryMask: SettingSpec(stages=0),
}


@dataclass
class ExperimentConfig:
    """One training run."""

    setting: Setting = Setting.BaselineTdcn
    basis: BasisKind = BasisKind.Stft

    learning_rate: float = 1e-4
    batch_size: int = 2
    max_steps: int = 100_000
    seed: int = 0

    finetune: str = "last_1"
    """Classifier policy of fine-tuned settings: `last_<k>` or `all`."""

    ce_variant: CeVariant = CeVariant.Full
    ce_weight_mixture_stage1: float = 1.0
    ce_weight_mixture_stage2: float = 1.0
    ce_weight_sources_stage2: float = 1.0
    tie_classifier_weights: bool = False

    num_blocks: int = 8
    bottleneck: int = 128
    hidden: int = 256
    conditioning_channels: int = 128
    sigmoid_kind: SigmoidKind = SigmoidKind.Trainable
    combine: CombineMode = CombineMode.Concat
    injection_sites: InjectionSites = InjectionSites.FirstLayerOnly
    embedding_timing: EmbeddingTiming = EmbeddingTiming.TimeVarying

    validation_examples: int = 50
    """Validation examples scored at every validation event."""

    classifier_checkpoint: str = ""
    """Pretrained classifier used by every embedding setting."""

    options: TrainerOptions = field(default_factory=_default_trainer_args)
    """Logging, validation cadence and determinism knobs."""

    def __post_init__(self):
        self.options = TrainerOptions({**_default_trainer_args(), **self.options})

    @property
    def spec(self) -> SettingSpec:
        return SETTINGS[self.setting]

    def freeze_policy(self) -> FreezePolicy:
        if not self.spec.finetune:
            return FreezePolicy.frozen()
        policy = FreezePolicy.parse(self.finetune)
        if policy.mode is FreezeMode.Frozen:
            raise ConfigurationError(
                f"{self.setting.value} needs a trainable classifier policy"
            )
        return policy

    def ce_weights(self) -> CeWeights:
        return CeWeights(
            self.ce_weight_mixture_stage1,
            self.ce_weight_mixture_stage2,
            self.ce_weight_sources_stage2,
        )

    def separator_config(
        self, num_classes: int, num_sources: int, sample_rate: int
    ) -> SeparatorConfig:
        """Stage-1 geometry; stage 2 is derived from it."""
        embedding = self.spec.stage1_embedding
        if embedding is None:
            channels = 0
        elif embedding is EmbeddingKind.All:
            channels = (num_sources + 1) * num_classes
        else:
            channels = num_classes
        basis = dataclasses.replace(
            BasisConfig.for_kind(self.basis), sample_rate=sample_rate
        )
        return SeparatorConfig(
            num_sources=num_sources,
            num_blocks=self.num_blocks,
            bottleneck=self.bottleneck,
            hidden=self.hidden,
            conditioning_channels=self.conditioning_channels,
            embedding_channels=channels,
            sigmoid_kind=self.sigmoid_kind,
            combine=self.combine,
            injection_sites=self.injection_sites,
            embedding_timing=self.embedding_timing,
            basis=basis,
            seed=self.seed,
        )

    def validate(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.max_steps < 0:
            raise ConfigurationError(
                "learning rate, batch size and step budget must be positive"
            )
        if self.validation_examples < 1:
            raise ConfigurationError("validation needs at least one example")
        self.freeze_policy()
        if self.spec.guided and not self.spec.finetune:
            raise ConfigurationError("guided settings fine-tune the classifier")

    def to_mapping(self) -> dict[str, Any]:
        values = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            values[f.name] = value.value if isinstance(value, enum.Enum) else value
        values["options"] = dict(self.options)
        return values

    def config_hash(self) -> str:
        """Digest of every field that shapes the trained parameters."""
        values = self.to_mapping()
        values.pop("options")
        values.pop("classifier_checkpoint")
        text = json.dumps(values, sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def to_toml(self) -> str:
        doc = tomlkit.document()
        for key, value in self.to_mapping().items():
            doc[key] = value
        return tomlkit.dumps(doc)

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any]) -> "ExperimentConfig":
        fields = {f.name: f for f in dataclasses.fields(cls)}
        unknown = set(values) - set(fields)
        if unknown:
            raise ConfigurationError(f"unknown experiment keys: {sorted(unknown)}")
        parsed = {}
        for key, value in values.items():
            parsed[key] = _coerce(fields[key].type, key, value)
        return cls(**parsed)


_ENUMS = {
    "Setting": Setting,
    "BasisKind": BasisKind,
    "CeVariant": CeVariant,
    "SigmoidKind": SigmoidKind,
    "CombineMode": CombineMode,
    "InjectionSites": InjectionSites,
    "EmbeddingTiming": EmbeddingTiming,
}


def _coerce(annotation: Any, key: str, value: Any) -> Any:
    """Parse `value` (possibly a string from the environment) to the field type."""
    if isinstance(annotation, str):
        name = annotation
    else:
        name = getattr(annotation, "__name__", "")
    try:
        if name in _ENUMS:
            return _ENUMS[name](value)
        if name == "bool":
            if isinstance(value, str):
                if value.lower() not in ("1", "0", "true", "false", "yes", "no"):
                    raise ValueError(value)
                return value.lower() in ("1", "true", "yes")
            return bool(value)
        if name == "int":
            return int(value)
        if name == "float":
            return float(value)
        if name == "str":
            return str(value)
        if name == "TrainerOptions":
            return dict(value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"bad value {value!r} for {key}") from None
    return value


def env_overrides(environ: Mapping[str, str] | None = None) -> dict[str, str]:
    """`SOUNDSEP_MAX_STEPS=200` becomes {"max_steps": "200"}."""
    environ = os.environ if environ is None else environ
    fields = {f.name for f in dataclasses.fields(ExperimentConfig)}
    overrides = {}
    for name, value in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        key = name.removeprefix(ENV_PREFIX).lower()
        if key in fields:
            overrides[key] = value
        else:
            logger.warning("ignoring unknown override %s", name)
    return overrides


def load_config(
    path: str | Path | None = None,
    environ: Mapping[str, str] | None = None,
    **overrides: Any,
) -> ExperimentConfig:
    """File values, then environment overrides, then explicit keyword overrides."""
    values: dict[str, Any] = {}
    if path is not None:
        try:
            values.update(tomlkit.parse(Path(path).read_text()).unwrap())
        except FileNotFoundError:
            raise ConfigurationError(f"no config file at {path}") from None
    values.update(env_overrides(environ))
    values.update({k: v for k, v in overrides.items() if v is not None})
    config = ExperimentConfig.from_mapping(values)
    config.validate()
    return config
