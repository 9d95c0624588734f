import pytest

from soundsep.semantic.embeddings import EmbeddingKind
from soundsep.semantic.exceptions import ConfigurationError
from soundsep.semantic.frontend.basis import BasisKind
from soundsep.semantic.objectives.guided import CeVariant
from soundsep.semantic.harness.config import (
    SETTINGS,
    Setting,
    ExperimentConfig,
    load_config,
    env_overrides,
)
from soundsep.semantic.classifier.training import FreezePolicy


def test_setting_matrix():
    assert len(SETTINGS) == 11
    assert SETTINGS[Setting.OracleAll].oracle
    assert SETTINGS[Setting.OracleSoftOr].oracle
    assert not SETTINGS[Setting.GuidedFinetunedAllIter].oracle
    assert not SETTINGS[Setting.OracleBinaryMask].trainable
    assert not SETTINGS[Setting.BaselineItdcn].needs_classifier
    assert SETTINGS[Setting.PretrainedAllIter].stage2_conditioned
    assert all(s.finetune for s in SETTINGS.values() if s.guided)


def test_load_precedence(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text('setting = "finetuned_mixture"\nmax_steps = 10\nseed = 3\n')

    config = load_config(
        path,
        environ={"SOUNDSEP_MAX_STEPS": "20", "SOUNDSEP_BASIS": "learned"},
        seed=5,
        batch_size=None,
    )
    assert config.setting is Setting.FinetunedMixture
    assert config.max_steps == 20
    assert config.basis is BasisKind.Learned
    assert config.seed == 5
    assert config.batch_size == 2


def test_env_overrides_ignore_other_variables():
    overrides = env_overrides(
        {"SOUNDSEP_SEED": "4", "SOUNDSEP_BOGUS": "1", "HOME": "/root"}
    )
    assert overrides == {"seed": "4"}


def test_coercion_of_strings():
    config = ExperimentConfig.from_mapping(
        {
            "tie_classifier_weights": "yes",
            "learning_rate": "0.5",
            "ce_variant": "positive_only",
        }
    )
    assert config.tie_classifier_weights is True
    assert config.learning_rate == 0.5
    assert config.ce_variant is CeVariant.PositiveOnly

    for bad in ({"seed": "x"}, {"tie_classifier_weights": "maybe"}, {"basis": "fft"}):
        with pytest.raises(ConfigurationError):
            ExperimentConfig.from_mapping(bad)
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_mapping({"unknown": 1})


def test_missing_file():
    with pytest.raises(ConfigurationError):
        load_config("/nonexistent/run.toml", environ={})


def test_config_hash():
    a = ExperimentConfig(options={"workers": 4}, classifier_checkpoint="a.bin")
    b = ExperimentConfig()
    assert a.config_hash() == b.config_hash()
    assert ExperimentConfig(seed=1).config_hash() != b.config_hash()
    assert len(b.config_hash()) == 16


def test_toml_round_trip(tmp_path):
    config = ExperimentConfig(setting=Setting.OracleSoftOr, hidden=32)
    path = tmp_path / "run.toml"
    path.write_text(config.to_toml())
    loaded = load_config(path, environ={})
    assert loaded.setting is Setting.OracleSoftOr
    assert loaded.hidden == 32
    assert loaded.config_hash() == config.config_hash()


def test_freeze_policies():
    assert ExperimentConfig().freeze_policy() == FreezePolicy.frozen()
    finetuned = ExperimentConfig(setting=Setting.FinetunedMixture, finetune="all")
    assert finetuned.freeze_policy() == FreezePolicy.all()
    with pytest.raises(ConfigurationError):
        ExperimentConfig(setting=Setting.FinetunedMixture, finetune="frozen").validate()


@pytest.mark.parametrize(
    "setting, channels",
    [
        (Setting.BaselineTdcn, 0),
        (Setting.PretrainedMixture, 3),
        (Setting.OracleSoftOr, 3),
        (Setting.OracleAll, 9),
    ],
)
def test_separator_channels(setting, channels):
    config = ExperimentConfig(setting=setting).separator_config(3, 2, 8000)
    assert config.embedding_channels == channels
    assert config.basis.sample_rate == 8000
    assert config.num_sources == 2


def test_validation_errors():
    for changes in ({"learning_rate": 0.0}, {"batch_size": 0}, {"validation_examples": 0}):
        with pytest.raises(ConfigurationError):
            ExperimentConfig(**changes).validate()


def test_default_embedding_kinds():
    assert SETTINGS[Setting.OracleAll].stage1_embedding is EmbeddingKind.All
    assert SETTINGS[Setting.PretrainedMixture].stage1_embedding is EmbeddingKind.Mixture
