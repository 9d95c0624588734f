import pytest

from soundsep.semantic.base import MemoryStore
from soundsep.semantic.harness.config import Setting, ExperimentConfig
from soundsep.semantic.synthdata.dataset import DatasetConfig, render_example
from soundsep.semantic.classifier.network import SoundClassifier, ClassifierConfig

DATA = DatasetConfig(num_classes=3, train=2, validation=2, test=2, duration=0.1)


@pytest.fixture
def store() -> MemoryStore:
    items = [
        render_example(DATA, split, i)
        for split, count in DATA.counts().items()
        for i in range(count)
    ]
    return MemoryStore(items, classes=DATA.num_classes)


@pytest.fixture
def classifier() -> SoundClassifier:
    return SoundClassifier(ClassifierConfig(num_classes=3, widths=(4,) * 10))


@pytest.fixture
def make_config():
    def make(setting: Setting | str = Setting.BaselineTdcn, **changes):
        values = dict(
            setting=Setting(setting),
            num_blocks=2,
            bottleneck=8,
            hidden=16,
            conditioning_channels=8,
            batch_size=1,
            max_steps=2,
            learning_rate=1e-3,
            validation_examples=1,
            options={"log_every": 0, "validate_every": 0},
        )
        values.update(changes)
        return ExperimentConfig(**values)

    return make


def pytest_addoption(parser):
    parser.addoption(
        "--runslow", action="store_true", default=False, help="run slow experiments"
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)
