from .network import (
    NUM_GROUPS as NUM_GROUPS,
    SeparableGroup as SeparableGroup,
    SoundClassifier as SoundClassifier,
    ClassifierConfig as ClassifierConfig,
    classify as classify,
)
from .training import (
    FreezeMode as FreezeMode,
    FreezePolicy as FreezePolicy,
    PretrainConfig as PretrainConfig,
    ClassifierScores as ClassifierScores,
    ClassifierTrainer as ClassifierTrainer,
    pretrain as pretrain,
    frame_targets as frame_targets,
    set_trainable as set_trainable,
    trainable_layers as trainable_layers,
    mean_average_precision as mean_average_precision,
)
