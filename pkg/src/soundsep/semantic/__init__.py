from .clip import (
    Split as Split,
    AudioClip as AudioClip,
    ClipGeometry as ClipGeometry,
)
from .base import (
    MockStore as MockStore,
    MemoryStore as MemoryStore,
    ManifestStore as ManifestStore,
    TrainerOptions as TrainerOptions,
    ExampleStoreABC as ExampleStoreABC,
)
from .exceptions import (
    LoadError as LoadError,
    ShapeError as ShapeError,
    DomainError as DomainError,
    TrainingError as TrainingError,
    SemanticSepError as SemanticSepError,
    ConfigurationError as ConfigurationError,
)
from .embeddings import (
    EmbeddingKind as EmbeddingKind,
    LogitsEmbedding as LogitsEmbedding,
    soft_or as soft_or,
    assemble as assemble,
    to_prob as to_prob,
    to_logits as to_logits,
)
from .gradcheck import (
    GradCheckReport as GradCheckReport,
    grad_check as grad_check,
    grad_check_separator as grad_check_separator,
    grad_check_classifier as grad_check_classifier,
)
from .target import SemanticSeparation as SemanticSeparation
