from .model import (
    SystemOutput as SystemOutput,
    SeparationSystem as SeparationSystem,
    restore_system as restore_system,
    store_geometry as store_geometry,
    system_checkpoint as system_checkpoint,
    source_embeddings as source_embeddings,
)
from .plots import (
    EmbeddingPanel as EmbeddingPanel,
    EmbeddingPlot as EmbeddingPlot,
    example_panels as example_panels,
    plot_embeddings as plot_embeddings,
)
from .sweep import (
    sweep as sweep,
    run_one as run_one,
    load_grid as load_grid,
    expand_grid as expand_grid,
    summary_rows as summary_rows,
)
from .train import Trainer as Trainer, train as train
from .config import (
    SETTINGS as SETTINGS,
    Setting as Setting,
    SettingSpec as SettingSpec,
    ExperimentConfig as ExperimentConfig,
    load_config as load_config,
    env_overrides as env_overrides,
)
from .report import (
    collate as collate,
    find_reports as find_reports,
    write_report as write_report,
)
from .records import (
    EvalRow as EvalRow,
    RunRecord as RunRecord,
    RunStatus as RunStatus,
    EvalReport as EvalReport,
)
from .evaluate import (
    evaluate as evaluate,
    score_example as score_example,
    system_estimator as system_estimator,
    classifier_agreement as classifier_agreement,
    evaluate_estimator as evaluate_estimator,
    identity_estimator as identity_estimator,
    binary_mask_estimator as binary_mask_estimator,
)
from .checkpoint import (
    FORMAT_VERSION as FORMAT_VERSION,
    Checkpoint as Checkpoint,
    load_classifier as load_classifier,
    save_classifier as save_classifier,
)
