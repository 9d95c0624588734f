import csv
import logging
from typing import Sequence
from pathlib import Path
from dataclasses import field, dataclass

import numpy as np
import torch

from soundsep.semantic.embeddings import (
    EmbeddingKind,
    LogitsEmbedding,
    to_prob,
    soft_or,
)
from soundsep.semantic.exceptions import ShapeError
from soundsep.semantic.synthdata.mixing import MixtureExample
from soundsep.semantic.classifier.network import SoundClassifier, classify

logger = logging.getLogger(__name__)

TOP_K = 5


@dataclass(frozen=True, eq=False)
class EmbeddingPanel:
    name: str
    class_ids: tuple[int, ...]
    """Top classes by mean probability, best first."""

    probabilities: np.ndarray
    """(F, k) probability of each top class at every frame."""


@dataclass
class EmbeddingPlot:
    image: Path
    panels: list[EmbeddingPanel] = field(default_factory=list)
    tables: dict[str, Path] = field(default_factory=dict)
    """One CSV per panel, keyed by panel name."""


def embedding_panel(
    name: str, embedding: LogitsEmbedding, k: int = TOP_K
) -> EmbeddingPanel:
    """Top-k classes of an unbatched (F, J) embedding by mean frame probability."""
    if embedding.values.dim() != 2:
        raise ShapeError("panels need a single unbatched (frames, classes) embedding")
    probs = to_prob(embedding).values.detach().cpu().double().numpy()
    order = np.argsort(-probs.mean(axis=0), kind="stable")[: min(k, probs.shape[1])]
    return EmbeddingPanel(name, tuple(int(c) for c in order), probs[:, order])


def example_panels(
    example: MixtureExample, classifier: SoundClassifier, k: int = TOP_K
) -> list[EmbeddingPanel]:
    """Panels for each source, the mixture and the soft-OR of the sources."""
    sources = [
        classify(clip, classifier, EmbeddingKind.Source, i)
        for i, clip in enumerate(example.sources)
    ]
    panels = [embedding_panel(f"source{i + 1}", e, k) for i, e in enumerate(sources)]
    panels.append(embedding_panel("mixture", classify(example.mixture, classifier), k))
    with torch.no_grad():
        panels.append(embedding_panel("soft_or", soft_or(sources), k))
    return panels


def _class_name(class_id: int, class_names: Sequence[str] | None) -> str:
    return class_names[class_id] if class_names else f"class{class_id}"


def write_panel_csv(panel: EmbeddingPanel, path: Path, class_names=None):
    """One row per frame, one column per top class."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["frame", *(_class_name(c, class_names) for c in panel.class_ids)]
        )
        for frame, row in enumerate(panel.probabilities):
            writer.writerow([frame, *(f"{p:.6f}" for p in row)])


def plot_embeddings(
    example: MixtureExample,
    classifier: SoundClassifier,
    out_path: str | Path,
    class_names: Sequence[str] | None = None,
    k: int = TOP_K,
) -> EmbeddingPlot:
    """Top-class probability curves of every panel, as a PNG plus one CSV each."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_path = Path(out_path).with_suffix(".png")
    out_path.parent.mkdir(parents=True, exist_ok=True)
    panels = example_panels(example, classifier, k)

    fig, axes = plt.subplots(
        len(panels),
        1,
        figsize=(8, 2.2 * len(panels)),
        sharex=True,
        constrained_layout=True,
    )
    for ax, panel in zip(np.atleast_1d(axes), panels):
        for j, class_id in enumerate(panel.class_ids):
            ax.plot(panel.probabilities[:, j], label=_class_name(class_id, class_names))
        ax.set_title(panel.name)
        ax.set_ylim(0.0, 1.0)
        ax.set_ylabel("probability")
        ax.legend(loc="upper right", fontsize="small")
    np.atleast_1d(axes)[-1].set_xlabel("frame")
    fig.savefig(out_path, dpi=120)
    plt.close(fig)

    plot = EmbeddingPlot(out_path, panels)
    for panel in panels:
        path = out_path.with_name(f"{out_path.stem}_{panel.name}.csv")
        write_panel_csv(panel, path, class_names)
        plot.tables[panel.name] = path
    logger.info("wrote %s and %d panel tables", out_path, len(panels))
    return plot
