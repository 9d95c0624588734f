import numpy as np
import torch
import pytest

from soundsep.semantic.clip import Split
from soundsep.semantic.embeddings import LogitsEmbedding
from soundsep.semantic.exceptions import ShapeError
from soundsep.semantic.harness.plots import (
    embedding_panel,
    example_panels,
    plot_embeddings,
)


def _full(panel) -> np.ndarray:
    out = np.zeros((panel.probabilities.shape[0], 3))
    out[:, list(panel.class_ids)] = panel.probabilities
    return out


def test_embedding_panel_orders_classes():
    logits = torch.tensor([[-3.0, 2.0, 0.0], [-3.0, 1.0, 0.5]])
    panel = embedding_panel("x", LogitsEmbedding(logits), k=2)
    assert panel.class_ids == (1, 2)
    assert panel.probabilities.shape == (2, 2)

    with pytest.raises(ShapeError):
        embedding_panel("x", LogitsEmbedding(torch.zeros(2, 4, 3)))


def test_soft_or_panel_dominates_sources(store, classifier):
    example = store.example(store.ids(Split.Test)[0])
    panels = example_panels(example, classifier)

    assert [p.name for p in panels] == ["source1", "source2", "mixture", "soft_or"]
    assert all(p.probabilities.shape == (11, 3) for p in panels)
    soft = _full(panels[-1])
    for source in panels[:2]:
        assert np.all(soft >= _full(source) - 1e-5)


def test_plot_embeddings_writes_image_and_tables(tmp_path, store, classifier):
    example = store.example(store.ids(Split.Test)[0])
    out = tmp_path / "plots" / "first"
    plot = plot_embeddings(example, classifier, out, ["a", "b", "c"])

    assert plot.image == tmp_path / "plots" / "first.png"
    assert plot.image.stat().st_size > 0
    assert set(plot.tables) == {"source1", "source2", "mixture", "soft_or"}
    lines = plot.tables["mixture"].read_text().splitlines()
    assert len(lines) == 12
    assert lines[0].split(",")[0] == "frame"
    assert sorted(lines[0].split(",")[1:]) == ["a", "b", "c"]
