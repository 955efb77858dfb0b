from __future__ import annotations

import numpy as np
import pytest

from coreselect.pool import ItemRecord, ScoreMatrix


def make_matrix(values, task_sizes, model_prefix="m", item_prefix="i") -> ScoreMatrix:
    """Build a ScoreMatrix from a K x N grid and per-task item counts."""
    values = np.asarray(values, dtype=np.float64)
    items = []
    pos = 0
    for t, size in enumerate(task_sizes):
        for _ in range(size):
            items.append(
                ItemRecord(
                    item_id=f"{item_prefix}{pos:04d}",
                    task_id=f"task{t:02d}",
                    metric_name="native",
                    needs_audio_in=bool(pos % 2),
                    needs_audio_out=bool(pos % 3 == 0),
                )
            )
            pos += 1
    assert pos == values.shape[1]
    model_ids = tuple(f"{model_prefix}{k:02d}" for k in range(values.shape[0]))
    return ScoreMatrix(model_ids, tuple(items), values)


def random_matrix(rng, n_models, task_sizes) -> ScoreMatrix:
    values = rng.random((n_models, sum(task_sizes)))
    return make_matrix(values, task_sizes)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
