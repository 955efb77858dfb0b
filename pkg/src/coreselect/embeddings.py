"""Item embedding spaces for clustering.

Variants: raw performance vectors (one score per source model), PCA-reduced
semantic/acoustic vectors ingested from CSV, latent-trait embeddings built by
the irt module, and the combined concatenation
[acoustic | semantic | performance | audio-metadata bits].
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .pool import ScoreMatrix

EMBEDDING_KINDS = ("performance", "semantic", "acoustic", "irt", "combined")


@dataclass(frozen=True)
class EmbeddingSet:
    """One vector per pool item, rows in pool item order."""

    kind: str
    item_ids: tuple[str, ...]
    vectors: np.ndarray  # N x dim

    def __post_init__(self) -> None:
        if self.kind not in EMBEDDING_KINDS:
            raise ValidationError(f"unknown embedding kind {self.kind!r}")
        v = np.asarray(self.vectors, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != len(self.item_ids):
            raise ValidationError("embedding rows misaligned with item ids")
        if v.size and not np.isfinite(v).all():
            raise ValidationError("non-finite embedding values")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "vectors", v)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def pca_reduce(vectors: np.ndarray, k: int) -> np.ndarray:
    """Project mean-centered rows onto the top-k principal directions.

    Components are ordered by descending explained variance; each component's
    sign is fixed so its largest-magnitude loading is positive, making the
    output deterministic across runs and platforms. Columns beyond the matrix
    rank are exactly zero.
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2:
        raise ValidationError("pca_reduce expects a 2-D array")
    n, d = x.shape
    if n < 2:
        raise ValidationError("pca_reduce needs at least 2 rows")
    if not 1 <= k <= d:
        raise ValidationError(f"pca target k={k} outside [1, {d}]")
    if not np.isfinite(x).all():
        raise ValidationError("non-finite input to pca_reduce")

    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order][:k]
    components = eigvecs[:, order][:, :k]

    for j in range(components.shape[1]):
        lead = np.argmax(np.abs(components[:, j]))
        if components[lead, j] < 0:
            components[:, j] = -components[:, j]

    projected = centered @ components
    tol = max(n, d) * np.finfo(np.float64).eps * max(float(eigvals[0]), 0.0)
    projected[:, eigvals <= tol] = 0.0
    return projected


def minmax_scale(vectors: np.ndarray) -> np.ndarray:
    """Affine-map each column to [0,1]; constant columns map to all zeros."""
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValidationError("minmax_scale expects a non-empty 2-D array")
    if not np.isfinite(x).all():
        raise ValidationError("non-finite input to minmax_scale")
    lo = x.min(axis=0)
    span = x.max(axis=0) - lo
    out = np.zeros_like(x)
    nonconst = span > 0
    out[:, nonconst] = (x[:, nonconst] - lo[nonconst]) / span[nonconst]
    return out


def performance_embeddings(matrix: ScoreMatrix) -> EmbeddingSet:
    """Each item's vector of source-model scores (dim = number of models)."""
    return EmbeddingSet(
        "performance",
        tuple(it.item_id for it in matrix.items),
        matrix.values.T,
    )


def _check_alignment(embedding: EmbeddingSet, matrix: ScoreMatrix, label: str) -> None:
    pool_ids = tuple(it.item_id for it in matrix.items)
    if embedding.item_ids != pool_ids:
        missing = set(pool_ids) - set(embedding.item_ids)
        if missing:
            raise ValidationError(
                f"{label} embeddings missing items: {sorted(missing)[:5]}"
            )
        raise ValidationError(f"{label} embeddings not in pool item order")


def assemble_combined(
    acoustic: EmbeddingSet,
    semantic: EmbeddingSet,
    matrix: ScoreMatrix,
) -> EmbeddingSet:
    """Concatenate [pca_K(acoustic) | pca_K(semantic) | scores | audio bits].

    Acoustic/semantic blocks are PCA-reduced to K = number of source models
    and then MinMax-scaled, matching the [0,1] range of the score block; the
    metadata block is the two audio-required bits. Total dim is 3K + 2.
    """
    _check_alignment(acoustic, matrix, "acoustic")
    _check_alignment(semantic, matrix, "semantic")
    k = matrix.n_models
    ac = minmax_scale(pca_reduce(acoustic.vectors, k))
    se = minmax_scale(pca_reduce(semantic.vectors, k))
    perf = matrix.values.T
    meta = np.asarray(
        [[float(it.needs_audio_in), float(it.needs_audio_out)] for it in matrix.items]
    )
    combined = np.hstack([ac, se, perf, meta])
    return EmbeddingSet("combined", tuple(it.item_id for it in matrix.items), combined)


def load_embedding_csv(path: str | Path, matrix: ScoreMatrix, kind: str) -> EmbeddingSet:
    """Read ``item_id,v0,v1,...`` rows and align them to the pool item order."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        if len(header) < 2 or header[0].strip() != "item_id":
            raise ValidationError(f"{path}: expected header item_id,v0,v1,...")
        width = len(header) - 1
        rows: dict[str, np.ndarray] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != width + 1:
                raise ValidationError(f"{path}:{lineno}: expected {width + 1} fields")
            item_id = row[0].strip()
            if item_id in rows:
                raise ValidationError(f"{path}: duplicate embedding for {item_id!r}")
            try:
                rows[item_id] = np.asarray([float(c) for c in row[1:]])
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: non-numeric value") from None

    vectors = np.empty((matrix.n_items, width))
    for pos, it in enumerate(matrix.items):
        if it.item_id not in rows:
            raise ValidationError(f"{path}: missing embedding for item {it.item_id!r}")
        vectors[pos] = rows.pop(it.item_id)
    if rows:
        raise ValidationError(f"{path}: embeddings for unknown items {sorted(rows)[:5]}")
    return EmbeddingSet(kind, tuple(it.item_id for it in matrix.items), vectors)
