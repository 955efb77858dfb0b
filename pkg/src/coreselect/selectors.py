"""Subset selection methods.

Ten methods share one output contract: a SubsetSpec of exactly n distinct
items whose weights sum to 1. Anchor-style methods cluster an item embedding
space with task-weighted K-Means and return the nearest real item to each
centroid, weighted by its cluster's share of the task-balance mass.
Learn-style methods additionally return the fitted score regressor.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .pool import ScoreMatrix
from .embeddings import EmbeddingSet, assemble_combined, pca_reduce, performance_embeddings
from .weighting import BalanceWeights, SubsetSpec, balance_weights, reference_scores
from .regression import RidgeModel, ridge_cv
from . import irt as irt_mod

METHODS = (
    "random_balanced",
    "random_sampling_learn",
    "random_search_learn",
    "variance_top",
    "difficulty_stratified",
    "irt_anchor",
    "anchor_points",
    "semantic_anchor",
    "acoustic_anchor",
    "combined_anchor",
)

LEARN_LAMBDA_GRID = (0.001, 0.01, 0.1, 1.0, 10.0, 100.0)

KMEANS_MAX_ITER = 300


@dataclass(frozen=True)
class SelectorConfig:
    method: str
    n: int
    seed: int
    bins: int = 10
    n_search: int = 1000
    holdout_fraction: float = 0.25
    lambda_grid: tuple[float, ...] = LEARN_LAMBDA_GRID
    pca_dim: int = 50
    irt_dim: int = 5
    irt_epochs: int = 500
    irt_lr: float = 0.1

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValidationError(
                f"unknown method {self.method!r}; valid: {', '.join(METHODS)}"
            )
        if self.n < 1:
            raise ValidationError("subset size n must be >= 1")
        if self.bins < 1:
            raise ValidationError("bins must be >= 1")
        if self.n_search < 1:
            raise ValidationError("n_search must be >= 1")
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ValidationError("holdout_fraction must be in (0, 1)")
        if not self.lambda_grid:
            raise ValidationError("empty lambda grid")


@dataclass
class ClusterResult:
    """Weighted K-Means output: assignments, centroids, per-cluster anchor row,
    the final weighted within-cluster sum of squares, and the objective value
    recorded after each Lloyd iteration (non-increasing)."""

    assignments: np.ndarray
    centroids: np.ndarray
    anchor_rows: np.ndarray
    objective: float
    objective_trace: tuple[float, ...] = field(default_factory=tuple)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    def cluster_weight(self, weights: np.ndarray) -> np.ndarray:
        """Sum of the item weights in each cluster."""
        return np.bincount(self.assignments, weights=weights, minlength=self.k)


def _pairwise_sq_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d2 = (
        (points**2).sum(axis=1)[:, None]
        + (centers**2).sum(axis=1)[None, :]
        - 2.0 * points @ centers.T
    )
    np.maximum(d2, 0.0, out=d2)
    return d2


def _kmeanspp_seed(
    points: np.ndarray, weights: np.ndarray, k: int, rng: np.random.Generator
) -> np.ndarray:
    """Distance-weighted greedy seeding: each new seed is drawn with
    probability proportional to weight times squared distance to the nearest
    chosen seed."""
    n = points.shape[0]
    chosen = np.empty(k, dtype=np.intp)
    chosen[0] = rng.choice(n, p=weights / weights.sum())
    d2 = _pairwise_sq_dists(points, points[chosen[0]][None, :])[:, 0]
    for j in range(1, k):
        mass = weights * d2
        total = mass.sum()
        if total <= 0.0:
            # remaining points coincide with chosen seeds; take the first unused
            used = np.zeros(n, dtype=bool)
            used[chosen[:j]] = True
            chosen[j] = int(np.flatnonzero(~used)[0])
        else:
            chosen[j] = rng.choice(n, p=mass / total)
        new_d2 = _pairwise_sq_dists(points, points[chosen[j]][None, :])[:, 0]
        np.minimum(d2, new_d2, out=d2)
    return chosen


def _weighted_objective(
    points: np.ndarray, weights: np.ndarray, centroids: np.ndarray, assign: np.ndarray
) -> float:
    diffs = points - centroids[assign]
    return float((weights * (diffs**2).sum(axis=1)).sum())


def weighted_kmeans(
    points: np.ndarray,
    weights: BalanceWeights | np.ndarray,
    k: int,
    seed: int,
    max_iter: int = KMEANS_MAX_ITER,
) -> ClusterResult:
    """Lloyd iterations with weight-aware centroid updates.

    Runs until the assignment reaches a fixpoint or max_iter. Every cluster is
    kept non-empty (an emptied cluster is repaired by giving it the point with
    the largest weighted distance contribution), anchors are the members
    nearest their centroid (ties to the lowest row index), and the recorded
    per-iteration objective never increases.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ValidationError("points must be a 2-D array")
    w = weights.weights if isinstance(weights, BalanceWeights) else np.asarray(weights)
    n = points.shape[0]
    if w.shape != (n,) or (w <= 0).any():
        raise ValidationError("weights must be positive and aligned with points")
    if not 1 <= k <= n:
        raise ValidationError(f"k={k} outside [1, {n}]")

    if k > 1 and bool((points == points[0]).all()):
        # degenerate pool: first k rows become singleton anchors, the rest join cluster 0
        assign = np.zeros(n, dtype=np.intp)
        assign[:k] = np.arange(k)
        centroids = np.repeat(points[0][None, :], k, axis=0)
        return ClusterResult(assign, centroids, np.arange(k, dtype=np.intp), 0.0, (0.0,))

    rng = np.random.default_rng(seed)
    centroids = points[_kmeanspp_seed(points, w, k, rng)].copy()
    assign = np.full(n, -1, dtype=np.intp)
    trace: list[float] = []

    for _ in range(max_iter):
        d2 = _pairwise_sq_dists(points, centroids)
        new_assign = d2.argmin(axis=1)

        counts = np.bincount(new_assign, minlength=k)
        for empty in np.flatnonzero(counts == 0):
            contrib = w * d2[np.arange(n), new_assign]
            contrib[counts[new_assign] < 2] = -np.inf  # do not empty another cluster
            mover = int(np.argmax(contrib))
            counts[new_assign[mover]] -= 1
            new_assign[mover] = empty
            counts[empty] = 1

        converged = bool((new_assign == assign).all())
        assign = new_assign
        if converged:
            break
        for c in range(k):
            members = assign == c
            wm = w[members]
            centroids[c] = (wm[:, None] * points[members]).sum(axis=0) / wm.sum()
        trace.append(_weighted_objective(points, w, centroids, assign))

    d2 = _pairwise_sq_dists(points, centroids)
    anchors = np.empty(k, dtype=np.intp)
    for c in range(k):
        members = np.flatnonzero(assign == c)
        anchors[c] = members[int(np.argmin(d2[members, c]))]
    objective = _weighted_objective(points, w, centroids, assign)
    if not trace:
        trace.append(objective)
    return ClusterResult(assign, centroids, anchors, objective, tuple(trace))


def _require_models(matrix: ScoreMatrix, minimum: int, what: str) -> None:
    if matrix.n_models < minimum:
        raise ValidationError(f"{what} needs at least {minimum} models")


def _draw_balanced(
    matrix: ScoreMatrix, n: int, rng: np.random.Generator
) -> list[str]:
    """n distinct items, probability proportional to the task-balance weight."""
    if n > matrix.n_items:
        raise ValidationError(f"n={n} exceeds pool size {matrix.n_items}")
    b = balance_weights(matrix).weights
    idx = rng.choice(matrix.n_items, size=n, replace=False, p=b / b.sum(), shuffle=False)
    return [matrix.items[i].item_id for i in idx]


def select_random_balanced(matrix: ScoreMatrix, n: int, seed: int) -> SubsetSpec:
    """Task-balanced random draw without replacement, uniform weights."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0, 0]))
    ids = _draw_balanced(matrix, n, rng)
    return SubsetSpec.uniform("random_balanced", ids, seed)


def select_variance_top(matrix: ScoreMatrix, n: int, seed: int = 0) -> SubsetSpec:
    """Top-n items by sample variance across models (K-1 denominator),
    ties broken by item_id ascending."""
    _require_models(matrix, 2, "variance selection")
    if n > matrix.n_items:
        raise ValidationError(f"n={n} exceeds pool size {matrix.n_items}")
    var = matrix.values.var(axis=0, ddof=1)
    order = sorted(range(matrix.n_items), key=lambda i: (-var[i], matrix.items[i].item_id))
    ids = [matrix.items[i].item_id for i in order[:n]]
    return SubsetSpec.uniform("variance_top", ids, seed)


def _rank_bins(order: np.ndarray, bins: int) -> list[np.ndarray]:
    """Split an ordered index array into `bins` contiguous rank groups
    (empirical quantile bins; the first N mod B groups get the extra item)."""
    return [grp for grp in np.array_split(order, bins)]


def select_difficulty_stratified(
    matrix: ScoreMatrix, n: int, bins: int, seed: int
) -> SubsetSpec:
    """Two-phase stratified draw over difficulty quantile bins.

    Phase 1 takes floor(n/bins) items per bin with within-bin probabilities
    proportional to 1/|task|; a short bin spills its quota to the nearest
    non-empty bin by index. Phase 2 re-bins the unsampled items into
    r = n mod bins fresh quantile bins and takes one from each.
    """
    _require_models(matrix, 2, "difficulty stratification")
    if n > matrix.n_items:
        raise ValidationError(f"n={n} exceeds pool size {matrix.n_items}")
    rng = np.random.default_rng(seed)
    difficulty = 1.0 - matrix.values.mean(axis=0)
    task_sizes = np.empty(matrix.n_items)
    for pos in matrix.task_index.values():
        task_sizes[pos] = len(pos)

    order = np.asarray(
        sorted(range(matrix.n_items), key=lambda i: (difficulty[i], matrix.items[i].item_id)),
        dtype=np.intp,
    )
    groups = _rank_bins(order, bins)
    chosen: list[int] = []
    taken = np.zeros(matrix.n_items, dtype=bool)

    def draw_from(pool: np.ndarray, count: int) -> None:
        avail = pool[~taken[pool]]
        count = min(count, len(avail))
        if count == 0:
            return
        p = 1.0 / task_sizes[avail]
        picks = rng.choice(avail, size=count, replace=False, p=p / p.sum(), shuffle=False)
        for i in picks:
            chosen.append(int(i))
            taken[i] = True

    quota = n // bins
    if quota:
        deficits = np.zeros(bins, dtype=int)
        for bi, grp in enumerate(groups):
            before = len(chosen)
            draw_from(grp, quota)
            deficits[bi] = quota - (len(chosen) - before)
        for bi in np.flatnonzero(deficits):
            for dist in range(1, bins):
                for nb in (bi - dist, bi + dist):
                    if 0 <= nb < bins and deficits[bi] > 0:
                        before = len(chosen)
                        draw_from(groups[nb], deficits[bi])
                        deficits[bi] -= len(chosen) - before
                if deficits[bi] == 0:
                    break

    remainder = n - len(chosen)
    if remainder:
        unsampled = order[~taken[order]]  # difficulty order preserved
        for grp in _rank_bins(unsampled, min(remainder, bins))[:remainder]:
            draw_from(grp, 1)

    if len(chosen) != n:
        raise ValidationError(f"stratified draw produced {len(chosen)} items, wanted {n}")
    ids = [matrix.items[i].item_id for i in chosen]
    return SubsetSpec.uniform("difficulty_stratified", ids, seed)


def select_anchor_points(
    embeddings: EmbeddingSet,
    matrix: ScoreMatrix,
    n: int,
    seed: int,
    method_name: str = "anchor_points",
) -> tuple[SubsetSpec, ClusterResult]:
    """Cluster the embedding space into n task-weighted clusters and return
    each cluster's nearest item with the cluster's balance-weight mass.

    Items are processed in item_id order so every tie (anchor choice, the
    degenerate identical-pool rule) resolves toward the lowest item_id.
    """
    pool_ids = tuple(it.item_id for it in matrix.items)
    if embeddings.item_ids != pool_ids:
        raise ValidationError("embedding rows do not match the pool")
    if n > matrix.n_items:
        raise ValidationError(f"n={n} exceeds pool size {matrix.n_items}")
    b = balance_weights(matrix).weights
    by_id = np.asarray(sorted(range(matrix.n_items), key=lambda i: pool_ids[i]), dtype=np.intp)
    result = weighted_kmeans(embeddings.vectors[by_id], b[by_id], n, seed)
    cluster_w = result.cluster_weight(b[by_id])
    entries = tuple(
        (pool_ids[by_id[row]], float(cw))
        for row, cw in zip(result.anchor_rows, cluster_w)
    )
    return SubsetSpec(method_name, n, seed, entries), result


@dataclass
class LearnSelection:
    """Learn-method output: the subset, the fitted score regressor, and the
    per-candidate validation MAEs examined in search mode."""

    subset: SubsetSpec
    model: RidgeModel
    candidate_mae: tuple[float, ...] = ()


def _subset_features(matrix: ScoreMatrix, item_ids: Sequence[str]) -> np.ndarray:
    positions = [matrix.item_position(i) for i in item_ids]
    return matrix.values[:, positions]


def select_learn(
    matrix: ScoreMatrix,
    n: int,
    mode: str,
    seed: int,
    lambda_grid: Sequence[float] = LEARN_LAMBDA_GRID,
    n_search: int = 1000,
    holdout_fraction: float = 0.25,
) -> LearnSelection:
    """Random-Sampling-Learn / Random-Search-Learn.

    sampling: one task-balanced draw, then a Ridge fit from subset score
    vectors to full-pool reference scores (lambda by 5-fold CV).

    search: n_search task-balanced candidate draws scored by validation MAE
    on a fixed 25% split of the source models; the best candidate is refit on
    all source models. With n_search=1 this reduces to sampling mode.
    """
    if mode not in ("sampling", "search"):
        raise ValidationError(f"unknown learn mode {mode!r}")
    _require_models(matrix, 4, "learn-method selection")
    if not lambda_grid:
        raise ValidationError("empty lambda grid")
    k = matrix.n_models
    ref = reference_scores(matrix)
    method = "random_sampling_learn" if mode == "sampling" else "random_search_learn"
    cv_folds = min(5, k)

    def candidate(index: int) -> list[str]:
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0, index]))
        return _draw_balanced(matrix, n, rng)

    def final_fit(item_ids: Sequence[str]) -> RidgeModel:
        x = _subset_features(matrix, item_ids)
        return ridge_cv(x, ref, lambda_grid, folds=cv_folds, item_ids=item_ids)

    if mode == "sampling":
        ids = candidate(0)
        return LearnSelection(SubsetSpec.uniform(method, ids, seed), final_fit(ids))

    split_rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    perm = split_rng.permutation(k)
    n_val = max(1, int(round(k * holdout_fraction)))
    val_rows, train_rows = perm[:n_val], perm[n_val:]
    if len(train_rows) < 2:
        raise ValidationError("not enough source models for the 75/25 split")
    train_folds = min(5, len(train_rows))

    best_ids: list[str] | None = None
    best_mae = np.inf
    maes: list[float] = []
    for i in range(n_search):
        ids = candidate(i)
        x = _subset_features(matrix, ids)
        model = ridge_cv(x[train_rows], ref[train_rows], lambda_grid, folds=train_folds)
        mae = float(np.abs(model.predict(x[val_rows]) - ref[val_rows]).mean())
        maes.append(mae)
        if mae < best_mae:
            best_mae = mae
            best_ids = ids

    assert best_ids is not None
    return LearnSelection(
        SubsetSpec.uniform(method, best_ids, seed), final_fit(best_ids), tuple(maes)
    )


def run_selector(
    matrix: ScoreMatrix,
    config: SelectorConfig,
    semantic: EmbeddingSet | None = None,
    acoustic: EmbeddingSet | None = None,
) -> tuple[SubsetSpec, RidgeModel | None, irt_mod.IrtModel | None]:
    """Dispatch a SelectorConfig to the matching method.

    Returns (subset, regressor or None, fitted IrtModel or None); the extras
    are what the evaluation harness needs to score held-out models.
    """
    m = config.method
    if m == "random_balanced":
        return select_random_balanced(matrix, config.n, config.seed), None, None
    if m == "variance_top":
        return select_variance_top(matrix, config.n, config.seed), None, None
    if m == "difficulty_stratified":
        return (
            select_difficulty_stratified(matrix, config.n, config.bins, config.seed),
            None,
            None,
        )
    if m in ("random_sampling_learn", "random_search_learn"):
        mode = "sampling" if m == "random_sampling_learn" else "search"
        sel = select_learn(
            matrix,
            config.n,
            mode,
            config.seed,
            lambda_grid=config.lambda_grid,
            n_search=config.n_search,
            holdout_fraction=config.holdout_fraction,
        )
        return sel.subset, sel.model, None

    _require_models(matrix, 2, f"{m} selection")
    if m == "anchor_points":
        space = performance_embeddings(matrix)
    elif m == "semantic_anchor":
        if semantic is None:
            raise ValidationError("semantic_anchor requires semantic embeddings")
        space = EmbeddingSet(
            "semantic", semantic.item_ids, pca_reduce(semantic.vectors, config.pca_dim)
        )
    elif m == "acoustic_anchor":
        if acoustic is None:
            raise ValidationError("acoustic_anchor requires acoustic embeddings")
        space = EmbeddingSet(
            "acoustic", acoustic.item_ids, pca_reduce(acoustic.vectors, config.pca_dim)
        )
    elif m == "combined_anchor":
        if semantic is None or acoustic is None:
            raise ValidationError("combined_anchor requires semantic and acoustic embeddings")
        space = assemble_combined(acoustic, semantic, matrix)
    elif m == "irt_anchor":
        responses = irt_mod.binarize(matrix)
        fitted = irt_mod.fit_m2pl(
            responses,
            d=config.irt_dim,
            epochs=config.irt_epochs,
            lr=config.irt_lr,
            seed=config.seed,
        )
        space = irt_mod.item_embeddings(fitted)
        subset, _ = select_anchor_points(space, matrix, config.n, config.seed, m)
        return subset, None, fitted
    else:  # pragma: no cover - METHODS is exhaustive
        raise ValidationError(f"unhandled method {m!r}")

    subset, _ = select_anchor_points(space, matrix, config.n, config.seed, m)
    return subset, None, None
