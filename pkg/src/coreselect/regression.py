"""Closed-form Ridge regression with cross-validated regularization, plus the
leave-one-model-out and exhaustive 5-2 pairwise preference protocols."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ValidationError
from .pool import HumanRatingsTable

# lambda grid for preference protocols: nine powers of ten, 1e-4 .. 1e4
PREFERENCE_LAMBDA_GRID = tuple(10.0 ** e for e in range(-4, 5))

_SINGULAR_COND = 1e12


@dataclass(frozen=True)
class RidgeModel:
    """Linear predictor y = w.x + b with an unpenalized intercept."""

    weights: np.ndarray
    intercept: float
    lam: float
    item_ids: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1:
            raise ValidationError("ridge weights must be 1-D")
        if self.item_ids is not None and len(self.item_ids) != w.size:
            raise ValidationError("ridge weights misaligned with feature item ids")
        w = w.copy()
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return x @ self.weights + self.intercept

    def to_json_dict(self) -> dict:
        ids = self.item_ids or tuple(f"f{i}" for i in range(self.weights.size))
        return {
            "lambda": float(self.lam),
            "intercept": float(self.intercept),
            "items": [
                {"item_id": i, "weight": float(w)} for i, w in zip(ids, self.weights)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json_dict(cls, data: Mapping) -> "RidgeModel":
        items = data["items"]
        return cls(
            weights=np.asarray([d["weight"] for d in items]),
            intercept=float(data["intercept"]),
            lam=float(data["lambda"]),
            item_ids=tuple(d["item_id"] for d in items),
        )


def ridge_fit(
    x: np.ndarray,
    y: np.ndarray,
    lam: float,
    item_ids: Sequence[str] | None = None,
) -> RidgeModel:
    """Minimize sum (y - Xw - b)^2 + lam * |w|^2 with the intercept free.

    Solved exactly on centered data, so X'(y - Xw - b) = lam * w and the
    residuals sum to zero. lam = 0 is allowed only when the normal equations
    are well-conditioned.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.size:
        raise ValidationError("ridge_fit expects X (m x n) and y (m)")
    if x.shape[0] < 1:
        raise ValidationError("ridge_fit needs at least one row")
    if lam < 0:
        raise ValidationError("negative ridge penalty")

    x_mean = x.mean(axis=0)
    y_mean = float(y.mean())
    xc = x - x_mean
    yc = y - y_mean
    gram = xc.T @ xc + lam * np.eye(x.shape[1])
    if lam == 0.0:
        cond = np.linalg.cond(gram) if gram.size else np.inf
        if not np.isfinite(cond) or cond > _SINGULAR_COND:
            raise ValidationError("singular normal equations at lambda = 0")
    w = np.linalg.solve(gram, xc.T @ yc)
    b = y_mean - float(x_mean @ w)
    return RidgeModel(w, b, float(lam), tuple(item_ids) if item_ids else None)


def ridge_cv(
    x: np.ndarray,
    y: np.ndarray,
    grid: Sequence[float],
    folds: int,
    item_ids: Sequence[str] | None = None,
) -> RidgeModel:
    """Pick lambda by K-fold CV (ties go to the larger lambda), refit on all rows.

    Fold assignment is the deterministic stripe row i -> fold i mod folds;
    with folds equal to the number of rows this is leave-one-out.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    grid = [float(g) for g in grid]
    if not grid:
        raise ValidationError("empty lambda grid")
    if len(grid) == 1:
        return ridge_fit(x, y, grid[0], item_ids)
    m = x.shape[0]
    if folds < 2:
        raise ValidationError("cross-validation needs at least 2 folds")
    if folds > m:
        raise ValidationError(f"folds={folds} exceeds {m} rows")

    assignment = np.arange(m) % folds
    best_lam = None
    best_err = np.inf
    for lam in sorted(grid):
        fold_errs = []
        for f in range(folds):
            held = assignment == f
            model = ridge_fit(x[~held], y[~held], lam)
            resid = model.predict(x[held]) - y[held]
            fold_errs.append(float(np.mean(resid**2)))
        err = float(np.mean(fold_errs))
        if err <= best_err:  # <= so equal error prefers the larger lambda
            best_err = err
            best_lam = lam
    return ridge_fit(x, y, best_lam, item_ids)


@dataclass
class FoldOutcome:
    """One LOMO fold or one 5-2 pair."""

    held_out: tuple[str, ...]
    lam: float
    pearson_r: float | None = None
    degenerate: bool = False
    predictions: tuple[float, ...] = ()
    correct: bool | None = None

    def to_json_dict(self) -> dict:
        out: dict = {"held_out": list(self.held_out), "lambda": self.lam}
        if self.correct is None:
            out["pearson_r"] = self.pearson_r
            out["degenerate"] = self.degenerate
        else:
            out["correct"] = self.correct
            out["predictions"] = list(self.predictions)
        return out


@dataclass
class ProtocolReport:
    """Per-fold outcomes plus the protocol aggregate."""

    protocol: str
    dimension: str
    grid: tuple[float, ...]
    folds: list[FoldOutcome] = field(default_factory=list)
    mean_pearson: float | None = None
    heldout_pearson: float | None = None
    accuracy: float | None = None

    def to_json_dict(self) -> dict:
        out = {
            "protocol": self.protocol,
            "dimension": self.dimension,
            "lambda_grid": list(self.grid),
            "folds": [f.to_json_dict() for f in self.folds],
        }
        if self.protocol == "lomo":
            out["mean_pearson"] = self.mean_pearson
            out["heldout_pearson"] = self.heldout_pearson
        else:
            out["accuracy"] = self.accuracy
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2) + "\n"


def _pearson_or_none(x: np.ndarray, y: np.ndarray) -> float | None:
    if x.max() == x.min() or y.max() == y.min():
        return None  # zero variance, correlation undefined
    xc = x - x.mean()
    yc = y - y.mean()
    denom = float(np.sqrt((xc**2).sum() * (yc**2).sum()))
    if denom == 0.0:
        return None
    return float((xc @ yc) / denom)


def _align_ratings(
    subset_scores: np.ndarray, ratings: HumanRatingsTable, dimension: str
) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(subset_scores, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != len(ratings.model_ids):
        raise ValidationError(
            "subset score rows must match the rated models, in ratings order"
        )
    return x, ratings.column(dimension)


def preference_lomo(
    subset_scores: np.ndarray,
    ratings: HumanRatingsTable,
    dimension: str,
    grid: Sequence[float] = PREFERENCE_LAMBDA_GRID,
) -> ProtocolReport:
    """Leave-one-model-out preference prediction.

    For each held-out model: select lambda by nested leave-one-out CV on the
    remaining models, refit on them, predict all models, and correlate the
    predictions with the ratings over all models. The aggregate is the mean
    fold Pearson; heldout_pearson additionally correlates only the held-out
    predictions collected across folds.
    """
    x, y = _align_ratings(subset_scores, ratings, dimension)
    k = x.shape[0]
    if k < 3:
        raise ValidationError("LOMO needs at least 3 rated models")
    report = ProtocolReport("lomo", dimension, tuple(grid))
    heldout_preds = np.empty(k)
    for t in range(k):
        train = np.arange(k) != t
        model = ridge_cv(x[train], y[train], grid, folds=k - 1)
        preds = model.predict(x)
        heldout_preds[t] = preds[t]
        r = _pearson_or_none(preds, y)
        report.folds.append(
            FoldOutcome(
                held_out=(ratings.model_ids[t],),
                lam=model.lam,
                pearson_r=r,
                degenerate=r is None,
            )
        )
    defined = [f.pearson_r for f in report.folds if f.pearson_r is not None]
    report.mean_pearson = float(np.mean(defined)) if defined else None
    report.heldout_pearson = _pearson_or_none(heldout_preds, y)
    return report


def pairwise_52(
    subset_scores: np.ndarray,
    ratings: HumanRatingsTable,
    dimension: str,
    grid: Sequence[float] = PREFERENCE_LAMBDA_GRID,
) -> ProtocolReport:
    """Exhaustive train-on-(K-2)/test-on-2 pairwise ranking accuracy.

    Every C(K,2) held-out pair is enumerated; lambda is selected by nested
    leave-one-out CV on the training models. Tied predictions (or tied
    ratings) count as incorrect.
    """
    x, y = _align_ratings(subset_scores, ratings, dimension)
    k = x.shape[0]
    if k < 4:
        raise ValidationError("the 5-2 protocol needs at least 4 rated models")
    report = ProtocolReport("pairwise52", dimension, tuple(grid))
    correct = 0
    for i, j in itertools.combinations(range(k), 2):
        train = np.ones(k, dtype=bool)
        train[[i, j]] = False
        model = ridge_cv(x[train], y[train], grid, folds=k - 2)
        pred_i, pred_j = model.predict(x[[i, j]])
        ok = bool(
            pred_i != pred_j and y[i] != y[j] and ((pred_i > pred_j) == (y[i] > y[j]))
        )
        correct += ok
        report.folds.append(
            FoldOutcome(
                held_out=(ratings.model_ids[i], ratings.model_ids[j]),
                lam=model.lam,
                predictions=(float(pred_i), float(pred_j)),
                correct=ok,
            )
        )
    report.accuracy = correct / len(report.folds)
    return report
