from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import clone

FAMILY_ORDER = ("SVR", "GBT", "MLP")


class UndefinedScoreError(ValueError):
    """R^2 is undefined when the true values have zero variance."""


def r2_score(y_true, y_pred) -> float:
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    ss_tot = np.sum((y_true - y_true.mean()) ** 2)
    if ss_tot == 0:
        raise UndefinedScoreError("R^2 undefined: constant targets")
    return float(1.0 - np.sum((y_true - y_pred) ** 2) / ss_tot)


def train_test_split(n: int, test_size: float = 0.3, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Shuffled index split; the test share is rounded to the nearest row."""
    order = np.random.default_rng(seed).permutation(n)
    n_test = int(round(test_size * n))
    return np.sort(order[n_test:]), np.sort(order[:n_test])


def kfold_indices(n: int, k: int = 5, seed: int = 0) -> list[tuple[np.ndarray, np.ndarray]]:
    if k < 2:
        raise ValueError("k must be >= 2")
    if n < k:
        raise ValueError(f"cannot split {n} rows into {k} folds")
    order = np.random.default_rng(seed).permutation(n)
    folds = np.array_split(order, k)
    out = []
    for i in range(k):
        test = np.sort(folds[i])
        train = np.sort(np.concatenate([folds[j] for j in range(k) if j != i]))
        out.append((train, test))
    return out


@dataclass
class CvReport:
    scores: list[float | None]
    mean: float | None = None
    std: float | None = None
    undefined_folds: int = 0
    tag: str | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        valid = [s for s in self.scores if s is not None]
        self.undefined_folds = len(self.scores) - len(valid)
        if valid and self.mean is None:
            self.mean = float(np.mean(valid))
            self.std = float(np.std(valid))

    @property
    def valid(self) -> bool:
        return self.mean is not None

    def to_dict(self):
        return asdict(self)


def cross_validate(estimator, X, y, k: int = 5, seed: int = 0, tag: str | None = None) -> CvReport:
    """k-fold R^2 of a fresh clone per fold.

    Folds whose held-out targets are constant get a ``None`` score rather
    than NaN; they are excluded from mean/std.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    scores: list[float | None] = []
    for train, test in kfold_indices(len(y), k, seed):
        model = clone(estimator).fit(X[train], y[train])
        try:
            scores.append(r2_score(y[test], model.predict(X[test])))
        except UndefinedScoreError:
            scores.append(None)
    return CvReport(scores=scores, tag=tag)


def select_best(reports: dict[str, CvReport]) -> str:
    """Highest mean CV R^2; ties -> lower std -> SVR, GBT, MLP order."""
    if not reports:
        raise ValueError("no candidates")

    def rank(tag):
        r = reports[tag]
        order = FAMILY_ORDER.index(tag) if tag in FAMILY_ORDER else len(FAMILY_ORDER)
        if not r.valid:
            return (1, 0.0, 0.0, order, tag)
        return (0, -r.mean, r.std, order, tag)

    return min(reports, key=rank)
