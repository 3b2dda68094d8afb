"""Shapley attributions for fitted surrogates.

Coalition values use interventional marginalisation: features in the
coalition come from the explained instance, the rest from each background row,
and the model output is averaged over the background.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

MAX_EXACT_FEATURES = 20
_ROW_BUDGET = 200_000  # rows per predict call when evaluating coalitions


def _predictor(model):
    if hasattr(model, "predict"):
        return lambda X: np.asarray(model.predict(X), dtype=float).ravel()
    if callable(model):
        return lambda X: np.asarray(model(X), dtype=float).ravel()
    raise TypeError("model must have a predict method or be callable")


def make_background(X, size: int = 100, seed: int = 0) -> np.ndarray:
    """Up to ``size`` rows of ``X`` drawn without replacement (all rows if fewer)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or len(X) == 0:
        raise ValueError("background source must be a non-empty 2-D array")
    if len(X) <= size:
        return X.copy()
    idx = np.sort(np.random.default_rng(seed).choice(len(X), size=size, replace=False))
    return X[idx]


def _check(instance, background):
    x = np.asarray(instance, dtype=float).ravel()
    bg = np.atleast_2d(np.asarray(background, dtype=float))
    if bg.size == 0:
        raise ValueError("background must be non-empty")
    if bg.shape[1] != x.size:
        raise ValueError(f"background has {bg.shape[1]} features, instance has {x.size}")
    return x, bg


@dataclass(frozen=True)
class Attribution:
    instance: np.ndarray
    baseline: float
    phi: np.ndarray
    prediction: float
    feature_names: tuple
    method: str = "exact"

    def __post_init__(self):
        for name in ("instance", "phi"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def efficiency_gap(self) -> float:
        return float(abs(self.phi.sum() - (self.prediction - self.baseline)))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"feature": self.feature_names, "value": self.instance, "phi": self.phi})


def _names(feature_names, k):
    if feature_names is None:
        return tuple(f"x{i}" for i in range(k))
    if len(feature_names) != k:
        raise ValueError("feature_names length does not match the number of features")
    return tuple(feature_names)


def _coalition_values(predict, x, bg, masks, k):
    """Mean model output over the background for each coalition bitmask."""
    masks = np.asarray(masks, dtype=np.int64)
    bits = ((masks[:, None] >> np.arange(k)) & 1).astype(bool)
    n_bg = len(bg)
    chunk = max(1, _ROW_BUDGET // n_bg)
    out = np.empty(len(masks))
    for start in range(0, len(masks), chunk):
        b = bits[start:start + chunk]
        rows = np.where(b[:, None, :], x[None, None, :], bg[None, :, :]).reshape(-1, k)
        out[start:start + len(b)] = predict(rows).reshape(len(b), n_bg).mean(axis=1)
    return out


def shapley(model, instance, background, feature_names=None) -> Attribution:
    """Exact Shapley values by enumerating all 2^k coalitions once each."""
    x, bg = _check(instance, background)
    k = x.size
    if k > MAX_EXACT_FEATURES:
        raise ValueError(f"exact Shapley values need 2^{k} coalitions; use shapley_sampled for "
                         f"more than {MAX_EXACT_FEATURES} features")
    predict = _predictor(model)
    masks = np.arange(1 << k, dtype=np.int64)
    v = _coalition_values(predict, x, bg, masks, k)
    size = np.array([bin(m).count("1") for m in range(1 << k)])
    weight = np.array([math.factorial(s) * math.factorial(k - s - 1) / math.factorial(k)
                       for s in range(k)])
    phi = np.empty(k)
    for i in range(k):
        without = masks[(masks >> i) & 1 == 0]
        phi[i] = np.sum(weight[size[without]] * (v[without | (1 << i)] - v[without]))
    return Attribution(x, float(v[0]), phi, float(v[-1]), _names(feature_names, k), "exact")


def shapley_sampled(model, instance, background, n_permutations: int = 100, seed: int = 0,
                    feature_names=None) -> Attribution:
    """Permutation-sampling estimate; unbiased per feature.

    Each permutation adds features one by one and credits each with the change
    in coalition value. Any residual against ``f(x) - baseline`` (rounding only,
    since every chain telescopes) is spread in proportion to ``|phi|``.
    """
    if n_permutations < 1:
        raise ValueError("n_permutations must be >= 1")
    x, bg = _check(instance, background)
    k = x.size
    predict = _predictor(model)
    rng = np.random.default_rng(seed)
    perms = np.array([rng.permutation(k) for _ in range(n_permutations)])
    chains = np.zeros((n_permutations, k + 1), dtype=np.int64)
    for step in range(k):
        chains[:, step + 1] = chains[:, step] | (np.int64(1) << perms[:, step])
    full = (1 << k) - 1
    unique = np.unique(np.concatenate([chains.ravel(), [0, full]]))
    values = dict(zip(unique.tolist(), _coalition_values(predict, x, bg, unique, k)))
    v = np.vectorize(values.__getitem__, otypes=[float])(chains)
    phi = np.zeros(k)
    np.add.at(phi, perms.ravel(), np.diff(v, axis=1).ravel())
    phi /= n_permutations
    baseline, prediction = values[0], values[full]
    residual = (prediction - baseline) - phi.sum()
    mag = np.abs(phi)
    phi = phi + (residual * mag / mag.sum() if mag.sum() > 0 else residual / k)
    return Attribution(x, float(baseline), phi, float(prediction), _names(feature_names, k), "sampled")


@dataclass(frozen=True)
class BeeswarmData:
    phi: pd.DataFrame     # instances x features, columns by importance
    values: pd.DataFrame  # raw feature values, same layout
    baseline: float
    predictions: np.ndarray  # model output per instance

    def efficiency_gaps(self) -> np.ndarray:
        return np.abs(self.phi.to_numpy().sum(axis=1) - (self.predictions - self.baseline))

    @property
    def order(self) -> list[str]:
        return list(self.phi.columns)

    def importance(self) -> pd.Series:
        return self.phi.abs().mean()

    def to_frame(self) -> pd.DataFrame:
        long = self.phi.reset_index(names="instance").melt(id_vars="instance", var_name="feature",
                                                           value_name="phi")
        vals = self.values.reset_index(names="instance").melt(id_vars="instance", var_name="feature",
                                                              value_name="value")
        df = long.merge(vals, on=["instance", "feature"])
        rank = {f: r for r, f in enumerate(self.order)}
        df["rank"] = df["feature"].map(rank)
        return df.sort_values(["rank", "instance"]).reset_index(drop=True)


def beeswarm_data(model, dataset, background, feature_names=None, method: str = "exact",
                  n_permutations: int = 100, seed: int = 0) -> BeeswarmData:
    """Attributions for every row of ``dataset``; features sorted by mean |phi|."""
    data = np.atleast_2d(np.asarray(dataset, dtype=float))
    if data.size == 0:
        raise ValueError("dataset must be non-empty")
    names = _names(feature_names, data.shape[1])
    rows, preds, base = [], [], None
    for r, x in enumerate(data):
        if method == "exact":
            a = shapley(model, x, background, names)
        elif method == "sampled":
            a = shapley_sampled(model, x, background, n_permutations, seed=(seed, r), feature_names=names)
        else:
            raise ValueError(f"unknown method {method!r}")
        rows.append(a.phi)
        preds.append(a.prediction)
        base = a.baseline
    phi = pd.DataFrame(np.array(rows), columns=list(names))
    imp = phi.abs().mean()
    order = sorted(names, key=lambda n: (-imp[n], names.index(n)))
    vals = pd.DataFrame(data, columns=list(names))
    return BeeswarmData(phi[order], vals[order], float(base), np.array(preds))


def waterfall_data(attribution: Attribution) -> pd.DataFrame:
    """Contributions by descending |phi|, each with its running start/end.

    The last ``end`` is pinned to the prediction so floating-point
    accumulation cannot leave it a few ulps off.
    """
    a = attribution
    order = sorted(range(len(a.phi)), key=lambda i: (-abs(a.phi[i]), i))
    start = a.baseline
    rows = []
    for i in order:
        end = start + a.phi[i]
        rows.append({"feature": a.feature_names[i], "value": a.instance[i], "phi": a.phi[i],
                     "start": start, "end": end})
        start = end
    df = pd.DataFrame(rows, columns=["feature", "value", "phi", "start", "end"])
    if len(df):
        df.loc[df.index[-1], "end"] = a.prediction
    return df


def grid_response(model, feature_i: int, feature_j: int, fixed_point, lower, upper,
                  grid_n: int = 25, feature_names=None) -> pd.DataFrame:
    """Model output over a ``grid_n`` x ``grid_n`` lattice of two features.

    Other features stay at ``fixed_point``. Returned long-form with columns
    named after the two features plus ``prediction``.
    """
    if feature_i == feature_j:
        raise ValueError("grid features must be distinct")
    if grid_n < 2:
        raise ValueError("grid_n must be >= 2")
    x0 = np.asarray(fixed_point, dtype=float).ravel()
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    names = _names(feature_names, x0.size)
    gi = np.linspace(lo[feature_i], hi[feature_i], grid_n)
    gj = np.linspace(lo[feature_j], hi[feature_j], grid_n)
    A, B = np.meshgrid(gi, gj, indexing="ij")
    X = np.tile(x0, (grid_n * grid_n, 1))
    X[:, feature_i] = A.ravel()
    X[:, feature_j] = B.ravel()
    pred = _predictor(model)(X)
    return pd.DataFrame({names[feature_i]: A.ravel(), names[feature_j]: B.ravel(), "prediction": pred})
