"""Per-output surrogate: input scaling + one regressor family, with JSON persistence."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, clone
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .gbt import GradientBoostedRegressor
from .mlp import MLPRegressor
from .scaler import StandardScaler
from .svr import EpsilonSVR

FORMAT_VERSION = 1

_REGISTRY = {
    "EpsilonSVR": EpsilonSVR,
    "GradientBoostedRegressor": GradientBoostedRegressor,
    "MLPRegressor": MLPRegressor,
}
FAMILY_CLASSES = {"SVR": EpsilonSVR, "GBT": GradientBoostedRegressor, "MLP": MLPRegressor}


class SurrogateRegressor(RegressorMixin, BaseEstimator):
    """z-score the inputs (and optionally the target), then fit ``regressor``.

    The scaler is refit on whatever rows ``fit`` sees, so inside
    cross-validation it only ever uses training folds.
    """

    def __init__(self, regressor=None, scale_target=True):
        self.regressor = regressor
        self.scale_target = scale_target

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        self.scaler_ = StandardScaler().fit(X)
        if self.scale_target:
            self.y_mean_ = float(y.mean())
            sd = float(y.std())
            self.y_scale_ = sd if sd > 0 else 1.0
        else:
            self.y_mean_, self.y_scale_ = 0.0, 1.0
        base = self.regressor if self.regressor is not None else EpsilonSVR()
        self.regressor_ = clone(base).fit(self.scaler_.transform(X), (y - self.y_mean_) / self.y_scale_)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "regressor_")
        X = check_array(X, dtype=float)
        return self.regressor_.predict(self.scaler_.transform(X)) * self.y_scale_ + self.y_mean_

    def to_dict(self):
        return {
            "version": FORMAT_VERSION,
            "kind": type(self.regressor_).__name__,
            "scale_target": self.scale_target,
            "scaler": self.scaler_.to_dict(),
            "target": {"mean": self.y_mean_, "scale": self.y_scale_},
            "model": self.regressor_.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        if "version" not in d:
            raise ValueError("model file has no version field")
        if d["version"] != FORMAT_VERSION:
            raise ValueError(f"unsupported model format version {d['version']}")
        reg = _REGISTRY[d["kind"]].from_dict(d["model"])
        obj = cls(regressor=clone(reg), scale_target=d["scale_target"])
        obj.regressor_ = reg
        obj.scaler_ = StandardScaler.from_dict(d["scaler"])
        obj.y_mean_ = float(d["target"]["mean"])
        obj.y_scale_ = float(d["target"]["scale"])
        obj.n_features_in_ = obj.scaler_.n_features_in_
        return obj


def make_model(family: str, params: dict, random_state: int = 0) -> SurrogateRegressor:
    """Build an unfitted surrogate from a flat hyperparameter dict.

    MLP layouts come as ``n_layers`` plus ``units_1..units_4``; unused unit
    entries are ignored.
    """
    params = dict(params)
    if family == "SVR":
        reg = EpsilonSVR(**params)
    elif family == "GBT":
        params.setdefault("random_state", random_state)
        reg = GradientBoostedRegressor(**params)
    elif family == "MLP":
        n_layers = int(params.pop("n_layers", 1))
        units = [int(params.pop(f"units_{i}", 16)) for i in range(1, 5)]
        for key in list(params):
            if key.startswith("units_"):
                params.pop(key)
        params.setdefault("random_state", random_state)
        params.pop("activation", None)  # ReLU only
        reg = MLPRegressor(hidden_layer_sizes=tuple(units[:n_layers]), **params)
    else:
        raise ValueError(f"unknown model family {family!r}")
    return SurrogateRegressor(regressor=reg)


def family_of(model: SurrogateRegressor) -> str:
    for fam, cls in FAMILY_CLASSES.items():
        if isinstance(model.regressor_, cls):
            return fam
    raise ValueError("unknown regressor type")


def _jsonable(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"cannot serialise {type(o)}")


def save_model(model: SurrogateRegressor, path, **meta) -> None:
    d = model.to_dict()
    if meta:
        d["meta"] = meta
    Path(path).write_text(json.dumps(d, default=_jsonable, sort_keys=True) + "\n")


def load_model(path) -> SurrogateRegressor:
    return SurrogateRegressor.from_dict(json.loads(Path(path).read_text()))
