import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted


class StandardScaler(TransformerMixin, BaseEstimator):
    """z = (x - mean) / std with the population standard deviation.

    Zero-variance columns map to 0 on transform (and back to the mean on
    inverse_transform); the stored ``scale_`` keeps the raw 0.
    """

    def fit(self, X, y=None):
        X = check_array(X, dtype=float, ensure_min_samples=2)
        self.mean_ = X.mean(axis=0)
        self.scale_ = X.std(axis=0)
        self.n_features_in_ = X.shape[1]
        return self

    def _safe_scale(self):
        return np.where(self.scale_ > 0, self.scale_, 1.0)

    def transform(self, X):
        check_is_fitted(self, "mean_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        Z = (X - self.mean_) / self._safe_scale()
        Z[:, self.scale_ == 0] = 0.0
        return Z

    def inverse_transform(self, Z):
        check_is_fitted(self, "mean_")
        Z = check_array(Z, dtype=float)
        return Z * self._safe_scale() + self.mean_

    def to_dict(self):
        return {"mean": self.mean_.tolist(), "scale": self.scale_.tolist()}

    @classmethod
    def from_dict(cls, d):
        obj = cls()
        obj.mean_ = np.asarray(d["mean"], dtype=float)
        obj.scale_ = np.asarray(d["scale"], dtype=float)
        obj.n_features_in_ = obj.mean_.shape[0]
        return obj
