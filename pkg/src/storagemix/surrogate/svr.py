"""Epsilon-insensitive support vector regression solved in the dual by SMO.

The dual is written over 2l variables (alpha, alpha*) as in LIBSVM; the
working pair is chosen by maximal KKT violation with second-order gain.
"""
import numba
import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

_TAU = 1e-12


@numba.njit(cache=True)
def _smo(K, target, C, eps, tol, max_iter):
    l = target.shape[0]
    n = 2 * l
    alpha = np.zeros(n)
    y = np.empty(n)
    G = np.empty(n)
    QD = np.empty(n)
    for t in range(l):
        y[t] = 1.0
        y[t + l] = -1.0
        G[t] = eps - target[t]
        G[t + l] = eps + target[t]
        QD[t] = K[t, t]
        QD[t + l] = K[t, t]

    it = 0
    while it < max_iter:
        # working set selection (second order, LIBSVM WSS3)
        gmax = -np.inf
        i = -1
        for t in range(n):
            if y[t] > 0:
                if alpha[t] < C and -G[t] >= gmax:
                    gmax = -G[t]
                    i = t
            else:
                if alpha[t] > 0 and G[t] >= gmax:
                    gmax = G[t]
                    i = t
        if i < 0:
            break
        ii = i % l
        Ki = K[ii]
        # second-order gain uses the pair's kernel distance K_ii + K_jj - 2 K_ij
        gmax2 = -np.inf
        j = -1
        obj_min = np.inf
        for tt in range(l):
            # alpha (y = +1) half
            t = tt
            if alpha[t] > 0:
                diff = gmax + G[t]
                if G[t] >= gmax2:
                    gmax2 = G[t]
                if diff > 0:
                    quad = QD[i] + QD[t] - 2.0 * Ki[tt]
                    if quad <= 0:
                        quad = _TAU
                    od = -(diff * diff) / quad
                    if od <= obj_min:
                        obj_min = od
                        j = t
        for tt in range(l):
            # alpha* (y = -1) half
            t = tt + l
            if alpha[t] < C:
                diff = gmax - G[t]
                if -G[t] >= gmax2:
                    gmax2 = -G[t]
                if diff > 0:
                    quad = QD[i] + QD[t] - 2.0 * Ki[tt]
                    if quad <= 0:
                        quad = _TAU
                    od = -(diff * diff) / quad
                    if od <= obj_min:
                        obj_min = od
                        j = t
        if gmax + gmax2 < tol or j < 0:
            break
        jj = j % l
        it += 1

        ai_old = alpha[i]
        aj_old = alpha[j]
        qij = y[i] * y[j] * K[ii, jj]
        if y[i] != y[j]:
            quad = QD[i] + QD[j] + 2.0 * qij
            if quad <= 0:
                quad = _TAU
            delta = (-G[i] - G[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            else:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = C + diff
        else:
            quad = QD[i] + QD[j] - 2.0 * qij
            if quad <= 0:
                quad = _TAU
            delta = (G[i] - G[j]) / quad
            s = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if s > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = s - C
            else:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = s
            if s > C:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = s - C
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = s

        dai = alpha[i] - ai_old
        daj = alpha[j] - aj_old
        ci = y[i] * dai
        cj = y[j] * daj
        Kj = K[jj]
        for tt in range(l):
            step = ci * Ki[tt] + cj * Kj[tt]
            G[tt] += step
            G[tt + l] -= step

    # bias from free variables, else midpoint of the feasible interval
    ub = np.inf
    lb = -np.inf
    nfree = 0
    sfree = 0.0
    for t in range(n):
        yg = y[t] * G[t]
        if alpha[t] >= C:
            if y[t] < 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        elif alpha[t] <= 0:
            if y[t] > 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        else:
            nfree += 1
            sfree += yg
    rho = sfree / nfree if nfree > 0 else 0.5 * (ub + lb)

    beta = alpha[:l] - alpha[l:]
    return beta, -rho, it


def _sq_dists(A, B):
    d = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.maximum(d, 0.0)


class EpsilonSVR(RegressorMixin, BaseEstimator):
    """Kernel epsilon-SVR.

    ``degree`` is only used by the polynomial kernel. ``kernel`` may also be
    a callable ``k(A, B) -> Gram``; its training Gram matrix must be positive
    semi-definite.
    """

    def __init__(self, C=1.0, epsilon=0.1, kernel="rbf", degree=3, gamma="scale",
                 coef0=0.0, tol=1e-3, max_iter=200_000):
        self.C = C
        self.epsilon = epsilon
        self.kernel = kernel
        self.degree = degree
        self.gamma = gamma
        self.coef0 = coef0
        self.tol = tol
        self.max_iter = max_iter

    def _gram(self, A, B, gamma):
        if callable(self.kernel):
            return np.asarray(self.kernel(A, B), dtype=float)
        if self.kernel == "rbf":
            return np.exp(-gamma * _sq_dists(A, B))
        if self.kernel == "linear":
            return A @ B.T
        if self.kernel == "poly":
            return (gamma * (A @ B.T) + self.coef0) ** self.degree
        raise ValueError(f"unknown kernel {self.kernel!r}")

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True, ensure_min_samples=1)
        if not self.C > 0:
            raise ValueError("C must be > 0")
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be >= 0")
        if self.gamma == "scale":
            var = X.var()
            gamma = 1.0 / (X.shape[1] * var) if var > 0 else 1.0
        else:
            if not self.gamma > 0:
                raise ValueError("gamma must be > 0")
            gamma = float(self.gamma)
        K = self._gram(X, X, gamma)
        if callable(self.kernel):
            if not np.allclose(K, K.T, atol=1e-10 * max(1.0, np.abs(K).max())):
                raise ValueError("custom kernel Gram matrix is not symmetric")
            lam_min = np.linalg.eigvalsh(0.5 * (K + K.T)).min()
            if lam_min < -1e-8 * max(1.0, np.abs(K).max()):
                raise ValueError(f"custom kernel is not positive semi-definite (min eigenvalue {lam_min:.3g})")
        beta, b, n_iter = _smo(np.ascontiguousarray(K), y, float(self.C), float(self.epsilon),
                               float(self.tol), int(self.max_iter))
        sv = np.flatnonzero(beta != 0)
        self.support_ = sv
        self.support_vectors_ = X[sv]
        self.dual_coef_ = beta[sv]
        self.intercept_ = float(b)
        self.gamma_ = gamma
        self.n_iter_ = int(n_iter)
        self.n_features_in_ = X.shape[1]
        self._train_gram = K
        self._beta_full = beta
        return self

    def predict(self, X):
        check_is_fitted(self, "dual_coef_")
        X = check_array(X, dtype=float)
        if len(self.dual_coef_) == 0:
            return np.full(X.shape[0], self.intercept_)
        return self._gram(X, self.support_vectors_, self.gamma_) @ self.dual_coef_ + self.intercept_

    def dual_objective(self, y):
        """0.5 b'Kb - y'b + eps |b|_1 at the fitted dual coefficients (training y)."""
        beta = self._beta_full
        K = self._train_gram
        return 0.5 * beta @ K @ beta - np.asarray(y) @ beta + self.epsilon * np.abs(beta).sum()

    def to_dict(self):
        if callable(self.kernel):
            raise TypeError("models with callable kernels cannot be serialised")
        return {
            "params": self.get_params(),
            "support_vectors": self.support_vectors_.tolist(),
            "dual_coef": self.dual_coef_.tolist(),
            "intercept": self.intercept_,
            "gamma": self.gamma_,
            "n_features": self.n_features_in_,
        }

    @classmethod
    def from_dict(cls, d):
        obj = cls(**d["params"])
        n = d["n_features"]
        obj.support_vectors_ = np.asarray(d["support_vectors"], dtype=float).reshape(-1, n)
        obj.dual_coef_ = np.asarray(d["dual_coef"], dtype=float)
        obj.intercept_ = float(d["intercept"])
        obj.gamma_ = float(d["gamma"])
        obj.n_features_in_ = n
        return obj
