import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from storagemix.surrogate import (
    CvReport,
    EpsilonSVR,
    GradientBoostedRegressor,
    MLPRegressor,
    StandardScaler,
    SurrogateRegressor,
    UndefinedScoreError,
    cross_validate,
    kfold_indices,
    load_model,
    make_model,
    r2_score,
    save_model,
    select_best,
    train_test_split,
)
from storagemix.surrogate.mlp import flat_loss_and_grad, forward, loss_and_grads

# ---------------------------------------------------------------- scaler


def test_scaler_population_std():
    sc = StandardScaler().fit([[1.0], [2.0], [3.0]])
    assert sc.mean_[0] == 2.0
    assert sc.scale_[0] == pytest.approx(0.816497, abs=1e-6)
    assert np.allclose(sc.transform([[1.0], [2.0], [3.0]]).ravel(), [-1.224745, 0.0, 1.224745], atol=1e-6)


def test_scaler_constant_column_maps_to_zero():
    sc = StandardScaler().fit([[5.0, 1.0], [5.0, 2.0], [5.0, 3.0]])
    assert np.all(sc.transform([[5.0, 2.0], [7.0, 1.0]])[:, 0] == 0.0)


def test_scaler_needs_two_rows():
    with pytest.raises(ValueError):
        StandardScaler().fit([[1.0, 2.0]])


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 30), st.integers(1, 5), st.integers(0, 10_000))
def test_scaler_round_trip(n, d, seed):
    X = np.random.default_rng(seed).normal(size=(n, d)) * 100 + 7
    sc = StandardScaler().fit(X)
    Z = sc.transform(X)
    assert np.allclose(sc.inverse_transform(Z), X, rtol=1e-9, atol=1e-9)
    assert np.allclose(Z.mean(axis=0), 0, atol=1e-9)


def test_scaler_statistics_ignore_test_row_order():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(40, 3))
    y = X @ [1.0, 2.0, 3.0]
    train, test = train_test_split(40, 0.3, seed=1)
    m1 = SurrogateRegressor(EpsilonSVR()).fit(X[train], y[train])
    Xp = X.copy()
    Xp[test] = Xp[rng.permutation(test)]
    m2 = SurrogateRegressor(EpsilonSVR()).fit(Xp[train], y[train])
    assert np.array_equal(m1.scaler_.mean_, m2.scaler_.mean_)

# ---------------------------------------------------------------- SVR


def _cvx_dual(K, y, C, eps):
    cp = pytest.importorskip("cvxpy")
    b = cp.Variable(len(y))
    obj = 0.5 * cp.quad_form(b, cp.psd_wrap(K)) - y @ b + eps * cp.norm1(b)
    prob = cp.Problem(cp.Minimize(obj), [cp.sum(b) == 0, b <= C, b >= -C])
    prob.solve()
    return prob.value


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_svr_dual_matches_reference_qp(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(20, 3))
    y = np.sin(X[:, 0]) + 0.5 * X[:, 1] + 0.1 * rng.normal(size=20)
    m = EpsilonSVR(C=10.0, epsilon=0.1, gamma=0.5).fit(X, y)
    K = np.exp(-0.5 * ((X[:, None, :] - X[None, :, :]) ** 2).sum(-1))
    assert m.dual_objective(y) == pytest.approx(_cvx_dual(K, y, 10.0, 0.1), abs=1e-2)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 100), st.floats(0.0, 0.5))
def test_svr_dual_feasibility(seed, C, eps):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(25, 2))
    y = X[:, 0] ** 2 - X[:, 1]
    m = EpsilonSVR(C=C, epsilon=eps).fit(X, y)
    assert np.all(np.abs(m.dual_coef_) <= C + 1e-9)
    assert abs(m.dual_coef_.sum()) <= 1e-8 * max(1.0, C)


def test_svr_single_point_inside_tube():
    m = EpsilonSVR(C=5.0, epsilon=0.2).fit([[1.0, 2.0]], [3.0])
    assert abs(m.predict([[1.0, 2.0]])[0] - 3.0) <= 0.2 + 1e-9


def test_svr_wide_tube_on_line_has_no_bound_duals():
    X = np.linspace(0, 1, 15)[:, None]
    y = 2 * X[:, 0] + 1
    m = EpsilonSVR(C=100.0, epsilon=0.05, kernel="linear").fit(X, y)
    assert np.all(np.abs(m.predict(X) - y) <= 0.05 + 1e-3)
    assert np.all(np.abs(m.dual_coef_) < 100.0)


def test_svr_rejects_non_psd_kernel():
    with pytest.raises(ValueError, match="positive semi-definite"):
        EpsilonSVR(kernel=lambda A, B: -(A @ B.T)).fit(np.eye(3), [1.0, 2.0, 3.0])


def test_svr_matches_sklearn_libsvm():
    from sklearn.svm import SVR

    rng = np.random.default_rng(3)
    X = rng.normal(size=(60, 4))
    y = np.sin(X[:, 0]) + X[:, 1] ** 2
    ours = EpsilonSVR(C=10, epsilon=0.05, gamma=0.3).fit(X, y)
    ref = SVR(C=10, epsilon=0.05, gamma=0.3).fit(X, y)
    assert np.abs(ours.predict(X) - ref.predict(X)).max() < 5e-3

# ---------------------------------------------------------------- GBT


def test_gbt_single_tree_leaf_weights_are_residual_means():
    rng = np.random.default_rng(0)
    X = rng.permutation(30).astype(float)[:, None]
    y = rng.normal(size=30)
    m = GradientBoostedRegressor(n_estimators=1, learning_rate=1.0, max_depth=10, reg_lambda=0.0,
                                 reg_alpha=0.0, min_child_weight=0.0).fit(X, y)
    assert np.array_equal(m.predict(X), y.mean() + (y - y.mean()))
    assert np.allclose(m.predict(X), y, atol=1e-12)


def test_gbt_leaf_weight_closed_form_with_lambda():
    # one split on two clusters: leaf = -G/(H+lambda) with g = pred - y, h = 1
    X = np.array([[0.0], [0.0], [1.0], [1.0], [1.0]])
    y = np.array([1.0, 3.0, 10.0, 11.0, 15.0])
    lam = 2.0
    m = GradientBoostedRegressor(n_estimators=1, learning_rate=1.0, max_depth=1, reg_lambda=lam,
                                 min_child_weight=0.0).fit(X, y)
    base = y.mean()
    for mask in (X[:, 0] == 0, X[:, 0] == 1):
        G = (base - y[mask]).sum()
        expected = base + (-G / (mask.sum() + lam))
        assert np.all(m.predict(X[mask]) == expected)


def test_gbt_zero_learning_rate_predicts_mean():
    X = np.random.default_rng(1).normal(size=(20, 2))
    y = X[:, 0] * 3
    m = GradientBoostedRegressor(n_estimators=5, learning_rate=0.0).fit(X, y)
    assert np.allclose(m.predict(X), y.mean())


def test_gbt_constant_target():
    X = np.random.default_rng(2).normal(size=(20, 2))
    m = GradientBoostedRegressor(n_estimators=10).fit(X, np.full(20, 4.5))
    assert np.all(m.predict(X) == 4.5)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 8), st.floats(0.01, 1.0))
def test_gbt_staged_identity(seed, n_est, lr):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(40, 3))
    y = X[:, 0] - X[:, 1] ** 2
    m = GradientBoostedRegressor(n_estimators=n_est, learning_rate=lr, max_depth=3, subsample=0.8,
                                 colsample_bytree=0.7, random_state=seed).fit(X, y)
    stages = list(m.staged_predict(X))
    assert len(stages) == n_est + 1 and len(m.trees_) == n_est
    for t in range(1, n_est + 1):
        assert np.array_equal(stages[t], stages[t - 1] + lr * m.trees_[t - 1].predict(X))
        assert np.array_equal(stages[t], m.predict(X, n_trees=t))


def test_gbt_gamma_blocks_weak_splits():
    X = np.arange(10.0)[:, None]
    y = np.arange(10.0) * 0.01
    m = GradientBoostedRegressor(n_estimators=1, learning_rate=1.0, gamma=10.0).fit(X, y)
    assert m.trees_[0].n_leaves == 1

# ---------------------------------------------------------------- MLP


def test_mlp_zero_weights_predict_output_bias():
    W = [np.zeros((3, 4)), np.zeros((4, 1))]
    b = [np.zeros(4), np.array([2.5])]
    assert np.all(forward(W, b, np.random.default_rng(0).normal(size=(6, 3)))[-1] == 2.5)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000), st.lists(st.integers(1, 6), min_size=1, max_size=3), st.floats(0, 1))
def test_mlp_gradient_matches_finite_differences(seed, hidden, alpha):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(10, 3))
    y = rng.normal(size=10)
    sizes = [3, *hidden, 1]
    W = [rng.normal(size=(a, b)) for a, b in zip(sizes[:-1], sizes[1:])]
    B = [rng.normal(size=b) for b in sizes[1:]]
    _, gW, gB = loss_and_grads(W, B, X, y, alpha)
    h = 1e-5
    num, ana = [], []
    for params, grads in ((W, gW), (B, gB)):
        for P, G in zip(params, grads):
            for idx in np.ndindex(P.shape):
                old = P[idx]
                P[idx] = old + h
                up = loss_and_grads(W, B, X, y, alpha)[0]
                P[idx] = old - h
                down = loss_and_grads(W, B, X, y, alpha)[0]
                P[idx] = old
                num.append((up - down) / (2 * h))
                ana.append(G[idx])
    num, ana = np.array(num), np.array(ana)
    # ReLU kinks can make a central difference straddle a hinge; skip those coordinates
    acts = forward(W, B, X)
    pre = [acts[l] @ W[l] + B[l] for l in range(len(W) - 1)]
    if any(np.abs(z).min() < 1e-4 for z in pre):
        return
    rel = np.abs(num - ana).max() / max(1.0, np.abs(ana).max())
    assert rel <= 1e-4


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.lists(st.integers(1, 8), min_size=1, max_size=4), st.floats(0, 1))
def test_mlp_flat_kernel_matches_layerwise_gradient(seed, hidden, alpha):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(12, 4))
    y = rng.normal(size=12)
    m = MLPRegressor(hidden_layer_sizes=tuple(hidden))
    m._layer_shapes = m._shapes(4)
    theta = m._init(rng)
    W, B = m._unpack(theta)
    loss, gW, gB = loss_and_grads(W, B, X, y, alpha)
    sizes = np.array([4, *hidden, 1], dtype=np.int64)
    flat_loss, flat_grad = flat_loss_and_grad(theta, sizes, X, y, alpha)
    assert flat_loss == pytest.approx(loss, rel=1e-12)
    assert np.allclose(flat_grad, m._pack(gW, gB), rtol=1e-10, atol=1e-12)


def test_mlp_learns_linear_map():
    z = np.linspace(-1, 1, 50)[:, None]
    m = MLPRegressor(hidden_layer_sizes=(8,), alpha=0.0, random_state=0).fit(z, 2 * z[:, 0])
    assert r2_score(2 * z[:, 0], m.predict(z)) >= 0.999


def test_mlp_sgd_reduces_loss():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(80, 2))
    y = X[:, 0] - 0.5 * X[:, 1]
    m = MLPRegressor(hidden_layer_sizes=(10,), solver="sgd", learning_rate_init=0.01, max_iter=300).fit(X, y)
    assert r2_score(y, m.predict(X)) > 0.95


def test_mlp_divergence_raises():
    from storagemix.surrogate import TrainingDivergedError

    X = np.random.default_rng(0).normal(size=(20, 2)) * 1e3
    with pytest.raises(TrainingDivergedError, match="learning_rate_init"):
        MLPRegressor(solver="sgd", learning_rate_init=10.0, momentum=0.99, max_iter=50).fit(X, X[:, 0] * 1e3)


def test_mlp_deterministic():
    X = np.random.default_rng(0).normal(size=(30, 2))
    y = X.sum(1)
    a = MLPRegressor(random_state=3).fit(X, y).predict(X)
    b = MLPRegressor(random_state=3).fit(X, y).predict(X)
    assert np.array_equal(a, b)

# ---------------------------------------------------------------- selection and scoring


def test_r2_examples():
    assert r2_score([1, 2, 3], [1, 2, 3]) == 1.0
    assert r2_score([1, 2, 3], [2, 2, 2]) == 0.0
    assert r2_score([1, 2, 3], [1, 2, 4]) == pytest.approx(0.5)
    with pytest.raises(UndefinedScoreError):
        r2_score([1, 1, 1], [1, 2, 3])


def test_kfold_partitions():
    folds = kfold_indices(23, 5, seed=4)
    tests = np.concatenate([t for _, t in folds])
    assert sorted(tests) == list(range(23))
    for tr, te in folds:
        assert not set(tr) & set(te)


def test_split_ratio():
    train, test = train_test_split(86, 0.3, seed=0)
    assert len(test) == 26 and len(train) == 60


def test_cross_validate_flags_constant_folds():
    X = np.arange(10.0)[:, None]
    y = np.zeros(10)
    rep = cross_validate(SurrogateRegressor(GradientBoostedRegressor(n_estimators=2)), X, y, k=5)
    assert rep.undefined_folds == 5 and not rep.valid


def test_select_best_examples():
    assert select_best({"SVR": CvReport([0.999]), "GBT": CvReport([0.998]), "MLP": CvReport([0.998])}) == "SVR"
    assert select_best({"MLP": CvReport([0.5])}) == "MLP"
    tie = {n: CvReport([0.9, 0.8]) for n in ("MLP", "GBT", "SVR")}
    assert select_best(tie) == "SVR"
    spread = {"SVR": CvReport([1.0, 0.8]), "GBT": CvReport([0.9, 0.9])}
    assert select_best(spread) == "GBT"


@pytest.mark.parametrize("family, params", [
    ("SVR", {"C": 50.0, "epsilon": 0.01, "gamma": 0.2, "kernel": "rbf", "degree": 3}),
    ("GBT", {"n_estimators": 30, "max_depth": 3}),
    ("MLP", {"n_layers": 2, "units_1": 8, "units_2": 4, "units_3": 40, "units_4": 40, "alpha": 1e-3,
             "solver": "lbfgs", "activation": "relu"}),
])
def test_model_json_round_trip(tmp_path, family, params):
    rng = np.random.default_rng(0)
    X = rng.uniform(0, 1000, size=(40, 3))
    y = X @ [1.0, -2.0, 0.5] + 100
    m = make_model(family, params).fit(X, y)
    save_model(m, tmp_path / "m.json", family=family)
    d = json.loads((tmp_path / "m.json").read_text())
    assert d["version"] == 1 and d["meta"]["family"] == family
    back = load_model(tmp_path / "m.json")
    assert np.array_equal(back.predict(X), m.predict(X))


def test_model_file_without_version_rejected(tmp_path):
    m = make_model("GBT", {"n_estimators": 2}).fit(np.eye(3), [1.0, 2.0, 3.0])
    d = m.to_dict()
    del d["version"]
    with pytest.raises(ValueError, match="version"):
        SurrogateRegressor.from_dict(d)


def test_estimators_clone_cleanly():
    for est in (EpsilonSVR(C=3.0), GradientBoostedRegressor(max_depth=2), MLPRegressor(hidden_layer_sizes=(5,))):
        c = clone(est)
        assert c.get_params() == est.get_params()
