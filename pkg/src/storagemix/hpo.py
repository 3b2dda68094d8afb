"""Tree-structured Parzen estimator for hyperparameter search.

Scores are maximised. After ``n_startup`` random trials, the history is split
at the ``gamma`` quantile into good and bad trials; each dimension gets a
Parzen (Gaussian-mixture) density for both groups and the candidate with the
largest good/bad density ratio among ``n_candidates`` draws from the good
density is proposed.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .surrogate import cross_validate, make_model


@dataclass(frozen=True)
class Uniform:
    low: float
    high: float

    def __post_init__(self):
        if not self.low < self.high:
            raise ValueError("low must be < high")


@dataclass(frozen=True)
class LogUniform(Uniform):
    def __post_init__(self):
        super().__post_init__()
        if not self.low > 0:
            raise ValueError("log-uniform bounds must be > 0")


@dataclass(frozen=True)
class IntUniform(Uniform):
    pass


@dataclass(frozen=True)
class Categorical:
    choices: tuple

    def __post_init__(self):
        object.__setattr__(self, "choices", tuple(self.choices))
        if not self.choices:
            raise ValueError("categorical choices must be non-empty")


def _to_internal(dim, v):
    if isinstance(dim, LogUniform):
        return math.log(v)
    if isinstance(dim, IntUniform):
        return float(v)
    return float(v)


def _internal_bounds(dim):
    if isinstance(dim, LogUniform):
        return math.log(dim.low), math.log(dim.high)
    if isinstance(dim, IntUniform):
        return dim.low - 0.5, dim.high + 0.5
    return dim.low, dim.high


def _from_internal(dim, u):
    lo, hi = _internal_bounds(dim)
    u = min(max(u, lo), hi)
    if isinstance(dim, LogUniform):
        return float(min(max(math.exp(u), dim.low), dim.high))
    if isinstance(dim, IntUniform):
        return int(min(max(round(u), dim.low), dim.high))
    return float(u)


def sample_prior(space: dict, rng: np.random.Generator) -> dict:
    cfg = {}
    for name, dim in space.items():
        if isinstance(dim, Categorical):
            cfg[name] = dim.choices[int(rng.integers(len(dim.choices)))]
        else:
            lo, hi = _internal_bounds(dim)
            cfg[name] = _from_internal(dim, rng.uniform(lo, hi))
    return cfg


class _Parzen:
    """1-D Gaussian mixture over observations plus a flat prior component."""

    def __init__(self, obs, lo, hi):
        obs = np.asarray(obs, dtype=float)
        self.lo, self.hi = lo, hi
        width = hi - lo
        n = len(obs)
        mus = np.append(obs, 0.5 * (lo + hi))
        if n > 1:
            sd = max(np.std(obs), width / 20.0)
            bw = 1.06 * sd * n ** (-0.2)
        else:
            bw = width / 2.0
        sig = np.full(n + 1, min(max(bw, width / min(100.0, n + 1.0)), width))
        sig[-1] = width  # prior
        self.mus, self.sig = mus, sig
        self.w = np.full(n + 1, 1.0 / (n + 1))

    def sample(self, rng, size):
        comp = rng.choice(len(self.mus), size=size, p=self.w)
        x = rng.normal(self.mus[comp], self.sig[comp])
        # reflect into bounds then clip
        return np.clip(x, self.lo, self.hi)

    def logpdf(self, x):
        x = np.atleast_1d(x)[:, None]
        z = (x - self.mus[None, :]) / self.sig[None, :]
        dens = self.w[None, :] * np.exp(-0.5 * z**2) / (self.sig[None, :] * math.sqrt(2 * math.pi))
        return np.log(dens.sum(axis=1) + 1e-300)


class _CategoricalDensity:
    def __init__(self, obs, choices):
        counts = np.ones(len(choices))  # prior weight 1 per choice
        for o in obs:
            counts[choices.index(o)] += 1
        self.p = counts / counts.sum()
        self.choices = choices

    def sample(self, rng, size):
        return rng.choice(len(self.choices), size=size, p=self.p)

    def logpdf(self, idx):
        return np.log(self.p[np.asarray(idx, dtype=int)])


@dataclass
class Trial:
    number: int
    params: dict
    score: float | None
    status: str  # "ok" | "fail"
    wall_time: float = 0.0
    message: str = ""


@dataclass
class TrialHistory:
    trials: list[Trial] = field(default_factory=list)

    def append(self, trial: Trial):
        self.trials.append(trial)

    @property
    def completed(self) -> list[Trial]:
        return [t for t in self.trials if t.status == "ok"]

    @property
    def best(self) -> Trial | None:
        done = self.completed
        if not done:
            return None
        # first trial attaining the maximum
        return max(done, key=lambda t: (t.score, -t.number))

    def best_trace(self) -> list[float]:
        trace, best = [], -np.inf
        for t in self.trials:
            if t.status == "ok" and t.score > best:
                best = t.score
            trace.append(best)
        return trace

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for t in self.trials:
            row = {"trial": t.number}
            row.update({f"param_{k}": v for k, v in t.params.items()})
            row.update({"score": t.score, "status": t.status, "wall_time": t.wall_time})
            rows.append(row)
        return pd.DataFrame(rows)


def suggest(space: dict, history: TrialHistory, seed: int, n_startup: int = 10,
            gamma: float = 0.25, n_candidates: int = 24) -> dict:
    """Propose the next configuration given the trials so far.

    Deterministic in ``(space, history, seed)``: the generator is re-seeded
    from the seed and the number of trials already run.
    """
    rng = np.random.default_rng([seed, len(history.trials)])
    done = history.completed
    if len(done) < n_startup:
        return sample_prior(space, rng)
    ranked = sorted(done, key=lambda t: (-t.score, t.number))
    n_good = max(1, int(math.ceil(gamma * len(ranked))))
    good, bad = ranked[:n_good], ranked[n_good:]

    log_ratio = np.zeros(n_candidates)
    cands = {}
    for name, dim in space.items():
        if isinstance(dim, Categorical):
            ch = list(dim.choices)
            lg = _CategoricalDensity([t.params[name] for t in good], ch)
            lb = _CategoricalDensity([t.params[name] for t in bad], ch)
            idx = lg.sample(rng, n_candidates)
            log_ratio += lg.logpdf(idx) - lb.logpdf(idx)
            cands[name] = [ch[i] for i in idx]
        else:
            lo, hi = _internal_bounds(dim)
            lg = _Parzen([_to_internal(dim, t.params[name]) for t in good], lo, hi)
            lb = _Parzen([_to_internal(dim, t.params[name]) for t in bad], lo, hi)
            x = lg.sample(rng, n_candidates)
            log_ratio += lg.logpdf(x) - lb.logpdf(x)
            cands[name] = [_from_internal(dim, u) for u in x]
    best = int(np.argmax(log_ratio))
    return {name: cands[name][best] for name in space}


def random_suggest(space: dict, history: TrialHistory, seed: int, **_) -> dict:
    """Pure random search with the same call signature as :func:`suggest`."""
    return sample_prior(space, np.random.default_rng([seed, len(history.trials)]))


@dataclass
class TuneResult:
    family: str
    best_params: dict
    best_score: float
    history: TrialHistory


class AllTrialsFailedError(RuntimeError):
    def __init__(self, history: TrialHistory):
        msgs = "; ".join(f"trial {t.number}: {t.message}" for t in history.trials)
        super().__init__(f"all {len(history.trials)} trials failed: {msgs}")
        self.history = history


def optimize_objective(objective, space: dict, n_trials: int, seed: int = 0, sampler=suggest,
                       **sampler_kw) -> TrialHistory:
    """Run ``n_trials`` of ``objective(params) -> score`` (maximised)."""
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    history = TrialHistory()
    for i in range(n_trials):
        params = sampler(space, history, seed, **sampler_kw)
        t0 = time.perf_counter()
        try:
            score = objective(params)
            if score is None or not np.isfinite(score):
                raise ValueError(f"non-finite score {score}")
            trial = Trial(i, params, float(score), "ok")
        except Exception as exc:  # noqa: BLE001 - a failed trial is data, not a crash
            trial = Trial(i, params, None, "fail", message=f"{type(exc).__name__}: {exc}")
        trial.wall_time = time.perf_counter() - t0
        history.append(trial)
    return history


def tune(family: str, X, y, space: dict | None = None, n_trials: int = 50, seed: int = 0,
         cv: int = 5, cv_seed: int | None = None) -> TuneResult:
    """Maximise mean k-fold CV R^2 of one model family."""
    space = default_space(family) if space is None else space
    cv_seed = seed if cv_seed is None else cv_seed

    def objective(params):
        report = cross_validate(make_model(family, params, random_state=seed), X, y, k=cv, seed=cv_seed)
        if not report.valid:
            raise ValueError("R^2 undefined on every fold")
        return report.mean

    history = optimize_objective(objective, space, n_trials, seed)
    best = history.best
    if best is None:
        raise AllTrialsFailedError(history)
    return TuneResult(family, dict(best.params), best.score, history)


def default_space(family: str) -> dict:
    """Search spaces; bounds envelop the hyperparameter values reported for these models."""
    if family == "SVR":
        return {
            "C": LogUniform(1e-1, 1e6),
            "epsilon": LogUniform(1e-4, 10.0),
            "gamma": LogUniform(1e-4, 1.0),
            "kernel": Categorical(("rbf",)),
            "degree": IntUniform(1, 5),
        }
    if family == "GBT":
        return {
            "max_depth": IntUniform(2, 10),
            "learning_rate": LogUniform(1e-2, 0.5),
            "n_estimators": IntUniform(20, 600),
            "min_child_weight": IntUniform(1, 10),
            "gamma": Uniform(0.0, 1.0),
            "subsample": Uniform(0.5, 1.0),
            "colsample_bytree": Uniform(0.5, 1.0),
            "reg_alpha": LogUniform(1e-4, 1.0),
            "reg_lambda": LogUniform(1e-3, 10.0),
        }
    if family == "MLP":
        space = {"n_layers": IntUniform(1, 4)}
        space.update({f"units_{i}": IntUniform(1, 50) for i in range(1, 5)})
        space.update({
            "alpha": LogUniform(1e-5, 1.0),
            "solver": Categorical(("lbfgs",)),
            "activation": Categorical(("relu",)),
        })
        return space
    raise ValueError(f"unknown model family {family!r}")
