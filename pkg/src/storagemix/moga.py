"""Real-coded NSGA-II over box-bounded capacities.

Binary tournament on (rank, crowding), simulated binary crossover and
polynomial mutation, elitist survival from parents + offspring. An external
archive keeps every non-dominated point seen, so the reported front never
loses ground between generations.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd


@dataclass(frozen=True)
class GaConfig:
    population_size: int = 20
    generations: int = 200
    crossover_prob: float = 0.5
    mutation_prob: float = 0.001
    mode: str = "pareto"  # "pareto" | "weighted_sum"
    weights: tuple[float, ...] | None = None
    eta_crossover: float = 15.0
    eta_mutation: float = 20.0
    seed: int = 0

    def __post_init__(self):
        if self.population_size < 4 or self.population_size % 2:
            raise ValueError("population_size must be even and >= 4")
        for p in (self.crossover_prob, self.mutation_prob):
            if not 0 <= p <= 1:
                raise ValueError("probabilities must lie in [0, 1]")
        if self.mode not in ("pareto", "weighted_sum"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.generations < 0:
            raise ValueError("generations must be >= 0")


def dominates(a, b) -> bool:
    return bool(np.all(a <= b) and np.any(a < b))


def non_dominated_sort(F) -> list[np.ndarray]:
    """Fast non-dominated sorting; returns fronts as index arrays, best first."""
    F = np.asarray(F, dtype=float)
    if F.ndim != 2:
        raise ValueError("objectives must be a 2-D array")
    if not np.all(np.isfinite(F)):
        raise ValueError("objectives must be finite")
    n = F.shape[0]
    if n == 0:
        return []
    le = np.all(F[:, None, :] <= F[None, :, :], axis=2)
    lt = np.any(F[:, None, :] < F[None, :, :], axis=2)
    dom = le & lt  # dom[i, j]: i dominates j
    count = dom.sum(axis=0)
    fronts = []
    current = np.flatnonzero(count == 0)
    while current.size:
        fronts.append(current)
        count = count - dom[current].sum(axis=0)
        count[current] = -1
        current = np.flatnonzero(count == 0)
    return fronts


def first_front(F) -> np.ndarray:
    """Indices (ascending) of the non-dominated rows of ``F``."""
    F = np.asarray(F, dtype=float)
    keep = np.ones(len(F), dtype=bool)
    for i in range(len(F)):
        if not keep[i]:
            continue
        dominated = np.all(F[i] <= F, axis=1) & np.any(F[i] < F, axis=1)
        keep &= ~dominated
    return np.flatnonzero(keep)


def crowding_distance(F) -> np.ndarray:
    F = np.asarray(F, dtype=float)
    n, m = F.shape
    d = np.zeros(n)
    if n <= 2:
        d[:] = np.inf
        return d
    for j in range(m):
        order = np.argsort(F[:, j], kind="stable")
        span = F[order[-1], j] - F[order[0], j]
        d[order[0]] = d[order[-1]] = np.inf
        if span > 0:
            d[order[1:-1]] += (F[order[2:], j] - F[order[:-2], j]) / span
    return d


def rank_and_crowd(F) -> tuple[np.ndarray, np.ndarray]:
    rank = np.empty(len(F), dtype=int)
    crowd = np.empty(len(F))
    for r, front in enumerate(non_dominated_sort(F)):
        rank[front] = r
        crowd[front] = crowding_distance(F[front])
    return rank, crowd


def _tournament(rank, crowd, rng, n):
    a = rng.integers(len(rank), size=n)
    b = rng.integers(len(rank), size=n)
    better_a = (rank[a] < rank[b]) | ((rank[a] == rank[b]) & (crowd[a] >= crowd[b]))
    return np.where(better_a, a, b)


def sbx(p1, p2, lo, hi, eta, prob, rng):
    """Bounded simulated binary crossover (Deb & Agrawal), per gene with p=0.5."""
    c1, c2 = p1.copy(), p2.copy()
    if rng.random() > prob:
        return c1, c2
    for i in range(len(p1)):
        if rng.random() > 0.5 or abs(p1[i] - p2[i]) < 1e-14 or hi[i] <= lo[i]:
            continue
        y1, y2 = min(p1[i], p2[i]), max(p1[i], p2[i])
        u = rng.random()
        out = []
        for beta in (1.0 + 2.0 * (y1 - lo[i]) / (y2 - y1), 1.0 + 2.0 * (hi[i] - y2) / (y2 - y1)):
            alpha = 2.0 - beta ** -(eta + 1.0)
            if u <= 1.0 / alpha:
                bq = (u * alpha) ** (1.0 / (eta + 1.0))
            else:
                bq = (1.0 / (2.0 - u * alpha)) ** (1.0 / (eta + 1.0))
            out.append(bq)
        ch1 = 0.5 * ((y1 + y2) - out[0] * (y2 - y1))
        ch2 = 0.5 * ((y1 + y2) + out[1] * (y2 - y1))
        ch1, ch2 = np.clip(ch1, lo[i], hi[i]), np.clip(ch2, lo[i], hi[i])
        if rng.random() < 0.5:
            ch1, ch2 = ch2, ch1
        c1[i], c2[i] = ch1, ch2
    return c1, c2


def polynomial_mutation(x, lo, hi, eta, prob, rng):
    x = x.copy()
    for i in range(len(x)):
        if rng.random() >= prob or hi[i] <= lo[i]:
            continue
        span = hi[i] - lo[i]
        d1 = (x[i] - lo[i]) / span
        d2 = (hi[i] - x[i]) / span
        u = rng.random()
        mp = 1.0 / (eta + 1.0)
        if u < 0.5:
            val = 2 * u + (1 - 2 * u) * (1 - d1) ** (eta + 1)
            dq = val**mp - 1
        else:
            val = 2 * (1 - u) + 2 * (u - 0.5) * (1 - d2) ** (eta + 1)
            dq = 1 - val**mp
        x[i] = np.clip(x[i] + dq * span, lo[i], hi[i])
    return x


def _survive(X, F, size):
    """Elitist truncation: whole fronts, last one by descending crowding.

    Exact duplicates of a kept individual only fill leftover slots, so clone
    offspring cannot crowd out diversity.
    """
    _, first = np.unique(X, axis=0, return_index=True)
    unique = np.zeros(len(X), dtype=bool)
    unique[first] = True
    idx_u = np.flatnonzero(unique)
    keep = []
    for front in non_dominated_sort(F[idx_u]):
        front = idx_u[front]
        if len(keep) + len(front) <= size:
            keep.extend(front.tolist())
            if len(keep) == size:
                break
        else:
            cd = crowding_distance(F[front])
            order = sorted(range(len(front)), key=lambda k: (-cd[k], front[k]))
            keep.extend(front[order[: size - len(keep)]].tolist())
            break
    if len(keep) < size:
        dup = np.flatnonzero(~unique)
        rank, _ = rank_and_crowd(F[dup])
        order = sorted(range(len(dup)), key=lambda k: (rank[k], dup[k]))
        keep.extend(dup[order[: size - len(keep)]].tolist())
    return np.array(keep, dtype=int)


@dataclass
class Population:
    X: np.ndarray
    F: np.ndarray  # objectives used for ranking (scalarised in weighted mode)
    rank: np.ndarray = None
    crowd: np.ndarray = None

    def __post_init__(self):
        if self.rank is None:
            self.rank, self.crowd = rank_and_crowd(self.F)


def _mate(pop, lo, hi, cfg, rng, n):
    parents = _tournament(pop.rank, pop.crowd, rng, n + n % 2)
    kids = []
    for k in range(0, len(parents), 2):
        c1, c2 = sbx(pop.X[parents[k]], pop.X[parents[k + 1]], lo, hi, cfg.eta_crossover,
                     cfg.crossover_prob, rng)
        kids.append(polynomial_mutation(c1, lo, hi, cfg.eta_mutation, cfg.mutation_prob, rng))
        kids.append(polynomial_mutation(c2, lo, hi, cfg.eta_mutation, cfg.mutation_prob, rng))
    return np.clip(np.array(kids), lo, hi)


def evolve(pop: Population, lo, hi, cfg: GaConfig, evaluator, rng, max_rounds: int = 100) -> Population:
    """One NSGA-II generation.

    Offspring that copy an existing individual carry no new information, so
    mating repeats (up to ``max_rounds``) until ``n`` distinct offspring
    exist; any shortfall is then topped up with duplicates.
    """
    n = len(pop.X)
    seen = {x.tobytes() for x in pop.X}
    fresh, spare = [], []
    for _ in range(max_rounds):
        for x in _mate(pop, lo, hi, cfg, rng, n - len(fresh)):
            key = x.tobytes()
            if key in seen:
                spare.append(x)
            else:
                seen.add(key)
                fresh.append(x)
        if len(fresh) >= n:
            break
    fresh = fresh[:n]
    if len(fresh) < n:
        fresh.extend(spare[: n - len(fresh)])
    Xk = np.array(fresh)
    Fk = np.atleast_2d(evaluator(Xk))
    Xall = np.vstack([pop.X, Xk])
    Fall = np.vstack([pop.F, Fk])
    keep = _survive(Xall, Fall, n)
    return Population(Xall[keep], Fall[keep])


def hypervolume(F, ref) -> float:
    """Exact dominated hypervolume (minimisation) by recursive slicing."""
    F = np.asarray(F, dtype=float)
    ref = np.asarray(ref, dtype=float)
    F = F[np.all(F < ref, axis=1)]
    if len(F) == 0:
        return 0.0
    if F.shape[1] == 1:
        return float(ref[0] - F[:, 0].min())
    order = np.argsort(F[:, 0], kind="stable")
    F = F[order]
    vol = 0.0
    for i in range(len(F)):
        upper = F[i + 1, 0] if i + 1 < len(F) else ref[0]
        width = upper - F[i, 0]
        if width > 0:
            vol += width * hypervolume(F[: i + 1, 1:], ref[1:])
    return vol


@dataclass
class Individual:
    genes: np.ndarray
    objectives: np.ndarray
    rank: int = 0
    crowding: float = 0.0


@dataclass
class ParetoFront:
    members: list[Individual]
    ideal: np.ndarray
    nadir: np.ndarray
    compromise: Individual | None = None

    @property
    def X(self):
        return np.array([m.genes for m in self.members])

    @property
    def F(self):
        return np.array([m.objectives for m in self.members])

    def to_frame(self, factor_names, objective_names) -> pd.DataFrame:
        df = pd.DataFrame(self.X, columns=list(factor_names))
        for j, name in enumerate(objective_names):
            df[name] = self.F[:, j]
        comp = self.compromise
        df["compromise"] = [comp is not None and m is comp for m in self.members]
        return df


def select_compromise(members: list[Individual]) -> Individual:
    """Minimum Chebyshev distance to the ideal point after min-max scaling over the front."""
    if not members:
        raise ValueError("empty front")
    F = np.array([m.objectives for m in members], dtype=float)
    ideal, nadir = F.min(axis=0), F.max(axis=0)
    span = np.where(nadir > ideal, nadir - ideal, 1.0)
    dist = ((F - ideal) / span).max(axis=1)
    order = sorted(range(len(members)), key=lambda i: (dist[i], *F[i]))
    return members[order[0]]


def _archive_update(archive_X, archive_F, X, F):
    if archive_F is None:
        AX, AF = X, F
    else:
        AX, AF = np.vstack([archive_X, X]), np.vstack([archive_F, F])
    # drop exact duplicates, keep first occurrence
    _, first = np.unique(np.round(AX, 12), axis=0, return_index=True)
    first = np.sort(first)
    AX, AF = AX[first], AF[first]
    front = first_front(AF)
    return AX[front], AF[front]


@dataclass
class OptimizationResult:
    front: ParetoFront
    trace: pd.DataFrame
    population: Population
    objective_names: list[str] = field(default_factory=list)


def _predict_all(models, X, names):
    cols = []
    for m, name in zip(models, names):
        p = np.asarray(m.predict(X), dtype=float)
        if not np.all(np.isfinite(p)):
            raise FloatingPointError(f"model for {name} returned non-finite predictions")
        cols.append(p)
    return np.column_stack(cols)


def optimize(models, lower, upper, cfg: GaConfig = GaConfig(), objective_names=None,
             norm_range=None, hv_ref=None, track_hypervolume=False) -> OptimizationResult:
    """Minimise the predictions of ``models`` (one per objective) over the box.

    In ``weighted_sum`` mode the objectives are min-max normalised with
    ``norm_range = (mins, maxs)`` (normally the training-data range) and
    combined with ``cfg.weights`` (equal weights by default).
    """
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    if np.any(hi < lo):
        raise ValueError("upper bound below lower bound")
    m = len(models)
    names = list(objective_names) if objective_names else [f"f{j}" for j in range(m)]
    rng = np.random.default_rng(cfg.seed)

    if cfg.mode == "weighted_sum":
        w = np.ones(m) / m if cfg.weights is None else np.asarray(cfg.weights, dtype=float)
        if norm_range is None:
            mins, maxs = np.zeros(m), np.ones(m)
        else:
            mins, maxs = (np.asarray(a, dtype=float) for a in norm_range)
        span = np.where(maxs > mins, maxs - mins, 1.0)

        def ranked(Fraw):
            return (((Fraw - mins) / span) @ w)[:, None]
    else:
        def ranked(Fraw):
            return Fraw

    raw_cache = {}

    def evaluator(X):
        Fraw = _predict_all(models, X, names)
        for x, f in zip(X, Fraw):
            raw_cache[x.tobytes()] = f
        return ranked(Fraw)

    X0 = lo + rng.random((cfg.population_size, len(lo))) * (hi - lo)
    pop = Population(X0, evaluator(X0))
    raw = lambda X: np.array([raw_cache[x.tobytes()] for x in X])  # noqa: E731
    AX, AF = _archive_update(None, None, pop.X, raw(pop.X))
    if track_hypervolume and hv_ref is None:
        hv_ref = AF.max(axis=0) + 0.1 * (np.abs(AF.max(axis=0)) + 1.0)

    rows = []

    def log(gen):
        Fr = raw(pop.X)
        row = {"generation": gen}
        row.update({f"best_{n}": float(v) for n, v in zip(names, Fr.min(axis=0))})
        if cfg.mode == "weighted_sum":
            row["best_scalarized"] = float(pop.F[:, 0].min())
        else:
            row["archive_size"] = len(AF)
            if track_hypervolume:
                row["hypervolume"] = hypervolume(AF, hv_ref)
        rows.append(row)

    log(0)
    for gen in range(1, cfg.generations + 1):
        pop = evolve(pop, lo, hi, cfg, evaluator, rng)
        AX, AF = _archive_update(AX, AF, pop.X, raw(pop.X))
        log(gen)

    if cfg.mode == "weighted_sum":
        best = int(np.argmin(pop.F[:, 0]))
        members = [Individual(pop.X[best].copy(), raw(pop.X[best:best + 1])[0])]
    else:
        members = [Individual(x.copy(), f.copy()) for x, f in zip(AX, AF)]
        r, c = rank_and_crowd(AF)
        for mem, rr, cc in zip(members, r, c):
            mem.rank, mem.crowding = int(rr), float(cc)
    F = np.array([mm.objectives for mm in members])
    front = ParetoFront(members, F.min(axis=0), F.max(axis=0))
    front.compromise = select_compromise(members)
    return OptimizationResult(front, pd.DataFrame(rows), pop, names)
