"""Central composite designs over capacity factors.

Coded units put the factorial corners at -1/+1 and the center at 0. The axial
distance ``alpha`` defaults to 0.1, i.e. axial runs sit just off the center
rather than outside the cube.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

FACTORIAL = "factorial"
AXIAL = "axial"
CENTER = "center"

_MAX_FACTORS = 30


@dataclass(frozen=True)
class Factor:
    name: str
    unit: str
    low: float
    high: float

    def __post_init__(self):
        if not self.low >= 0:
            raise ValueError(f"factor {self.name}: low must be >= 0, got {self.low}")
        if not self.high > self.low:
            raise ValueError(f"bounds inverted: {self.name}")

    @property
    def middle(self) -> float:
        return 0.5 * (self.low + self.high)

    @property
    def half_range(self) -> float:
        return 0.5 * (self.high - self.low)


@dataclass(frozen=True)
class DesignSpec:
    """Factors plus CCD layout.

    ``fraction_exponent`` is p in a 2^(k-p) core; ``None`` means full factorial.
    """

    factors: tuple[Factor, ...]
    fraction_exponent: int | None = None
    center_points: int = 0
    alpha: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        k = len(self.factors)
        if k < 1:
            raise ValueError("design needs at least one factor")
        if k > _MAX_FACTORS:
            raise OverflowError(f"{k} factors exceeds the supported maximum of {_MAX_FACTORS}")
        if self.center_points < 0:
            raise ValueError("center_points must be >= 0")
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")
        if self.fraction_exponent is not None:
            p = self.fraction_exponent
            if p < 1 or p >= k:
                raise ValueError(f"fraction exponent must be in [1, k-1], got {p}")
            if 2 ** (k - p) < k + 1:
                raise ValueError(
                    f"infeasible fraction: 2^({k}-{p}) = {2 ** (k - p)} runs cannot "
                    f"resolve {k} main effects"
                )

    @property
    def k(self) -> int:
        return len(self.factors)

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.factors]

    @property
    def n_factorial(self) -> int:
        p = self.fraction_exponent or 0
        return 2 ** (self.k - p)

    def to_dict(self) -> dict:
        return {
            "factors": [asdict(f) for f in self.factors],
            "fraction_exponent": self.fraction_exponent,
            "center_points": self.center_points,
            "alpha": self.alpha,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DesignSpec":
        return cls(
            factors=tuple(Factor(**f) for f in d["factors"]),
            fraction_exponent=d.get("fraction_exponent"),
            center_points=int(d.get("center_points", 0)),
            alpha=float(d.get("alpha", 0.1)),
        )


@dataclass(frozen=True)
class DesignMatrix:
    spec: DesignSpec
    coded: np.ndarray
    tags: tuple[str, ...]
    generators: tuple[tuple[int, ...], ...] = field(default=())

    def __len__(self):
        return self.coded.shape[0]

    def natural(self) -> np.ndarray:
        return decode(self.coded, self.spec)

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.natural(), columns=self.spec.names)
        df["tag"] = list(self.tags)
        return df


def run_count(spec: DesignSpec) -> int:
    """N = F + 2k + n_c with F = 2^k or 2^(k-p)."""
    return spec.n_factorial + 2 * spec.k + spec.center_points


def _defining_words(gens: list[frozenset]) -> list[frozenset]:
    # every non-empty product of generator words (symmetric difference of letters)
    words = []
    for r in range(1, len(gens) + 1):
        for combo in itertools.combinations(gens, r):
            w = frozenset()
            for g in combo:
                w = w ^ g
            words.append(w)
    return words


def fractional_generators(k: int, p: int) -> list[tuple[int, ...]]:
    """Deterministic generator words for a 2^(k-p) core.

    Each of the last ``p`` columns is the product of a subset of the first
    ``k - p`` base columns. Words are chosen greedily to maximise the shortest
    word in the defining relation, ties broken by fewest shortest words, then
    by a fixed ordering (longer subsets first, lexicographic).
    """
    base = k - p
    candidates = [
        c
        for r in range(base, 1, -1)
        for c in itertools.combinations(range(base), r)
    ]
    chosen: list[tuple[int, ...]] = []
    full_words: list[frozenset] = []
    for j in range(p):
        new_col = base + j
        best = None
        best_key = None
        for c in candidates:
            if c in chosen:
                continue
            w = frozenset(c) | {new_col}
            words = _defining_words(full_words + [w])
            lengths = [len(x) for x in words]
            shortest = min(lengths)
            key = (shortest, -lengths.count(shortest))
            if best_key is None or key > best_key:
                best, best_key = c, key
        if best is None:
            raise ValueError(f"cannot find {p} generators for {k} factors")
        chosen.append(best)
        full_words.append(frozenset(best) | {new_col})
    return chosen


def _factorial_core(k: int, p: int | None) -> tuple[np.ndarray, list[tuple[int, ...]]]:
    base = k - (p or 0)
    # standard (Yates) order: first column alternates slowest
    core = np.array(list(itertools.product((-1.0, 1.0), repeat=base)))
    gens: list[tuple[int, ...]] = []
    if p:
        gens = fractional_generators(k, p)
        extra = np.column_stack([np.prod(core[:, list(g)], axis=1) for g in gens])
        core = np.hstack([core, extra])
    return core, gens


def build_design(spec: DesignSpec, seed: int = 0, randomize: bool = False) -> DesignMatrix:
    """Build the coded CCD matrix.

    Rows come in standard order (factorial, axial, center) unless ``randomize``
    is set, in which case the run order is shuffled with ``seed``.
    """
    k = spec.k
    core, gens = _factorial_core(k, spec.fraction_exponent)
    axial = np.zeros((2 * k, k))
    for i in range(k):
        axial[2 * i, i] = -spec.alpha
        axial[2 * i + 1, i] = spec.alpha
    center = np.zeros((spec.center_points, k))
    coded = np.vstack([core, axial, center])
    tags = [FACTORIAL] * len(core) + [AXIAL] * len(axial) + [CENTER] * len(center)
    if randomize:
        order = np.random.default_rng(seed).permutation(len(coded))
        coded = coded[order]
        tags = [tags[i] for i in order]
    assert len(coded) == run_count(spec)
    return DesignMatrix(spec=spec, coded=coded, tags=tuple(tags), generators=tuple(gens))


def _bounds(spec: DesignSpec) -> tuple[np.ndarray, np.ndarray]:
    mid = np.array([f.middle for f in spec.factors])
    half = np.array([f.half_range for f in spec.factors])
    return mid, half


def decode(coded, spec: DesignSpec) -> np.ndarray:
    """Coded -> natural units: middle + coded * (high - middle)."""
    coded = np.asarray(coded, dtype=float)
    if np.any(np.abs(coded) > 1 + 1e-12) or not np.all(np.isfinite(coded)):
        raise ValueError("coded entries must lie in [-1, 1]")
    mid, half = _bounds(spec)
    return mid + coded * half


def encode(natural, spec: DesignSpec) -> np.ndarray:
    natural = np.asarray(natural, dtype=float)
    mid, half = _bounds(spec)
    return (natural - mid) / half


def write_design(design: DesignMatrix, csv_path, json_path=None) -> None:
    csv_path = Path(csv_path)
    design.to_frame().to_csv(csv_path, index=False, float_format="%.10g")
    json_path = Path(json_path) if json_path else csv_path.with_suffix(".json")
    sidecar = design.spec.to_dict()
    sidecar["generators"] = [list(g) for g in design.generators]
    json_path.write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")


def read_design(csv_path, json_path=None) -> DesignMatrix:
    csv_path = Path(csv_path)
    json_path = Path(json_path) if json_path else csv_path.with_suffix(".json")
    meta = json.loads(json_path.read_text())
    spec = DesignSpec.from_dict(meta)
    df = pd.read_csv(csv_path)
    coded = encode(df[spec.names].to_numpy(dtype=float), spec)
    return DesignMatrix(
        spec=spec,
        coded=coded,
        tags=tuple(df["tag"]),
        generators=tuple(tuple(g) for g in meta.get("generators", [])),
    )
