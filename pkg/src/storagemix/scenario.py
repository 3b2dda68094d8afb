"""Scenario data model: technologies, economics, fuels, storage and hourly profiles.

Scenario files (``.scn``) are TOML. See ``docs/scenario-format.md`` for the
schema; the bundled ``woest.scn`` and ``west.scn`` are complete examples.
"""
from __future__ import annotations

import hashlib
import math
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.signal import lfilter

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .doe import DesignSpec, Factor

HOURS = 8760
PROFILE_NAMES = ("solar_pv", "csp", "wind", "river_hydro", "nuclear")
ROLES = ("dispatchable", "must_run", "storage_charge", "storage_discharge", "storage_capacity")
MWH_PER_TWH = 1e6


class ScenarioError(ValueError):
    """Invalid scenario configuration; ``field`` names the offending key."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


@dataclass(frozen=True)
class TechnologyEconomics:
    investment_cost: float  # MUSD per MW or per GWh
    fixed_om_pct: float  # % of investment per year
    lifetime_years: int

    def __post_init__(self):
        if self.investment_cost < 0 or self.fixed_om_pct < 0:
            raise ScenarioError("negative cost", "economics")
        if self.lifetime_years < 1:
            raise ScenarioError("lifetime must be >= 1 year", "lifetime_years")


@dataclass(frozen=True)
class FuelSpec:
    price: float  # USD/GJ
    handling_cost: float  # USD/GJ
    co2_factor: float  # kg CO2/GJ fuel
    conversion_efficiency: float

    def __post_init__(self):
        if self.price < 0 or self.handling_cost < 0:
            raise ScenarioError("negative cost", "fuel")
        if self.co2_factor < 0:
            raise ScenarioError("negative co2_factor", "fuel.co2_factor")
        if not 0 < self.conversion_efficiency <= 1:
            raise ScenarioError("conversion_efficiency must be in (0, 1]", "fuel.conversion_efficiency")


@dataclass(frozen=True)
class StorageSpec:
    """Static storage parameters; capacities come from the capacity vector."""

    name: str
    charge_efficiency: float
    discharge_efficiency: float
    min_soc_fraction: float = 0.0
    initial_soc_fraction: float = 0.5

    def __post_init__(self):
        for attr in ("charge_efficiency", "discharge_efficiency"):
            v = getattr(self, attr)
            if not 0 < v <= 1:
                raise ScenarioError(f"{attr} must be in (0, 1]", f"storage.{self.name}.{attr}")
        if not 0 <= self.min_soc_fraction < 1:
            raise ScenarioError("min_soc_fraction must be in [0, 1)", f"storage.{self.name}.min_soc_fraction")
        if not self.min_soc_fraction <= self.initial_soc_fraction <= 1:
            raise ScenarioError(
                "initial_soc_fraction must be in [min_soc_fraction, 1]",
                f"storage.{self.name}.initial_soc_fraction",
            )


@dataclass(frozen=True)
class ScenarioFactor:
    name: str
    unit: str
    low: float
    high: float
    role: str
    economics: TechnologyEconomics
    profile: str | None = None
    fuel: FuelSpec | None = None
    storage: str | None = None

    def as_design_factor(self) -> Factor:
        return Factor(self.name, self.unit, self.low, self.high)


@dataclass(frozen=True)
class ProfileSet:
    """Hourly demand (MW) and capacity-factor traces (fractions)."""

    demand: np.ndarray
    solar_pv: np.ndarray
    csp: np.ndarray
    wind: np.ndarray
    river_hydro: np.ndarray
    nuclear: np.ndarray

    def __post_init__(self):
        for name in ("demand",) + PROFILE_NAMES:
            arr = np.ascontiguousarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
            if arr.shape != (HOURS,):
                raise ValueError(f"profile {name} must have {HOURS} entries, got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"profile {name} contains non-finite values")
        if np.any(self.demand < 0):
            raise ValueError("demand must be >= 0")
        for name in PROFILE_NAMES:
            arr = getattr(self, name)
            if np.any(arr < 0) or np.any(arr > 1):
                raise ValueError(f"capacity factor {name} must lie in [0, 1]")

    @property
    def annual_demand_twh(self) -> float:
        return float(self.demand.sum()) / MWH_PER_TWH

    def capacity_factor(self, name: str) -> np.ndarray:
        if name not in PROFILE_NAMES:
            raise KeyError(name)
        return getattr(self, name)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({n: getattr(self, n) for n in ("demand",) + PROFILE_NAMES})

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.17g")

    @classmethod
    def from_csv(cls, path, annual_demand_twh: float | None = None) -> "ProfileSet":
        df = pd.read_csv(path, float_precision="round_trip")
        missing = [c for c in ("demand",) + PROFILE_NAMES if c not in df.columns]
        if missing:
            raise ValueError(f"profiles CSV missing columns: {missing}")
        demand = df["demand"].to_numpy(dtype=float)
        if annual_demand_twh is not None:
            total = demand.sum() / MWH_PER_TWH
            if abs(total - annual_demand_twh) > 1e-6 * annual_demand_twh:
                raise ValueError(
                    f"profiles CSV demand sums to {total:.6f} TWh, expected {annual_demand_twh}"
                )
        return cls(demand=demand, **{n: df[n].to_numpy(dtype=float) for n in PROFILE_NAMES})

    def digest(self) -> str:
        h = hashlib.sha256()
        for name in ("demand",) + PROFILE_NAMES:
            h.update(getattr(self, name).tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    annual_demand_twh: float
    interest_rate: float
    factors: tuple[ScenarioFactor, ...]
    storages: tuple[StorageSpec, ...] = ()
    charge_order: tuple[str, ...] = ()
    discharge_order: tuple[str, ...] = ()
    profile_source: str = "synthetic"
    profile_seed: int = 1
    profile_path: str | None = None
    fraction_exponent: int | None = None
    center_points: int = 10
    alpha: float = 0.1
    source_path: str | None = field(default=None, compare=False)

    @property
    def factor_names(self) -> list[str]:
        return [f.name for f in self.factors]

    @property
    def lower(self) -> np.ndarray:
        return np.array([f.low for f in self.factors])

    @property
    def upper(self) -> np.ndarray:
        return np.array([f.high for f in self.factors])

    def factor(self, name: str) -> ScenarioFactor:
        for f in self.factors:
            if f.name == name:
                return f
        raise KeyError(name)

    def design_spec(self) -> DesignSpec:
        return DesignSpec(
            factors=tuple(f.as_design_factor() for f in self.factors),
            fraction_exponent=self.fraction_exponent,
            center_points=self.center_points,
            alpha=self.alpha,
        )

    def profiles(self, seed: int | None = None) -> ProfileSet:
        if self.profile_source == "csv":
            path = Path(self.profile_path)
            if not path.is_absolute() and self.source_path:
                path = Path(self.source_path).parent / path
            return ProfileSet.from_csv(path, self.annual_demand_twh)
        return synth_profiles(self.annual_demand_twh, self.profile_seed if seed is None else seed)


def crf(interest_rate: float, lifetime_years: int) -> float:
    """Capital recovery factor i / (1 - (1+i)^-n); 1/n when i == 0."""
    if interest_rate < 0:
        raise ValueError("interest rate must be >= 0")
    if interest_rate == 0:
        return 1.0 / lifetime_years
    # expm1/log1p keep the denominator accurate for tiny rates
    return interest_rate / -math.expm1(-lifetime_years * math.log1p(interest_rate))


def annualize(econ: TechnologyEconomics, capacity: float, interest_rate: float) -> float:
    """Annual investment plus fixed O&M, MUSD/yr."""
    invest = capacity * econ.investment_cost
    return invest * crf(interest_rate, econ.lifetime_years) + invest * econ.fixed_om_pct / 100.0


# --- synthetic profiles -------------------------------------------------------

_SOLAR_MEAN = 0.18
_CSP_MEAN = 0.30
_WIND_MEAN = 0.30
_HYDRO_MEAN = 0.45
_NUCLEAR_CF = 0.90


def _fit_mean(x: np.ndarray, target: float) -> np.ndarray:
    # rescale to the target mean while keeping values in [0, 1]
    x = np.clip(x, 0.0, None)
    for _ in range(100):
        x = np.clip(x * (target / x.mean()), 0.0, 1.0)
        if abs(x.mean() - target) < 1e-12:
            break
    return x


def synth_profiles(annual_demand_twh: float, seed: int = 1) -> ProfileSet:
    """Deterministic hourly demand and capacity-factor traces for one year."""
    if not annual_demand_twh > 0:
        raise ValueError("annual demand must be > 0")
    rng = np.random.default_rng(seed)
    hour = np.arange(HOURS)
    hod = hour % 24
    day = hour // 24
    season = 2 * np.pi * day / 365.0

    # demand: hot-season cooling hump, morning and evening peaks, small noise
    seasonal = 1.0 + 0.07 * np.cos(season - 2 * np.pi * 100 / 365.0)
    diurnal = (
        0.82
        + 0.12 * np.exp(-0.5 * ((hod - 9.0) / 2.0) ** 2)
        + 0.25 * np.exp(-0.5 * ((hod - 20.0) / 2.5) ** 2)
    )
    noise = 1.0 + 0.02 * rng.standard_normal(HOURS)
    demand = seasonal * diurnal * noise
    demand *= annual_demand_twh * MWH_PER_TWH / demand.sum()

    # solar: half-sine between 06:00 and 18:00, clearer in the dry season,
    # day-to-day cloudiness
    solar_shape = np.clip(np.sin(np.pi * (hod - 6.0) / 12.0), 0.0, None)
    dry = 1.0 + 0.15 * np.cos(season - 2 * np.pi * 30 / 365.0)
    cloud = rng.uniform(0.65, 1.0, size=365)[day]
    solar = _fit_mean(solar_shape * dry * cloud, _SOLAR_MEAN)

    # CSP: solar shape smoothed over 3 hours (thermal buffer)
    padded = np.concatenate([solar[-1:], solar, solar[:1]])
    csp = _fit_mean(np.convolve(padded, np.ones(3) / 3.0, mode="valid"), _CSP_MEAN)

    # wind: seasonal swing plus smooth noise (AR(1), ~1 day memory)
    phi = np.exp(-1.0 / 24.0)
    smooth = lfilter([np.sqrt(1 - phi**2)], [1.0, -phi], rng.standard_normal(HOURS))
    wind = 1.0 + 0.3 * np.cos(season - 2 * np.pi * 200 / 365.0) + 0.35 * smooth
    wind = _fit_mean(wind, _WIND_MEAN)

    # river hydro: wet season peaking in September
    hydro = _fit_mean(1.0 + 0.55 * np.cos(season - 2 * np.pi * 255 / 365.0), _HYDRO_MEAN)

    nuclear = np.full(HOURS, _NUCLEAR_CF)
    return ProfileSet(demand=demand, solar_pv=solar, csp=csp, wind=wind, river_hydro=hydro, nuclear=nuclear)


# --- scenario files -----------------------------------------------------------

_TOP_KEYS = {
    "name", "annual_demand_twh", "interest_rate", "profiles", "design",
    "factors", "storage", "dispatch",
}
_FACTOR_KEYS = {"name", "unit", "low", "high", "role", "economics", "profile", "fuel", "storage"}
_ECON_KEYS = {"investment_cost", "fixed_om_pct", "lifetime_years"}
_FUEL_KEYS = {"price", "handling_cost", "co2_factor", "conversion_efficiency"}
_STORAGE_KEYS = {"charge_efficiency", "discharge_efficiency", "min_soc_fraction", "initial_soc_fraction"}


def _reject_unknown(d: dict, allowed: set, where: str):
    extra = sorted(set(d) - allowed)
    if extra:
        raise ScenarioError(f"unknown key(s) in {where}: {', '.join(extra)}", f"{where}.{extra[0]}")


def _require(d: dict, key: str, where: str):
    if key not in d:
        raise ScenarioError(f"missing required key: {where}.{key}", f"{where}.{key}")
    return d[key]


def _number(d: dict, key: str, where: str, default=None, nonneg=True) -> float:
    if key not in d and default is not None:
        return float(default)
    v = _require(d, key, where)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ScenarioError(f"{where}.{key} must be a number", f"{where}.{key}")
    if nonneg and v < 0:
        raise ScenarioError(f"negative value for {where}.{key}: {v}", f"{where}.{key}")
    return float(v)


def _parse_factor(raw: dict, idx: int) -> ScenarioFactor:
    where = f"factors[{idx}]"
    _reject_unknown(raw, _FACTOR_KEYS, where)
    name = str(_require(raw, "name", where))
    where = f"factors.{name}"
    low = _number(raw, "low", where)
    high = _number(raw, "high", where)
    if not low < high:
        raise ScenarioError(f"bounds inverted: {name}", f"{where}.low")
    role = _require(raw, "role", where)
    if role not in ROLES:
        raise ScenarioError(f"{where}.role must be one of {ROLES}, got {role!r}", f"{where}.role")
    econ_raw = _require(raw, "economics", where)
    _reject_unknown(econ_raw, _ECON_KEYS, f"{where}.economics")
    econ = TechnologyEconomics(
        investment_cost=_number(econ_raw, "investment_cost", f"{where}.economics"),
        fixed_om_pct=_number(econ_raw, "fixed_om_pct", f"{where}.economics"),
        lifetime_years=int(_number(econ_raw, "lifetime_years", f"{where}.economics")),
    )
    fuel = None
    if "fuel" in raw:
        fr = raw["fuel"]
        _reject_unknown(fr, _FUEL_KEYS, f"{where}.fuel")
        fuel = FuelSpec(
            price=_number(fr, "price", f"{where}.fuel"),
            handling_cost=_number(fr, "handling_cost", f"{where}.fuel", default=0.0),
            co2_factor=_number(fr, "co2_factor", f"{where}.fuel", default=0.0),
            conversion_efficiency=_number(fr, "conversion_efficiency", f"{where}.fuel"),
        )
    profile = raw.get("profile")
    storage = raw.get("storage")
    if role == "dispatchable" and fuel is None:
        raise ScenarioError(f"missing required key: {where}.fuel", f"{where}.fuel")
    if role == "must_run" and profile not in PROFILE_NAMES:
        raise ScenarioError(f"{where}.profile must be one of {PROFILE_NAMES}", f"{where}.profile")
    if role.startswith("storage_") and not storage:
        raise ScenarioError(f"missing required key: {where}.storage", f"{where}.storage")
    return ScenarioFactor(
        name=name,
        unit=str(raw.get("unit", "MW")),
        low=low,
        high=high,
        role=role,
        economics=econ,
        profile=profile,
        fuel=fuel,
        storage=storage,
    )


def parse_scenario(data: dict, source_path: str | None = None) -> ScenarioConfig:
    _reject_unknown(data, _TOP_KEYS, "scenario")
    name = str(_require(data, "name", "scenario"))
    demand = _number(data, "annual_demand_twh", "scenario")
    if demand <= 0:
        raise ScenarioError("annual_demand_twh must be > 0", "annual_demand_twh")
    rate = _number(data, "interest_rate", "scenario", default=0.03)

    prof = data.get("profiles", {})
    _reject_unknown(prof, {"source", "seed", "path"}, "profiles")
    source = prof.get("source", "synthetic")
    if source not in ("synthetic", "csv"):
        raise ScenarioError("profiles.source must be 'synthetic' or 'csv'", "profiles.source")
    if source == "csv" and "path" not in prof:
        raise ScenarioError("missing required key: profiles.path", "profiles.path")

    design = data.get("design", {})
    _reject_unknown(design, {"fraction_exponent", "center_points", "alpha"}, "design")

    raw_factors = _require(data, "factors", "scenario")
    factors = tuple(_parse_factor(f, i) for i, f in enumerate(raw_factors))
    names = [f.name for f in factors]
    if len(set(names)) != len(names):
        raise ScenarioError("duplicate factor names", "factors")
    if sum(f.role == "dispatchable" for f in factors) > 1:
        raise ScenarioError("at most one dispatchable factor is supported", "factors")

    storages = []
    for sname, sraw in data.get("storage", {}).items():
        _reject_unknown(sraw, _STORAGE_KEYS, f"storage.{sname}")
        storages.append(
            StorageSpec(
                name=sname,
                charge_efficiency=_number(sraw, "charge_efficiency", f"storage.{sname}"),
                discharge_efficiency=_number(sraw, "discharge_efficiency", f"storage.{sname}"),
                min_soc_fraction=_number(sraw, "min_soc_fraction", f"storage.{sname}", default=0.0),
                initial_soc_fraction=_number(sraw, "initial_soc_fraction", f"storage.{sname}", default=0.5),
            )
        )
    snames = [s.name for s in storages]
    for s in snames:
        for role in ("storage_charge", "storage_discharge", "storage_capacity"):
            hits = [f for f in factors if f.storage == s and f.role == role]
            if len(hits) != 1:
                raise ScenarioError(f"storage {s} needs exactly one {role} factor", f"storage.{s}")
    for f in factors:
        if f.storage is not None and f.storage not in snames:
            raise ScenarioError(f"factor {f.name} references unknown storage {f.storage!r}", f"factors.{f.name}.storage")

    disp = data.get("dispatch", {})
    _reject_unknown(disp, {"charge_order", "discharge_order"}, "dispatch")
    charge_order = tuple(disp.get("charge_order", snames))
    discharge_order = tuple(disp.get("discharge_order", list(reversed(snames))))
    for key, order in (("charge_order", charge_order), ("discharge_order", discharge_order)):
        if sorted(order) != sorted(snames):
            raise ScenarioError(f"dispatch.{key} must list every storage exactly once", f"dispatch.{key}")

    if name.upper() == "WOEST" and storages:
        raise ScenarioError("WoEST scenario must not define storage", "storage")

    return ScenarioConfig(
        name=name,
        annual_demand_twh=demand,
        interest_rate=rate,
        factors=factors,
        storages=tuple(storages),
        charge_order=charge_order,
        discharge_order=discharge_order,
        profile_source=source,
        profile_seed=int(prof.get("seed", 1)),
        profile_path=prof.get("path"),
        fraction_exponent=design.get("fraction_exponent"),
        center_points=int(design.get("center_points", 10)),
        alpha=float(design.get("alpha", 0.1)),
        source_path=source_path,
    )


BUNDLED = {"woest": "woest.scn", "west": "west.scn"}


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("storagemix") / "data" / BUNDLED[name.lower()]))


def load_scenario(path) -> ScenarioConfig:
    """Load and validate a ``.scn`` file (or a bundled name: ``woest``/``west``)."""
    if isinstance(path, str) and path.lower() in BUNDLED and not Path(path).exists():
        path = bundled_path(path)
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc
    return parse_scenario(data, source_path=str(path))
