"""Hourly merit-order simulation of one capacity vector.

Each hour: must-run output (RES and nuclear) is netted against demand.
Surplus charges storage in ``charge_order`` and the rest is curtailed
(CEEP). Deficit is served by storage in ``discharge_order``, then by the
dispatchable plant, and the remainder is imported.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np
import pandas as pd

from .scenario import (
    MWH_PER_TWH,
    ProfileSet,
    ScenarioConfig,
    annualize,
)

OUTPUTS = ("total_annual_cost", "co2_emission", "ceep", "electricity_import")
RES_PROFILES = ("solar_pv", "csp", "wind", "river_hydro")
GJ_PER_MWH = 3.6


@numba.njit(cache=True)
def _dispatch_kernel(demand, must_run, pp_cap, charge_cap, discharge_cap, cap_mwh,
                     eta_c, eta_d, min_soc, init_soc, charge_order, discharge_order):
    n_hours = demand.shape[0]
    n_store = charge_cap.shape[0]
    charge = np.zeros((n_hours, n_store))
    discharge = np.zeros((n_hours, n_store))
    soc_trace = np.zeros((n_hours, n_store))
    pp = np.zeros(n_hours)
    imp = np.zeros(n_hours)
    ceep = np.zeros(n_hours)
    soc = init_soc * cap_mwh
    floor = min_soc * cap_mwh
    for t in range(n_hours):
        net = demand[t] - must_run[t]
        if net < 0.0:
            surplus = -net
            for j in range(n_store):
                s = charge_order[j]
                if surplus <= 0.0:
                    break
                room = (cap_mwh[s] - soc[s]) / eta_c[s]
                x = min(surplus, charge_cap[s], room)
                if x > 0.0:
                    charge[t, s] = x
                    soc[s] += x * eta_c[s]
                    surplus -= x
            ceep[t] = surplus
        elif net > 0.0:
            deficit = net
            for j in range(n_store):
                s = discharge_order[j]
                if deficit <= 0.0:
                    break
                avail = (soc[s] - floor[s]) * eta_d[s]
                x = min(deficit, discharge_cap[s], avail)
                if x > 0.0:
                    discharge[t, s] = x
                    soc[s] -= x / eta_d[s]
                    deficit -= x
            g = min(deficit, pp_cap)
            pp[t] = g
            imp[t] = deficit - g
        for s in range(n_store):
            soc_trace[t, s] = soc[s]
    return charge, discharge, soc_trace, pp, imp, ceep


@dataclass(frozen=True)
class HourLedger:
    """Hourly energy balance. Flows in MW (= MWh per hour), SOC in GWh."""

    demand: np.ndarray
    must_run: dict[str, np.ndarray]
    charge: dict[str, np.ndarray]
    discharge: dict[str, np.ndarray]
    soc: dict[str, np.ndarray]
    pp_gen: np.ndarray
    imports: np.ndarray
    ceep: np.ndarray

    def balance_residual(self) -> np.ndarray:
        supply = sum(self.must_run.values()) + sum(self.discharge.values(), np.zeros_like(self.demand))
        supply = supply + self.pp_gen + self.imports
        use = self.demand + sum(self.charge.values(), np.zeros_like(self.demand)) + self.ceep
        return supply - use

    def to_frame(self) -> pd.DataFrame:
        cols = {"demand": self.demand}
        cols.update({f"gen_{k}": v for k, v in self.must_run.items()})
        cols.update({f"charge_{k}": v for k, v in self.charge.items()})
        cols.update({f"discharge_{k}": v for k, v in self.discharge.items()})
        cols.update({f"soc_{k}_gwh": v for k, v in self.soc.items()})
        cols.update({"pp_gen": self.pp_gen, "import": self.imports, "ceep": self.ceep})
        return pd.DataFrame(cols)


@dataclass(frozen=True)
class SimulationResult:
    total_annual_cost: float  # MUSD/yr
    co2_emission: float  # Mt/yr
    ceep: float  # TWh/yr
    electricity_import: float  # TWh/yr
    res_production: float  # TWh/yr, gross RES output before curtailment
    generation: dict[str, float]  # TWh/yr per source
    end_soc: dict[str, float] = field(default_factory=dict)  # GWh
    ledger: HourLedger | None = field(default=None, compare=False, repr=False)

    def outputs(self) -> np.ndarray:
        return np.array([getattr(self, k) for k in OUTPUTS])

    def as_dict(self) -> dict:
        d = {k: getattr(self, k) for k in OUTPUTS}
        d["res_production"] = self.res_production
        return d


def _check_caps(cfg: ScenarioConfig, caps) -> np.ndarray:
    caps = np.asarray(caps, dtype=float)
    if caps.shape != (len(cfg.factors),):
        raise ValueError(f"capacity vector has shape {caps.shape}, expected ({len(cfg.factors)},)")
    if np.any(np.isnan(caps)):
        raise ValueError("capacity vector contains NaN")
    if np.any(caps < 0):
        bad = [f.name for f, c in zip(cfg.factors, caps) if c < 0]
        raise ValueError(f"negative capacity for {', '.join(bad)}")
    return caps


def simulate(cfg: ScenarioConfig, caps, profiles: ProfileSet, keep_ledger: bool = False) -> SimulationResult:
    """Run the 8760-hour dispatch for one capacity vector (natural units)."""
    caps = _check_caps(cfg, caps)
    demand = profiles.demand
    must_run = {}
    pp_cap = 0.0
    pp_name = None
    for f, c in zip(cfg.factors, caps):
        if f.role == "must_run":
            must_run[f.name] = c * profiles.capacity_factor(f.profile)
        elif f.role == "dispatchable":
            pp_cap, pp_name = c, f.name
    total_must_run = sum(must_run.values(), np.zeros_like(demand))

    names = [s.name for s in cfg.storages]
    n = len(names)
    charge_cap = np.zeros(n)
    discharge_cap = np.zeros(n)
    cap_mwh = np.zeros(n)
    for f, c in zip(cfg.factors, caps):
        if f.storage is None:
            continue
        j = names.index(f.storage)
        if f.role == "storage_charge":
            charge_cap[j] = c
        elif f.role == "storage_discharge":
            discharge_cap[j] = c
        else:
            cap_mwh[j] = c * 1000.0  # GWh -> MWh
    eta_c = np.array([s.charge_efficiency for s in cfg.storages], dtype=float)
    eta_d = np.array([s.discharge_efficiency for s in cfg.storages], dtype=float)
    min_soc = np.array([s.min_soc_fraction for s in cfg.storages], dtype=float)
    init_soc = np.array([s.initial_soc_fraction for s in cfg.storages], dtype=float)
    corder = np.array([names.index(s) for s in cfg.charge_order], dtype=np.int64)
    dorder = np.array([names.index(s) for s in cfg.discharge_order], dtype=np.int64)

    charge, discharge, soc, pp, imp, ceep = _dispatch_kernel(
        demand, total_must_run, float(pp_cap), charge_cap, discharge_cap, cap_mwh,
        eta_c, eta_d, min_soc, init_soc, corder, dorder,
    )

    generation = {k: float(v.sum()) / MWH_PER_TWH for k, v in must_run.items()}
    if pp_name is not None:
        generation[pp_name] = float(pp.sum()) / MWH_PER_TWH
    cost, co2 = account(cfg, generation, caps)
    res = sum(
        generation[f.name] for f in cfg.factors if f.role == "must_run" and f.profile in RES_PROFILES
    )
    ledger = None
    if keep_ledger:
        ledger = HourLedger(
            demand=np.array(demand),
            must_run=must_run,
            charge={k: charge[:, j] for j, k in enumerate(names)},
            discharge={k: discharge[:, j] for j, k in enumerate(names)},
            soc={k: soc[:, j] / 1000.0 for j, k in enumerate(names)},
            pp_gen=pp,
            imports=imp,
            ceep=ceep,
        )
    return SimulationResult(
        total_annual_cost=cost,
        co2_emission=co2,
        ceep=float(ceep.sum()) / MWH_PER_TWH,
        electricity_import=float(imp.sum()) / MWH_PER_TWH,
        res_production=float(res),
        generation=generation,
        end_soc={k: float(soc[-1, j]) / 1000.0 for j, k in enumerate(names)},
        ledger=ledger,
    )


def fuel_energy_gj(generation_twh: float, efficiency: float) -> float:
    return generation_twh * MWH_PER_TWH * GJ_PER_MWH / efficiency


def account(cfg: ScenarioConfig, generation: dict[str, float], caps) -> tuple[float, float]:
    """Total annual cost (MUSD/yr) and CO2 (Mt/yr).

    ``generation`` maps factor name to annual output in TWh; sources without
    an entry are treated as idle.
    """
    caps = np.asarray(caps, dtype=float)
    cost = 0.0
    co2 = 0.0
    for f, c in zip(cfg.factors, caps):
        cost += annualize(f.economics, c, cfg.interest_rate)
        gen = generation.get(f.name, 0.0)
        if gen < 0:
            raise ValueError(f"negative generation for {f.name}")
        if f.fuel is not None and gen > 0:
            gj = fuel_energy_gj(gen, f.fuel.conversion_efficiency)
            cost += gj * (f.fuel.price + f.fuel.handling_cost) / 1e6
            co2 += gj * f.fuel.co2_factor / 1e9
    return cost, co2


def percent_change(a: float, b: float) -> float:
    """100 (b - a) / a, or the absolute delta when a == 0."""
    if a == 0:
        return b - a
    return 100.0 * (b - a) / a


def compare(a: SimulationResult, b: SimulationResult, annual_demand_twh: float | None = None) -> dict:
    """Per-output change from ``a`` to ``b`` plus RES production and share deltas."""
    report = {k: percent_change(getattr(a, k), getattr(b, k)) for k in OUTPUTS}
    report["res_production"] = percent_change(a.res_production, b.res_production)
    if annual_demand_twh:
        report["res_share_delta_pp"] = 100.0 * (b.res_production - a.res_production) / annual_demand_twh
    return report


def simulate_many(cfg: ScenarioConfig, rows, profiles: ProfileSet, n_jobs: int = 1) -> list[SimulationResult]:
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if n_jobs == 1:
        return [simulate(cfg, r, profiles) for r in rows]
    from joblib import Parallel, delayed

    return Parallel(n_jobs=n_jobs)(delayed(simulate)(cfg, r, profiles) for r in rows)


def results_frame(cfg: ScenarioConfig, rows, results: list[SimulationResult]) -> pd.DataFrame:
    df = pd.DataFrame(np.asarray(rows, dtype=float), columns=cfg.factor_names)
    for k in OUTPUTS + ("res_production",):
        df[k] = [getattr(r, k) for r in results]
    return df


class SimulatorModel:
    """Predict one output by running the simulator (exact 'surrogate').

    Useful as an oracle hookup: plugging it into the validation loop must
    give zero gaps.
    """

    def __init__(self, cfg: ScenarioConfig, profiles: ProfileSet, output: str):
        if output not in OUTPUTS:
            raise ValueError(f"unknown output {output!r}")
        self.cfg = cfg
        self.profiles = profiles
        self.output = output

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.array([getattr(simulate(self.cfg, x, self.profiles), self.output) for x in X])
