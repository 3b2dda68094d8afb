import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from storagemix.dispatch import (
    SimulatorModel,
    account,
    compare,
    fuel_energy_gj,
    percent_change,
    simulate,
    simulate_many,
)
from storagemix.doe import build_design


def _caps(cfg, **values):
    return np.array([values.get(n, 0.0) for n in cfg.factor_names])


def test_empty_system_imports_everything(woest, profiles):
    r = simulate(woest, _caps(woest), profiles)
    assert r.electricity_import == pytest.approx(946.0, rel=1e-9)
    assert (r.ceep, r.co2_emission, r.total_annual_cost) == (0.0, 0.0, 0.0)


def test_firm_plant_covers_demand(woest, profiles):
    r = simulate(woest, _caps(woest, PP=profiles.demand.max() + 1), profiles)
    assert r.electricity_import == pytest.approx(0.0, abs=1e-9)
    assert r.ceep == pytest.approx(0.0, abs=1e-9)
    assert r.generation["PP"] == pytest.approx(946.0, rel=1e-9)


def test_no_storage_oracle(woest, profiles):
    # independent tally: without storage, hourly surplus is curtailed and deficits beyond PP are imported
    caps = _caps(woest, PP=60000, PV=150000, Wind=10000, Nuclear=20000, RH=8000, CSP=20000)
    must = (caps[woest.factor_names.index("PV")] * profiles.solar_pv
            + caps[woest.factor_names.index("Wind")] * profiles.wind
            + caps[woest.factor_names.index("Nuclear")] * profiles.nuclear
            + caps[woest.factor_names.index("RH")] * profiles.river_hydro
            + caps[woest.factor_names.index("CSP")] * profiles.csp)
    net = profiles.demand - must
    r = simulate(woest, caps, profiles)
    assert r.ceep == pytest.approx(np.clip(-net, 0, None).sum() / 1e6, rel=1e-9)
    assert r.electricity_import == pytest.approx(np.clip(net - 60000, 0, None).sum() / 1e6, rel=1e-9)


def test_ideal_store_matches_lindley_oracle(west, profiles):
    """Lossless, unbounded BESS that starts empty: nothing is ever curtailed and
    imports equal the worst cumulative shortfall of the running energy balance."""
    from dataclasses import replace

    stores = tuple(replace(s, charge_efficiency=1.0, discharge_efficiency=1.0, initial_soc_fraction=0.0,
                           min_soc_fraction=0.0) for s in west.storages)
    cfg = replace(west, storages=stores)
    big = 1e12
    caps = _caps(cfg, PV=500000, **{"BESS CC": big, "BESS DC": big, "BESS SC": big})
    r = simulate(cfg, caps, profiles)
    net = 500000 * profiles.solar_pv - profiles.demand  # surplus > 0
    # store level follows s_t = max(0, s_{t-1} + net_t); imports fill what the store cannot
    level, imported = 0.0, 0.0
    for v in net:
        level += v
        if level < 0:
            imported -= level
            level = 0.0
    assert r.ceep == pytest.approx(0.0, abs=1e-6)
    assert r.electricity_import == pytest.approx(imported / 1e6, rel=1e-9)
    assert r.end_soc["BESS"] * 1e3 == pytest.approx(level, rel=1e-9)


def test_account_fuel_cost_and_co2(woest):
    assert fuel_energy_gj(1.0, 0.5) == pytest.approx(7.2e6)
    cost, co2 = account(woest, {"PP": 1.0}, _caps(woest))
    assert cost == pytest.approx(68.472, abs=1e-3)
    assert co2 == pytest.approx(0.40392, abs=1e-5)


def test_account_zero(woest):
    assert account(woest, {}, _caps(woest)) == (0.0, 0.0)


def test_percent_change_examples():
    assert percent_change(102972, 106750) == pytest.approx(3.67, abs=0.005)
    assert percent_change(449, 363) == pytest.approx(-19.15, abs=0.005)
    assert percent_change(0.0, 2.5) == 2.5


def test_compare_identical_is_zero(woest, profiles):
    r = simulate(woest, woest.lower + 1000, profiles)
    d = compare(r, r, 946.0)
    assert all(v == 0 for v in d.values())


def test_negative_or_nan_capacity_rejected(woest, profiles):
    with pytest.raises(ValueError, match="negative capacity for PP"):
        simulate(woest, _caps(woest, PP=-1), profiles)
    with pytest.raises(ValueError, match="NaN"):
        simulate(woest, _caps(woest, PP=np.nan), profiles)


def test_ledger_limits_and_balance(west, profiles):
    design = build_design(west.design_spec()).natural()
    for caps in design[::37]:
        r = simulate(west, caps, profiles, keep_ledger=True)
        led = r.ledger
        assert np.abs(led.balance_residual()).max() <= 1e-6
        for s in west.storages:
            cc = caps[west.factor_names.index(f"{s.name} CC" if s.name != "EV" else "G2V")]
            assert np.all(led.charge[s.name] <= cc + 1e-9)
            assert not np.any((led.charge[s.name] > 0) & (led.discharge[s.name] > 0))
            assert np.all(led.soc[s.name] >= -1e-9)
        assert not np.any((led.imports > 0) & (led.ceep > 0))


def test_soc_respects_capacity_and_reserve(west, profiles):
    caps = build_design(west.design_spec()).natural()[0]
    r = simulate(west, caps, profiles, keep_ledger=True)
    names = west.factor_names
    sc = {"EV": caps[names.index("VBS")], "PHS": caps[names.index("PHS SC")], "BESS": caps[names.index("BESS SC")]}
    for s in west.storages:
        soc = r.ledger.soc[s.name]
        assert np.all(soc <= sc[s.name] + 1e-9)
        assert np.all(soc >= s.min_soc_fraction * sc[s.name] - 1e-9)


def test_deterministic(west, profiles):
    caps = build_design(west.design_spec()).natural()[3]
    assert simulate(west, caps, profiles) == simulate(west, caps, profiles)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=15, max_size=15), st.floats(0, 1), st.floats(0, 1))
def test_more_power_plant_never_raises_import(west, profiles, u, a, b):
    caps = west.lower + np.array(u) * (west.upper - west.lower)
    pp = west.factor_names.index("PP")
    lo, hi = sorted((a, b))
    c1, c2 = caps.copy(), caps.copy()
    c1[pp] = 150000 * lo
    c2[pp] = 150000 * hi
    assert simulate(west, c2, profiles).electricity_import <= simulate(west, c1, profiles).electricity_import + 1e-9


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=15, max_size=15))
def test_storage_never_raises_ceep(west, profiles, u):
    caps = west.lower + np.array(u) * (west.upper - west.lower)
    bare = caps.copy()
    for n in ("G2V", "VBS", "V2G", "PHS CC", "PHS DC", "PHS SC", "BESS CC", "BESS DC", "BESS SC"):
        bare[west.factor_names.index(n)] = 0.0
    assert simulate(west, caps, profiles).ceep <= simulate(west, bare, profiles).ceep + 1e-9


def test_simulator_model_predicts_outputs(woest, profiles):
    X = build_design(woest.design_spec()).natural()[:3]
    m = SimulatorModel(woest, profiles, "co2_emission")
    expected = [r.co2_emission for r in simulate_many(woest, X, profiles)]
    assert np.array_equal(m.predict(X), expected)
