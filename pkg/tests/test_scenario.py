import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from storagemix.scenario import (
    HOURS,
    ProfileSet,
    ScenarioError,
    TechnologyEconomics,
    annualize,
    bundled_path,
    crf,
    load_scenario,
    synth_profiles,
)

# sha256 of the seed-1, 946 TWh synthetic traces; update deliberately if the generator changes
GOLDEN_DIGEST = "3d40d52eeace59710367f64eab5966a4eefda53d1931e468cb084e3be932452a"


def test_bundled_woest(woest):
    assert woest.name == "WoEST"
    assert len(woest.factors) == 6
    assert woest.storages == ()
    assert woest.annual_demand_twh == 946.0


def test_bundled_west(west):
    names = set(west.factor_names)
    assert len(west.factors) == 15
    assert {"G2V", "VBS", "V2G", "PHS CC", "PHS DC", "PHS SC", "BESS CC", "BESS DC", "BESS SC"} <= names
    assert {s.name for s in west.storages} == {"EV", "PHS", "BESS"}


def test_west_shares_woest_generation_bounds(woest, west):
    for f in woest.factors:
        g = west.factor(f.name)
        assert (g.low, g.high, g.economics) == (f.low, f.high, f.economics)


def _woest_text():
    return bundled_path("woest").read_text()


def test_inverted_bounds_error_names_factor(tmp_path):
    text = _woest_text().replace("low = 50000.0\nhigh = 150000.0", "low = 150000.0\nhigh = 50000.0")
    p = tmp_path / "bad.scn"
    p.write_text(text)
    with pytest.raises(ScenarioError, match="bounds inverted: PP"):
        load_scenario(p)


def test_unknown_key_rejected(tmp_path):
    p = tmp_path / "bad.scn"
    p.write_text(_woest_text().replace("interest_rate = 0.03", "interest_rate = 0.03\ncolour = 'red'"))
    with pytest.raises(ScenarioError) as exc:
        load_scenario(p)
    assert "colour" in str(exc.value)


def test_negative_cost_rejected(tmp_path):
    p = tmp_path / "bad.scn"
    p.write_text(_woest_text().replace("investment_cost = 0.99", "investment_cost = -0.99"))
    with pytest.raises(ScenarioError) as exc:
        load_scenario(p)
    assert exc.value.field is not None


def test_missing_key_rejected(tmp_path):
    p = tmp_path / "bad.scn"
    p.write_text(_woest_text().replace('name = "WoEST"\n', ""))
    with pytest.raises(ScenarioError, match="name"):
        load_scenario(p)


def test_crf_closed_form():
    assert crf(0.03, 20) == pytest.approx(0.067216, abs=5e-7)
    assert crf(0.0, 20) == pytest.approx(0.05)


def test_annualize_power_plant():
    # 1000 MW x 0.99 MUSD/MW x (CRF 0.0672157 + 3.05% O&M)
    econ = TechnologyEconomics(0.99, 3.05, 20)
    assert annualize(econ, 1000, 0.03) == pytest.approx(1000 * 0.99 * (0.0672157 + 0.0305), rel=1e-6)
    assert annualize(econ, 1000, 0.03) == pytest.approx(96.74, abs=0.01)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 1e6), st.floats(0, 0.2), st.integers(1, 60))
def test_annualize_linear_in_capacity(cap, rate, life):
    econ = TechnologyEconomics(1.3, 2.0, life)
    assert annualize(econ, 2 * cap, rate) == pytest.approx(2 * annualize(econ, cap, rate), rel=1e-12)


def test_profiles_sum_and_ranges(profiles):
    assert profiles.demand.sum() / 1e6 == pytest.approx(946.0, rel=1e-6)
    assert profiles.demand.shape == (HOURS,)
    assert np.all(profiles.demand >= 0)
    for name in ("solar_pv", "csp", "wind", "river_hydro", "nuclear"):
        cf = profiles.capacity_factor(name)
        assert cf.shape == (HOURS,) and np.all((cf >= 0) & (cf <= 1))
    assert profiles.solar_pv[0] == 0.0
    assert np.allclose(profiles.nuclear, 0.9)


def test_profile_means(profiles):
    assert profiles.solar_pv.mean() == pytest.approx(0.18, abs=0.005)
    assert profiles.csp.mean() == pytest.approx(0.30, abs=0.005)
    assert profiles.river_hydro.mean() == pytest.approx(0.45, abs=0.005)


def test_wind_mean_over_seeds():
    means = [synth_profiles(946.0, seed).wind.mean() for seed in range(20)]
    assert all(0.28 <= m <= 0.32 for m in means)


def test_profiles_golden_digest(profiles):
    assert profiles.digest() == GOLDEN_DIGEST


def test_profiles_are_read_only(profiles):
    with pytest.raises(ValueError):
        profiles.demand[0] = 1.0


def test_profiles_csv_round_trip(tmp_path, profiles):
    profiles.to_csv(tmp_path / "p.csv")
    back = ProfileSet.from_csv(tmp_path / "p.csv")
    assert back.digest() == profiles.digest()
