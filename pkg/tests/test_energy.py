import math
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from dcwatch.energy import (
    REPORTED_PUE,
    ZoneIntensityRecord,
    attributed_emission,
    fleet_average_intensity,
    load_zone_intensities,
    zone_record_for_year,
)
from dcwatch.errors import NoMatches, ValidationError
from dcwatch.sites import Site, SiteStatus, load_sites

FIXTURES = Path(__file__).parent / "fixtures"
HEADER = "zone_id,year,carbon_intensity_gco2_kwh,low_carbon_fraction,renewable_fraction\n"


def site(i, zone):
    return Site(f"s{i:02d}", "", "", SiteStatus.EXISTING, 0.0, 0.0, zone_id=zone)


class TestLoad:
    def test_fixture_row(self):
        recs = load_zone_intensities((FIXTURES / "zones.csv").read_text())
        pjm = zone_record_for_year(recs, "US-MIDA-PJM", 2023)
        assert (pjm.carbon_intensity, pjm.low_carbon_fraction, pjm.renewable_fraction) == (430.0, 0.39, 0.07)

    def test_empty_fractions(self):
        (rec,) = load_zone_intensities(HEADER + "Z,2023,95,,\n")
        assert rec.low_carbon_fraction is None and rec.renewable_fraction is None

    def test_renewable_exceeds_low_carbon(self):
        with pytest.raises(ValidationError) as exc:
            load_zone_intensities(HEADER + "Z,2023,100,0.3,0.5\n")
        assert exc.value.field == "renewable_fraction"

    @pytest.mark.parametrize("row,field", [("Z,2023,-1,,", "carbon_intensity_gco2_kwh"), ("Z,2023,1,1.5,", "low_carbon_fraction"), ("Z,x,1,,", "year")])
    def test_bad_rows(self, row, field):
        with pytest.raises(ValidationError) as exc:
            load_zone_intensities(HEADER + row + "\n")
        assert exc.value.field == field

    def test_missing_column(self):
        with pytest.raises(ValidationError):
            load_zone_intensities("zone_id,year\nZ,2023\n")

    def test_record_invariants(self):
        with pytest.raises(ValueError):
            ZoneIntensityRecord("Z", 2023, 10, 0.1, 0.2)

    def test_reported_pue(self):
        ms = {r.scope: r.pue for r in REPORTED_PUE if r.operator == "Microsoft"}
        assert ms["global"] == 1.18
        assert all(r.pue >= 1 for r in REPORTED_PUE)


class TestFleet:
    def test_two_sites(self):
        recs = [ZoneIntensityRecord("A", 2023, 400), ZoneIntensityRecord("B", 2023, 420)]
        f = fleet_average_intensity([site(1, "A"), site(2, "B")], recs, 2023)
        assert f.mean_gco2_per_kwh == 410.0 and f.n_matched == 2 and f.unmatched_site_ids == []

    def test_single(self):
        f = fleet_average_intensity([site(1, "A")], [ZoneIntensityRecord("A", 2023, 430)], 2023)
        assert f.mean_gco2_per_kwh == 430.0

    def test_unmatched_reported(self):
        recs = [ZoneIntensityRecord("A", 2023, 400)]
        f = fleet_average_intensity([site(1, "A"), site(2, "X"), site(3, None)], recs, 2023)
        assert f.n_matched == 1 and f.unmatched_site_ids == ["s02", "s03"]

    def test_year_fallback(self):
        recs = load_zone_intensities((FIXTURES / "zones.csv").read_text())
        f = fleet_average_intensity([site(1, "US-MIDA-PJM")], recs, 2022)
        assert f.mean_gco2_per_kwh == 445.0 and f.year_fallbacks == {"s01": 2021}

    def test_no_matches(self):
        with pytest.raises(NoMatches):
            fleet_average_intensity([site(1, "A")], [ZoneIntensityRecord("A", 2024, 1)], 2023)

    def test_fixture_registry(self):
        sites = load_sites((FIXTURES / "arcola_sites.csv").read_text())
        recs = load_zone_intensities((FIXTURES / "zones.csv").read_text())
        f = fleet_average_intensity(sites, recs, 2023)
        assert f.n_matched == 11 and f.unmatched_site_ids == ["pr-05"] and f.mean_gco2_per_kwh == 430.0

    def test_fourteen_sites_brute_force(self, rng):
        zones = [f"Z{k}" for k in range(6)]
        recs = [ZoneIntensityRecord(z, 2023, float(rng.uniform(20, 800))) for z in zones]
        sites = [site(i, zones[int(rng.integers(0, 6))]) for i in range(14)]
        f = fleet_average_intensity(sites, recs, 2023)
        lookup = {r.zone_id: r.carbon_intensity for r in recs}
        total = 0.0
        for s in sites:
            total += lookup[s.zone_id]
        assert abs(f.mean_gco2_per_kwh - total / 14) <= 1e-9


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 4), st.floats(0, 1000)), min_size=1, max_size=5, unique_by=lambda x: x[0]), st.lists(st.integers(0, 6), min_size=1, max_size=14), st.randoms())
def test_fleet_properties(zone_rows, assignment, rnd):
    recs = [ZoneIntensityRecord(f"Z{z}", 2023, ci) for z, ci in zone_rows]
    sites = [site(i, f"Z{z}") for i, z in enumerate(assignment)]
    try:
        f = fleet_average_intensity(sites, recs, 2023)
    except NoMatches:
        assert not {f"Z{z}" for z in assignment} & {r.zone_id for r in recs}
        return
    matched = [r.carbon_intensity for s in sites for r in recs if r.zone_id == s.zone_id]
    assert min(matched) - 1e-9 <= f.mean_gco2_per_kwh <= max(matched) + 1e-9
    sites2, recs2 = sites[:], recs[:]
    rnd.shuffle(sites2)
    rnd.shuffle(recs2)
    g = fleet_average_intensity(sites2, recs2, 2023)
    assert g.mean_gco2_per_kwh == f.mean_gco2_per_kwh
    assert sorted(g.unmatched_site_ids) == sorted(f.unmatched_site_ids)


class TestEmission:
    def test_examples(self):
        assert attributed_emission(1000, 430, 1.18) == 507400.0
        assert attributed_emission(0, 500, 1.3) == 0
        assert attributed_emission(12.5, 300, 1.0) == 12.5 * 300

    def test_preconditions(self):
        with pytest.raises(ValueError):
            attributed_emission(1, 1, 0.9)
        with pytest.raises(ValueError):
            attributed_emission(-1, 1, 1.1)


@settings(max_examples=80, deadline=None)
@given(st.floats(0, 1e6), st.floats(0, 1e6), st.floats(0, 1000), st.floats(1, 3), st.floats(0, 1))
def test_emission_linear_and_monotone(e1, e2, ci, pue, bump):
    total = attributed_emission(e1 + e2, ci, pue)
    assert math.isclose(total, attributed_emission(e1, ci, pue) + attributed_emission(e2, ci, pue), rel_tol=1e-12, abs_tol=1e-6)
    assert attributed_emission(e1, ci, pue + bump) >= attributed_emission(e1, ci, pue)
    assert attributed_emission(e1, ci + bump, pue) >= attributed_emission(e1, ci, pue)
