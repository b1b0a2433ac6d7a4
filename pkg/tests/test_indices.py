import datetime as dt

import numpy as np
import pytest
from numpy.testing import assert_allclose

from megaheat.indices import (
    CDD_BASE_C,
    SeasonalValue,
    annual_cdd,
    annual_cnm,
    annual_p95,
    annual_series_csv,
    max_consecutive_mean,
    percentile_95,
    regional_annual_series,
    seasonal_annual_series,
    seasonal_means,
)
from megaheat.series import AnnualSeries, DailySeries, MonthlySeries


def _monthly(values, first_year, first_month=1, station="S1", element="TAVG"):
    return MonthlySeries(
        station_id=station,
        element=element,
        first_year=first_year,
        first_month=first_month,
        values=np.asarray(values, dtype=float),
    )


def _daily(values, start, station="S1", element="TMAX"):
    return DailySeries(
        station_id=station, element=element, start=start, values=np.asarray(values, dtype=float)
    )


def _full_year(year, rng=None, base=20.0):
    n = 366 if year % 4 == 0 and (year % 100 != 0 or year % 400 == 0) else 365
    if rng is None:
        return np.full(n, base)
    return base + rng.normal(0, 5, n)


class TestSeasonalMeans:
    def test_jja_mean(self):
        v = np.full(12, np.nan)
        v[5], v[6], v[7] = 20.0, 30.0, 25.0
        out = seasonal_means([_monthly(v, 1990)])
        jja = [s for s in out if s.season == "JJA"]
        assert len(jja) == 1
        assert jja[0].year == 1990
        assert jja[0].value == pytest.approx(25.0)
        assert jja[0].element == "TAVG"

    def test_djf_uses_previous_december(self):
        # Dec 1959 = 0, Jan 1960 = -10, Feb 1960 = -5
        v = np.full(15, np.nan)  # Dec 1959 .. Feb 1961
        v[0], v[1], v[2] = 0.0, -10.0, -5.0
        out = seasonal_means([_monthly(v, 1959, first_month=12)])
        djf = [s for s in out if s.season == "DJF"]
        assert len(djf) == 1
        assert djf[0].year == 1960
        assert djf[0].value == pytest.approx(-5.0)

    def test_missing_month_omits_season(self):
        v = np.full(12, 10.0)
        v[6] = np.nan  # July
        out = seasonal_means([_monthly(v, 1990)])
        assert not any(s.season == "JJA" for s in out)

    def test_season_outside_coverage_omitted(self):
        # series starts in January: no Dec(Y-1), so no DJF at all
        out = seasonal_means([_monthly(np.full(12, 1.0), 2000)])
        assert [s.season for s in out] == ["JJA"]

    def test_shift_by_twelve_months_shifts_years(self):
        rng = np.random.default_rng(17)
        v = rng.normal(10, 8, 120)
        v[rng.random(120) < 0.08] = np.nan
        a = seasonal_means([_monthly(v, 1980)])
        b = seasonal_means([_monthly(v, 1981)])
        key = lambda s: (s.year, s.season, s.element)
        assert sorted((s.year + 1, s.season, s.element, s.value) for s in a) == sorted(
            (s.year, s.season, s.element, s.value) for s in b
        )

    def test_seasonal_annual_series_grouping(self):
        vals = [
            SeasonalValue("A", 1990, "JJA", "TMAX", 30.0),
            SeasonalValue("A", 1991, "JJA", "TMAX", 31.0),
            SeasonalValue("A", 1990, "DJF", "TMAX", 1.0),
            SeasonalValue("B", 1990, "JJA", "TMAX", 28.0),
        ]
        out = seasonal_annual_series(vals)
        keys = {(s.key, s.metric) for s in out}
        assert keys == {("A", "jja_tmax"), ("A", "djf_tmax"), ("B", "jja_tmax")}
        a_jja = next(s for s in out if s.key == "A" and s.metric == "jja_tmax")
        assert list(a_jja.years) == [1990, 1991]
        assert_allclose(a_jja.values, [30.0, 31.0])


class TestAnnualCdd:
    def test_single_hot_day_contribution(self):
        tmax = _full_year(2001, base=10.0)
        tmin = _full_year(2001, base=5.0)
        tmax[100], tmin[100] = 35.0, 25.0
        cdd = annual_cdd(
            _daily(tmax, dt.date(2001, 1, 1)), _daily(tmin, dt.date(2001, 1, 1), element="TMIN")
        )
        assert list(cdd.years) == [2001]
        assert cdd.values[0] == pytest.approx(35.0 / 2 + 25.0 / 2 - 23.89, rel=1e-12)
        assert cdd.values[0] == pytest.approx(6.11, abs=1e-9)

    def test_cold_year_is_zero(self):
        start = dt.date(2002, 1, 1)
        cdd = annual_cdd(
            _daily(_full_year(2002, base=20.0), start),
            _daily(_full_year(2002, base=10.0), start, element="TMIN"),
        )
        assert cdd.values[0] == 0.0

    def test_ten_days_one_degree_over(self):
        tmax = _full_year(2003, base=10.0)
        tmin = _full_year(2003, base=5.0)
        tmax[50:60] = 24.89 + 1.0
        tmin[50:60] = 24.89 - 1.0
        start = dt.date(2003, 1, 1)
        cdd = annual_cdd(_daily(tmax, start), _daily(tmin, start, element="TMIN"))
        assert cdd.values[0] == pytest.approx(10.0, rel=1e-9)

    def test_incomplete_year_omitted(self):
        start = dt.date(2001, 3, 1)
        n = (dt.date(2002, 12, 31) - start).days + 1
        tmax = _daily(np.full(n, 30.0), start)
        tmin = _daily(np.full(n, 20.0), start, element="TMIN")
        cdd = annual_cdd(tmax, tmin)
        assert list(cdd.years) == [2002]

    def test_missing_day_omits_year(self):
        tmax = _full_year(2001, base=30.0)
        tmin = _full_year(2001, base=20.0)
        tmin[200] = np.nan
        start = dt.date(2001, 1, 1)
        cdd = annual_cdd(_daily(tmax, start), _daily(tmin, start, element="TMIN"))
        assert cdd.years.size == 0

    def test_warming_never_decreases_cdd(self):
        rng = np.random.default_rng(18)
        start = dt.date(2001, 1, 1)
        for _ in range(20):
            tmax = _full_year(2001, rng, base=26.0)
            tmin = _full_year(2001, rng, base=16.0)
            a = annual_cdd(_daily(tmax, start), _daily(tmin, start, element="TMIN"))
            b = annual_cdd(
                _daily(tmax + 1.0, start), _daily(tmin + 1.0, start, element="TMIN")
            )
            assert b.values[0] >= a.values[0] >= 0.0


class TestAnnualCnm:
    def test_window_example(self):
        v = np.array([10.0, 12.0, 20.0, 21.0, 22.0, 15.0])
        assert max_consecutive_mean(v) == pytest.approx(21.0)

    def test_constant_year(self):
        tmin = _daily(_full_year(2001, base=4.25), dt.date(2001, 1, 1), element="TMIN")
        cnm = annual_cnm(tmin)
        assert list(cnm.years) == [2001]
        assert cnm.values[0] == pytest.approx(4.25)

    def test_increasing_year_takes_last_window(self):
        v = np.linspace(0, 36.4, 365)
        cnm = annual_cnm(_daily(v, dt.date(2001, 1, 1), element="TMIN"))
        assert cnm.values[0] == pytest.approx(v[-3:].mean(), rel=1e-12)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(19)
        for _ in range(30):
            v = rng.normal(10, 6, 365)
            got = max_consecutive_mean(v)
            want = max(np.mean(v[i : i + 3]) for i in range(363))
            assert got == pytest.approx(want, rel=1e-12)
            assert got >= np.mean(v[100:103]) - 1e-12

    def test_windows_stay_within_year(self):
        # hot streak split across Dec 31 / Jan 1 must not form a window
        start = dt.date(2001, 1, 1)
        n = (dt.date(2002, 12, 31) - start).days + 1
        v = np.zeros(n)
        v[363:368] = 30.0  # Dec 30 2001 .. Jan 3 2002
        cnm = annual_cnm(_daily(v, start, element="TMIN"))
        dec = np.array([30.0, 30.0])  # only 2 hot nights inside 2001
        assert cnm.values[0] == pytest.approx((dec.sum() + 0.0) / 3, rel=1e-12)
        assert cnm.values[1] == pytest.approx((30.0 * 3) / 3, rel=1e-12)


class TestAnnualP95:
    def test_one_to_365(self):
        v = np.arange(1.0, 366.0)
        assert percentile_95(v) == pytest.approx(346.8, rel=1e-12)

    def test_two_values(self):
        assert percentile_95(np.array([0.0, 100.0])) == pytest.approx(95.0)
        assert percentile_95(np.array([100.0, 0.0])) == pytest.approx(95.0)

    def test_constant(self):
        assert percentile_95(np.full(200, 7.5)) == 7.5

    def test_matches_numpy_linear_percentile(self):
        rng = np.random.default_rng(20)
        for _ in range(50):
            n = int(rng.integers(2, 400))
            v = rng.normal(20, 10, n)
            assert percentile_95(v) == pytest.approx(
                float(np.percentile(v, 95.0, method="linear")), rel=1e-12
            )

    def test_bounds_and_monotonicity(self):
        rng = np.random.default_rng(21)
        v = rng.normal(25, 8, 365)
        p = percentile_95(v)
        assert v.min() <= p <= v.max()
        assert percentile_95(v + 0.3) >= p

    def test_annual_wrapper(self):
        v = _full_year(2001)
        v[:100] = np.linspace(30, 40, 100)
        p95 = annual_p95(_daily(v, dt.date(2001, 1, 1)))
        assert list(p95.years) == [2001]
        assert p95.values[0] == pytest.approx(float(np.percentile(v, 95.0)), rel=1e-12)


class TestRegionalSeries:
    def test_mean_of_two(self):
        a = AnnualSeries("A", "cdd", np.array([1990]), np.array([10.0]))
        b = AnnualSeries("B", "cdd", np.array([1990]), np.array([20.0]))
        out = regional_annual_series([a, b], key="metro")
        assert out.key == "metro" and out.metric == "cdd"
        assert list(out.years) == [1990]
        assert out.values[0] == pytest.approx(15.0)

    def test_single_station_identity(self):
        a = AnnualSeries("A", "cnm", np.array([1990, 1991]), np.array([1.0, 2.0]))
        out = regional_annual_series([a], key="g")
        assert_allclose(out.values, a.values)
        assert list(out.years) == [1990, 1991]

    def test_partial_reporting(self):
        a = AnnualSeries("A", "p95", np.array([1990, 1991]), np.array([10.0, 12.0]))
        b = AnnualSeries("B", "p95", np.array([1991]), np.array([20.0]))
        out = regional_annual_series([a, b], key="g")
        assert list(out.years) == [1990, 1991]
        assert_allclose(out.values, [10.0, 16.0])

    def test_empty_group_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            regional_annual_series([], key="g")

    def test_mixed_metrics_rejected(self):
        a = AnnualSeries("A", "cdd", np.array([1990]), np.array([1.0]))
        b = AnnualSeries("B", "cnm", np.array([1990]), np.array([2.0]))
        with pytest.raises(ValueError, match="metric"):
            regional_annual_series([a, b], key="g")


class TestCsv:
    def test_round_trip_precision(self):
        s = AnnualSeries("A", "cdd", np.array([1990, 1991]), np.array([1.0 / 3.0, 6.11]))
        text = annual_series_csv([s])
        lines = text.strip().split("\n")
        assert lines[0] == "key,metric,year,value"
        assert lines[1].startswith("A,cdd,1990,")
        assert float(lines[1].split(",")[3]) == 1.0 / 3.0

    def test_base_constant(self):
        assert CDD_BASE_C == 23.89
