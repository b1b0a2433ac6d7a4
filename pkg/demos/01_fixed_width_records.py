"""
Parsing fixed-width station records
===================================

Builds a couple of daily and monthly temperature records in memory,
renders them to the fixed-width layouts, and parses them back.  The trip
is lossless: missing values travel as the -9999 sentinel and come back
as NaN.
"""

import datetime as dt

import numpy as np

from megaheat.ghcn import parse_ghcnd, parse_ghcnm, serialize_ghcnd, serialize_ghcnm
from megaheat.series import DailySeries, MonthlySeries

rng = np.random.default_rng(1)

# one station-summer of daily maxima, tenths of a degree, with a hole
june = np.round(rng.uniform(22.0, 38.0, 30), 1)
june[10:13] = np.nan
daily = DailySeries("DEMO0000001", "TMAX", dt.date(1999, 6, 1), june)

blob = serialize_ghcnd([daily])
print("a daily line looks like this (269 chars, 31 day slots):")
print(blob.decode().splitlines()[0][:80] + "...")
print()

back, issues = parse_ghcnd(blob)
assert not issues
np.testing.assert_array_equal(back[0].values, june)
print(f"round trip ok: {np.isnan(june).sum()} missing days survived as NaN")
print()

# monthly records carry one year per line in hundredths of a degree
monthly = MonthlySeries(
    "DEMO0000001", "TAVG", 1999, 1, np.round(rng.uniform(-5.0, 25.0, 24), 2)
)
mblob = serialize_ghcnm([monthly])
print("a monthly line (115 chars, 12 value slots):")
print(mblob.decode().splitlines()[0])

mback, issues = parse_ghcnm(mblob)
assert not issues
np.testing.assert_array_equal(mback[0].values, monthly.values)
print("monthly round trip ok:", mback[0].first_year, "-", mback[0].first_year + 1)
