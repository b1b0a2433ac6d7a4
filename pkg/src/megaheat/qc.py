"""Station retention rules for monthly and daily records.

Monthly rules evaluate the full study window: a window month outside the
series' coverage counts as missing, so the missing-fraction and
consecutive-gap rules double as coverage requirements.  Daily records get
an explicit length rule instead, so the summer-missing and consecutive-gap
rules there look only at the observed extent intersected with the window.

All thresholds are strict ("more than"): an exactly-12-month hole or an
exactly-30-day gap survives.
"""

from __future__ import annotations

import datetime as dt
import io
from dataclasses import dataclass

import numpy as np

from .series import DailySeries, MonthlySeries, date_to_serial, month_index

STUDY_WINDOW = (1956, 2015)

MONTHLY_MAX_MISSING_FRAC = 0.10
MONTHLY_MAX_GAP_MONTHS = 12

DAILY_MIN_SPAN_MONTHS = 719
DAILY_END_CUTOFF = dt.date(2014, 1, 1)
DAILY_JJA_MAX_MISSING_FRAC = 0.20
DAILY_MAX_GAP_DAYS = 30

JJA_MONTHS = (6, 7, 8)


@dataclass
class QcReport:
    station_id: str
    element: str
    verdict: str  # "kept" | "dropped"
    reason: str  # rule identifier, "" when kept
    missing_frac: float
    longest_gap: int  # months (monthly rules) or days (daily rules)


def _longest_run(mask: np.ndarray) -> int:
    if mask.size == 0 or not mask.any():
        return 0
    edges = np.flatnonzero(np.diff(np.concatenate(([False], mask, [False])).astype(np.int8)))
    return int((edges[1::2] - edges[::2]).max())


def filter_monthly_stations(
    series: list[MonthlySeries],
    window: tuple[int, int] = STUDY_WINDOW,
    max_missing_frac: float = MONTHLY_MAX_MISSING_FRAC,
    max_gap_months: int = MONTHLY_MAX_GAP_MONTHS,
):
    """Drop monthly series with too much missing data inside the window.

    Rules, in precedence order: missing fraction > max_missing_frac, then
    any run of more than max_gap_months consecutive missing months.
    Returns (kept series, one QcReport per input series).
    """
    w0 = month_index(window[0], 1)
    w1 = month_index(window[1], 12)
    n_window = w1 - w0 + 1
    if n_window <= 0:
        raise ValueError(f"empty study window {window}")

    kept: list[MonthlySeries] = []
    reports: list[QcReport] = []
    for s in series:
        observed = np.zeros(n_window, dtype=bool)
        s0 = month_index(s.first_year, s.first_month)
        lo = max(w0, s0)
        hi = min(w1, s0 + s.values.size - 1)
        if hi >= lo:
            observed[lo - w0 : hi - w0 + 1] = ~np.isnan(s.values[lo - s0 : hi - s0 + 1])
        missing = ~observed
        frac = float(missing.mean())
        gap = _longest_run(missing)
        if frac > max_missing_frac:
            verdict, reason = "dropped", "missing_frac"
        elif gap > max_gap_months:
            verdict, reason = "dropped", "gap_months"
        else:
            verdict, reason = "kept", ""
            kept.append(s)
        reports.append(
            QcReport(
                station_id=s.station_id,
                element=s.element,
                verdict=verdict,
                reason=reason,
                missing_frac=frac,
                longest_gap=gap,
            )
        )
    return kept, reports


def _span_months(first: dt.date, last: dt.date) -> int:
    return month_index(last.year, last.month) - month_index(first.year, first.month) + 1


def filter_daily_stations(
    series: list[DailySeries],
    window: tuple[int, int] = STUDY_WINDOW,
    min_span_months: int = DAILY_MIN_SPAN_MONTHS,
    end_cutoff: dt.date = DAILY_END_CUTOFF,
    jja_max_missing_frac: float = DAILY_JJA_MAX_MISSING_FRAC,
    max_gap_days: int = DAILY_MAX_GAP_DAYS,
    length_rule_conjunction: bool = True,
):
    """Drop daily series per the record-length, summer-missing, and
    consecutive-gap rules.

    The length rule reads as a conjunction by default (span < min_span_months
    AND record ends before end_cutoff); set length_rule_conjunction=False for
    the stricter either-clause-drops reading.  The summer and gap rules look
    at the observed extent intersected with the window; the reported
    missing_frac is the summer missing fraction.
    """
    win_lo = date_to_serial(dt.date(window[0], 1, 1))
    win_hi = date_to_serial(dt.date(window[1], 12, 31))

    kept: list[DailySeries] = []
    reports: list[QcReport] = []
    for s in series:
        obs = ~np.isnan(s.values)
        if not obs.any():
            reports.append(
                QcReport(s.station_id, s.element, "dropped", "no_data", 1.0, 0)
            )
            continue
        serial0 = date_to_serial(s.start)
        first_i, last_i = int(np.argmax(obs)), int(obs.size - 1 - np.argmax(obs[::-1]))
        first_day = s.start + dt.timedelta(days=first_i)
        last_day = s.start + dt.timedelta(days=last_i)

        span = _span_months(first_day, last_day)
        short = span < min_span_months
        early = last_day < end_cutoff
        length_drop = (short and early) if length_rule_conjunction else (short or early)

        lo = max(serial0 + first_i, win_lo)
        hi = min(serial0 + last_i, win_hi)
        jja_frac = 0.0
        gap = 0
        if hi >= lo:
            vals = s.values[lo - serial0 : hi - serial0 + 1]
            missing = np.isnan(vals)
            serials = np.arange(lo, hi + 1)
            months = serials.astype("M8[D]").astype("M8[M]").astype(np.int64) % 12 + 1
            jja = np.isin(months, JJA_MONTHS)
            if jja.any():
                jja_frac = float(missing[jja].mean())
            gap = _longest_run(missing)

        if length_drop:
            verdict, reason = "dropped", "short_record"
        elif jja_frac > jja_max_missing_frac:
            verdict, reason = "dropped", "jja_missing"
        elif gap > max_gap_days:
            verdict, reason = "dropped", "gap_days"
        else:
            verdict, reason = "kept", ""
            kept.append(s)
        reports.append(
            QcReport(
                station_id=s.station_id,
                element=s.element,
                verdict=verdict,
                reason=reason,
                missing_frac=jja_frac,
                longest_gap=gap,
            )
        )
    return kept, reports


def qc_report_csv(reports: list[QcReport]) -> str:
    buf = io.StringIO()
    buf.write("station,verdict,reason,missing_frac,longest_gap\n")
    for r in reports:
        buf.write(f"{r.station_id},{r.verdict},{r.reason},{r.missing_frac:.17g},{r.longest_gap}\n")
    return buf.getvalue()
