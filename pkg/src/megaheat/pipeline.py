"""End-to-end orchestration.

Stages communicate only through files inside one output directory, so
any stage can be re-run from persisted intermediates.  Relative input
paths in the config resolve against that directory, which lets a
generated world feed the analysis stages without extra wiring.
"""

from __future__ import annotations

import csv
import dataclasses
import datetime as dt
import hashlib
import io
import json
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import scipy

from . import __version__, indices, stats
from .ghcn import parse_ghcnd, parse_ghcnm, parse_stations, serialize_ghcnd, serialize_ghcnm
from .interpolate import GwrConfig, impute_monthly, lwma_fill
from .qc import (
    DAILY_END_CUTOFF,
    DAILY_JJA_MAX_MISSING_FRAC,
    DAILY_MAX_GAP_DAYS,
    DAILY_MIN_SPAN_MONTHS,
    MONTHLY_MAX_GAP_MONTHS,
    MONTHLY_MAX_MISSING_FRAC,
    STUDY_WINDOW,
    filter_daily_stations,
    filter_monthly_stations,
    qc_report_csv,
)
from .regions import (
    COVARIATE_COLUMNS,
    RegionPair,
    load_explanatory_vars,
    load_regions,
    pair_uc_nonuc,
)
from .series import AnnualSeries
from .synth import SynthParams, synth_generate, write_world


class ConfigError(Exception):
    """The configuration is malformed; a usage problem, not a data one."""


class DataError(Exception):
    """Inputs or intermediates are missing or unusable."""


SEASONAL_METRICS = ("TMIN", "TAVG", "TMAX")
ALL_METRICS = ("TMIN", "TAVG", "TMAX", "CDD", "CNM", "P95")
ALL_SEASONS = ("DJF", "JJA")

DEFAULT_PATHS = {
    "daily": "ghcnd.dly",
    "monthly": "ghcnm.dat",
    "stations": "stations.txt",
    "regions": "regions.json",
    "covariates": "covariates.csv",
}

# stage outputs, all relative to the run directory
F_PARSE_ISSUES = "parse_issues.csv"
F_INGEST_SUMMARY = "ingest_summary.json"
F_PAIRS = "pairs.json"
F_QC_MONTHLY = "qc_monthly.csv"
F_QC_DAILY = "qc_daily.csv"
F_KEPT_MONTHLY = "kept_monthly.dat"
F_KEPT_DAILY = "kept_daily.dly"
F_COMPLETED_MONTHLY = "completed_monthly.dat"
F_MONTHLY_MASK = "monthly_mask.csv"
F_FILLED_DAILY = "filled_daily.dly"
F_DAILY_MASK = "daily_mask.csv"
F_IMPUTE_NOTES = "impute_notes.txt"
F_ANNUAL_STATION = "annual_station.csv"
F_ANNUAL_REGIONAL = "annual_regional.csv"
F_TREND_STATIONS = "trend_stations.csv"
F_TRENDS = "trends.csv"
F_TREND_NOTES = "trend_notes.txt"
F_TREND_CELLS = "trend_cells.csv"
F_COMPARISON = "comparison.csv"
F_CORR_UC = "correlation_uc.csv"
F_CORR_DIFF = "correlation_diff.csv"
REPORT_DIR = "report"
F_MANIFEST = "manifest.json"

MIN_ANNUAL_VALUES = 5


@dataclasses.dataclass(frozen=True)
class QcParams:
    monthly_max_missing_frac: float = MONTHLY_MAX_MISSING_FRAC
    monthly_max_gap_months: int = MONTHLY_MAX_GAP_MONTHS
    daily_min_span_months: int = DAILY_MIN_SPAN_MONTHS
    daily_end_cutoff: dt.date = DAILY_END_CUTOFF
    daily_jja_max_missing_frac: float = DAILY_JJA_MAX_MISSING_FRAC
    daily_max_gap_days: int = DAILY_MAX_GAP_DAYS


@dataclasses.dataclass(frozen=True)
class RunConfig:
    paths: dict
    window: tuple
    seasons: tuple
    metrics: tuple
    alpha: float
    qc: QcParams
    gwr: GwrConfig
    seed: int
    synth: SynthParams


def _check_keys(block: dict, allowed, where: str) -> None:
    unknown = sorted(set(block) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown {where} keys: {', '.join(unknown)}")


def _string_choices(raw, allowed, what: str) -> tuple:
    if not isinstance(raw, (list, tuple)) or not raw:
        raise ConfigError(f"{what}s must be a non-empty list")
    out = []
    for item in raw:
        if item not in allowed:
            raise ConfigError(f"unknown {what} {item!r}; choose from {list(allowed)}")
        if item in out:
            raise ConfigError(f"duplicate {what} {item!r}")
        out.append(item)
    return tuple(out)


def load_config(source) -> RunConfig:
    """Build a RunConfig from a dict, JSON text, or a JSON file path.

    Every field has a default; unknown keys anywhere are rejected.
    """
    if isinstance(source, (str, Path)) and not (
        isinstance(source, str) and source.lstrip().startswith("{")
    ):
        try:
            text = Path(source).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        source = text
    if isinstance(source, str):
        try:
            source = json.loads(source)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(source, dict):
        raise ConfigError("config must be a JSON object")

    _check_keys(
        source,
        ("paths", "window", "seasons", "metrics", "alpha", "qc", "gwr", "seed", "synth"),
        "config",
    )

    paths = dict(DEFAULT_PATHS)
    raw_paths = source.get("paths", {})
    _check_keys(raw_paths, DEFAULT_PATHS, "paths")
    for key, value in raw_paths.items():
        if not isinstance(value, str) or not value:
            raise ConfigError(f"paths.{key} must be a non-empty string")
        paths[key] = value

    window = source.get("window", list(STUDY_WINDOW))
    if (
        not isinstance(window, (list, tuple))
        or len(window) != 2
        or not all(isinstance(y, int) for y in window)
        or window[0] >= window[1]
    ):
        raise ConfigError(f"window must be [start_year, end_year] with start < end, got {window!r}")

    seasons = _string_choices(source.get("seasons", list(ALL_SEASONS)), ALL_SEASONS, "season")
    metrics = _string_choices(source.get("metrics", list(ALL_METRICS)), ALL_METRICS, "metric")

    alpha = source.get("alpha", stats.ALPHA)
    if not isinstance(alpha, (int, float)) or not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha!r}")

    qc_block = dict(source.get("qc", {}))
    _check_keys(qc_block, [f.name for f in dataclasses.fields(QcParams)], "qc")
    if "daily_end_cutoff" in qc_block:
        try:
            qc_block["daily_end_cutoff"] = dt.date.fromisoformat(qc_block["daily_end_cutoff"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"qc.daily_end_cutoff: {exc}") from exc
    qc_params = QcParams(**qc_block)

    gwr_block = source.get("gwr", {})
    _check_keys(gwr_block, ("neighbors", "min_train"), "gwr")
    try:
        gwr = GwrConfig(**gwr_block)
    except ValueError as exc:
        raise ConfigError(f"gwr: {exc}") from exc

    seed = source.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")

    synth_block = source.get("synth", {})
    _check_keys(synth_block, [f.name for f in dataclasses.fields(SynthParams)], "synth")
    try:
        synth = SynthParams(**synth_block)
    except ValueError as exc:
        raise ConfigError(f"synth: {exc}") from exc

    return RunConfig(
        paths=paths,
        window=(window[0], window[1]),
        seasons=seasons,
        metrics=metrics,
        alpha=float(alpha),
        qc=qc_params,
        gwr=gwr,
        seed=seed,
        synth=synth,
    )


def config_to_dict(cfg: RunConfig) -> dict:
    qc = dataclasses.asdict(cfg.qc)
    qc["daily_end_cutoff"] = cfg.qc.daily_end_cutoff.isoformat()
    return {
        "paths": dict(cfg.paths),
        "window": list(cfg.window),
        "seasons": list(cfg.seasons),
        "metrics": list(cfg.metrics),
        "alpha": cfg.alpha,
        "qc": qc,
        "gwr": {"neighbors": cfg.gwr.neighbors, "min_train": cfg.gwr.min_train},
        "seed": cfg.seed,
        "synth": dataclasses.asdict(cfg.synth),
    }


def config_hash(cfg: RunConfig) -> str:
    canon = json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def parallel_map(fn, items, threads: int = 1) -> list:
    """Apply fn across items, results in input order."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# comparison cells


@dataclasses.dataclass(frozen=True)
class MedianCell:
    pair: str
    metric: str
    season: str
    median_uc: float
    median_nonuc: float
    wilcoxon_p: float
    direction: str
    note: str


def median_comparison_cell(pair, metric, season, uc, nonuc, alpha=stats.ALPHA) -> MedianCell:
    """Compare 60-year medians of the two regional series for one cell."""

    def finite(series):
        if series is None:
            return np.empty(0)
        v = np.asarray(series.values, dtype=float)
        return v[np.isfinite(v)]

    u, n = finite(uc), finite(nonuc)
    if u.size < MIN_ANNUAL_VALUES or n.size < MIN_ANNUAL_VALUES:
        return MedianCell(
            pair, metric, season, np.nan, np.nan, np.nan, "insufficient-data", "insufficient-data"
        )
    med_u, med_n = float(np.median(u)), float(np.median(n))
    _, p = stats.wilcoxon_ranksum(u, n)
    direction = stats.comparison_direction(med_u - med_n, p, alpha)
    return MedianCell(pair, metric, season, med_u, med_n, p, direction, "")


@dataclasses.dataclass(frozen=True)
class TrendCell:
    pair: str
    metric: str
    season: str
    uc: stats.GroupTrendSummary | None
    nonuc: stats.GroupTrendSummary | None
    prop: stats.PropTestResult | None
    direction: str
    note: str
    station_rows: tuple  # (group, station_id, TrendResult)


def _group_trend(group_id, series_list, alpha):
    rows = []
    for series in sorted(series_list, key=lambda s: s.key):
        rows.append((series.key, stats.mann_kendall(series)))
    testable = [r for _, r in rows if not r.untestable]
    if not testable:
        return None, rows
    adjusted = stats.by_fdr_adjust([r.p for r in testable])
    for r, p_adj in zip(testable, adjusted):
        r.p_adj = float(p_adj)
    return stats.field_significance(group_id, testable, alpha), rows


def trend_comparison_cell(pair, metric, season, uc_list, nonuc_list, alpha=stats.ALPHA) -> TrendCell:
    """Station trends per group, FDR-adjusted, then a proportion test."""
    uc_summary, uc_rows = _group_trend("uc", uc_list, alpha)
    nonuc_summary, nonuc_rows = _group_trend("nonuc", nonuc_list, alpha)
    station_rows = tuple(("uc", sid, r) for sid, r in uc_rows) + tuple(
        ("nonuc", sid, r) for sid, r in nonuc_rows
    )
    if uc_summary is None or nonuc_summary is None:
        return TrendCell(
            pair,
            metric,
            season,
            uc_summary,
            nonuc_summary,
            None,
            "insufficient-data",
            "insufficient-data",
            station_rows,
        )
    prop = stats.equal_proportions_test(
        uc_summary.n_sig, uc_summary.n, nonuc_summary.n_sig, nonuc_summary.n, alpha
    )
    direction = stats.comparison_direction(prop.diff, prop.p, alpha)
    return TrendCell(pair, metric, season, uc_summary, nonuc_summary, prop, direction, "", station_rows)


# ---------------------------------------------------------------------------
# rank correlations

COVARIATE_NAMES = COVARIATE_COLUMNS[2:]
SUMMARY_STATS = ("median", "slope")


@dataclasses.dataclass(frozen=True)
class CorrelationMatrix:
    flavor: str  # "uc" or "diff"
    rows: tuple  # (metric, season, stat)
    columns: tuple
    rho: np.ndarray
    p: np.ndarray
    n: np.ndarray
    flags: tuple  # row-major tuple of tuples of str


def _cell_rows(metrics, seasons):
    rows = []
    for metric in metrics:
        for season in seasons if metric in SEASONAL_METRICS else ("annual",):
            rows.append((metric, season))
    return rows


def _matrix_rows(metrics, seasons):
    return tuple(
        (metric, season, stat)
        for metric, season in _cell_rows(metrics, seasons)
        for stat in SUMMARY_STATS
    )


def rank_correlation_matrices(pair_ids, summaries, covariates, metrics, seasons):
    """Spearman matrices of per-pair metric summaries against covariates.

    Returns (uc-absolute matrix, uc-minus-nonuc matrix).  Cells use the
    pairs where both sides are finite; under 8 pairs the cell is flagged
    and under 3 it is left empty.
    """
    rows = _matrix_rows(metrics, seasons)
    matrices = []
    for flavor in ("uc", "diff"):
        rho = np.full((len(rows), len(COVARIATE_NAMES)), np.nan)
        pval = np.full_like(rho, np.nan)
        n_used = np.zeros(rho.shape, dtype=int)
        flags = []
        for i, (metric, season, stat) in enumerate(rows):
            x = np.array(
                [
                    summaries.get((pid, metric, season), {}).get(f"{flavor}_{stat}", np.nan)
                    for pid in pair_ids
                ],
                dtype=float,
            )
            row_flags = []
            for j, name in enumerate(COVARIATE_NAMES):
                y = np.array(
                    [
                        getattr(covariates[pid], name) if pid in covariates else np.nan
                        for pid in pair_ids
                    ],
                    dtype=float,
                )
                ok = np.isfinite(x) & np.isfinite(y)
                n = int(ok.sum())
                n_used[i, j] = n
                if n < 3:
                    row_flags.append("insufficient")
                    continue
                result = stats.spearman(x[ok], y[ok])
                if result.undefined:
                    row_flags.append("undefined")
                    continue
                rho[i, j] = result.rho
                pval[i, j] = result.p
                row_flags.append("n<8" if n < 8 else "")
            flags.append(tuple(row_flags))
        matrices.append(
            CorrelationMatrix(
                flavor=flavor,
                rows=rows,
                columns=tuple(COVARIATE_NAMES),
                rho=rho,
                p=pval,
                n=n_used,
                flags=tuple(flags),
            )
        )
    return matrices[0], matrices[1]


def correlation_csv(matrix: CorrelationMatrix) -> str:
    lines = ["metric,season,stat,covariate,rho,p,n,flag"]
    for i, (metric, season, stat) in enumerate(matrix.rows):
        for j, name in enumerate(matrix.columns):
            lines.append(
                f"{metric},{season},{stat},{name},{matrix.rho[i, j]:.17g},"
                f"{matrix.p[i, j]:.17g},{matrix.n[i, j]},{matrix.flags[i][j]}"
            )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# file helpers


def _input_path(out_dir, cfg, name) -> Path:
    p = Path(cfg.paths[name])
    return p if p.is_absolute() else Path(out_dir) / p


def _require(path: Path, producer: str) -> None:
    if not path.exists():
        raise DataError(f"missing {path.name}; run the {producer} stage first")


def _write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    path.write_text(buf.getvalue())


def _g(value) -> str:
    return f"{float(value):.17g}"


def _read_rows(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _metric_season(series_metric: str):
    """Map an annual-series metric label to (config metric, season)."""
    if "_" in series_metric:
        season, element = series_metric.split("_", 1)
        return element.upper(), season.upper()
    return series_metric.upper(), "annual"


def _clip_years(series: AnnualSeries, window) -> AnnualSeries | None:
    keep = (series.years >= window[0]) & (series.years <= window[1])
    if not keep.any():
        return None
    return AnnualSeries(
        key=series.key, metric=series.metric, years=series.years[keep], values=series.values[keep]
    )


def _read_pairs(out_dir) -> list[RegionPair]:
    doc = json.loads((Path(out_dir) / F_PAIRS).read_text())
    return [
        RegionPair(
            uc_id=p["uc_id"],
            cr_id=p["cr_id"],
            uc_stations=list(p["uc_stations"]),
            nonuc_stations=list(p["nonuc_stations"]),
            warning=p.get("warning"),
        )
        for p in doc["pairs"]
    ]


def _read_annual_station(out_dir) -> dict:
    """annual_station.csv -> {(station, metric, season): AnnualSeries}"""
    grouped = {}
    for row in _read_rows(Path(out_dir) / F_ANNUAL_STATION):
        key = (row["station"], row["metric"], row["season"])
        grouped.setdefault(key, []).append((int(row["year"]), float(row["value"])))
    out = {}
    for (station, metric, season), pts in grouped.items():
        pts.sort()
        out[(station, metric, season)] = AnnualSeries(
            key=station,
            metric=f"{metric}:{season}",
            years=np.array([y for y, _ in pts], dtype=int),
            values=np.array([v for _, v in pts], dtype=float),
        )
    return out


def _read_annual_regional(out_dir) -> dict:
    grouped = {}
    for row in _read_rows(Path(out_dir) / F_ANNUAL_REGIONAL):
        key = (row["pair"], row["group"], row["metric"], row["season"])
        grouped.setdefault(key, []).append((int(row["year"]), float(row["value"])))
    out = {}
    for key, pts in grouped.items():
        pts.sort()
        out[key] = AnnualSeries(
            key=f"{key[0]}:{key[1]}",
            metric=f"{key[2]}:{key[3]}",
            years=np.array([y for y, _ in pts], dtype=int),
            values=np.array([v for _, v in pts], dtype=float),
        )
    return out


# ---------------------------------------------------------------------------
# stages


def stage_synth(out_dir, cfg: RunConfig, threads: int = 1):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    world = synth_generate(cfg.seed, cfg.synth)
    return write_world(world, out)


def stage_ingest(out_dir, cfg: RunConfig, threads: int = 1):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: _input_path(out, cfg, name) for name in DEFAULT_PATHS}
    for path in paths.values():
        if not path.exists():
            raise DataError(f"missing input file {path}")

    daily, daily_issues = parse_ghcnd(paths["daily"].read_bytes())
    monthly, monthly_issues = parse_ghcnm(paths["monthly"].read_bytes())
    stations, station_issues = parse_stations(paths["stations"].read_bytes())
    if not stations:
        raise DataError("no stations parsed from the inventory")
    if not daily and not monthly:
        raise DataError("no temperature series parsed")

    try:
        region_set = load_regions(paths["regions"])
        pairs = pair_uc_nonuc(region_set, stations)
        load_explanatory_vars(paths["covariates"], [p.uc_id for p in pairs])
    except ValueError as exc:
        raise DataError(str(exc)) from exc

    issues = (
        [("daily", i) for i in daily_issues]
        + [("monthly", i) for i in monthly_issues]
        + [("stations", i) for i in station_issues]
    )
    _write_csv(
        out / F_PARSE_ISSUES,
        ("file", "line", "message"),
        [(fname, issue.line, issue.message) for fname, issue in issues],
    )
    pairs_doc = {
        "pairs": [
            {
                "uc_id": p.uc_id,
                "cr_id": p.cr_id,
                "uc_stations": p.uc_stations,
                "nonuc_stations": p.nonuc_stations,
                "warning": p.warning,
            }
            for p in sorted(pairs, key=lambda p: p.uc_id)
        ]
    }
    (out / F_PAIRS).write_text(json.dumps(pairs_doc, indent=2, sort_keys=True) + "\n")
    summary = {
        "n_daily_series": len(daily),
        "n_monthly_series": len(monthly),
        "n_stations": len(stations),
        "n_pairs": len(pairs),
        "n_parse_issues": len(issues),
    }
    (out / F_INGEST_SUMMARY).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def stage_qc(out_dir, cfg: RunConfig, threads: int = 1):
    out = Path(out_dir)
    daily_path = _input_path(out, cfg, "daily")
    monthly_path = _input_path(out, cfg, "monthly")
    for path in (daily_path, monthly_path):
        if not path.exists():
            raise DataError(f"missing input file {path}")

    monthly, _ = parse_ghcnm(monthly_path.read_bytes())
    kept_monthly, monthly_reports = filter_monthly_stations(
        monthly,
        window=cfg.window,
        max_missing_frac=cfg.qc.monthly_max_missing_frac,
        max_gap_months=cfg.qc.monthly_max_gap_months,
    )
    daily, _ = parse_ghcnd(daily_path.read_bytes())
    kept_daily, daily_reports = filter_daily_stations(
        daily,
        window=cfg.window,
        min_span_months=cfg.qc.daily_min_span_months,
        end_cutoff=cfg.qc.daily_end_cutoff,
        jja_max_missing_frac=cfg.qc.daily_jja_max_missing_frac,
        max_gap_days=cfg.qc.daily_max_gap_days,
    )
    (out / F_QC_MONTHLY).write_text(qc_report_csv(monthly_reports))
    (out / F_QC_DAILY).write_text(qc_report_csv(daily_reports))
    (out / F_KEPT_MONTHLY).write_bytes(serialize_ghcnm(kept_monthly))
    (out / F_KEPT_DAILY).write_bytes(serialize_ghcnd(kept_daily))


def stage_impute(out_dir, cfg: RunConfig, threads: int = 1):
    out = Path(out_dir)
    _require(out / F_KEPT_MONTHLY, "qc")
    _require(out / F_KEPT_DAILY, "qc")
    stations_path = _input_path(out, cfg, "stations")
    if not stations_path.exists():
        raise DataError(f"missing input file {stations_path}")
    stations, _ = parse_stations(stations_path.read_bytes())

    kept_monthly, _ = parse_ghcnm((out / F_KEPT_MONTHLY).read_bytes())
    completed, masks, notes = impute_monthly(kept_monthly, stations, cfg.gwr, window=cfg.window)
    (out / F_COMPLETED_MONTHLY).write_bytes(serialize_ghcnm(completed))
    _write_csv(
        out / F_MONTHLY_MASK,
        ("station", "element", "first_year", "first_month", "codes"),
        [
            (s.station_id, s.element, s.first_year, s.first_month, "".join(m.codes))
            for s, m in zip(completed, masks)
        ],
    )
    (out / F_IMPUTE_NOTES).write_text("".join(line + "\n" for line in notes))

    kept_daily, _ = parse_ghcnd((out / F_KEPT_DAILY).read_bytes())
    filled_pairs = parallel_map(lwma_fill, kept_daily, threads)
    (out / F_FILLED_DAILY).write_bytes(serialize_ghcnd([s for s, _ in filled_pairs]))
    _write_csv(
        out / F_DAILY_MASK,
        ("station", "element", "start", "codes"),
        [
            (s.station_id, s.element, s.start.isoformat(), "".join(m.codes))
            for s, m in filled_pairs
        ],
    )


def stage_indices(out_dir, cfg: RunConfig, threads: int = 1):
    out = Path(out_dir)
    _require(out / F_COMPLETED_MONTHLY, "impute")
    _require(out / F_FILLED_DAILY, "impute")
    _require(out / F_PAIRS, "ingest")

    station_series: dict = {}

    completed, _ = parse_ghcnm((out / F_COMPLETED_MONTHLY).read_bytes())
    for series in indices.seasonal_annual_series(indices.seasonal_means(completed)):
        metric, season = _metric_season(series.metric)
        if metric in cfg.metrics and season in cfg.seasons:
            clipped = _clip_years(series, cfg.window)
            if clipped is not None:
                station_series[(series.key, metric, season)] = clipped

    filled, _ = parse_ghcnd((out / F_FILLED_DAILY).read_bytes())
    by_station: dict = {}
    for series in filled:
        by_station.setdefault(series.station_id, {})[series.element] = series

    def _heat_indices(item):
        station, elements = item
        got = []
        tmax, tmin = elements.get("TMAX"), elements.get("TMIN")
        if "CDD" in cfg.metrics and tmax is not None and tmin is not None:
            got.append(("CDD", indices.annual_cdd(tmax, tmin)))
        if "CNM" in cfg.metrics and tmin is not None:
            got.append(("CNM", indices.annual_cnm(tmin)))
        if "P95" in cfg.metrics and tmax is not None:
            got.append(("P95", indices.annual_p95(tmax)))
        return station, got

    for station, got in parallel_map(_heat_indices, sorted(by_station.items()), threads):
        for metric, series in got:
            clipped = _clip_years(series, cfg.window)
            if clipped is not None and clipped.years.size:
                station_series[(station, metric, "annual")] = clipped

    rows = [
        (station, metric, season, int(year), _g(value))
        for (station, metric, season), series in sorted(station_series.items())
        for year, value in zip(series.years, series.values)
    ]
    _write_csv(out / F_ANNUAL_STATION, ("station", "metric", "season", "year", "value"), rows)

    pairs = _read_pairs(out)
    regional_rows = []
    for pair in pairs:
        for group, members in (("uc", pair.uc_stations), ("nonuc", pair.nonuc_stations)):
            for metric, season in _cell_rows(cfg.metrics, cfg.seasons):
                present = [
                    station_series[(sid, metric, season)]
                    for sid in members
                    if (sid, metric, season) in station_series
                ]
                if not present:
                    continue
                regional = indices.regional_annual_series(present, key=f"{pair.uc_id}:{group}")
                regional_rows.extend(
                    (pair.uc_id, group, metric, season, int(year), _g(value))
                    for year, value in zip(regional.years, regional.values)
                )
    _write_csv(
        out / F_ANNUAL_REGIONAL,
        ("pair", "group", "metric", "season", "year", "value"),
        regional_rows,
    )


def stage_trends(out_dir, cfg: RunConfig, threads: int = 1):
    out = Path(out_dir)
    _require(out / F_ANNUAL_STATION, "indices")
    _require(out / F_ANNUAL_REGIONAL, "indices")
    _require(out / F_PAIRS, "ingest")
    station_series = _read_annual_station(out)
    regional_series = _read_annual_regional(out)
    pairs = _read_pairs(out)

    coords = [
        (pair, metric, season)
        for pair in pairs
        for metric, season in _cell_rows(cfg.metrics, cfg.seasons)
    ]

    def _cell(coord):
        pair, metric, season = coord
        uc_list = [
            station_series[(sid, metric, season)]
            for sid in pair.uc_stations
            if (sid, metric, season) in station_series
        ]
        nonuc_list = [
            station_series[(sid, metric, season)]
            for sid in pair.nonuc_stations
            if (sid, metric, season) in station_series
        ]
        return trend_comparison_cell(pair.uc_id, metric, season, uc_list, nonuc_list, cfg.alpha)

    cells = parallel_map(_cell, coords, threads)

    station_rows = []
    for cell in cells:
        for group, sid, r in cell.station_rows:
            station_rows.append(
                (
                    cell.pair,
                    cell.metric,
                    cell.season,
                    group,
                    sid,
                    r.s,
                    _g(r.var_s),
                    _g(r.z),
                    _g(r.p),
                    "" if r.p_adj is None else _g(r.p_adj),
                    _g(r.slope),
                    "yes" if r.untestable else "no",
                )
            )
    _write_csv(
        out / F_TREND_STATIONS,
        ("pair", "metric", "season", "group", "station", "S", "var", "z", "p", "p_adj", "slope", "untestable"),
        station_rows,
    )

    cell_rows = []
    for cell in cells:
        empty = stats.GroupTrendSummary(group_id="", n=0, n_sig=0, proportion=float("nan"), field_significant=False)
        uc = cell.uc or empty
        nonuc = cell.nonuc or empty
        prop = cell.prop
        cell_rows.append(
            (
                cell.pair,
                cell.metric,
                cell.season,
                uc.n,
                uc.n_sig,
                _g(uc.proportion),
                "true" if uc.field_significant else "false",
                nonuc.n,
                nonuc.n_sig,
                _g(nonuc.proportion),
                "true" if nonuc.field_significant else "false",
                _g(prop.diff) if prop else "nan",
                _g(prop.p) if prop else "nan",
                _g(prop.ci_low) if prop else "nan",
                _g(prop.ci_high) if prop else "nan",
                cell.direction,
                cell.note,
            )
        )
    _write_csv(
        out / F_TREND_CELLS,
        (
            "pair",
            "metric",
            "season",
            "uc_n",
            "uc_sig",
            "uc_prop",
            "uc_field_sig",
            "nonuc_n",
            "nonuc_sig",
            "nonuc_prop",
            "nonuc_field_sig",
            "prop_diff",
            "prop_p",
            "ci_low",
            "ci_high",
            "direction",
            "note",
        ),
        cell_rows,
    )

    regional_entries = []
    notes = []
    for pair in pairs:
        for metric, season in _cell_rows(cfg.metrics, cfg.seasons):
            for group, members in (("uc", pair.uc_stations), ("nonuc", pair.nonuc_stations)):
                member_series = [
                    station_series[(sid, metric, season)]
                    for sid in members
                    if (sid, metric, season) in station_series
                ]
                if not member_series:
                    continue
                regional = stats.regional_mann_kendall(member_series)
                key = (pair.uc_id, group, metric, season)
                reg_series = regional_series.get(key)
                slope = (
                    stats.theil_sen(reg_series.years, reg_series.values)
                    if reg_series is not None and reg_series.years.size >= 2
                    else float("nan")
                )
                result = stats.TrendResult(
                    s=regional.s,
                    var_s=regional.var_s,
                    z=regional.z,
                    p=regional.p,
                    slope=slope,
                )
                regional_entries.append((pair.uc_id, metric, season, group, result))
                for flag in regional.flags:
                    notes.append(f"{pair.uc_id} {metric} {season} {group}: {flag}")
    (out / F_TRENDS).write_text(stats.trends_csv(regional_entries))
    (out / F_TREND_NOTES).write_text("".join(line + "\n" for line in notes))


def stage_compare(out_dir, cfg: RunConfig, threads: int = 1):
    out = Path(out_dir)
    _require(out / F_ANNUAL_REGIONAL, "indices")
    _require(out / F_TREND_CELLS, "trends")
    _require(out / F_PAIRS, "ingest")
    regional = _read_annual_regional(out)
    prop_by_cell = {
        (row["pair"], row["metric"], row["season"]): row
        for row in _read_rows(out / F_TREND_CELLS)
    }
    rows = []
    for pair in _read_pairs(out):
        for metric, season in _cell_rows(cfg.metrics, cfg.seasons):
            cell = median_comparison_cell(
                pair.uc_id,
                metric,
                season,
                regional.get((pair.uc_id, "uc", metric, season)),
                regional.get((pair.uc_id, "nonuc", metric, season)),
                cfg.alpha,
            )
            trend_row = prop_by_cell.get((pair.uc_id, metric, season), {})
            rows.append(
                stats.ComparisonRow(
                    pair=cell.pair,
                    metric=cell.metric,
                    season=cell.season,
                    median_uc=cell.median_uc,
                    median_nonuc=cell.median_nonuc,
                    wilcoxon_p=cell.wilcoxon_p,
                    prop_uc=float(trend_row.get("uc_prop", "nan")),
                    prop_nonuc=float(trend_row.get("nonuc_prop", "nan")),
                    prop_p=float(trend_row.get("prop_p", "nan")),
                    direction=cell.direction,
                )
            )
    (out / F_COMPARISON).write_text(stats.comparison_csv(rows))


def stage_correlate(out_dir, cfg: RunConfig, threads: int = 1):
    out = Path(out_dir)
    _require(out / F_ANNUAL_REGIONAL, "indices")
    _require(out / F_PAIRS, "ingest")
    cov_path = _input_path(out, cfg, "covariates")
    if not cov_path.exists():
        raise DataError(f"missing input file {cov_path}")

    pairs = _read_pairs(out)
    pair_ids = tuple(p.uc_id for p in pairs)
    try:
        covariates = load_explanatory_vars(cov_path, pair_ids)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    regional = _read_annual_regional(out)

    def _summary(series):
        if series is None or series.values.size == 0:
            return np.nan, np.nan
        median = float(np.median(series.values))
        slope = (
            stats.theil_sen(series.years, series.values)
            if series.years.size >= 2
            else float("nan")
        )
        return median, slope

    summaries = {}
    for pid in pair_ids:
        for metric, season in _cell_rows(cfg.metrics, cfg.seasons):
            uc_median, uc_slope = _summary(regional.get((pid, "uc", metric, season)))
            non_median, non_slope = _summary(regional.get((pid, "nonuc", metric, season)))
            summaries[(pid, metric, season)] = {
                "uc_median": uc_median,
                "uc_slope": uc_slope,
                "diff_median": uc_median - non_median,
                "diff_slope": uc_slope - non_slope,
            }
    m_uc, m_diff = rank_correlation_matrices(
        pair_ids, summaries, covariates, cfg.metrics, cfg.seasons
    )
    (out / F_CORR_UC).write_text(correlation_csv(m_uc))
    (out / F_CORR_DIFF).write_text(correlation_csv(m_diff))


_FIGURES = (
    ("fig2a.csv", F_COMPARISON, "seasonal"),
    ("fig2c.csv", F_TREND_CELLS, "seasonal"),
    ("fig3a.csv", F_COMPARISON, "annual"),
    ("fig3b.csv", F_TREND_CELLS, "annual"),
    ("fig4a.csv", F_CORR_UC, None),
    ("fig4b.csv", F_CORR_DIFF, None),
)


def stage_report(out_dir, cfg: RunConfig, threads: int = 1):
    out = Path(out_dir)
    report = out / REPORT_DIR
    report.mkdir(parents=True, exist_ok=True)

    bundle = []
    for fig_name, source_name, season_filter in _FIGURES:
        source = out / source_name
        if not source.exists():
            continue
        lines = source.read_text().splitlines()
        if season_filter is None:
            kept = lines[1:]
        else:
            header_cols = lines[0].split(",")
            season_idx = header_cols.index("season")
            wanted = (lambda s: s != "annual") if season_filter == "seasonal" else (
                lambda s: s == "annual"
            )
            kept = [line for line in lines[1:] if wanted(line.split(",")[season_idx])]
        (report / fig_name).write_text("\n".join([lines[0]] + kept) + "\n")
        bundle.append(fig_name)

    inputs = {}
    for name in sorted(DEFAULT_PATHS):
        path = _input_path(out, cfg, name)
        inputs[name] = hashlib.sha256(path.read_bytes()).hexdigest() if path.exists() else None

    manifest = {
        "bundle": bundle,
        "config": config_to_dict(cfg),
        "config_hash": config_hash(cfg),
        "inputs": inputs,
        "versions": {
            "megaheat": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
            "scipy": scipy.__version__,
        },
    }
    (report / F_MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


STAGE_ORDER = ("ingest", "qc", "impute", "indices", "trends", "compare", "correlate", "report")

_STAGES = {
    "synth": stage_synth,
    "ingest": stage_ingest,
    "qc": stage_qc,
    "impute": stage_impute,
    "indices": stage_indices,
    "trends": stage_trends,
    "compare": stage_compare,
    "correlate": stage_correlate,
    "report": stage_report,
}


def run_stages(out_dir, cfg: RunConfig, names, threads: int = 1) -> dict:
    """Run the named stages in canonical order; returns wall seconds each."""
    unknown = sorted(set(names) - set(_STAGES))
    if unknown:
        raise ConfigError(f"unknown stages: {', '.join(unknown)}")
    ordered = [s for s in ("synth",) + STAGE_ORDER if s in set(names)]
    timings = {}
    for name in ordered:
        started = time.perf_counter()
        _STAGES[name](out_dir, cfg, threads)
        timings[name] = time.perf_counter() - started
    return timings


def run_all(out_dir, cfg: RunConfig, threads: int = 1) -> dict:
    return run_stages(out_dir, cfg, STAGE_ORDER, threads)
