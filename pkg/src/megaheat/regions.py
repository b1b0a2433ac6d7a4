"""Region geometry, station-to-region assignment, and corridor pairing.

Regions arrive as a GeoJSON-style feature collection whose features carry
``name`` and ``kind`` (climate_region | uc) properties.  Membership tests
use even-odd ray casting over all rings of a region, so holes and
multi-part geometries need no special casing; points exactly on a boundary
count as inside, which keeps station assignment deterministic.
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .series import StationMeta

KIND_CLIMATE_REGION = "climate_region"
KIND_UC = "uc"


@dataclass
class Region:
    name: str
    kind: str
    # parts -> rings -> closed (n, 2) lon/lat arrays; ring 0 of a part is
    # its exterior, later rings are holes
    parts: list[list[np.ndarray]]

    def rings(self) -> list[np.ndarray]:
        return [ring for part in self.parts for ring in part]

    def representative_point(self) -> tuple[float, float]:
        ring = self.parts[0][0]
        lon, lat = ring[:-1, 0].mean(), ring[:-1, 1].mean()
        if point_in_rings(lon, lat, self.rings()):
            return float(lon), float(lat)
        return float(ring[0, 0]), float(ring[0, 1])


@dataclass
class RegionSet:
    climate_regions: list[Region] = field(default_factory=list)
    ucs: list[Region] = field(default_factory=list)


@dataclass
class RegionPair:
    """One corridor with its host climate region and member stations."""

    uc_id: str
    cr_id: str
    uc_stations: list[str]
    nonuc_stations: list[str]
    warning: str | None = None


@dataclass
class ExplanatoryVars:
    uc_id: str
    cr_id: str
    pop_uc: float
    pop_diff: float
    pop_pct_change_uc: float
    pop_diff_pct_change: float
    pct_urban: float
    pct_cropland: float
    mean_elev: float
    elev_range: float


COVARIATE_COLUMNS = (
    "uc_id",
    "cr_id",
    "pop_uc",
    "pop_diff",
    "pop_pct_change_uc",
    "pop_diff_pct_change",
    "pct_urban",
    "pct_cropland",
    "mean_elev",
    "elev_range",
)


def _coerce_rings(name: str, rings) -> list[np.ndarray]:
    out = []
    for ring in rings:
        a = np.asarray(ring, dtype=float)
        if a.ndim != 2 or a.shape[1] != 2 or a.shape[0] < 4:
            raise ValueError(f"region {name!r}: ring must be >=4 lon/lat vertices")
        if not np.array_equal(a[0], a[-1]):
            raise ValueError(f"region {name!r}: ring is not closed")
        out.append(a)
    return out


def load_regions(doc) -> RegionSet:
    """Build a RegionSet from a feature collection (dict, JSON bytes/str, or
    a path to a JSON file)."""
    if isinstance(doc, (bytes, str)) and not (isinstance(doc, str) and os.path.exists(doc)):
        doc = json.loads(doc)
    elif isinstance(doc, (str, os.PathLike)):
        with open(doc) as fh:
            doc = json.load(fh)
    features = doc.get("features", [])
    rs = RegionSet()
    for feat in features:
        props = feat.get("properties", {})
        name = props.get("name")
        kind = props.get("kind")
        if not name:
            raise ValueError("feature without a name")
        geom = feat.get("geometry", {})
        gtype = geom.get("type")
        coords = geom.get("coordinates", [])
        if gtype == "Polygon":
            parts = [_coerce_rings(name, coords)]
        elif gtype == "MultiPolygon":
            parts = [_coerce_rings(name, rings) for rings in coords]
        else:
            raise ValueError(f"region {name!r}: unsupported geometry {gtype!r}")
        region = Region(name=name, kind=kind, parts=parts)
        if kind == KIND_CLIMATE_REGION:
            bucket = rs.climate_regions
        elif kind == KIND_UC:
            bucket = rs.ucs
        else:
            raise ValueError(f"region {name!r}: unknown kind {kind!r}")
        if any(r.name == name for r in bucket):
            raise ValueError(f"duplicate {kind} name {name!r}")
        bucket.append(region)
    return rs


def point_in_rings(lon: float, lat: float, rings) -> bool:
    """Even-odd ray-casting membership; boundary points count as inside."""
    crossings = 0
    for ring in rings:
        ring = np.asarray(ring, dtype=float)
        x0, y0 = ring[:-1, 0], ring[:-1, 1]
        x1, y1 = ring[1:, 0], ring[1:, 1]
        cross = (x1 - x0) * (lat - y0) - (y1 - y0) * (lon - x0)
        on_edge = (
            (cross == 0.0)
            & (np.minimum(x0, x1) <= lon)
            & (lon <= np.maximum(x0, x1))
            & (np.minimum(y0, y1) <= lat)
            & (lat <= np.maximum(y0, y1))
        )
        if on_edge.any():
            return True
        straddles = (y0 > lat) != (y1 > lat)
        if straddles.any():
            xs = x0[straddles] + (lat - y0[straddles]) * (x1[straddles] - x0[straddles]) / (
                y1[straddles] - y0[straddles]
            )
            crossings += int((lon < xs).sum())
    return crossings % 2 == 1


def point_in_region(lon: float, lat: float, region: Region) -> bool:
    return point_in_rings(lon, lat, region.rings())


def assign_station_region(station: StationMeta, regions: RegionSet):
    """(climate-region name or None, corridor name or None) for a station.

    Overlapping regions of the same kind resolve to the first match in
    declaration order.
    """
    cr_id = next(
        (r.name for r in regions.climate_regions if point_in_region(station.lon, station.lat, r)),
        None,
    )
    uc_id = next(
        (r.name for r in regions.ucs if point_in_region(station.lon, station.lat, r)),
        None,
    )
    return cr_id, uc_id


def pair_uc_nonuc(regions: RegionSet, stations: list[StationMeta]) -> list[RegionPair]:
    """Pair every corridor with its host climate region.

    The host is the climate region holding the majority of the corridor's
    stations (ties and empty corridors fall back to the region containing a
    representative point of the corridor polygon).  Corridor membership of a
    pair is limited to stations inside the host; non-corridor stations are
    the host's stations that sit in no corridor at all.
    """
    assigned = {s.station_id: assign_station_region(s, regions) for s in stations}
    cr_order = [r.name for r in regions.climate_regions]
    pairs: list[RegionPair] = []
    for uc in regions.ucs:
        members = [s for s in stations if assigned[s.station_id][1] == uc.name]
        counts = {}
        for s in members:
            cr = assigned[s.station_id][0]
            if cr is not None:
                counts[cr] = counts.get(cr, 0) + 1
        warning = None
        if counts:
            host = max(cr_order, key=lambda name: (counts.get(name, 0), -cr_order.index(name)))
        else:
            lon, lat = uc.representative_point()
            host = next(
                (r.name for r in regions.climate_regions if point_in_region(lon, lat, r)),
                cr_order[0] if cr_order else "",
            )
            warning = f"corridor {uc.name!r} contains no stations"
        uc_ids = [s.station_id for s in members if assigned[s.station_id][0] == host]
        non_ids = [
            s.station_id
            for s in stations
            if assigned[s.station_id][0] == host and assigned[s.station_id][1] is None
        ]
        pairs.append(
            RegionPair(
                uc_id=uc.name,
                cr_id=host,
                uc_stations=uc_ids,
                nonuc_stations=non_ids,
                warning=warning,
            )
        )
    return pairs


def load_explanatory_vars(source, uc_ids) -> dict[str, ExplanatoryVars]:
    """Read the covariate table and return one ExplanatoryVars per corridor.

    Raises on a missing corridor row or a land-share percentage outside
    [0, 100].
    """
    if isinstance(source, (bytes, bytearray)):
        text = source.decode("utf-8")
    elif isinstance(source, (str, os.PathLike)) and os.path.exists(str(source)):
        with open(source) as fh:
            text = fh.read()
    elif isinstance(source, str):
        text = source
    else:
        text = source.read()
        if isinstance(text, bytes):
            text = text.decode("utf-8")
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ValueError("empty covariate table") from None
    if tuple(h.strip() for h in header) != COVARIATE_COLUMNS:
        raise ValueError(f"unexpected covariate header {header!r}")
    out: dict[str, ExplanatoryVars] = {}
    for row in reader:
        if not row or not any(cell.strip() for cell in row):
            continue
        rec = dict(zip(COVARIATE_COLUMNS, row))
        ev = ExplanatoryVars(
            uc_id=rec["uc_id"].strip(),
            cr_id=rec["cr_id"].strip(),
            **{k: float(rec[k]) for k in COVARIATE_COLUMNS[2:]},
        )
        for pct_field in ("pct_urban", "pct_cropland"):
            v = getattr(ev, pct_field)
            if not 0.0 <= v <= 100.0:
                raise ValueError(f"{pct_field} {v} out of [0, 100] for {ev.uc_id!r}")
        if ev.elev_range < 0:
            raise ValueError(f"negative elev_range for {ev.uc_id!r}")
        out[ev.uc_id] = ev
    missing = [u for u in uc_ids if u not in out]
    if missing:
        raise ValueError(f"covariate rows missing for corridors: {missing}")
    return out
