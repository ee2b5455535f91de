"""Per building-hour feature assembly.

Buildings are points (centroid plus footprint area). Neighbourhood queries
go through a uniform lat/lon grid index, raster layers are sampled by
nearest pixel, and hourly weather is taken from the nearest available cell.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from zoneinfo import ZoneInfo

import numpy as np
import pandas as pd

from .errors import AssemblyError, GapError, InvalidInputError, OutOfBoundsError

EARTH_RADIUS_M = 6_371_008.8
DENSITY_RADIUS_M = 1000.0
LANDCOVER_WINDOWS = (1, 11, 51)
NIGHTLIGHT_WINDOWS = (11, 51)

# ERA5 short name -> unit, in schema order
WEATHER_VARIABLES = {
    "t2m": "K",
    "tp": "m",
    "sd": "m",
    "sp": "Pa",
    "fg10": "m/s",
    "u10": "m/s",
    "v10": "m/s",
    "str": "J/m2",
    "ssr": "J/m2",
    "tcc": "fraction",
    "stl1": "K",
    "cvh": "fraction",
}
WEATHER_CELL_DEG = 0.25

DEFAULT_LANDCOVER_CLASSES = {"crops": 5, "built": 7, "rangeland": 11}
INTERNET_METRICS = (
    "fixed_download", "fixed_upload", "fixed_latency", "fixed_tests",
    "mobile_download", "mobile_upload", "mobile_latency", "mobile_tests",
)
DAYS = ("mon", "tue", "wed", "thu", "fri", "sat", "sun")

HOUR = np.timedelta64(1, "h")


def haversine_m(lat1, lon1, lat2, lon2):
    lat1, lon1, lat2, lon2 = (np.radians(np.asarray(v, dtype=float)) for v in (lat1, lon1, lat2, lon2))
    a = (np.sin((lat2 - lat1) / 2.0) ** 2
         + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2.0) ** 2)
    d = 2.0 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))
    return d.item() if d.ndim == 0 else d


@dataclass(frozen=True)
class BuildingRecord:
    building_id: str
    lat: float
    lon: float
    footprint_area: float
    height: float | None = None
    street_number: str = ""
    street_name: str = ""
    zip: str = ""

    def __post_init__(self):
        if not self.footprint_area > 0:
            raise InvalidInputError(f"{self.building_id}: footprint_area must be positive")
        if not -90.0 <= self.lat <= 90.0 or not -180.0 <= self.lon <= 180.0:
            raise InvalidInputError(f"{self.building_id}: coordinates out of range")

    @property
    def centroid(self):
        return (self.lat, self.lon)


def polygon_area_centroid(ring):
    """Area (m^2) and centroid of a lat/lon ring on a local equirectangular projection."""
    pts = np.asarray(ring, dtype=float)
    if np.allclose(pts[0], pts[-1]):
        pts = pts[:-1]
    if len(pts) < 3:
        raise InvalidInputError("polygon needs at least 3 vertices")
    lat0 = math.radians(pts[:, 0].mean())
    y = np.radians(pts[:, 0]) * EARTH_RADIUS_M
    x = np.radians(pts[:, 1]) * EARTH_RADIUS_M * math.cos(lat0)
    x0, y0 = x.mean(), y.mean()
    x, y = x - x0, y - y0
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    signed = cross.sum() / 2.0
    cx = ((x + xn) * cross).sum() / (6.0 * signed) + x0
    cy = ((y + yn) * cross).sum() / (6.0 * signed) + y0
    lat = math.degrees(cy / EARTH_RADIUS_M)
    lon = math.degrees(cx / (EARTH_RADIUS_M * math.cos(lat0)))
    return abs(signed), (lat, lon)


class GridIndex:
    """Uniform lat/lon bucket index over building centroids; cell size ~ ``radius_m``."""

    def __init__(self, buildings, radius_m=DENSITY_RADIUS_M):
        self.buildings = list(buildings)
        self.radius_m = radius_m
        self.lat = np.array([b.lat for b in self.buildings], dtype=float)
        self.lon = np.array([b.lon for b in self.buildings], dtype=float)
        self.area = np.array([b.footprint_area for b in self.buildings], dtype=float)
        self.dlat = math.degrees(radius_m / EARTH_RADIUS_M)
        max_lat = min(float(np.abs(self.lat).max()) if len(self.lat) else 0.0, 89.0)
        self.dlon = self.dlat / math.cos(math.radians(max_lat))
        self.cells: dict[tuple[int, int], list[int]] = {}
        for i, (la, lo) in enumerate(zip(self.lat, self.lon)):
            self.cells.setdefault(self._cell(la, lo), []).append(i)
        self._cells_idx = {c: np.array(v) for c, v in self.cells.items()}

    def _cell(self, lat, lon):
        return (math.floor(lat / self.dlat), math.floor(lon / self.dlon))

    def query(self, center, radius_m=None):
        """Indices of buildings within ``radius_m`` (inclusive) of ``center``."""
        radius_m = self.radius_m if radius_m is None else radius_m
        lat, lon = center
        span_lat = math.degrees(radius_m / EARTH_RADIUS_M)
        coslat = max(math.cos(math.radians(min(abs(lat) + span_lat, 89.9))), 1e-6)
        span_lon = span_lat / coslat
        r0, c0 = self._cell(lat - span_lat, lon - span_lon)
        r1, c1 = self._cell(lat + span_lat, lon + span_lon)
        cand = [self._cells_idx[(r, c)] for r in range(r0, r1 + 1) for c in range(c0, c1 + 1)
                if (r, c) in self._cells_idx]
        if not cand:
            return np.array([], dtype=int)
        cand = np.sort(np.concatenate(cand))
        d = haversine_m(lat, lon, self.lat[cand], self.lon[cand])
        return cand[np.atleast_1d(d) <= radius_m]


def _as_index(buildings, radius_m):
    return buildings if isinstance(buildings, GridIndex) else GridIndex(buildings, radius_m)


def building_density(buildings, center, radius_m=DENSITY_RADIUS_M) -> int:
    """Number of centroids within ``radius_m`` of ``center``, the subject included."""
    return int(_as_index(buildings, radius_m).query(center, radius_m).size)


def neighbor_area_stats(buildings, center, radius_m=DENSITY_RADIUS_M):
    """Population mean and std of footprint areas within ``radius_m``."""
    index = _as_index(buildings, radius_m)
    areas = index.area[index.query(center, radius_m)]
    if areas.size == 0:
        raise InvalidInputError("no building within radius")
    return float(areas.mean()), float(areas.std())


@dataclass
class RasterLayer:
    """North-up grid; pixel (0, 0) is centred on ``origin``, rows run south."""

    origin: tuple[float, float]
    pixel_size: float
    values: np.ndarray
    kind: str = "generic"
    nodata: float | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise InvalidInputError("raster values must be a 2-D grid")
        if not self.pixel_size > 0:
            raise InvalidInputError("pixel_size must be positive")
        if self.kind not in ("land_cover_class", "nightlight_radiance", "generic"):
            raise InvalidInputError(f"unknown raster kind {self.kind!r}")

    def pixel(self, center):
        lat, lon = center
        row = int(math.floor((self.origin[0] - lat) / self.pixel_size + 0.5))
        col = int(math.floor((lon - self.origin[1]) / self.pixel_size + 0.5))
        nr, nc = self.values.shape
        if not (0 <= row < nr and 0 <= col < nc):
            raise OutOfBoundsError(f"point {center} falls outside the raster")
        return row, col


def raster_window_stat(layer: RasterLayer, center, window: int, query_class=None) -> float:
    """Class share (land cover) or mean value over a ``window`` x ``window`` block.

    The block is clipped at raster edges and nodata pixels are ignored.
    """
    if window < 1 or window % 2 == 0:
        raise InvalidInputError("window must be a positive odd integer")
    row, col = layer.pixel(center)
    h = window // 2
    block = layer.values[max(row - h, 0):row + h + 1, max(col - h, 0):col + h + 1]
    if layer.nodata is not None:
        block = block[block != layer.nodata]
    else:
        block = block.ravel()
    block = block[np.isfinite(block)]
    if block.size == 0:
        return math.nan
    if layer.kind == "land_cover_class":
        if query_class is None:
            raise InvalidInputError("land cover statistics need a query class")
        return float(np.count_nonzero(block == query_class)) / block.size
    return float(block.mean())


def _to_hour(t):
    if isinstance(t, np.datetime64):
        return t.astype("datetime64[h]")
    if isinstance(t, datetime):
        if t.tzinfo is not None:
            t = t.astimezone(timezone.utc).replace(tzinfo=None)
        return np.datetime64(t, "h")
    return np.datetime64(str(t).replace("Z", "").replace("+00:00", ""), "h")


@dataclass
class WeatherSeries:
    """Hourly UTC series sharing one contiguous time axis."""

    start: np.datetime64
    variables: dict[str, np.ndarray]

    def __post_init__(self):
        self.start = _to_hour(self.start)
        lengths = {len(v) for v in self.variables.values()}
        if len(lengths) > 1:
            raise InvalidInputError("weather variables must share one time axis")
        self.variables = {k: np.asarray(v, dtype=float) for k, v in self.variables.items()}

    def __len__(self):
        return len(next(iter(self.variables.values()))) if self.variables else 0

    @property
    def timestamps(self):
        return self.start + np.arange(len(self)) * HOUR

    def index_of(self, t):
        i = int((_to_hour(t) - self.start) / HOUR)
        if not 0 <= i < len(self):
            raise GapError(str(_to_hour(t)))
        return i


def weather_lag_features(series: WeatherSeries, t, variables=None) -> dict:
    """``variable -> (value at t, t-1h, t-2h)`` for each declared variable."""
    variables = list(WEATHER_VARIABLES) if variables is None else variables
    t = _to_hour(t)
    idx = []
    for lag in range(3):
        try:
            idx.append(series.index_of(t - lag * HOUR))
        except GapError:
            raise GapError(str(t - lag * HOUR)) from None
    out = {}
    for var in variables:
        if var not in series.variables:
            raise AssemblyError(f"{var}_lag0", f"weather variable {var!r} is missing")
        vals = series.variables[var]
        out[var] = tuple(float(vals[i]) for i in idx)
    return out


def temporal_features(t, tz="UTC") -> list[float]:
    """Seven Monday-first day-of-week indicators then the local hour of day."""
    t = _to_hour(t)
    utc = datetime(1970, 1, 1, tzinfo=timezone.utc) + timedelta(hours=int(t.astype(np.int64)))
    local = utc.astimezone(ZoneInfo(tz))
    onehot = [0.0] * 7
    onehot[local.weekday()] = 1.0
    return onehot + [float(local.hour)]


@dataclass
class FeatureSchema:
    names: list[str]
    units: list[str]

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise InvalidInputError("feature names must be unique")
        if len(self.units) != len(self.names):
            raise InvalidInputError("one unit per feature required")
        self.names = list(self.names)
        self.units = list(self.units)

    @property
    def hash(self) -> str:
        return hashlib.sha256("\n".join(self.names).encode()).hexdigest()[:16]

    def __len__(self):
        return len(self.names)

    def to_dict(self):
        return {"names": self.names, "units": self.units, "hash": self.hash}

    @classmethod
    def from_dict(cls, d):
        return cls(list(d["names"]), list(d["units"]))


def default_schema(landcover=True, nightlight=True, internet_metrics=(), weather_variables=None) -> FeatureSchema:
    """Full feature inventory; absent optional layers drop their entries."""
    entries = [
        ("footprint_area", "m2"),
        ("height", "m"),
        ("height_imputed", "flag"),
        ("density_1km", "count"),
        ("neighbor_area_mean", "m2"),
        ("neighbor_area_std", "m2"),
    ]
    if landcover:
        entries += [(f"landcover_{c}_w{w}", "share") for c in DEFAULT_LANDCOVER_CLASSES for w in LANDCOVER_WINDOWS]
    if nightlight:
        entries += [(f"nightlight_w{w}", "nW/cm2/sr") for w in NIGHTLIGHT_WINDOWS]
    for metric in internet_metrics:
        if metric not in INTERNET_METRICS:
            raise InvalidInputError(f"unknown internet metric {metric!r}")
        entries.append((f"internet_{metric}", "ookla"))
    weather = WEATHER_VARIABLES if weather_variables is None else {v: WEATHER_VARIABLES[v] for v in weather_variables}
    for var, unit in weather.items():
        entries += [(f"{var}_lag{lag}", unit) for lag in range(3)]
    entries += [(f"dow_{d}", "flag") for d in DAYS]
    entries.append(("hour", "h"))
    names, units = zip(*entries)
    return FeatureSchema(list(names), list(units))


def weighted_median(values, weights):
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    order = np.argsort(values, kind="stable")
    cum = np.cumsum(weights[order])
    return float(values[order][np.searchsorted(cum, cum[-1] / 2.0)])


def impute_heights(buildings):
    """Footprint-weighted median height per ZIP, falling back to all buildings."""
    known = [b for b in buildings if b.height is not None and np.isfinite(b.height)]
    by_zip: dict[str, list[BuildingRecord]] = {}
    for b in known:
        by_zip.setdefault(b.zip, []).append(b)
    medians = {z: weighted_median([b.height for b in bs], [b.footprint_area for b in bs])
               for z, bs in by_zip.items()}
    fallback = (weighted_median([b.height for b in known], [b.footprint_area for b in known])
                if known else None)
    return medians, fallback


@dataclass
class WeatherGrid:
    """Weather series keyed by cell centre ``(lat, lon)``."""

    cells: dict[tuple[float, float], WeatherSeries]

    def nearest(self, center) -> WeatherSeries:
        return self.cells[self.nearest_key(center)]

    def nearest_key(self, center):
        keys = sorted(self.cells)
        if not keys:
            raise AssemblyError("weather", "no weather cells loaded")
        arr = np.asarray(keys, dtype=float)
        d = np.atleast_1d(haversine_m(center[0], center[1], arr[:, 0], arr[:, 1]))
        return keys[int(np.argmin(d))]


@dataclass
class FeatureContext:
    """Shared read-only layers used to build features."""

    index: GridIndex
    weather: WeatherGrid | None = None
    landcover: RasterLayer | None = None
    nightlight: RasterLayer | None = None
    internet: dict[str, RasterLayer] = field(default_factory=dict)
    landcover_classes: dict[str, int] = field(default_factory=lambda: dict(DEFAULT_LANDCOVER_CLASSES))
    timezone: str = "UTC"
    radius_m: float = DENSITY_RADIUS_M

    def __post_init__(self):
        self.zip_heights, self.fallback_height = impute_heights(self.index.buildings)
        self._static_cache: dict[str, dict] = {}

    @classmethod
    def build(cls, buildings, **kw):
        radius = kw.get("radius_m", DENSITY_RADIUS_M)
        return cls(GridIndex(buildings, radius), **kw)

    def schema(self, weather_variables=None) -> FeatureSchema:
        return default_schema(
            landcover=self.landcover is not None,
            nightlight=self.nightlight is not None,
            internet_metrics=[m for m in INTERNET_METRICS if m in self.internet],
            weather_variables=weather_variables,
        )

    def height_of(self, b: BuildingRecord):
        if b.height is not None and np.isfinite(b.height):
            return float(b.height), 0.0
        h = self.zip_heights.get(b.zip, self.fallback_height)
        if h is None:
            raise AssemblyError("height", f"{b.building_id}: no height available to impute from")
        return h, 1.0

    def static_features(self, b: BuildingRecord) -> dict:
        """Time-invariant features for one building, keyed by schema name."""
        cached = self._static_cache.get(b.building_id)
        if cached is not None:
            return cached
        out = {"footprint_area": float(b.footprint_area)}
        out["height"], out["height_imputed"] = self.height_of(b)
        idx = self.index.query(b.centroid, self.radius_m)
        areas = self.index.area[idx]
        out["density_1km"] = float(idx.size)
        out["neighbor_area_mean"] = float(areas.mean()) if idx.size else math.nan
        out["neighbor_area_std"] = float(areas.std()) if idx.size else math.nan
        if self.landcover is not None:
            for cname, code in self.landcover_classes.items():
                for w in LANDCOVER_WINDOWS:
                    out[f"landcover_{cname}_w{w}"] = raster_window_stat(self.landcover, b.centroid, w, code)
        if self.nightlight is not None:
            for w in NIGHTLIGHT_WINDOWS:
                out[f"nightlight_w{w}"] = raster_window_stat(self.nightlight, b.centroid, w)
        for metric, layer in self.internet.items():
            out[f"internet_{metric}"] = raster_window_stat(layer, b.centroid, 1)
        self._static_cache[b.building_id] = out
        return out


@dataclass
class FeatureVector:
    values: np.ndarray
    schema_hash: str
    imputed: list[str] = field(default_factory=list)


def _select(schema, available: dict, context: str):
    out = np.empty(len(schema.names))
    for i, name in enumerate(schema.names):
        v = available.get(name)
        if v is None or not np.isfinite(v):
            raise AssemblyError(name, f"{context}: cannot resolve feature {name!r}")
        out[i] = v
    return out


def _needs_weather(schema):
    return sorted({n.rsplit("_lag", 1)[0] for n in schema.names if "_lag" in n},
                  key=list(WEATHER_VARIABLES).index)


def assemble_feature_vector(building: BuildingRecord, context: FeatureContext, weather, t,
                            schema: FeatureSchema) -> FeatureVector:
    """Feature values for one building-hour, in schema order.

    ``weather`` may be a ``WeatherSeries``, a ``WeatherGrid`` or ``None`` (use
    the context's grid).
    """
    available = dict(context.static_features(building))
    wvars = _needs_weather(schema)
    if wvars:
        weather = weather if weather is not None else context.weather
        if weather is None:
            raise AssemblyError(f"{wvars[0]}_lag0", "no weather data")
        if isinstance(weather, WeatherGrid):
            weather = weather.nearest(building.centroid)
        for var, lags in weather_lag_features(weather, t, wvars).items():
            for lag, v in enumerate(lags):
                available[f"{var}_lag{lag}"] = v
    temporal = temporal_features(t, context.timezone)
    for i, d in enumerate(DAYS):
        available[f"dow_{d}"] = temporal[i]
    available["hour"] = temporal[7]
    values = _select(schema, available, building.building_id)
    imputed = ["height"] if available.get("height_imputed") == 1.0 and "height" in schema.names else []
    return FeatureVector(values, schema.hash, imputed)


def temporal_matrix(hours, tz="UTC"):
    """Vectorised ``temporal_features`` over an array of UTC hours."""
    idx = pd.DatetimeIndex(np.asarray(hours, dtype="datetime64[h]").astype("datetime64[ns]"))
    local = idx.tz_localize("UTC").tz_convert(tz)
    out = np.zeros((len(idx), 8))
    out[np.arange(len(idx)), np.asarray(local.dayofweek)] = 1.0
    out[:, 7] = np.asarray(local.hour)
    return out


def assemble_feature_matrix(buildings, hours_per_building, context: FeatureContext,
                            schema: FeatureSchema):
    """Stack feature vectors for many building-hours.

    ``hours_per_building`` is a sequence aligned with ``buildings`` holding
    arrays of UTC hours. Returns ``(X, building_row_ids, hours)``.
    """
    wvars = _needs_weather(schema)
    blocks, ids, all_hours = [], [], []
    name_pos = {n: i for i, n in enumerate(schema.names)}
    for b, hours in zip(buildings, hours_per_building):
        hours = np.asarray(hours, dtype="datetime64[h]")
        n = hours.size
        if n == 0:
            continue
        block = np.full((n, len(schema)), np.nan)
        static = context.static_features(b)
        for name, v in static.items():
            if name in name_pos:
                block[:, name_pos[name]] = v
        if wvars:
            if context.weather is None:
                raise AssemblyError(f"{wvars[0]}_lag0", "no weather data")
            series = context.weather.nearest(b.centroid)
            base = ((hours - series.start) / HOUR).astype(int)
            for lag in range(3):
                pos = base - lag
                bad = (pos < 0) | (pos >= len(series))
                if bad.any():
                    raise GapError(str(hours[np.argmax(bad)] - lag * HOUR))
                for var in wvars:
                    if var not in series.variables:
                        raise AssemblyError(f"{var}_lag0", f"weather variable {var!r} is missing")
                    block[:, name_pos[f"{var}_lag{lag}"]] = series.variables[var][pos]
        tm = temporal_matrix(hours, context.timezone)
        for i, d in enumerate(DAYS):
            if f"dow_{d}" in name_pos:
                block[:, name_pos[f"dow_{d}"]] = tm[:, i]
        if "hour" in name_pos:
            block[:, name_pos["hour"]] = tm[:, 7]
        bad_cols = np.where(~np.isfinite(block).all(axis=0))[0]
        if bad_cols.size:
            raise AssemblyError(schema.names[bad_cols[0]],
                                f"{b.building_id}: cannot resolve feature {schema.names[bad_cols[0]]!r}")
        blocks.append(block)
        ids.extend([b.building_id] * n)
        all_hours.append(hours)
    if not blocks:
        return np.empty((0, len(schema))), [], np.array([], dtype="datetime64[h]")
    return np.vstack(blocks), ids, np.concatenate(all_hours)
