"""Synthetic corpora with planted ground truth.

Raw ZIG parameters are a fixed linear function of (centred, scaled) features,
pushed through the link functions; labels are ZIG draws. Everything is a
deterministic function of the seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .baseline import ArchetypeRecord, PumaRegion
from .errors import InvalidInputError
from .features import (WEATHER_CELL_DEG, BuildingRecord, FeatureContext, RasterLayer,
                       WeatherGrid, WeatherSeries, assemble_feature_matrix)
from .linkage import RawAddress
from .zig import ZigParams, link_transform, zig_mean, zig_sample

HOUR = np.timedelta64(1, "h")
TARGETS = ("heating", "electricity")


@dataclass
class PlantedMap:
    """raw = intercept + sum_j coef_j * (feature_j - center_j) / scale_j."""

    intercept: list[float]
    terms: list[dict] = field(default_factory=list)

    def __post_init__(self):
        if len(self.intercept) != 3 or not all(np.isfinite(self.intercept)):
            raise InvalidInputError("intercept needs 3 finite values")
        for t in self.terms:
            if len(t["coef"]) != 3 or not all(np.isfinite(t["coef"])) or not t.get("scale", 1.0) > 0:
                raise InvalidInputError(f"bad planted term for {t.get('feature')!r}")

    def raw(self, x, names):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        pos = {n: i for i, n in enumerate(names)}
        out = np.tile(np.asarray(self.intercept, dtype=float), (x.shape[0], 1))
        for t in self.terms:
            if t["feature"] not in pos:
                raise InvalidInputError(f"planted feature {t['feature']!r} is not in the schema")
            z = (x[:, pos[t["feature"]]] - t.get("center", 0.0)) / t.get("scale", 1.0)
            out += np.outer(z, np.asarray(t["coef"], dtype=float))
        return out

    def to_dict(self):
        return {"intercept": list(self.intercept), "terms": [dict(t) for t in self.terms]}


def _term(feature, center, scale, coef):
    return {"feature": feature, "center": center, "scale": scale, "coef": list(coef)}


DEFAULT_MAPS = {
    "heating": PlantedMap(
        [-0.3, 0.5, -1.0],
        [
            _term("t2m_lag0", 283.0, 10.0, (1.2, 0.2, -0.6)),
            _term("t2m_lag2", 283.0, 10.0, (0.3, 0.0, -0.2)),
            _term("footprint_area", 150.0, 80.0, (-0.2, 0.1, 0.4)),
            _term("height", 7.0, 3.0, (0.0, 0.0, 0.2)),
            _term("hour", 12.0, 7.0, (0.2, 0.0, -0.1)),
            _term("dow_sun", 0.0, 1.0, (0.0, 0.0, 0.1)),
            _term("density_1km", 50.0, 30.0, (0.1, 0.0, -0.1)),
            _term("ssr_lag0", 3e5, 3e5, (0.2, 0.0, -0.1)),
        ],
    ),
    "electricity": PlantedMap(
        [-3.0, 1.0, 0.0],
        [
            _term("t2m_lag0", 283.0, 10.0, (0.0, 0.0, 0.3)),
            _term("footprint_area", 150.0, 80.0, (0.0, 0.1, 0.3)),
            _term("hour", 12.0, 7.0, (0.3, 0.0, 0.2)),
            _term("dow_sat", 0.0, 1.0, (0.0, 0.0, 0.15)),
            _term("nightlight_w11", 20.0, 10.0, (0.0, 0.0, 0.1)),
            _term("landcover_built_w11", 0.5, 0.3, (-0.2, 0.0, 0.1)),
        ],
    ),
}


def planted_corpus(n, n_features=10, seed=0, coef=None, intercept=(-0.5, 0.8, 0.0)):
    """Gaussian features with a linear planted map; returns ``(x, y, raw_true)``.

    With ``coef=None`` the coefficient matrix is drawn once from a fixed stream
    (independent of ``seed``), so different seeds share one generating model.
    """
    if coef is None:
        coef = default_planted_coef(n_features)
    coef = np.asarray(coef, dtype=float)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, n_features))
    raw = x @ coef + np.asarray(intercept, dtype=float)
    y = zig_sample(link_transform(raw), rng)
    return x, y, raw


def default_planted_coef(n_features=10):
    return np.random.default_rng(20240611).normal(0.0, 0.4, size=(n_features, 3))


@dataclass
class SyntheticSpec:
    n_buildings: int = 200
    hours: int = 336
    start: str = "2023-01-01T00:00:00Z"
    seed: int = 0
    bbox: tuple = (39.90, -75.25, 40.10, -75.05)  # south, west, north, east
    n_clusters: int = 6
    missing_height_fraction: float = 0.1
    multi_unit_fraction: float = 0.15
    raster_pixel_deg: float = 0.001
    archetype_bias: float = 1.25
    eta: float = 0.7512
    eta_noise: float = 0.02
    eta_samples: int = 500
    maps: dict = field(default_factory=lambda: {k: PlantedMap(v.intercept, [dict(t) for t in v.terms])
                                                for k, v in DEFAULT_MAPS.items()})

    def __post_init__(self):
        if self.n_buildings < 1 or self.hours < 1:
            raise InvalidInputError("n_buildings and hours must be positive")
        self.bbox = tuple(float(v) for v in self.bbox)
        self.maps = {k: v if isinstance(v, PlantedMap) else PlantedMap(**v) for k, v in self.maps.items()}

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise InvalidInputError(f"unknown synth fields: {sorted(unknown)}")
        return cls(**d)


@dataclass
class SyntheticData:
    buildings: list
    weather: WeatherGrid
    landcover: RasterLayer
    nightlight: RasterLayer
    ami_addresses: list
    consumption: pd.DataFrame  # ami_key, timestamp, heating, electricity
    truth: pd.DataFrame
    puma: list
    archetypes: list
    eta_corpus: pd.DataFrame
    spec: SyntheticSpec = None


STREETS = ["Main", "Elm", "Oak Ridge", "Maple", "Cedar", "Walnut", "Chestnut", "Spruce", "Pine",
           "Highland", "Lake", "Hill", "Park", "Washington", "Lincoln", "Jackson", "Franklin", "Church"]
SUFFIX_VARIANTS = {
    "ST": ("Street", "St", "St."), "AVE": ("Avenue", "Ave", "Ave."), "RD": ("Road", "Rd"),
    "LN": ("Lane", "Ln"), "DR": ("Drive", "Dr"), "CT": ("Court", "Ct"),
}


def _smooth_field(rng, shape, coarse=8):
    g = rng.standard_normal((coarse, coarse))
    rows = np.linspace(0, coarse - 1, shape[0])
    cols = np.linspace(0, coarse - 1, shape[1])
    r0 = np.clip(np.floor(rows).astype(int), 0, coarse - 2)
    c0 = np.clip(np.floor(cols).astype(int), 0, coarse - 2)
    fr = (rows - r0)[:, None]
    fc = (cols - c0)[None, :]
    a = g[r0][:, c0]
    b = g[r0][:, c0 + 1]
    c = g[r0 + 1][:, c0]
    d = g[r0 + 1][:, c0 + 1]
    return a * (1 - fr) * (1 - fc) + b * (1 - fr) * fc + c * fr * (1 - fc) + d * fr * fc


def _make_buildings(spec, rng):
    south, west, north, east = spec.bbox
    centers = np.column_stack([rng.uniform(south + 0.02, north - 0.02, spec.n_clusters),
                               rng.uniform(west + 0.02, east - 0.02, spec.n_clusters)])
    which = rng.integers(0, spec.n_clusters, spec.n_buildings)
    lat = np.clip(centers[which, 0] + rng.normal(0, 0.006, spec.n_buildings), south + 1e-4, north - 1e-4)
    lon = np.clip(centers[which, 1] + rng.normal(0, 0.008, spec.n_buildings), west + 1e-4, east - 1e-4)
    area = np.round(np.exp(rng.normal(math.log(140.0), 0.4, spec.n_buildings)), 1)
    floors = rng.choice([1, 2, 3], size=spec.n_buildings, p=[0.3, 0.5, 0.2])
    height = np.round(floors * 3.5 + rng.normal(0, 0.5, spec.n_buildings), 2).clip(2.5)
    missing = rng.random(spec.n_buildings) < spec.missing_height_fraction
    mid_lat, mid_lon = (south + north) / 2, (west + east) / 2
    zips = np.where(lat >= mid_lat, np.where(lon >= mid_lon, "19102", "19101"),
                    np.where(lon >= mid_lon, "19104", "19103"))
    suffixes = list(SUFFIX_VARIANTS)
    street_of = {s: suffixes[i % len(suffixes)] for i, s in enumerate(STREETS)}
    counters: dict[tuple[str, str], int] = {}
    out = []
    for i in range(spec.n_buildings):
        street = STREETS[int(rng.integers(0, len(STREETS)))]
        key = (str(zips[i]), street)
        counters[key] = counters.get(key, 0) + 1
        number = 100 + 2 * counters[key]
        out.append(BuildingRecord(
            building_id=f"B{i:05d}", lat=round(float(lat[i]), 6), lon=round(float(lon[i]), 6),
            footprint_area=float(area[i]), height=None if missing[i] else float(height[i]),
            street_number=str(number), street_name=f"{street} {street_of[street]}", zip=str(zips[i]),
        ))
    return out


def _make_weather(spec, rng, first_hour, n_hours):
    south, west, north, east = spec.bbox
    lats = np.arange(math.floor(south / WEATHER_CELL_DEG), math.floor(north / WEATHER_CELL_DEG) + 1) * WEATHER_CELL_DEG
    lons = np.arange(math.floor(west / WEATHER_CELL_DEG), math.floor(east / WEATHER_CELL_DEG) + 1) * WEATHER_CELL_DEG
    hours = first_hour + np.arange(n_hours) * HOUR
    hrs = (hours - np.datetime64("2023-01-01T00", "h")).astype(float)
    doy = hrs / 24.0
    hod = np.mod(hrs, 24.0)
    cells = {}
    for la in lats:
        for lo in lons:
            off = rng.normal(0, 0.7)
            ar = np.zeros(n_hours)
            eps = rng.normal(0, 0.6, n_hours)
            for t in range(1, n_hours):
                ar[t] = 0.95 * ar[t - 1] + eps[t]
            t2m = 283.0 - 10.0 * np.cos(2 * np.pi * (doy - 15) / 365.0) + 4.0 * np.sin(2 * np.pi * (hod - 9) / 24.0) + ar + off
            sun = np.clip(np.sin(np.pi * (hod - 6) / 12.0), 0.0, None)
            tcc = np.clip(0.5 + 0.3 * np.sin(2 * np.pi * doy / 5.0) + rng.normal(0, 0.1, n_hours), 0, 1)
            wind_u = 3.0 * np.sin(2 * np.pi * doy / 3.0) + rng.normal(0, 1.0, n_hours)
            wind_v = 2.0 * np.cos(2 * np.pi * doy / 4.0) + rng.normal(0, 1.0, n_hours)
            variables = {
                "t2m": t2m,
                "tp": np.clip(rng.gamma(0.3, 0.0005, n_hours) * (tcc > 0.6), 0, None),
                "sd": np.clip(0.05 * (283.0 - t2m) / 10.0, 0, None),
                "sp": 101325.0 + 800.0 * np.sin(2 * np.pi * doy / 6.0) + rng.normal(0, 50, n_hours),
                "fg10": np.hypot(wind_u, wind_v) * 1.5 + np.abs(rng.normal(0, 0.5, n_hours)),
                "u10": wind_u,
                "v10": wind_v,
                "str": -2.5e5 * (1.0 - tcc) + rng.normal(0, 1e4, n_hours),
                "ssr": 1.2e6 * sun * (1.0 - 0.6 * tcc),
                "tcc": tcc,
                "stl1": 283.0 - 6.0 * np.cos(2 * np.pi * (doy - 30) / 365.0) + 0.2 * ar,
                "cvh": np.full(n_hours, float(np.clip(0.4 + rng.normal(0, 0.1), 0, 1))),
            }
            cells[(round(float(la), 4), round(float(lo), 4))] = WeatherSeries(
                first_hour, {k: np.round(v, 6) for k, v in variables.items()})
    return WeatherGrid(cells)


def _make_rasters(spec, rng, buildings):
    south, west, north, east = spec.bbox
    px = spec.raster_pixel_deg
    margin = 30 * px
    origin = (north + margin, west - margin)
    nr = int(math.ceil((north - south + 2 * margin) / px)) + 1
    nc = int(math.ceil((east - west + 2 * margin) / px)) + 1
    built = _smooth_field(rng, (nr, nc))
    crops = _smooth_field(rng, (nr, nc))
    classes = np.where(built > 0.3, 7, np.where(crops > 0.2, 5, np.where(crops < -0.6, 2, 11)))
    noise = rng.random((nr, nc)) < 0.05
    classes = np.where(noise, rng.choice([1, 2, 5, 7, 11], size=(nr, nc)), classes)
    landcover = RasterLayer(origin, px, classes.astype(float), "land_cover_class", nodata=0.0)
    radiance = np.clip(15.0 + 12.0 * built + rng.normal(0, 1.0, (nr, nc)), 0.0, None)
    nightlight = RasterLayer(origin, px, np.round(radiance, 4), "nightlight_radiance", nodata=-9999.0)
    return landcover, nightlight


def _make_puma(spec):
    south, west, north, east = spec.bbox
    pad = 0.05
    mid_lat, mid_lon = (south + north) / 2, (west + east) / 2
    lat_edges = [south - pad, mid_lat, north + pad]
    lon_edges = [west - pad, mid_lon, east + pad]
    out = []
    for i in range(2):
        for j in range(2):
            s, n = lat_edges[i], lat_edges[i + 1]
            w, e = lon_edges[j], lon_edges[j + 1]
            out.append(PumaRegion(f"PUMA{i * 2 + j + 1:02d}", ((s, w), (s, e), (n, e), (n, w))))
    return out


def _perturb_street(street, rng):
    name, suffix = street.rsplit(" ", 1)
    variant = SUFFIX_VARIANTS[suffix][int(rng.integers(0, len(SUFFIX_VARIANTS[suffix])))]
    text = f"{name} {variant}"
    r = rng.random()
    if r < 0.3:
        text = text.upper()
    elif r < 0.5:
        text = text.lower()
    return text


def synth_generate(spec: SyntheticSpec) -> SyntheticData:
    ss = np.random.SeedSequence(spec.seed)
    r_build, r_weather, r_raster, r_label, r_ami, r_eta = (np.random.default_rng(s) for s in ss.spawn(6))
    buildings = _make_buildings(spec, r_build)
    first = np.datetime64(spec.start.replace("Z", ""), "h")
    weather = _make_weather(spec, r_weather, first - 2 * HOUR, spec.hours + 2)
    landcover, nightlight = _make_rasters(spec, r_raster, buildings)
    ctx = FeatureContext.build(buildings, weather=weather, landcover=landcover, nightlight=nightlight)
    schema = ctx.schema()
    hours = first + np.arange(spec.hours) * HOUR
    x, ids, hrs = assemble_feature_matrix(buildings, [hours] * len(buildings), ctx, schema)

    truth = pd.DataFrame({"building_id": ids, "timestamp": hrs})
    labels = {}
    for target in TARGETS:
        raw = spec.maps[target].raw(x, schema.names)
        params = link_transform(raw)
        labels[target] = zig_sample(params, r_label)
        p, k, th = params.arrays()
        truth[f"{target}_p"], truth[f"{target}_k"], truth[f"{target}_theta"] = p, k, th
        truth[f"{target}_mean"] = zig_mean(params)
        truth[f"{target}_value"] = labels[target]

    ami = []
    unit_of: list[list[str]] = []
    for i, b in enumerate(buildings):
        n_units = 2 if r_ami.random() < spec.multi_unit_fraction else 1
        keys = [f"AMI{i:05d}{chr(65 + u)}" for u in range(n_units)]
        unit_of.append(keys)
        for key in keys:
            number = b.street_number if n_units == 1 else f"{b.street_number}{chr(65 + keys.index(key))}"
            ami.append(RawAddress(key, number, _perturb_street(b.street_name, r_ami), b.zip))
    n_h = spec.hours
    cons = {"ami_key": [], "timestamp": [], "heating": [], "electricity": []}
    for i, keys in enumerate(unit_of):
        sl = slice(i * n_h, (i + 1) * n_h)
        vals = {t: labels[t][sl] for t in TARGETS}
        if len(keys) == 1:
            parts = [vals]
        else:
            half = {t: v * 0.5 for t, v in vals.items()}
            parts = [half, {t: vals[t] - half[t] for t in TARGETS}]
        for key, part in zip(keys, parts):
            cons["ami_key"].extend([key] * n_h)
            cons["timestamp"].append(hrs[sl])
            for t in TARGETS:
                cons[t].append(part[t])
    consumption = pd.DataFrame({
        "ami_key": cons["ami_key"],
        "timestamp": np.concatenate(cons["timestamp"]),
        "heating": np.concatenate(cons["heating"]),
        "electricity": np.concatenate(cons["electricity"]),
    })

    puma = _make_puma(spec)
    archetypes = _make_archetypes(spec, puma, ctx, schema, hours)

    fuel = np.round(np.exp(r_eta.normal(math.log(800.0), 0.35, spec.eta_samples)), 3)
    delivered = spec.eta * fuel + r_eta.normal(0.0, spec.eta_noise, spec.eta_samples) * fuel
    eta_corpus = pd.DataFrame({"building_id": [f"R{i:05d}" for i in range(spec.eta_samples)],
                               "annual_fuel": fuel, "annual_delivered": np.clip(delivered, 0, None)})
    return SyntheticData(buildings, weather, landcover, nightlight, ami, consumption, truth,
                         puma, archetypes, eta_corpus, spec)


def _make_archetypes(spec, puma, ctx, schema, hours):
    # each archetype sits at the real building nearest its PUMA centre so
    # neighbourhood features resolve
    lats = ctx.index.lat
    lons = ctx.index.lon
    out = []
    for region in puma:
        clat = float(np.mean([p[0] for p in region.boundary]))
        clon = float(np.mean([p[1] for p in region.boundary]))
        anchor = int(np.argmin((lats - clat) ** 2 + (lons - clon) ** 2))
        lat, lon = float(lats[anchor]), float(lons[anchor])
        for floors in (1, 2, 3):
            for j, fa in enumerate(np.round(np.geomspace(80.0, 900.0, 14) * floors ** 0.5, 1)):
                aid = f"{region.puma_id}-F{floors}-{j:02d}"
                pseudo = BuildingRecord(aid, lat, lon, float(fa) / floors, floors * 3.5)
                x, _, _ = assemble_feature_matrix([pseudo], [hours], ctx, schema)
                profiles = {}
                for target in TARGETS:
                    mean = zig_mean(link_transform(spec.maps[target].raw(x, schema.names)))
                    profiles[target] = np.round(mean * spec.archetype_bias, 8)
                out.append(ArchetypeRecord(aid, region.puma_id, floors, float(fa), hours[0], profiles))
    return out


def truth_params(truth: pd.DataFrame, target: str) -> ZigParams:
    return ZigParams(truth[f"{target}_p"].to_numpy(), truth[f"{target}_k"].to_numpy(),
                     truth[f"{target}_theta"].to_numpy())
