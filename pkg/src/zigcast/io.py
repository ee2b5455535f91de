"""Readers and writers for the pipeline's file formats.

Timestamps are written as ISO-8601 UTC hours (``2023-01-01T05:00:00Z``) and
held in memory as ``datetime64[h]``.

Raster text format::

    # zigcast raster v1
    kind land_cover_class
    origin_lat 40.1
    origin_lon -75.2
    pixel_size 0.001
    nodata -9999
    nrows 3
    ncols 4
    <nrows lines of ncols whitespace-separated values, north row first>
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import pandas as pd

from .baseline import ArchetypeRecord, PumaRegion
from .errors import InvalidInputError, LoadError
from .features import (BuildingRecord, RasterLayer, WeatherGrid, WeatherSeries,
                       polygon_area_centroid)
from .linkage import RawAddress

RASTER_MAGIC = "# zigcast raster v1"


def parse_hours(values) -> np.ndarray:
    ts = pd.to_datetime(pd.Series(values), utc=True)
    return ts.dt.tz_localize(None).to_numpy().astype("datetime64[h]")


def format_hours(hours) -> np.ndarray:
    return np.char.add(np.datetime_as_string(np.asarray(hours, dtype="datetime64[h]"), unit="s"), "Z")


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_csv(df: pd.DataFrame, path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def read_csv(path, **kw) -> pd.DataFrame:
    """``pandas.read_csv`` with exact float round-tripping of ``write_csv`` output."""
    return pd.read_csv(path, float_precision="round_trip", **kw)


def write_json(obj, path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _opt_float(v):
    if v is None or (isinstance(v, str) and not v.strip()):
        return None
    f = float(v)
    return None if np.isnan(f) else f


def _building_from_row(r) -> BuildingRecord:
    return BuildingRecord(
        building_id=str(r["building_id"]),
        lat=float(r["lat"]),
        lon=float(r["lon"]),
        footprint_area=float(r["footprint_area"]),
        height=_opt_float(r.get("height")),
        street_number=str(r.get("street_number", "") or ""),
        street_name=str(r.get("street_name", "") or ""),
        zip=str(r.get("zip", "") or ""),
    )


def read_buildings(path) -> list[BuildingRecord]:
    """Buildings from CSV or a GeoJSON-like FeatureCollection (Point or Polygon)."""
    path = Path(path)
    if path.suffix.lower() in (".json", ".geojson"):
        doc = json.loads(path.read_text())
        out = []
        for i, feat in enumerate(doc.get("features", [])):
            props = dict(feat.get("properties", {}))
            geom = feat.get("geometry") or {}
            if geom.get("type") == "Polygon":
                ring = [(lat, lon) for lon, lat in geom["coordinates"][0]]
                area, (lat, lon) = polygon_area_centroid(ring)
                props.setdefault("footprint_area", area)
            elif geom.get("type") == "Point":
                lon, lat = geom["coordinates"][:2]
            else:
                raise LoadError(f"features[{i}].geometry", "expected Point or Polygon")
            props["lat"], props["lon"] = lat, lon
            out.append(_building_from_row(props))
        return out
    df = read_csv(path, dtype={"building_id": str, "street_number": str, "street_name": str, "zip": str},
                     keep_default_na=False, na_values={"height": [""]})
    return [_building_from_row(r) for r in df.to_dict("records")]


def write_buildings(buildings, path):
    rows = [{
        "building_id": b.building_id, "lat": b.lat, "lon": b.lon, "footprint_area": b.footprint_area,
        "height": b.height if b.height is not None else np.nan, "street_number": b.street_number,
        "street_name": b.street_name, "zip": b.zip,
    } for b in buildings]
    write_csv(pd.DataFrame(rows), path)


def read_raster(path) -> RasterLayer:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != RASTER_MAGIC:
        raise LoadError(str(path), "not a zigcast raster file")
    header = {}
    i = 1
    while i < len(lines) and lines[i].split() and not _is_number(lines[i].split()[0]):
        key, value = lines[i].split(None, 1)
        header[key] = value.strip()
        i += 1
    try:
        nrows, ncols = int(header["nrows"]), int(header["ncols"])
        values = np.loadtxt(lines[i:i + nrows], ndmin=2) if nrows else np.empty((0, ncols))
        nodata = None if header.get("nodata", "none").lower() == "none" else float(header["nodata"])
        layer = RasterLayer(
            origin=(float(header["origin_lat"]), float(header["origin_lon"])),
            pixel_size=float(header["pixel_size"]),
            values=values,
            kind=header.get("kind", "generic"),
            nodata=nodata,
        )
    except KeyError as exc:
        raise LoadError(f"{path}:{exc.args[0]}", "missing header field") from None
    if layer.values.shape != (nrows, ncols):
        raise LoadError(f"{path}:values", f"grid is {layer.values.shape}, header says {(nrows, ncols)}")
    return layer


def _is_number(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


def write_raster(layer: RasterLayer, path):
    nr, nc = layer.values.shape
    head = [
        RASTER_MAGIC,
        f"kind {layer.kind}",
        f"origin_lat {layer.origin[0]!r}",
        f"origin_lon {layer.origin[1]!r}",
        f"pixel_size {layer.pixel_size!r}",
        f"nodata {'none' if layer.nodata is None else repr(float(layer.nodata))}",
        f"nrows {nr}",
        f"ncols {nc}",
    ]
    body = [" ".join(f"{v:.17g}" for v in row) for row in layer.values]
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("\n".join(head + body) + "\n")


def read_weather(path) -> WeatherGrid:
    """Long-format CSV ``timestamp, variable, value, cell_lat, cell_lon``."""
    df = read_csv(path)
    missing = {"timestamp", "variable", "value", "cell_lat", "cell_lon"} - set(df.columns)
    if missing:
        raise LoadError(str(path), f"missing columns {sorted(missing)}")
    df["hour"] = parse_hours(df["timestamp"])
    cells = {}
    for (lat, lon), g in df.groupby(["cell_lat", "cell_lon"], sort=True):
        wide = g.pivot_table(index="hour", columns="variable", values="value", aggfunc="first")
        wide = wide.sort_index()
        if wide.isna().any().any():
            raise LoadError(f"{path}:cell({lat},{lon})", "variables do not share one time axis")
        hours = wide.index.to_numpy().astype("datetime64[h]")
        steps = np.diff(hours).astype(int)
        if np.any(steps != 1):
            gap = hours[np.argmax(steps != 1)] + np.timedelta64(1, "h")
            raise LoadError(f"{path}:cell({lat},{lon})", f"gap in hourly series at {gap}")
        cells[(float(lat), float(lon))] = WeatherSeries(
            hours[0], {c: wide[c].to_numpy() for c in wide.columns})
    return WeatherGrid(cells)


def write_weather(grid: WeatherGrid, path):
    frames = []
    for (lat, lon), s in sorted(grid.cells.items()):
        ts = format_hours(s.timestamps)
        for var, vals in s.variables.items():
            frames.append(pd.DataFrame({"timestamp": ts, "variable": var, "value": vals,
                                        "cell_lat": lat, "cell_lon": lon}))
    write_csv(pd.concat(frames, ignore_index=True), path)


def read_ami_addresses(path) -> list[RawAddress]:
    df = read_csv(path, dtype=str, keep_default_na=False)
    return [RawAddress(r["ami_key"], r["street_number"], r["street_name"], r["zip"])
            for r in df.to_dict("records")]


def read_consumption(path, column="value") -> pd.DataFrame:
    """Consumption CSV keyed by ``ami_key`` (or ``building_id``) and timestamp."""
    df = read_csv(path, dtype={"ami_key": str, "building_id": str})
    if column not in df.columns:
        raise LoadError(f"{path}:{column}", "target column not found")
    key = "ami_key" if "ami_key" in df.columns else "building_id"
    out = pd.DataFrame({key: df[key].astype(str), "timestamp": parse_hours(df["timestamp"]),
                        "value": df[column].astype(float)})
    if (out["value"] < 0).any():
        raise LoadError(f"{path}:{column}", "consumption must be nonnegative")
    return out


def read_puma(path) -> list[PumaRegion]:
    doc = json.loads(Path(path).read_text())
    out = []
    for i, feat in enumerate(doc.get("features", [])):
        geom = feat.get("geometry") or {}
        if geom.get("type") != "Polygon":
            raise LoadError(f"features[{i}].geometry", "expected Polygon")
        ring = tuple((lat, lon) for lon, lat in geom["coordinates"][0])
        out.append(PumaRegion(str(feat["properties"]["puma_id"]), ring))
    return out


def write_puma(regions, path):
    doc = {"type": "FeatureCollection", "features": [
        {"type": "Feature", "properties": {"puma_id": r.puma_id},
         "geometry": {"type": "Polygon",
                      "coordinates": [[[lon, lat] for lat, lon in (*r.boundary, r.boundary[0])]]}}
        for r in regions]}
    write_json(doc, path)


def read_archetypes(meta_path, profile_path=None) -> list[ArchetypeRecord]:
    meta = read_csv(meta_path, dtype={"archetype_id": str, "puma_id": str})
    profiles = {}
    if profile_path is not None:
        prof = read_csv(profile_path, dtype={"archetype_id": str})
        prof["hour"] = parse_hours(prof["timestamp"])
        for aid, g in prof.groupby("archetype_id", sort=True):
            g = g.sort_values("hour")
            hours = g["hour"].to_numpy().astype("datetime64[h]")
            if np.any(np.diff(hours).astype(int) != 1):
                raise LoadError(f"{profile_path}:{aid}", "profile hours are not contiguous")
            profiles[aid] = (hours[0], {
                "heating": g["heating_value"].to_numpy(float),
                "electricity": g["electricity_value"].to_numpy(float),
            })
    out = []
    for r in meta.to_dict("records"):
        start, prof = profiles.get(r["archetype_id"], (None, {}))
        out.append(ArchetypeRecord(r["archetype_id"], r["puma_id"], int(r["floors"]),
                                   float(r["floor_area"]), start, prof))
    return out


def write_archetypes(archetypes, meta_path, profile_path):
    write_csv(pd.DataFrame([{"archetype_id": a.archetype_id, "puma_id": a.puma_id, "floors": a.floors,
                             "floor_area": a.floor_area} for a in archetypes]), meta_path)
    frames = []
    for a in archetypes:
        n = len(a.profiles["heating"])
        frames.append(pd.DataFrame({
            "archetype_id": a.archetype_id,
            "timestamp": format_hours(a.start + np.arange(n) * np.timedelta64(1, "h")),
            "heating_value": a.profiles["heating"],
            "electricity_value": a.profiles["electricity"],
        }))
    write_csv(pd.concat(frames, ignore_index=True), profile_path)


def read_eta_input(path):
    df = read_csv(path)
    for col in ("annual_fuel", "annual_delivered"):
        if col not in df.columns:
            raise InvalidInputError(f"{path}: missing column {col!r}")
    return df["annual_fuel"].to_numpy(float), df["annual_delivered"].to_numpy(float)
