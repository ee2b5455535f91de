"""Glue between file inputs and the modelling modules, shared by the CLI."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from . import io
from .baseline import baseline_predict, match_building
from .config import RunConfig
from .errors import CompatibilityError, InvalidInputError
from .eta import fit_eta
from .features import FeatureContext, FeatureSchema, assemble_feature_matrix
from .linkage import aggregate_units, link_addresses

log = logging.getLogger(__name__)

HOUR = np.timedelta64(1, "h")
SPLITS = ("train", "val", "test")


def build_context(cfg: RunConfig, buildings) -> FeatureContext:
    d = cfg.data
    return FeatureContext.build(
        buildings,
        weather=io.read_weather(d.weather) if d.weather else None,
        landcover=io.read_raster(d.landcover) if d.landcover else None,
        nightlight=io.read_raster(d.nightlight) if d.nightlight else None,
        internet={m: io.read_raster(p) for m, p in sorted(d.internet.items())},
        landcover_classes=dict(cfg.landcover_classes),
        timezone=cfg.timezone,
        radius_m=cfg.radius_m,
    )


def link_and_aggregate(cfg: RunConfig, buildings, consumption=None):
    """Building-hour labels for the configured target plus the link table (or ``None``)."""
    if consumption is None:
        consumption = io.read_consumption(cfg.data.consumption, column=target_column(cfg))
    if "building_id" in consumption.columns:
        return consumption.sort_values(["building_id", "timestamp"]).reset_index(drop=True), None
    if cfg.data.ami_addresses is None:
        raise InvalidInputError("consumption is keyed by ami_key but no ami_addresses file is configured")
    links = link_addresses(io.read_ami_addresses(cfg.data.ami_addresses), buildings, cfg.threshold)
    return aggregate_units(consumption, links), links


def target_column(cfg):
    cols = io.read_csv(cfg.data.consumption, nrows=0).columns
    return cfg.target if cfg.target in cols else "value"


def assign_splits(building_ids, fractions: dict, seed: int) -> dict[str, str]:
    """Deterministic building-level split from the sorted id list and the seed."""
    ids = sorted(set(building_ids))
    rng = np.random.default_rng([seed, 7])
    order = [ids[i] for i in rng.permutation(len(ids))]
    n_train = int(round(fractions["train"] * len(ids)))
    n_val = int(round(fractions["val"] * len(ids)))
    out = {}
    for i, b in enumerate(order):
        out[b] = "train" if i < n_train else ("val" if i < n_train + n_val else "test")
    return out


@dataclass
class Dataset:
    buildings: dict
    context: FeatureContext
    schema: FeatureSchema
    labels: pd.DataFrame
    split_of: dict
    links: list | None

    def frame(self, split=None) -> pd.DataFrame:
        """Keyed features and labels for one split (``None`` = all labelled buildings)."""
        labels = self.labels
        if split is not None:
            labels = labels[labels["building_id"].map(self.split_of) == split]
        blds, hours = [], []
        for bid, g in labels.groupby("building_id", sort=True):
            if bid not in self.buildings:
                continue
            blds.append(self.buildings[bid])
            hours.append(g["timestamp"].to_numpy().astype("datetime64[h]"))
        hours = [self._with_weather(b, h) for b, h in zip(blds, hours)]
        x, ids, hrs = assemble_feature_matrix(blds, hours, self.context, self.schema)
        df = pd.DataFrame(x, columns=self.schema.names)
        df.insert(0, "timestamp", hrs)
        df.insert(0, "building_id", ids)
        df = df.merge(labels[["building_id", "timestamp", "value"]], on=["building_id", "timestamp"],
                      how="left", validate="one_to_one")
        return df

    def _with_weather(self, building, hours):
        # hours whose two-hour weather history is missing are dropped, not imputed
        if self.context.weather is None or not any(n.endswith("_lag0") for n in self.schema.names):
            return hours
        s = self.context.weather.nearest(building.centroid)
        pos = ((hours - s.start) / HOUR).astype(int)
        keep = (pos >= 2) & (pos < len(s))
        if not keep.all():
            log.info("%s: dropping %d hours without weather history", building.building_id, int((~keep).sum()))
        return hours[keep]


def load_dataset(cfg: RunConfig) -> Dataset:
    buildings = io.read_buildings(cfg.data.buildings)
    labels, links = link_and_aggregate(cfg, buildings)
    context = build_context(cfg, buildings)
    schema = context.schema()
    bmap = {b.building_id: b for b in buildings}
    orphan = sorted(set(labels["building_id"]) - set(bmap))
    if orphan:
        log.warning("%d labelled ids have no building record, e.g. %s", len(orphan), orphan[:3])
    split_of = assign_splits([b for b in labels["building_id"].unique() if b in bmap], cfg.splits, cfg.seed)
    return Dataset(bmap, context, schema, labels, split_of, links)


def check_schema(model, schema: FeatureSchema):
    if model.schema_hash != schema.hash:
        raise CompatibilityError(
            f"model schema hash {model.schema_hash} does not match the configured feature schema "
            f"{schema.hash}; retrain or restore the original feature layers")


def baseline_frame(cfg: RunConfig, ds: Dataset, frame: pd.DataFrame):
    """Per building-hour archetype values plus the match table; ``(None, None)`` without archetypes."""
    if cfg.data.archetypes is None or cfg.data.puma is None:
        return None, None
    regions = io.read_puma(cfg.data.puma)
    archetypes = io.read_archetypes(cfg.data.archetypes, cfg.data.profiles)
    matches = match_table(ds, regions, archetypes, sorted(frame["building_id"].unique()))
    parts = []
    for m in matches:
        if m.archetype is None:
            continue
        hours = frame.loc[frame["building_id"] == m.building_id, "timestamp"].to_numpy()
        parts.append(pd.DataFrame({
            "building_id": m.building_id, "timestamp": hours,
            "baseline": baseline_predict(m.archetype, hours, cfg.target),
        }))
    base = pd.concat(parts, ignore_index=True) if parts else pd.DataFrame(
        {"building_id": [], "timestamp": np.array([], dtype="datetime64[h]"), "baseline": []})
    return base, matches


def match_table(ds_or_buildings, regions, archetypes, building_ids=None):
    """Archetype matches; missing heights fall back to the ZIP-imputed value."""
    if isinstance(ds_or_buildings, Dataset):
        bmap, ctx = ds_or_buildings.buildings, ds_or_buildings.context
    else:
        bmap = {b.building_id: b for b in ds_or_buildings}
        ctx = FeatureContext.build(list(bmap.values()))
    ids = building_ids if building_ids is not None else sorted(bmap)
    out = []
    for bid in ids:
        b = bmap[bid]
        fallback = ctx.height_of(b)[0]
        out.append(match_building(b, regions, archetypes, fallback_height=fallback))
    return out


def matches_frame(matches) -> pd.DataFrame:
    return pd.DataFrame([{
        "building_id": m.building_id,
        "archetype_id": m.archetype.archetype_id if m.archetype is not None else "",
        "exclusion_reason": m.reason,
        "floor_area": m.floor_area,
        "floor_area_error": m.error if m.error is not None else np.nan,
    } for m in matches])


def resolve_eta(cfg: RunConfig):
    """Explicit eta wins; otherwise fit it from the configured corpus, if any."""
    if cfg.eta is not None:
        return cfg.eta, None
    if cfg.data.eta_input is not None:
        fit = fit_eta(*io.read_eta_input(cfg.data.eta_input))
        return fit.eta, fit
    return None, None
