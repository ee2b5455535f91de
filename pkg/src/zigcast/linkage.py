"""Join meter (AMI) addresses to building records.

Streets are normalized, matched exactly within a ZIP code, then by
Levenshtein similarity for the leftovers; house numbers must agree exactly.
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import DataQualityError

log = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 88

SUFFIXES = {
    "ST": "ST", "STR": "ST", "STREET": "ST",
    "AVE": "AVE", "AVENUE": "AVE",
    "RD": "RD", "ROAD": "RD",
    "DR": "DR", "DRIVE": "DR",
    "LN": "LN", "LANE": "LN",
    "CT": "CT", "COURT": "CT",
    "BLVD": "BLVD", "BOULEVARD": "BLVD",
    "PL": "PL", "PLACE": "PL",
    "TER": "TER", "TERRACE": "TER",
    "CIR": "CIR", "CIRCLE": "CIR",
    "HWY": "HWY", "HIGHWAY": "HWY",
    "PKWY": "PKWY", "PARKWAY": "PKWY",
}
DIRECTIONALS = {
    "NORTH": "N", "SOUTH": "S", "EAST": "E", "WEST": "W",
    "NORTHEAST": "NE", "NORTHWEST": "NW", "SOUTHEAST": "SE", "SOUTHWEST": "SW",
}

_SEPARATORS = re.compile(r"[-/_]")
_PUNCT = re.compile(r"[^A-Z0-9 ]")


def normalize_street(name: str) -> str:
    tokens = _PUNCT.sub("", _SEPARATORS.sub(" ", (name or "").upper())).split()
    tokens = [DIRECTIONALS.get(t, t) for t in tokens]
    if tokens:
        tokens[-1] = SUFFIXES.get(tokens[-1], tokens[-1])
    return " ".join(tokens)


def levenshtein(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def normalized_similarity(a: str, b: str) -> int:
    """round(100 * (1 - d / max(len))) with halves rounded up, in integer arithmetic."""
    m = max(len(a), len(b))
    if m == 0:
        return 100
    d = levenshtein(a, b)
    return (200 * (m - d) + m) // (2 * m)


def normalize_house_number(number: str) -> str:
    """Leading digits without leading zeros ("0012A" -> "12"); non-numeric kept uppercased."""
    s = str(number or "").strip().upper()
    m = re.match(r"\d+", s)
    if not m:
        return _PUNCT.sub("", s)
    return m.group(0).lstrip("0") or "0"


@dataclass(frozen=True)
class RawAddress:
    ami_key: str
    street_number: str
    street_name: str
    zip: str


@dataclass(frozen=True)
class LinkResult:
    ami_key: str
    building_id: str | None
    match_kind: str | None  # "exact", "fuzzy" or None when unmatched
    similarity: int
    stage: str  # "linked" or the stage that failed
    zip: str = ""
    matched_street: str = ""

    @property
    def linked(self):
        return self.building_id is not None


def _best_fuzzy(street, candidates, threshold):
    scored = sorted((-normalized_similarity(street, c), c) for c in candidates)
    if not scored:
        return None, 0
    best_score, best = -scored[0][0], scored[0][1]
    ties = [c for s, c in scored if -s == best_score]
    if len(ties) > 1 and best_score >= threshold:
        log.info("fuzzy tie for %r at score %d among %s; chose %r", street, best_score, ties, best)
    return best, best_score


def link_addresses(ami, buildings, threshold: int = DEFAULT_THRESHOLD) -> list[LinkResult]:
    """Link each AMI address to at most one building.

    Results come out grouped by ZIP (sorted), input order within a ZIP.
    """
    streets: dict[str, dict[str, dict[str, list[str]]]] = {}
    for b in buildings:
        by_street = streets.setdefault(str(b.zip), {})
        by_num = by_street.setdefault(normalize_street(b.street_name), {})
        by_num.setdefault(normalize_house_number(b.street_number), []).append(b.building_id)

    fuzzy_cache: dict[tuple[str, str], tuple[str | None, int]] = {}
    results: dict[str, list[LinkResult]] = {}
    for a in ami:
        zip_code = str(a.zip)
        group = streets.get(zip_code)
        out = results.setdefault(zip_code, [])
        if group is None:
            out.append(LinkResult(a.ami_key, None, None, 0, "zip-not-found", zip_code))
            continue
        street = normalize_street(a.street_name)
        if street in group:
            kind, score, matched = "exact", 100, street
        else:
            key = (zip_code, street)
            if key not in fuzzy_cache:
                fuzzy_cache[key] = _best_fuzzy(street, group.keys(), threshold)
            matched, score = fuzzy_cache[key]
            kind = "fuzzy"
            if matched is None or score < threshold:
                out.append(LinkResult(a.ami_key, None, None, score, "fuzzy-below-threshold",
                                      zip_code, matched or ""))
                continue
        ids = group[matched].get(normalize_house_number(a.street_number))
        if not ids:
            out.append(LinkResult(a.ami_key, None, None, score, "house-number", zip_code, matched))
            continue
        if len(ids) > 1:
            log.info("%d buildings share %s %s in %s; chose %s",
                     len(ids), a.street_number, matched, zip_code, min(ids))
        out.append(LinkResult(a.ami_key, min(ids), kind, score, "linked", zip_code, matched))
    return [r for z in sorted(results) for r in results[z]]


def links_frame(links) -> pd.DataFrame:
    cols = ["ami_key", "building_id", "match_kind", "similarity", "stage", "zip", "matched_street"]
    return pd.DataFrame([[getattr(r, c) for c in cols] for r in links], columns=cols)


def aggregate_units(consumption: pd.DataFrame, links) -> pd.DataFrame:
    """Sum unit consumption to building-hours.

    ``consumption`` has columns ``ami_key, timestamp, value``. Unlinked keys are
    dropped. Returns ``building_id, timestamp, value`` sorted by both keys.
    """
    dup = consumption.duplicated(subset=["ami_key", "timestamp"], keep=False)
    if dup.any():
        keys = sorted(set(consumption.loc[dup, "ami_key"].astype(str)))
        raise DataQualityError(f"duplicate (ami_key, hour) rows for keys {keys}")
    mapping = {r.ami_key: r.building_id for r in links if r.building_id is not None}
    df = consumption.assign(building_id=consumption["ami_key"].map(mapping))
    df = df[df["building_id"].notna()]
    out = (df.groupby(["building_id", "timestamp"], sort=True)["value"]
           .sum().reset_index())
    out["value"] = out["value"].astype(np.float64)
    return out
