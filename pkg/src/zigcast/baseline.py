"""Match real buildings to simulated archetypes and read off baseline profiles."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InvalidInputError, RangeError, UnassignedError

FLOOR_HEIGHT_M = 3.5
MAX_FLOOR_AREA_ERROR = 0.20

HOUR = np.timedelta64(1, "h")


@dataclass(frozen=True)
class PumaRegion:
    puma_id: str
    boundary: tuple  # ((lat, lon), ...)

    def __post_init__(self):
        ring = [tuple(map(float, p)) for p in self.boundary]
        if len(ring) > 1 and ring[0] == ring[-1]:
            ring = ring[:-1]
        if len(ring) < 3:
            raise InvalidInputError(f"PUMA {self.puma_id}: boundary needs at least 3 vertices")
        object.__setattr__(self, "boundary", tuple(ring))


def _on_segment(py, px, ay, ax, by, bx, tol=1e-12):
    cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
    if abs(cross) > tol * max(1.0, abs(bx - ax) + abs(by - ay)):
        return False
    return min(ax, bx) - tol <= px <= max(ax, bx) + tol and min(ay, by) - tol <= py <= max(ay, by) + tol


def point_in_polygon(point, ring) -> bool:
    """Even-odd ray casting; points on an edge count as inside."""
    py, px = point
    n = len(ring)
    inside = False
    for i in range(n):
        ay, ax = ring[i]
        by, bx = ring[(i + 1) % n]
        if _on_segment(py, px, ay, ax, by, bx):
            return True
        if (ay > py) != (by > py):
            x_cross = ax + (py - ay) * (bx - ax) / (by - ay)
            if px < x_cross:
                inside = not inside
    return inside


def assign_puma(building, regions) -> str:
    for region in regions:
        if point_in_polygon(building.centroid, region.boundary):
            return region.puma_id
    raise UnassignedError(f"{building.building_id}: centroid {building.centroid} lies in no PUMA region")


def estimate_floors(height: float) -> int:
    """max(1, round(height / 3.5)) with halves rounded up."""
    if not height > 0:
        raise DomainError("height must be positive")
    return max(1, int(math.floor(height / FLOOR_HEIGHT_M + 0.5)))


@dataclass
class ArchetypeRecord:
    archetype_id: str
    puma_id: str
    floors: int
    floor_area: float
    start: np.datetime64 | None = None
    profiles: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if not self.floor_area > 0:
            raise InvalidInputError(f"archetype {self.archetype_id}: floor_area must be positive")
        if self.start is not None:
            self.start = np.datetime64(self.start, "h")
        self.profiles = {k: np.asarray(v, dtype=float) for k, v in self.profiles.items()}


@dataclass(frozen=True)
class MatchResult:
    building_id: str
    archetype: ArchetypeRecord | None
    floor_area: float
    error: float | None  # |archetype - target| / target
    reason: str = ""  # exclusion reason; empty when matched

    @property
    def matched(self):
        return self.archetype is not None


def match_archetype(building_id, puma_id, floors, floor_area, archetypes) -> MatchResult:
    """Closest-floor-area archetype in the same PUMA with the same floor count.

    Candidates above 20% relative floor-area error are excluded. Ties go to the
    smaller archetype id, so candidate order never matters.
    """
    pool = [a for a in archetypes if a.puma_id == puma_id]
    if not pool:
        return MatchResult(building_id, None, floor_area, None, "no-candidates")
    pool = [a for a in pool if a.floors == floors]
    if not pool:
        return MatchResult(building_id, None, floor_area, None, "no-candidates-with-floors")
    best = min(pool, key=lambda a: (abs(a.floor_area - floor_area), a.archetype_id))
    err = abs(best.floor_area - floor_area) / floor_area
    if err > MAX_FLOOR_AREA_ERROR:
        return MatchResult(building_id, None, floor_area, err, "floor-area-error")
    return MatchResult(building_id, best, floor_area, err)


def match_building(building, regions, archetypes, fallback_height=None) -> MatchResult:
    """PUMA assignment, floor estimate and archetype match for one building."""
    try:
        puma = assign_puma(building, regions)
    except UnassignedError:
        return MatchResult(building.building_id, None, math.nan, None, "unassigned-puma")
    height = building.height if building.height is not None and np.isfinite(building.height) else fallback_height
    if height is None:
        return MatchResult(building.building_id, None, math.nan, None, "no-height")
    floors = estimate_floors(height)
    return match_archetype(building.building_id, puma, floors, building.footprint_area * floors, archetypes)


def baseline_predict(archetype: ArchetypeRecord, hours, target: str = "heating"):
    """Profile values at the requested hours, unscaled."""
    if target not in archetype.profiles:
        raise InvalidInputError(f"archetype {archetype.archetype_id} has no {target!r} profile")
    prof = archetype.profiles[target]
    hours = np.asarray(hours, dtype="datetime64[h]")
    pos = ((hours - archetype.start) / HOUR).astype(int)
    bad = (pos < 0) | (pos >= prof.size)
    if bad.any():
        raise RangeError(f"hour {hours[np.argmax(bad)]} is outside archetype "
                         f"{archetype.archetype_id}'s profile")
    return prof[pos]
