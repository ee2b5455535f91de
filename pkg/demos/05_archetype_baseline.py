"""Match buildings to simulated archetypes and read off baseline profiles.

Run: python3 demos/05_archetype_baseline.py
"""
import numpy as np

from zigcast.baseline import ArchetypeRecord, PumaRegion, baseline_predict, estimate_floors, match_building
from zigcast.features import BuildingRecord

# %% One region, three two-floor candidates; floors come from height / 3.5 m.
region = PumaRegion("P1", ((42.3, -71.1), (42.4, -71.1), (42.4, -71.0), (42.3, -71.0)))
start = np.datetime64("2023-01-01T00", "h")
profile = {"heating": 0.5 + 0.01 * np.arange(48), "electricity": 1.0 + 0.02 * np.arange(48)}
cands = [ArchetypeRecord(a, "P1", 2, area, start, profile) for a, area in
         (("A-250", 250.0), ("A-190", 190.0), ("A-230", 230.0))]
print("floors for 7.2 m:", estimate_floors(7.2))

# %% Floor area is footprint x floors; the closest candidate within 20% wins.
house = BuildingRecord("H", 42.35, -71.05, 100.0, 7.0)
m = match_building(house, [region], cands)
print(f"{m.building_id}: {m.archetype.archetype_id}, relative error {m.error:.3f}")

big = BuildingRecord("G", 42.35, -71.05, 160.0, 7.0)
m = match_building(big, [region], cands)
print(f"{m.building_id}: excluded ({m.reason}), best error {m.error:.3f}")

outside = BuildingRecord("O", 41.0, -71.05, 100.0, 7.0)
print("outside every region:", match_building(outside, [region], cands).reason)

# %% The matched archetype's hourly profile is the baseline forecast.
hours = start + np.arange(5, 8) * np.timedelta64(1, "h")
print("baseline heating:", baseline_predict(cands[1], hours))
