"""Link metered addresses to buildings and sum multi-unit meters.

Run: python3 demos/04_address_linkage.py
"""
import numpy as np
import pandas as pd

from zigcast.features import BuildingRecord
from zigcast.linkage import (RawAddress, aggregate_units, link_addresses, links_frame, normalize_street,
                             normalized_similarity)

# %% Street names are normalized before comparison.
for s in ("North Elm Avenue", "oak   ridge ROAD", "Main St."):
    print(f"{s!r:22} -> {normalize_street(s)!r}")
print("similarity ELM ST vs ELMS ST:", normalized_similarity("ELM ST", "ELMS ST"))
print("similarity OAK RIDGE RD vs OAKRIDGE RD:", normalized_similarity("OAK RIDGE RD", "OAKRIDGE RD"))

# %% Exact match first, then fuzzy within the same ZIP and house number at threshold 88.
buildings = [BuildingRecord("B1", 42.0, -71.0, 120.0, 7.0, "10", "Elm Street", "02101"),
             BuildingRecord("B2", 42.0, -71.0, 150.0, 9.0, "20", "Oak Ridge Road", "02101")]
meters = [RawAddress("m1", "10", "ELM ST", "02101"), RawAddress("m2", "10", "Elms St", "02101"),
          RawAddress("m3", "20", "Oakridge Rd", "02101"), RawAddress("m4", "20A", "Oak Ridge Rd", "02101")]
links = link_addresses(meters, buildings)
print(links_frame(links).to_string(index=False))

# %% Units that link to one building are summed per hour.
h = np.datetime64("2023-01-01T00", "h")
cons = pd.DataFrame({"ami_key": ["m3", "m4"], "timestamp": [h, h], "value": [1.25, 0.5]})
print(aggregate_units(cons, links))
