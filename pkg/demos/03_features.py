"""Assemble building-hour feature rows from buildings, rasters and weather.

Run: python3 demos/03_features.py
"""
import numpy as np

from zigcast.features import FeatureContext, assemble_feature_matrix, haversine_m
from zigcast.synth import SyntheticSpec, synth_generate

# %% A tiny synthetic town supplies every input layer.
data = synth_generate(SyntheticSpec(n_buildings=25, hours=24, seed=3))
b0, b1 = data.buildings[:2]
print(f"{b0.building_id} to {b1.building_id}: {haversine_m(b0.lat, b0.lon, b1.lat, b1.lon):.1f} m")

# %% The context holds shared layers; the schema lists the features they can supply.
ctx = FeatureContext.build(data.buildings, weather=data.weather, landcover=data.landcover,
                           nightlight=data.nightlight, timezone="America/New_York")
schema = ctx.schema()
print(f"{len(schema)} features, schema hash {schema.hash}")
print("first few:", schema.names[:8])

# %% Static features are per building; lags and calendar terms vary by hour.
static = ctx.static_features(b0)
print({k: round(v, 3) for k, v in list(static.items())[:6]})
hours = np.datetime64("2023-01-01T05", "h") + np.arange(3) * np.timedelta64(1, "h")
x, ids, hrs = assemble_feature_matrix([b0], [hours], ctx, schema)
col = schema.names.index("t2m_lag0")
print("t2m_lag0 over three hours:", x[:, col], "local hour:", x[:, schema.names.index("hour")])

# %% Missing heights are imputed from the footprint-weighted ZIP median.
missing = [b for b in data.buildings if b.height is None]
if missing:
    print(f"{missing[0].building_id}: height imputed as {ctx.height_of(missing[0])[0]:.2f} m")
