"""Estimate the gas-to-delivered-heat factor and convert a gas series.

Run: python3 demos/06_gas_to_heat.py
"""
import numpy as np

from zigcast.eta import apply_eta, fit_eta

# %% Annual fuel vs delivered heat, slope 0.7512 with 2% proportional noise.
rng = np.random.default_rng(0)
fuel = rng.lognormal(np.log(800.0), 0.35, 5000)
delivered = 0.7512 * fuel + rng.normal(0.0, 0.02 * fuel)
fit = fit_eta(fuel, delivered)
print(f"eta {fit.eta:.5f}, R2 centered {fit.r_squared:.4f}, R2 about zero {fit.r_squared_uncentered:.6f}")

# %% Exact proportionality gives eta 0.75 and R2 1.
print(fit_eta([1.0, 2.0], [0.75, 1.5]))

# %% Hourly gas in, heating demand out; zero hours stay zero.
print(apply_eta([0.0, 2.0, 1.25], fit.eta))
