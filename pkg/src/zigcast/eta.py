"""Fuel-to-delivered-heat efficiency by least squares through the origin."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import DegenerateInputError, DomainError, InvalidInputError


@dataclass(frozen=True)
class EtaFit:
    eta: float
    r_squared: float  # against the mean of delivered
    r_squared_uncentered: float  # against zero
    n: int

    def to_dict(self):
        return asdict(self)


def fit_eta(fuel, delivered) -> EtaFit:
    fuel = np.asarray(fuel, dtype=float)
    delivered = np.asarray(delivered, dtype=float)
    if fuel.ndim != 1 or fuel.shape != delivered.shape or fuel.size < 2:
        raise InvalidInputError("fuel and delivered need equal lengths >= 2")
    if not np.any(fuel != 0.0):
        raise DegenerateInputError("all fuel values are zero")
    if np.any(fuel < 0.0) or np.any(delivered < 0.0):
        raise DomainError("fuel and delivered must be nonnegative")
    eta = float(np.dot(fuel, delivered) / np.dot(fuel, fuel))
    ss_res = float(np.sum((delivered - eta * fuel) ** 2))
    ss_tot = float(np.sum((delivered - delivered.mean()) ** 2))
    ss_unc = float(np.dot(delivered, delivered))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else float("-inf"))
    r2u = 1.0 - ss_res / ss_unc if ss_unc > 0 else 1.0
    return EtaFit(eta, r2, r2u, int(fuel.size))


def apply_eta(series, eta: float):
    """Scale a gas series into delivered heat; zeros stay zero."""
    if not eta > 0:
        raise DomainError("eta must be positive")
    return np.asarray(series, dtype=float) * eta
