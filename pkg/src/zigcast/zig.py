"""Zero-inflated gamma distribution.

A point mass ``p`` at zero mixed with a gamma(shape ``k``, scale ``theta``)
density on the positive reals. All functions broadcast over numpy arrays;
scalars in give scalars out.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InvalidInputError

# Clamp bounds applied inside the training loss only.
LOSS_EPS = 1e-12

_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

_GAMMAINC_TOL = 1e-12
_GAMMAINC_MAXITER = 500
_FPMIN = 1e-300


def _out(a):
    a = np.asarray(a)
    return a.item() if a.ndim == 0 else a


@dataclass(frozen=True)
class ZigParams:
    """Zero weight ``p``, gamma shape ``k`` and gamma scale ``theta``.

    Fields may be floats or equally-broadcastable arrays.
    """

    p: float | np.ndarray
    k: float | np.ndarray
    theta: float | np.ndarray

    def __post_init__(self):
        p, k, theta = (np.asarray(v, dtype=float) for v in (self.p, self.k, self.theta))
        if not (np.all(p >= 0.0) and np.all(p <= 1.0)):
            raise InvalidInputError("p must lie in [0, 1]")
        if not (np.all(k > 0.0) and np.all(theta > 0.0)):
            raise InvalidInputError("k and theta must be positive")

    def __len__(self):
        return int(np.broadcast(np.asarray(self.p), np.asarray(self.k), np.asarray(self.theta)).size)

    def __getitem__(self, idx):
        p, k, theta = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (self.p, self.k, self.theta)))
        return ZigParams(_out(p[idx]), _out(k[idx]), _out(theta[idx]))

    def arrays(self):
        return np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (self.p, self.k, self.theta)))


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    e = np.exp(-np.abs(x))
    return _out(np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)))


def softplus(x):
    x = np.asarray(x, dtype=float)
    return _out(np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x))))


def link_transform(raw) -> ZigParams:
    """Map unconstrained network outputs ``(..., 3)`` to valid ZIG parameters."""
    raw = np.asarray(raw, dtype=float)
    if raw.shape[-1:] != (3,):
        raise InvalidInputError(f"raw parameters need a trailing axis of 3, got shape {raw.shape}")
    if not np.all(np.isfinite(raw)):
        raise InvalidInputError("raw parameters must be finite")
    return ZigParams(sigmoid(raw[..., 0]), softplus(raw[..., 1]), softplus(raw[..., 2]))


def log_gamma(x):
    """ln Gamma(x) for x > 0 by the Lanczos approximation (g=7, 9 terms)."""
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0.0)):
        raise DomainError("log_gamma requires x > 0")
    small = x < 0.5
    # reflection: Gamma(x) Gamma(1-x) = pi / sin(pi x)
    y = np.where(small, 1.0 - x, x) - 1.0
    a = np.full_like(y, _LANCZOS_COEF[0])
    for i, c in enumerate(_LANCZOS_COEF[1:], start=1):
        a = a + c / (y + i)
    t = y + _LANCZOS_G + 0.5
    lg = _HALF_LOG_2PI + (y + 0.5) * np.log(t) - t + np.log(a)
    with np.errstate(divide="ignore"):
        refl = np.log(np.pi / np.abs(np.sin(np.pi * x))) - lg
    return _out(np.where(small, refl, lg))


def digamma(x):
    """Derivative of ``log_gamma``; recurrence up to x >= 6 then asymptotic series."""
    x = np.array(x, dtype=float)
    if np.any(~(x > 0.0)):
        raise DomainError("digamma requires x > 0")
    acc = np.zeros_like(x)
    while True:
        low = x < 6.0
        if not np.any(low):
            break
        acc = acc - np.where(low, 1.0 / x, 0.0)
        x = np.where(low, x + 1.0, x)
    inv2 = 1.0 / (x * x)
    series = inv2 * (1.0 / 12 - inv2 * (1.0 / 120 - inv2 * (1.0 / 252 - inv2 * (1.0 / 240 - inv2 * (1.0 / 132)))))
    return _out(acc + np.log(x) - 0.5 / x - series)


def _gammainc_series(k, z, lgk):
    ap = k.copy()
    term = 1.0 / k
    total = term.copy()
    active = np.ones(k.shape, dtype=bool)
    for _ in range(_GAMMAINC_MAXITER):
        ap = ap + 1.0
        term = np.where(active, term * z / ap, 0.0)
        total = total + term
        active &= np.abs(term) >= np.abs(total) * _GAMMAINC_TOL
        if not active.any():
            break
    return total * np.exp(-z + k * np.log(z) - lgk)


def _gammainc_cf(k, z, lgk):
    # modified Lentz evaluation of the continued fraction for Q(k, z)
    b = z + 1.0 - k
    c = np.full(k.shape, 1.0 / _FPMIN)
    d = 1.0 / b
    h = d.copy()
    active = np.ones(k.shape, dtype=bool)
    for i in range(1, _GAMMAINC_MAXITER + 1):
        an = -i * (i - k)
        b = b + 2.0
        d = an * d + b
        d = np.where(np.abs(d) < _FPMIN, _FPMIN, d)
        c = b + an / c
        c = np.where(np.abs(c) < _FPMIN, _FPMIN, c)
        d = 1.0 / d
        delta = np.where(active, d * c, 1.0)
        h = h * delta
        active &= np.abs(delta - 1.0) >= _GAMMAINC_TOL
        if not active.any():
            break
    q = np.exp(-z + k * np.log(z) - lgk) * h
    return 1.0 - q


def regularized_lower_incomplete_gamma(k, z):
    """P(k, z) = gamma(k, z) / Gamma(k).

    Series expansion for z < k + 1, continued fraction otherwise.
    """
    k, z = np.broadcast_arrays(np.asarray(k, dtype=float), np.asarray(z, dtype=float))
    if np.any(~(k > 0.0)):
        raise DomainError("incomplete gamma requires k > 0")
    if np.any(~(z >= 0.0)):
        raise DomainError("incomplete gamma requires z >= 0")
    out = np.zeros(k.shape)
    pos = z > 0.0
    inf = np.isinf(z)
    out[inf] = 1.0
    ser = pos & ~inf & (z < k + 1.0)
    cf = pos & ~inf & ~ser
    if ser.any():
        out[ser] = _gammainc_series(k[ser], z[ser], log_gamma(k[ser]))
    if cf.any():
        out[cf] = _gammainc_cf(k[cf], z[cf], log_gamma(k[cf]))
    return _out(np.clip(out, 0.0, 1.0))


def _check_obs(x):
    x = np.asarray(x, dtype=float)
    if np.any(~(x >= 0.0)):
        raise DomainError("observations must be nonnegative")
    return x


def zig_log_pdf(x, params: ZigParams):
    """Log density. Impossible observations (x=0 with p=0, x>0 with p=1) give -inf."""
    x = _check_obs(x)
    p, k, theta = params.arrays()
    x, p, k, theta = np.broadcast_arrays(x, p, k, theta)
    zero = x == 0.0
    xs = np.where(zero, 1.0, x)
    with np.errstate(divide="ignore"):
        pos = (np.log1p(-p) + (k - 1.0) * np.log(xs) - xs / theta - k * np.log(theta)
               - log_gamma(k))
        out = np.where(zero, np.log(p), pos)
    return _out(out)


def zig_cdf(x, params: ZigParams):
    x = _check_obs(x)
    p, k, theta = params.arrays()
    x, p, k, theta = np.broadcast_arrays(x, p, k, theta)
    return _out(p + (1.0 - p) * np.asarray(regularized_lower_incomplete_gamma(k, x / theta)))


def zig_mean(params: ZigParams):
    p, k, theta = params.arrays()
    return _out((1.0 - p) * k * theta)


def _standard_gamma(shape, rng: np.random.Generator):
    """Marsaglia-Tsang gamma(shape, 1) draws; ``shape`` is a 1-D array."""
    shape = np.asarray(shape, dtype=float)
    boost = shape < 1.0
    a = np.where(boost, shape + 1.0, shape)
    d = a - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    out = np.empty(shape.shape)
    pending = np.arange(shape.size)
    while pending.size:
        dp, cp = d[pending], c[pending]
        xn = rng.standard_normal(pending.size)
        u = rng.random(pending.size)
        v = (1.0 + cp * xn) ** 3
        ok = v > 0.0
        with np.errstate(invalid="ignore", divide="ignore"):
            accept = ok & (np.log(u) < 0.5 * xn * xn + dp - dp * v + dp * np.log(np.where(ok, v, 1.0)))
        out[pending[accept]] = dp[accept] * v[accept]
        pending = pending[~accept]
    if boost.any():
        u = rng.random(int(boost.sum()))
        out[boost] *= u ** (1.0 / shape[boost])
    return out


def zig_sample(params: ZigParams, rng: np.random.Generator, size=None):
    """Draw from the ZIG. Returns exactly 0.0 with probability ``p``.

    ``size`` defaults to the broadcast shape of the parameters.
    """
    p, k, theta = params.arrays()
    shape = p.shape if size is None else tuple(np.atleast_1d(size))
    p, k, theta = (np.broadcast_to(v, shape).ravel() for v in (p, k, theta))
    is_zero = rng.random(p.size) < p
    draws = _standard_gamma(k, rng) * theta
    return _out(np.where(is_zero, 0.0, draws).reshape(shape))


def nll_terms(x, raw, eps: float = LOSS_EPS):
    """Per-sample clamped negative log-likelihood and its gradient w.r.t. ``raw``.

    Returns ``(nll, grad)`` with shapes ``(N,)`` and ``(N, 3)``. Gradients are
    zero through any clamp that is active.
    """
    x = _check_obs(x)
    raw = np.asarray(raw, dtype=float)
    params = link_transform(raw)
    p_raw, k_raw, t_raw = params.arrays()
    p = np.clip(p_raw, eps, 1.0 - eps)
    k = np.maximum(k_raw, eps)
    theta = np.maximum(t_raw, eps)
    zero = x == 0.0
    xs = np.where(zero, 1.0, x)
    log_x = np.log(xs)
    nll = np.where(
        zero,
        -np.log(p),
        -(np.log1p(-p) + (k - 1.0) * log_x - xs / theta - k * np.log(theta) - log_gamma(k)),
    )
    # derivatives of nll w.r.t. the (clamped) constrained parameters
    d_p = np.where(zero, -1.0 / p, 1.0 / (1.0 - p))
    d_k = np.where(zero, 0.0, -(log_x - np.log(theta) - digamma(k)))
    d_t = np.where(zero, 0.0, -(xs / theta**2 - k / theta))
    d_p = d_p * ((p_raw > eps) & (p_raw < 1.0 - eps))
    d_k = d_k * (k_raw > eps)
    d_t = d_t * (t_raw > eps)
    # sigmoid' = p (1 - p), softplus' = sigmoid
    grad = np.stack(
        [d_p * p_raw * (1.0 - p_raw), d_k * sigmoid(raw[..., 1]), d_t * sigmoid(raw[..., 2])],
        axis=-1,
    )
    return nll, grad


def mean_nll(observations, raws) -> float:
    """Mean clamped negative log-likelihood of observations under linked raw outputs."""
    x = np.atleast_1d(np.asarray(observations, dtype=float))
    raws = np.atleast_2d(np.asarray(raws, dtype=float))
    if x.ndim != 1 or x.size == 0 or raws.shape != (x.size, 3):
        raise InvalidInputError(
            f"need N >= 1 observations and an (N, 3) raw array, got {x.shape} and {raws.shape}"
        )
    nll, _ = nll_terms(x, raws)
    return float(np.mean(nll))
