"""Backtest metrics and diagnostics for fitted ZIG models."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd

from .errors import DomainError, InvalidInputError, JoinError
from .nn import MlpModel, _forward_cached, backward, predict_raw
from .zig import ZigParams, link_transform, mean_nll, regularized_lower_incomplete_gamma, sigmoid, zig_cdf, zig_mean

QUANTILE_LEVELS = (0.05, 0.25, 0.5, 0.75, 0.95)
QUANTILE_TOL = 1e-9


def _pair(predictions, observations):
    pred = np.asarray(predictions, dtype=float).ravel()
    obs = np.asarray(observations, dtype=float).ravel()
    if pred.shape != obs.shape:
        raise InvalidInputError(f"length mismatch: {pred.size} predictions vs {obs.size} observations")
    return pred, obs


def rmse(predictions, observations) -> float:
    pred, obs = _pair(predictions, observations)
    if pred.size == 0:
        raise InvalidInputError("rmse of an empty sequence")
    return float(np.sqrt(np.mean((pred - obs) ** 2)))


def pct_diff(rmse_baseline: float, rmse_model: float) -> float:
    """Percent RMSE reduction relative to the baseline; positive means the model wins."""
    if not rmse_baseline > 0:
        raise DomainError("baseline RMSE must be positive")
    return 100.0 * (rmse_baseline - rmse_model) / rmse_baseline


def boxplot_stats(values) -> dict:
    """Median, quartiles (linear interpolation), 1.5 IQR whiskers and outlier count."""
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if v.size == 0:
        return {"n": 0, "median": None, "q1": None, "q3": None, "whisker_low": None,
                "whisker_high": None, "outliers": 0}
    q1, med, q3 = (float(x) for x in np.quantile(v, [0.25, 0.5, 0.75]))
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = v[(v >= lo_fence) & (v <= hi_fence)]
    return {
        "n": int(v.size),
        "median": med,
        "q1": q1,
        "q3": q3,
        "whisker_low": float(inside.min()),
        "whisker_high": float(inside.max()),
        "outliers": int(v.size - inside.size),
    }


def segment_errors(predictions, observations) -> dict:
    """Errors (prediction - observation) overall and split by zero / nonzero observation."""
    pred, obs = _pair(predictions, observations)
    err = pred - obs
    zero = obs == 0.0
    return {
        "all": boxplot_stats(err),
        "nonzero": boxplot_stats(err[~zero]),
        "zero": boxplot_stats(err[zero]),
    }


def pit_values(params: ZigParams, observations, rng: np.random.Generator, randomized=True):
    """Predictive CDF at each observation.

    Zero observations draw u uniformly on [0, p] when ``randomized``;
    otherwise they map to p.
    """
    x = np.asarray(observations, dtype=float).ravel()
    p, k, theta = (np.broadcast_to(a, x.shape) for a in params.arrays())
    u = np.asarray(zig_cdf(x, ZigParams(p, k, theta)), dtype=float).reshape(x.shape)
    if randomized:
        draws = rng.random(x.size)
        u = np.where(x == 0.0, draws * p, u)
    return u


def ks_statistic(values) -> float:
    """Two-sided Kolmogorov-Smirnov distance to the uniform distribution on [0, 1]."""
    u = np.sort(np.asarray(values, dtype=float).ravel())
    if u.size == 0:
        raise InvalidInputError("ks_statistic needs at least one value")
    if np.any((u < 0.0) | (u > 1.0)) or np.any(np.isnan(u)):
        raise DomainError("values must lie in [0, 1]")
    n = u.size
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - u), np.max(u - (i - 1) / n)))


def zig_quantile(q, params: ZigParams, tol=QUANTILE_TOL):
    """Invert the ZIG CDF by bisection; levels at or below p map to 0."""
    q = np.asarray(q, dtype=float)
    p, k, theta = (np.asarray(a, dtype=float) for a in params.arrays())
    q, p, k, theta = np.broadcast_arrays(q, p, k, theta)
    if np.any((q < 0.0) | (q >= 1.0)):
        raise DomainError("quantile level must lie in [0, 1)")
    target = np.where(q > p, (q - p) / np.where(p < 1.0, 1.0 - p, 1.0), 0.0)
    # quantile of the gamma part in units of theta
    lo = np.zeros(q.shape)
    hi = np.maximum(k, 1.0) * 2.0
    while True:
        short = np.asarray(regularized_lower_incomplete_gamma(k, hi)) < target
        if not short.any():
            break
        hi = np.where(short, hi * 2.0, hi)
    while True:
        active = (hi - lo) * theta > tol * np.maximum(1.0, hi * theta)
        if not active.any():
            break
        mid = 0.5 * (lo + hi)
        below = np.asarray(regularized_lower_incomplete_gamma(k, mid)) < target
        lo = np.where(active & below, mid, lo)
        hi = np.where(active & ~below, mid, hi)
    out = np.where(q > p, 0.5 * (lo + hi) * theta, 0.0)
    return out.item() if out.ndim == 0 else out


def mean_input_gradient(model: MlpModel, scaled_x):
    """d E[x] / d input for each row, through the linked mean (1 - p) k theta."""
    raw, cache = _forward_cached(model, np.atleast_2d(np.asarray(scaled_x, dtype=float)), False, None)
    params = link_transform(raw)
    p, k, theta = params.arrays()
    d_raw = np.stack([
        -p * (1.0 - p) * k * theta,
        (1.0 - p) * theta * sigmoid(raw[:, 1]),
        (1.0 - p) * k * sigmoid(raw[:, 2]),
    ], axis=-1)
    _, _, g_in = backward(model, cache, d_raw)
    return g_in


@dataclass
class Importance:
    names: list[str]
    sensitivities: np.ndarray  # (rows, features), w.r.t. standardized inputs
    stats: dict = field(default_factory=dict)
    ranking: list[str] = field(default_factory=list)

    def frame(self) -> pd.DataFrame:
        rows = []
        for rank, name in enumerate(self.ranking, 1):
            s = self.stats[name]
            rows.append({"rank": rank, "feature": name, "median_abs": s["median_abs"],
                         **{k: v for k, v in s.items() if k != "median_abs"}})
        return pd.DataFrame(rows)


def feature_importance(model: MlpModel, test_x, schema=None, standardized=False) -> Importance:
    """Gradient of the predictive mean w.r.t. each standardized feature, per row.

    Features are ranked by median absolute sensitivity (ties by schema order).
    """
    x = np.atleast_2d(np.asarray(test_x, dtype=float))
    names = list(schema.names) if schema is not None else list(model.feature_names)
    if not names:
        names = [f"x{j}" for j in range(model.n_inputs)]
    if len(names) != model.n_inputs or x.shape[1] != model.n_inputs:
        raise InvalidInputError(
            f"schema width {len(names)} / data width {x.shape[1]} vs model input width {model.n_inputs}")
    if schema is not None and model.schema_hash and schema.hash != model.schema_hash:
        raise InvalidInputError("schema hash does not match the model")
    if not standardized:
        if model.scaler is None:
            raise InvalidInputError("model has no scaler for unscaled inputs")
        x = model.scaler.transform(x)
    sens = mean_input_gradient(model, x)
    stats = {}
    for j, name in enumerate(names):
        s = boxplot_stats(sens[:, j])
        s["median_abs"] = float(np.median(np.abs(sens[:, j])))
        stats[name] = s
    order = sorted(range(len(names)), key=lambda j: (-stats[names[j]]["median_abs"], j))
    return Importance(names, sens, stats, [names[j] for j in order])


@dataclass
class BacktestReport:
    n: int
    rmse_model: float
    mean_nll: float
    ks_statistic: float
    ks_statistic_deterministic: float
    segments: dict
    rmse_baseline: float | None = None
    pct_diff: float | None = None
    n_excluded: int = 0
    schema_hash: str = ""

    def to_dict(self):
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"


KEY = ["building_id", "timestamp"]


def _check_keys(left, right, what):
    lk = set(map(tuple, left[KEY].astype(str).to_numpy()))
    rk = set(map(tuple, right[KEY].astype(str).to_numpy()))
    orphans = sorted(lk ^ rk)
    if orphans:
        raise JoinError(orphans, f"{what}: {len(orphans)} orphan keys, e.g. {orphans[:5]}")


def backtest_report(model: MlpModel, features: pd.DataFrame, observations: pd.DataFrame,
                    baseline: pd.DataFrame | None = None, schema=None, seed: int = 0,
                    quantiles=QUANTILE_LEVELS):
    """Score a model on keyed test data.

    ``features`` holds ``building_id, timestamp`` plus one column per model
    feature; ``observations`` holds ``building_id, timestamp, value``;
    ``baseline`` (optional) holds ``building_id, timestamp, baseline``. With a
    baseline, scoring is restricted to the keys it covers.

    Returns ``(report, per_hour_frame, pit)``.
    """
    names = list(schema.names) if schema is not None else list(model.feature_names)
    if schema is not None and model.schema_hash and schema.hash != model.schema_hash:
        raise InvalidInputError("schema hash does not match the model")
    missing = [c for c in names if c not in features.columns]
    if missing or len(names) != model.n_inputs:
        raise InvalidInputError(f"feature columns do not match the model: missing {missing[:5]}")
    _check_keys(features, observations, "features vs observations")
    df = features.merge(observations[KEY + ["value"]], on=KEY, how="inner")
    n_total = len(df)
    if baseline is not None:
        extra = set(map(tuple, baseline[KEY].astype(str).to_numpy())) - set(
            map(tuple, df[KEY].astype(str).to_numpy()))
        if extra:
            extra = sorted(extra)
            raise JoinError(extra, f"baseline: {len(extra)} orphan keys, e.g. {extra[:5]}")
        df = df.merge(baseline[KEY + ["baseline"]], on=KEY, how="inner")
    df = df.sort_values(KEY, kind="stable").reset_index(drop=True)
    if len(df) == 0:
        raise InvalidInputError("nothing to evaluate after joining")
    raw = predict_raw(model, df[names].to_numpy(dtype=float))
    params = link_transform(raw)
    obs = df["value"].to_numpy(dtype=float)
    mean = np.asarray(zig_mean(params))
    rng = np.random.default_rng(seed)
    pit = pit_values(params, obs, rng)
    pit_det = pit_values(params, obs, rng, randomized=False)
    report = BacktestReport(
        n=int(len(df)),
        rmse_model=rmse(mean, obs),
        mean_nll=mean_nll(obs, raw),
        ks_statistic=ks_statistic(pit),
        ks_statistic_deterministic=ks_statistic(pit_det),
        segments=segment_errors(mean, obs),
        n_excluded=int(n_total - len(df)),
        schema_hash=model.schema_hash,
    )
    out = df[KEY].copy()
    out["observed"] = obs
    out["mean"] = mean
    for q in quantiles:
        out[f"q{int(round(q * 100)):02d}"] = zig_quantile(q, params)
    if baseline is not None:
        b = df["baseline"].to_numpy(dtype=float)
        out["baseline"] = b
        report.rmse_baseline = rmse(b, obs)
        report.pct_diff = pct_diff(report.rmse_baseline, report.rmse_model)
    out["pit"] = pit
    return report, out, pit

