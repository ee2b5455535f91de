"""Multilayer perceptron emitting raw ZIG parameters, trained with Adam.

Weights are stored as ``(fan_in, fan_out)`` matrices so a batch ``X`` of
shape ``(N, fan_in)`` propagates as ``X @ W + b``.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InvalidInputError, LoadError
from .zig import nll_terms

log = logging.getLogger(__name__)

HIDDEN_WIDTHS = (20, 25, 30, 25)
MAX_DROPOUT = 0.08
SCHEMA_VERSION = 1
_CONST_STD = 1e-12


@dataclass
class Scaler:
    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray

    def transform(self, x):
        return (np.asarray(x, dtype=float) - self.mean) / self.std


def standardize_fit(raw_features) -> Scaler:
    """Column means and population standard deviations.

    Columns with std below 1e-12 get std 1 and are flagged constant.
    """
    x = np.asarray(raw_features, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise InvalidInputError("standardize_fit needs a 2-D matrix with at least 2 rows")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("feature matrix contains non-finite entries")
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    constant = std < _CONST_STD
    std = np.where(constant, 1.0, std)
    return Scaler(mean, std, constant)


@dataclass
class MlpModel:
    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "relu"
    dropout_rate: float = 0.0
    scaler: Scaler | None = None
    feature_names: list[str] = field(default_factory=list)
    schema_hash: str = ""

    def __post_init__(self):
        dims = self.layer_dims
        if dims[-1] != 3:
            raise InvalidInputError("output width must be 3")
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise InvalidInputError("one weight matrix and bias vector per layer required")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[i], dims[i + 1]) or b.shape != (dims[i + 1],):
                raise InvalidInputError(f"layer {i}: shape mismatch")
        if not 0.0 <= self.dropout_rate <= MAX_DROPOUT:
            raise InvalidInputError(f"dropout_rate must lie in [0, {MAX_DROPOUT}]")

    @property
    def n_inputs(self):
        return self.layer_dims[0]

    def params(self):
        return [*self.weights, *self.biases]

    def with_params(self, params):
        n = len(self.weights)
        return MlpModel(
            list(self.layer_dims), list(params[:n]), list(params[n:]), self.activation,
            self.dropout_rate, self.scaler, list(self.feature_names), self.schema_hash,
        )


def init_model(n_inputs, rng, hidden=HIDDEN_WIDTHS, dropout_rate=0.0, scaler=None, **kw) -> MlpModel:
    """Glorot-uniform weights, zero biases."""
    dims = [int(n_inputs), *hidden, 3]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(dims, weights, biases, dropout_rate=dropout_rate, scaler=scaler, **kw)


def _activate(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    raise InvalidInputError(f"unknown activation {kind!r}")


def _activate_grad(z, a, kind):
    if kind == "relu":
        return (z > 0.0).astype(float)
    return 1.0 - a * a


def _forward_cached(model, x, train_mode, rng):
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != model.n_inputs:
        raise InvalidInputError(f"expected inputs of width {model.n_inputs}, got shape {x.shape}")
    rate = model.dropout_rate if train_mode else 0.0
    if rate > 0.0 and rng is None:
        raise InvalidInputError("train_mode with dropout needs a random generator")
    cache = []
    h = x
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w + b
        if i == last:
            cache.append((h, z, None, None))
            return z, cache
        a = _activate(z, model.activation)
        mask = None
        if rate > 0.0:
            mask = (rng.random(a.shape) >= rate) / (1.0 - rate)
            a_out = a * mask
        else:
            a_out = a
        cache.append((h, z, a, mask))
        h = a_out


def forward(model: MlpModel, x, train_mode=False, rng=None):
    """Raw parameter triples for standardized inputs ``x`` (one row or a batch)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    out, _ = _forward_cached(model, np.atleast_2d(x), train_mode, rng)
    return out[0] if single else out


def predict_raw(model: MlpModel, raw_x):
    """Standardize unscaled features with the model's scaler, then run ``forward``."""
    if model.scaler is None:
        raise InvalidInputError("model has no scaler")
    return forward(model, model.scaler.transform(raw_x))


def backward(model, cache, grad_out):
    """Backpropagate ``d loss / d output`` through the cached forward pass.

    Returns ``(grad_weights, grad_biases, grad_input)``.
    """
    n = len(model.weights)
    gw, gb = [None] * n, [None] * n
    g = grad_out
    for i in range(n - 1, -1, -1):
        h, z, a, mask = cache[i]
        if i < n - 1:
            if mask is not None:
                g = g * mask
            g = g * _activate_grad(z, a, model.activation)
        gw[i] = h.T @ g
        gb[i] = g.sum(axis=0)
        g = g @ model.weights[i].T
    return gw, gb, g


def loss_and_gradients(model: MlpModel, batch_x, batch_y, train_mode=False, rng=None):
    """Mean ZIG NLL over the batch and its exact gradient for every weight and bias.

    A diverged network (non-finite outputs) yields ``(nan, None)``.
    """
    y = np.asarray(batch_y, dtype=float)
    batch_x = np.asarray(batch_x, dtype=float)
    if y.ndim != 1 or y.size == 0 or batch_x.shape[0] != y.size:
        raise InvalidInputError("batch must be non-empty with one target per row")
    raw, cache = _forward_cached(model, batch_x, train_mode, rng)
    if not np.all(np.isfinite(raw)):
        return math.nan, None
    nll, d_raw = nll_terms(y, raw)
    gw, gb, _ = backward(model, cache, d_raw / y.size)
    return float(nll.mean()), gw + gb


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params):
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], 0)


def adam_step(params, gradients, state: AdamState, learning_rate,
              beta1=0.9, beta2=0.999, eps=1e-8):
    t = state.t + 1
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, gradients, state.m, state.v):
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        new_params.append(p - learning_rate * m_hat / (np.sqrt(v_hat) + eps))
        new_m.append(m)
        new_v.append(v)
    return new_params, AdamState(new_m, new_v, t)


@dataclass
class TrainConfig:
    batch_size: int = 256
    initial_learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    max_epochs: int = 200
    early_stop_patience: int = 10
    lr_reduce_factor: float = 0.5
    lr_reduce_patience: int = 5
    dropout_grid: list[float] = field(default_factory=lambda: [0.0, 0.02, 0.04, 0.06, 0.08])
    seed: int = 0
    hidden_widths: list[int] = field(default_factory=lambda: list(HIDDEN_WIDTHS))

    def __post_init__(self):
        if any(not 0.0 <= d <= MAX_DROPOUT for d in self.dropout_grid):
            raise InvalidInputError(f"dropout_grid values must lie in [0, {MAX_DROPOUT}]")
        if not self.dropout_grid:
            raise InvalidInputError("dropout_grid is empty")
        if not 0.0 < self.lr_reduce_factor < 1.0:
            raise InvalidInputError("lr_reduce_factor must lie in (0, 1)")
        for name in ("batch_size", "max_epochs", "early_stop_patience", "lr_reduce_patience"):
            if getattr(self, name) < 1:
                raise InvalidInputError(f"{name} must be positive")

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise InvalidInputError(f"unknown TrainConfig fields: {sorted(unknown)}")
        return cls(**d)


@dataclass
class TrainHistory:
    train_nll: list[float] = field(default_factory=list)
    val_nll: list[float] = field(default_factory=list)
    learning_rate: list[float] = field(default_factory=list)
    selected: list[bool] = field(default_factory=list)
    dropout_rate: float = 0.0
    grid: list[dict] = field(default_factory=list)

    @property
    def selected_epoch(self):
        return self.selected.index(True) if True in self.selected else None

    def to_dict(self):
        return asdict(self)


def _train_one(scaled_train, train_y, scaled_val, val_y, config, dropout, rng, n_inputs, init_kw):
    model = init_model(n_inputs, rng, hidden=config.hidden_widths, dropout_rate=dropout, **init_kw)
    params = model.params()
    state = AdamState.zeros_like(params)
    lr = config.initial_learning_rate
    hist = TrainHistory(dropout_rate=dropout)
    best_val, best_params, best_epoch = math.inf, params, -1
    since_best = since_lr = 0
    n = scaled_train.shape[0]
    for epoch in range(config.max_epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, grads = loss_and_gradients(
                model, scaled_train[idx], train_y[idx], train_mode=True, rng=rng
            )
            if not math.isfinite(loss):
                raise FloatingPointError(f"non-finite training loss at epoch {epoch}")
            total += loss * idx.size
            params, state = adam_step(
                params, grads, state, lr, config.adam_beta1, config.adam_beta2, config.adam_epsilon
            )
            model = model.with_params(params)
        val = validation_nll(model, scaled_val, val_y)
        if not math.isfinite(val):
            raise FloatingPointError(f"non-finite validation loss at epoch {epoch}")
        hist.train_nll.append(total / n)
        hist.val_nll.append(val)
        hist.learning_rate.append(lr)
        if val < best_val:
            best_val, best_params, best_epoch = val, params, epoch
            since_best = since_lr = 0
        else:
            since_best += 1
            since_lr += 1
            if since_best >= config.early_stop_patience:
                break
            if since_lr >= config.lr_reduce_patience:
                lr *= config.lr_reduce_factor
                since_lr = 0
    hist.selected = [e == best_epoch for e in range(len(hist.val_nll))]
    return model.with_params(best_params), hist, best_val


def validation_nll(model, scaled_x, y):
    raw = forward(model, scaled_x)
    if not np.all(np.isfinite(raw)):
        return math.nan
    nll, _ = nll_terms(np.asarray(y, dtype=float), raw)
    return float(nll.mean())


def fit(train_x, train_y, val_x, val_y, config: TrainConfig | None = None,
        feature_names=None, schema_hash=""):
    """Train one model per dropout value and keep the best on validation NLL.

    ``train_x`` and ``val_x`` are unscaled; the scaler is fitted on ``train_x``
    and stored in the returned model.
    """
    config = config or TrainConfig()
    train_x = np.asarray(train_x, dtype=float)
    val_x = np.asarray(val_x, dtype=float)
    train_y = np.asarray(train_y, dtype=float)
    val_y = np.asarray(val_y, dtype=float)
    if train_x.shape[0] == 0 or val_x.shape[0] == 0:
        raise InvalidInputError("train and validation sets must be non-empty")
    if train_x.ndim != 2 or val_x.ndim != 2 or train_x.shape[1] != val_x.shape[1]:
        raise InvalidInputError("train and validation feature widths differ")
    if train_y.shape != (train_x.shape[0],) or val_y.shape != (val_x.shape[0],):
        raise InvalidInputError("one target per feature row required")
    scaler = standardize_fit(train_x)
    scaled_train = scaler.transform(train_x)
    scaled_val = scaler.transform(val_x)
    init_kw = dict(scaler=scaler, feature_names=list(feature_names or []), schema_hash=schema_hash)
    seeds = np.random.SeedSequence(config.seed).spawn(len(config.dropout_grid))
    best = None
    grid = []
    for dropout, seed in zip(config.dropout_grid, seeds):
        rng = np.random.default_rng(seed)
        try:
            model, hist, val = _train_one(
                scaled_train, train_y, scaled_val, val_y, config, dropout, rng,
                train_x.shape[1], init_kw,
            )
        except FloatingPointError as exc:
            log.warning("dropout %.3f aborted: %s", dropout, exc)
            grid.append({"dropout_rate": dropout, "status": "failed", "reason": str(exc)})
            continue
        grid.append({"dropout_rate": dropout, "status": "ok", "best_val_nll": val,
                     "epochs": len(hist.val_nll)})
        log.info("dropout %.3f: best validation NLL %.5f", dropout, val)
        if best is None or val < best[2]:
            best = (model, hist, val)
    if best is None:
        raise FloatingPointError("training failed for every dropout value")
    model, hist, _ = best
    hist.grid = grid
    return model, hist


def _to_list(a):
    return np.asarray(a, dtype=float).tolist()


def model_to_dict(model: MlpModel) -> dict:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "layer_dims": list(map(int, model.layer_dims)),
        "activation": model.activation,
        "dropout_rate": float(model.dropout_rate),
        "feature_names": list(model.feature_names),
        "schema_hash": model.schema_hash,
        "layers": [{"weights": _to_list(w), "bias": _to_list(b)}
                   for w, b in zip(model.weights, model.biases)],
        "scaler": None,
    }
    if model.scaler is not None:
        doc["scaler"] = {
            "mean": _to_list(model.scaler.mean),
            "std": _to_list(model.scaler.std),
            "constant": [bool(c) for c in model.scaler.constant],
        }
    return doc


def save_model(model: MlpModel) -> str:
    """Serialize to a versioned JSON document (floats round-trip exactly)."""
    return json.dumps(model_to_dict(model), indent=1, sort_keys=True) + "\n"


def _req(doc, key, path):
    if not isinstance(doc, dict) or key not in doc:
        raise LoadError(f"{path}.{key}" if path else key, "missing field")
    return doc[key]


def load_model(document: str | dict) -> MlpModel:
    doc = json.loads(document) if isinstance(document, str) else document
    version = _req(doc, "schema_version", "")
    if version != SCHEMA_VERSION:
        raise LoadError("schema_version", f"expected {SCHEMA_VERSION}, got {version!r}")
    dims = [int(d) for d in _req(doc, "layer_dims", "")]
    layers = _req(doc, "layers", "")
    if len(layers) != len(dims) - 1:
        raise LoadError("layers", f"expected {len(dims) - 1} layers, got {len(layers)}")
    weights, biases = [], []
    for i, layer in enumerate(layers):
        w = np.asarray(_req(layer, "weights", f"layers[{i}]"), dtype=float)
        b = np.asarray(_req(layer, "bias", f"layers[{i}]"), dtype=float)
        if w.shape != (dims[i], dims[i + 1]):
            raise LoadError(f"layers[{i}].weights",
                            f"shape {w.shape} does not match ({dims[i]}, {dims[i + 1]})")
        if b.shape != (dims[i + 1],):
            raise LoadError(f"layers[{i}].bias", f"shape {b.shape} does not match ({dims[i + 1]},)")
        weights.append(w)
        biases.append(b)
    scaler = None
    sdoc = doc.get("scaler")
    if sdoc is not None:
        mean = np.asarray(_req(sdoc, "mean", "scaler"), dtype=float)
        std = np.asarray(_req(sdoc, "std", "scaler"), dtype=float)
        const = np.asarray(_req(sdoc, "constant", "scaler"), dtype=bool)
        for name, arr in (("mean", mean), ("std", std), ("constant", const)):
            if arr.shape != (dims[0],):
                raise LoadError(f"scaler.{name}", f"length {arr.shape} does not match input width {dims[0]}")
        if np.any(std <= 0):
            raise LoadError("scaler.std", "entries must be positive")
        scaler = Scaler(mean, std, const)
    try:
        return MlpModel(
            dims, weights, biases, doc.get("activation", "relu"), float(doc.get("dropout_rate", 0.0)),
            scaler, list(doc.get("feature_names", [])), doc.get("schema_hash", ""),
        )
    except InvalidInputError as exc:
        raise LoadError("model", str(exc)) from exc
