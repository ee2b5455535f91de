"""Train the MLP on data with a known generating model and compare to the truth.

Run: python3 demos/02_train_planted.py   (about 10 s)
"""
import numpy as np

from zigcast.nn import TrainConfig, fit, load_model, predict_raw, save_model
from zigcast.synth import planted_corpus
from zigcast.zig import link_transform, mean_nll, zig_mean

# %% Ten Gaussian features; raw ZIG parameters are a fixed linear map of them.
x, y, raw_true = planted_corpus(12_000, n_features=10, seed=1)
tr, va, te = slice(0, 8000), slice(8000, 10_000), slice(10_000, 12_000)
print(f"zero fraction in labels: {np.mean(y == 0):.3f}")

# %% Grid over two dropout rates; early stopping keeps the best epoch of each.
config = TrainConfig(dropout_grid=[0.0, 0.04], max_epochs=60, seed=0)
model, history = fit(x[tr], y[tr], x[va], y[va], config)
for g in history.grid:
    print(g)
print("selected dropout", model.dropout_rate, "at epoch", history.selected_epoch)

# %% Held-out comparison against the generating model.
raw_fit = predict_raw(model, x[te])
print(f"test NLL  fitted {mean_nll(y[te], raw_fit):.4f}   truth {mean_nll(y[te], raw_true[te]):.4f}")
rmse = lambda raw: np.sqrt(np.mean((zig_mean(link_transform(raw)) - y[te]) ** 2))
print(f"test RMSE fitted {rmse(raw_fit):.4f}   truth {rmse(raw_true[te]):.4f}")

# %% The model serializes to JSON, scaler included.
again = load_model(save_model(model))
assert np.array_equal(predict_raw(again, x[te]), raw_fit)
print("JSON round trip reproduces predictions exactly")
