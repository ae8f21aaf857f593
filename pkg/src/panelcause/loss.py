"""Quintile-bias-penalized training objective for a surrogate outcome
predictor, plus the slope diagnostics for compression-type measurement error.

MSE-trained predictors compress the outcome distribution (over-predict low,
under-predict high); a downstream difference-in-differences then shrinks by
the slope of predicted-on-observed. The penalty here targets the worst
per-quintile mean bias so that slope stays near 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .util import child_rng
from .wealth import quintile_bounds, quintile_of


@dataclass
class LossConfig:
    lambda_r: float = 1e-4        # L2 weight penalty
    lambda_b: float = 5.0         # worst-quintile-bias penalty
    batch_size: int = 90
    learning_rate: float = 1e-4
    decay: float = 0.96           # per-epoch learning-rate multiplier
    epochs: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.lambda_r < 0 or self.lambda_b < 0:
            raise ValueError("penalty weights must be non-negative")
        if self.batch_size < 5:
            raise ValueError("batch_size must be at least 5")
        if self.learning_rate <= 0 or not (0 < self.decay <= 1):
            raise ValueError("bad learning-rate schedule")


@dataclass
class BerksonMap:
    """Linear measurement map y' = alpha + phi * y."""
    alpha: float
    phi: float

    def apply(self, values):
        return self.alpha + self.phi * np.asarray(values, dtype=float)


def berkson_dd_bias(beta: float, phi: float) -> float:
    """DD estimate recovered from outcomes measured through y' = a + phi*y.

    Level error cancels in the double difference; only the slope survives,
    scaling the estimate to phi*beta.
    """
    return phi * beta


def sample_quintile_bias(preds, labels, cuts) -> np.ndarray:
    """Mean (pred - label) within each label quintile; NaN where a quintile
    has no samples (such entries are excluded from the max penalty)."""
    preds = np.asarray(preds, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if preds.shape != labels.shape:
        raise ValueError("preds/labels length mismatch")
    q = quintile_of(labels, cuts)
    out = np.full(5, np.nan)
    diff = preds - labels
    for j in range(5):
        sel = q == j
        if np.any(sel):
            out[j] = diff[sel].mean()
    return out


def custom_loss(preds, labels, parameters, config: LossConfig, cuts=None):
    """Total minibatch loss and its components.

    total = MSE + lambda_r * sum(parameters^2) + lambda_b * max_j(bias_j^2),
    with parameters the penalized weights (intercept excluded by the caller)
    and the max taken over non-empty quintiles. Returns (total, components).
    """
    preds = np.asarray(preds, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if preds.size == 0:
        raise ValueError("empty minibatch")
    if cuts is None:
        cuts = quintile_bounds(labels)
    mse = float(np.mean((preds - labels) ** 2))
    l2 = float(np.sum(np.square(np.asarray(parameters, dtype=float))))
    biases = sample_quintile_bias(preds, labels, cuts)
    finite = np.isfinite(biases)
    eb = float(np.max(biases[finite] ** 2)) if np.any(finite) else 0.0
    total = mse + config.lambda_r * l2 + config.lambda_b * eb
    comps = {"mse": mse, "l2": l2, "eb": eb, "total": total}
    return total, comps


def _dloss_dpred(preds, labels, cuts, config):
    """Gradient of MSE + lambda_b * max-quintile-bias^2 w.r.t. predictions.

    The max term is non-smooth at argmax ties; the subgradient follows the
    lowest-index maximizing quintile.
    """
    k = preds.size
    grad = 2.0 * (preds - labels) / k
    if config.lambda_b > 0:
        biases = sample_quintile_bias(preds, labels, cuts)
        sq = np.where(np.isfinite(biases), biases ** 2, -np.inf)
        j = int(np.argmax(sq))  # argmax takes the first maximizer
        sel = quintile_of(labels, cuts) == j
        n_j = int(np.count_nonzero(sel))
        grad[sel] += config.lambda_b * 2.0 * biases[j] / n_j
    return grad


class _Linear:
    def __init__(self, d, rng=None):
        self.w = np.zeros(d)
        self.b = 0.0

    def predict(self, x):
        return x @ self.w + self.b

    def penalized(self):
        return self.w

    def loss_grad(self, x, y, cuts, config):
        preds = self.predict(x)
        total, comps = custom_loss(preds, y, self.penalized(), config, cuts)
        d = _dloss_dpred(preds, y, cuts, config)
        gw = x.T @ d + config.lambda_r * 2.0 * self.w
        gb = float(d.sum())
        return total, comps, {"w": gw, "b": gb}

    def step(self, grads, lr):
        self.w -= lr * grads["w"]
        self.b -= lr * grads["b"]

    def params(self):
        return {"w": self.w.copy(), "b": self.b}


class _OneHidden:
    """Single hidden layer, tanh activation; exercises nonconvex training."""

    def __init__(self, d, rng, width=32):
        self.w1 = rng.normal(0.0, 1.0 / np.sqrt(d), (d, width))
        self.b1 = np.zeros(width)
        self.w2 = rng.normal(0.0, 1.0 / np.sqrt(width), width)
        self.b2 = 0.0

    def _hidden(self, x):
        return np.tanh(x @ self.w1 + self.b1)

    def predict(self, x):
        return self._hidden(x) @ self.w2 + self.b2

    def penalized(self):
        return np.concatenate([self.w1.ravel(), self.w2])

    def loss_grad(self, x, y, cuts, config):
        h = self._hidden(x)
        preds = h @ self.w2 + self.b2
        total, comps = custom_loss(preds, y, self.penalized(), config, cuts)
        d = _dloss_dpred(preds, y, cuts, config)
        gw2 = h.T @ d + config.lambda_r * 2.0 * self.w2
        gb2 = float(d.sum())
        dh = np.outer(d, self.w2) * (1.0 - h ** 2)
        gw1 = x.T @ dh + config.lambda_r * 2.0 * self.w1
        gb1 = dh.sum(axis=0)
        return total, comps, {"w1": gw1, "b1": gb1, "w2": gw2, "b2": gb2}

    def step(self, grads, lr):
        self.w1 -= lr * grads["w1"]
        self.b1 -= lr * grads["b1"]
        self.w2 -= lr * grads["w2"]
        self.b2 -= lr * grads["b2"]

    def params(self):
        return {"w1": self.w1.copy(), "b1": self.b1.copy(),
                "w2": self.w2.copy(), "b2": self.b2}


@dataclass
class SurrogateModel:
    kind: str                      # "linear" | "one_hidden"
    parameters: dict
    quintile_cuts: np.ndarray
    training_history: list = field(default_factory=list)

    def predict(self, features) -> np.ndarray:
        x = np.asarray(features, dtype=float)
        p = self.parameters
        if self.kind == "linear":
            return x @ p["w"] + p["b"]
        return np.tanh(x @ p["w1"] + p["b1"]) @ p["w2"] + p["b2"]


def train_surrogate(features, labels, config: LossConfig,
                    hidden: int = 0) -> SurrogateModel:
    """Minibatch gradient descent on the penalized loss.

    Quintile cuts are computed once from all training labels and frozen; the
    learning rate decays by config.decay each epoch. Deterministic for a
    given config.seed.
    """
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    n = x.shape[0]
    if n < config.batch_size:
        raise ValueError("fewer samples than one minibatch")
    if np.std(y) == 0:
        raise ValueError("labels are constant")
    cuts = quintile_bounds(y)
    if hidden:
        model = _OneHidden(x.shape[1], child_rng(config.seed, 1), width=hidden)
        kind = "one_hidden"
    else:
        model = _Linear(x.shape[1])
        kind = "linear"
    order_rng = child_rng(config.seed, 0)
    history = []
    for epoch in range(config.epochs):
        lr = config.learning_rate * config.decay ** epoch
        perm = order_rng.permutation(n)
        for lo in range(0, n, config.batch_size):
            sel = perm[lo:lo + config.batch_size]
            total, _, grads = model.loss_grad(x[sel], y[sel], cuts, config)
            if not np.isfinite(total):
                raise RuntimeError(
                    f"training diverged at epoch {epoch} (non-finite loss)")
            model.step(grads, lr)
        _, comps, _ = model.loss_grad(x, y, cuts, config)
        history.append({"epoch": epoch, **comps})
    return SurrogateModel(kind, model.params(), cuts, history)


def slope_diagnostic(preds, labels) -> tuple[float, float]:
    """OLS of predictions on observed labels: (slope, r-squared)."""
    preds = np.asarray(preds, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if preds.size < 3:
        raise ValueError("need at least three points")
    var_l = labels.var()
    if var_l == 0:
        raise ValueError("labels are constant")
    cov = np.mean((preds - preds.mean()) * (labels - labels.mean()))
    slope = cov / var_l
    var_p = preds.var()
    r2 = 0.0 if var_p == 0 else float(cov ** 2 / (var_l * var_p))
    return float(slope), r2


def hetero_task(n_train: int, n_val: int, n_features: int = 4, seed: int = 0):
    """Synthetic prediction task with signal-dependent noise.

    Labels are a unit-variance linear signal plus noise whose spread grows
    with the signal, so an MSE-optimal fit compresses the label distribution
    (fitted slope of predicted-on-observed well below 1). Returns
    ((x_train, y_train), (x_val, y_val)).
    """
    rng = child_rng(seed, 2)
    n = n_train + n_val
    x = rng.normal(0.0, 1.0, (n, n_features))
    theta = np.ones(n_features) / np.sqrt(n_features)
    z = x @ theta
    noise_sd = 0.55 + 0.45 / (1.0 + np.exp(-2.0 * z))
    y = z + rng.normal(0.0, 1.0, n) * noise_sd
    return (x[:n_train], y[:n_train]), (x[n_train:], y[n_train:])


def sweep_lambda_b(train_xy, val_xy, lambda_bs, config: LossConfig,
                   hidden: int = 0):
    """Train per bias-penalty value; report (lambda_b, phi, r2) on validation.

    The preferred penalty is the one with fitted slope closest to 1 (a pure
    MSE search would always return 0).
    """
    x, y = train_xy
    xv, yv = val_xy
    records = []
    for lb in lambda_bs:
        cfg = LossConfig(lambda_r=config.lambda_r, lambda_b=float(lb),
                         batch_size=config.batch_size,
                         learning_rate=config.learning_rate, decay=config.decay,
                         epochs=config.epochs, seed=config.seed)
        model = train_surrogate(x, y, cfg, hidden=hidden)
        phi, r2 = slope_diagnostic(model.predict(xv), yv)
        records.append({"lambda_b": float(lb), "phi": phi, "r2": r2,
                        "model": model})
    best = min(records, key=lambda r: abs(r["phi"] - 1.0))
    return records, best["lambda_b"]
