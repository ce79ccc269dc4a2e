"""Per-operator-kind cost multiplier classifiers and their uncertainty scores.

Each model is a small fully connected network (two ReLU hidden layers of 64
units, inverted dropout p=0.1 after each) ending in a 37-way softmax over the
multiplier grid

    {0.01..0.09 step .01} u {0.1..0.9 step .1} u {1..9 step 1} u {10..100 step 10},

a non-uniform quantization that is dense near 1x and coarse at the extremes.
The output head starts at zero so an untrained model is exactly uniform.
Training is online: labels enter a 512-slot FIFO replay buffer and every
update runs a few epochs of minibatch cross-entropy with Adam.

Uncertainty combines the softmax entropy of a dropout-off prediction with the
maximum per-class variance across repeated dropout-on passes:

    U = mix_weight * mcd + (1 - mix_weight) * entropy.

The dropout masks used for the variance estimate derive from (model seed,
training step, encoding digest), so the score is a pure function of model
state and input.
"""

import json
import math
import zlib
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ContractError
from .seeding import rng_for

N_CLASSES = 37


def _build_grid() -> np.ndarray:
    values = [i / 100 for i in range(1, 10)]
    values += [i / 10 for i in range(1, 10)]
    values += [float(i) for i in range(1, 10)]
    values += [float(10 * i) for i in range(1, 11)]
    grid = np.array(values)
    grid.setflags(write=False)
    return grid


MULTIPLIER_GRID = _build_grid()
_LOG_GRID = np.log(MULTIPLIER_GRID)


def nearest_bucket_index(value: float) -> int:
    """Grid index whose multiplier is nearest in log space."""
    if value <= 0:
        raise ConfigurationError("multiplier must be positive")
    return int(np.argmin(np.abs(_LOG_GRID - math.log(value))))


class CostMultiplierModel:
    """MLP classifier over the multiplier grid for one operator kind."""

    def __init__(
        self,
        input_dim: int,
        seed: int,
        hidden_units: int = 64,
        dropout_rate: float = 0.1,
        learning_rate: float = 1e-3,
        batch_size: int = 32,
        epochs: int = 5,
        replay_capacity: int = 512,
    ):
        self.input_dim = input_dim
        self.seed = seed
        self.hidden_units = hidden_units
        self.dropout_rate = dropout_rate
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.rng = rng_for(seed, "model")
        h = hidden_units
        self.params = {
            "W1": self.rng.normal(0.0, math.sqrt(2.0 / input_dim), (input_dim, h)),
            "b1": np.zeros(h),
            "W2": self.rng.normal(0.0, math.sqrt(2.0 / h), (h, h)),
            "b2": np.zeros(h),
            # zero head: pre-training softmax is exactly uniform
            "W3": np.zeros((h, N_CLASSES)),
            "b3": np.zeros(N_CLASSES),
        }
        self._adam_m = {k: np.zeros_like(v) for k, v in self.params.items()}
        self._adam_v = {k: np.zeros_like(v) for k, v in self.params.items()}
        self._adam_t = 0
        self.step_count = 0
        self.buffer = deque(maxlen=replay_capacity)

    def _check_input(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.input_dim:
            raise ValueError(
                f"encoding length {X.shape[1]} does not match model "
                f"input dim {self.input_dim}"
            )
        return X

    def _forward(self, X, drop_rng=None):
        p = self.dropout_rate
        cache = {"X": X}
        z1 = X @ self.params["W1"] + self.params["b1"]
        h1 = np.maximum(z1, 0.0)
        if drop_rng is not None and p > 0.0:
            m1 = (drop_rng.random(h1.shape) >= p) / (1.0 - p)
        else:
            m1 = None
        a1 = h1 if m1 is None else h1 * m1
        z2 = a1 @ self.params["W2"] + self.params["b2"]
        h2 = np.maximum(z2, 0.0)
        if drop_rng is not None and p > 0.0:
            m2 = (drop_rng.random(h2.shape) >= p) / (1.0 - p)
        else:
            m2 = None
        a2 = h2 if m2 is None else h2 * m2
        logits = a2 @ self.params["W3"] + self.params["b3"]
        shifted = logits - logits.max(axis=1, keepdims=True)
        exp = np.exp(shifted)
        probs = exp / exp.sum(axis=1, keepdims=True)
        cache.update(z1=z1, m1=m1, a1=a1, z2=z2, m2=m2, a2=a2, probs=probs)
        return cache

    def predict(self, encoding, dropout: bool = False) -> np.ndarray:
        """Softmax over the multiplier grid; dropout-off calls are pure."""
        X = self._check_input(encoding)
        rng = self.rng if dropout else None
        return self._forward(X, drop_rng=rng)["probs"][0]

    def predict_multiplier(self, encoding) -> float:
        """Argmax multiplier of a dropout-off prediction."""
        return float(MULTIPLIER_GRID[int(np.argmax(self.predict(encoding)))])

    def loss_and_gradients(self, X, y, drop_rng=None):
        """Mean cross-entropy and its analytic gradients for a labeled batch."""
        X = self._check_input(X)
        y = np.asarray(y, dtype=int)
        cache = self._forward(X, drop_rng=drop_rng)
        probs = cache["probs"]
        n = X.shape[0]
        loss = float(-np.mean(np.log(probs[np.arange(n), y] + 1e-300)))
        dlogits = probs.copy()
        dlogits[np.arange(n), y] -= 1.0
        dlogits /= n
        grads = {}
        grads["W3"] = cache["a2"].T @ dlogits
        grads["b3"] = dlogits.sum(axis=0)
        da2 = dlogits @ self.params["W3"].T
        if cache["m2"] is not None:
            da2 = da2 * cache["m2"]
        dz2 = da2 * (cache["z2"] > 0)
        grads["W2"] = cache["a1"].T @ dz2
        grads["b2"] = dz2.sum(axis=0)
        da1 = dz2 @ self.params["W2"].T
        if cache["m1"] is not None:
            da1 = da1 * cache["m1"]
        dz1 = da1 * (cache["z1"] > 0)
        grads["W1"] = X.T @ dz1
        grads["b1"] = dz1.sum(axis=0)
        return loss, grads

    def _adam_step(self, grads, beta1=0.9, beta2=0.999, eps=1e-8):
        self._adam_t += 1
        for k, g in grads.items():
            self._adam_m[k] = beta1 * self._adam_m[k] + (1 - beta1) * g
            self._adam_v[k] = beta2 * self._adam_v[k] + (1 - beta2) * g * g
            mhat = self._adam_m[k] / (1 - beta1**self._adam_t)
            vhat = self._adam_v[k] / (1 - beta2**self._adam_t)
            self.params[k] -= self.learning_rate * mhat / (np.sqrt(vhat) + eps)

    def update(self, labels):
        """Absorb (encoding, class index) pairs and retrain over the buffer."""
        labels = list(labels)
        if not labels:
            raise ValueError("labels must be nonempty")
        for enc, idx in labels:
            idx = int(idx)
            if not 0 <= idx < N_CLASSES:
                raise ValueError(f"label index {idx} outside [0, {N_CLASSES})")
            enc = np.asarray(enc, dtype=float)
            self._check_input(enc)
            self.buffer.append((enc, idx))
        data = list(self.buffer)
        for _ in range(self.epochs):
            order = self.rng.permutation(len(data))
            for start in range(0, len(data), self.batch_size):
                batch = [data[i] for i in order[start : start + self.batch_size]]
                X = np.stack([b[0] for b in batch])
                y = np.array([b[1] for b in batch])
                _, grads = self.loss_and_gradients(X, y, drop_rng=self.rng)
                self._adam_step(grads)
                self.step_count += 1
        return self

    def mean_loss(self, labels) -> float:
        X = np.stack([np.asarray(e, dtype=float) for e, _ in labels])
        y = np.array([i for _, i in labels])
        loss, _ = self.loss_and_gradients(X, y)
        return loss

    def save(self, path) -> None:
        meta = {
            "input_dim": self.input_dim,
            "seed": self.seed,
            "hidden_units": self.hidden_units,
            "dropout_rate": self.dropout_rate,
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "replay_capacity": self.buffer.maxlen,
            "step_count": self.step_count,
            "adam_t": self._adam_t,
            "rng_state": self.rng.bit_generator.state,
        }
        arrays = dict(self.params)
        arrays.update({f"m_{k}": v for k, v in self._adam_m.items()})
        arrays.update({f"v_{k}": v for k, v in self._adam_v.items()})
        if self.buffer:
            arrays["buffer_X"] = np.stack([e for e, _ in self.buffer])
            arrays["buffer_y"] = np.array([i for _, i in self.buffer])
        np.savez(path, meta=json.dumps(meta), **arrays)

    @classmethod
    def load(cls, path) -> "CostMultiplierModel":
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["meta"]))
            model = cls(
                input_dim=meta["input_dim"],
                seed=meta["seed"],
                hidden_units=meta["hidden_units"],
                dropout_rate=meta["dropout_rate"],
                learning_rate=meta["learning_rate"],
                batch_size=meta["batch_size"],
                epochs=meta["epochs"],
                replay_capacity=meta["replay_capacity"],
            )
            for k in model.params:
                model.params[k] = data[k].copy()
                model._adam_m[k] = data[f"m_{k}"].copy()
                model._adam_v[k] = data[f"v_{k}"].copy()
            model.step_count = meta["step_count"]
            model._adam_t = meta["adam_t"]
            state = meta["rng_state"]
            state["state"] = {
                k: int(v) for k, v in state["state"].items()
            }
            model.rng.bit_generator.state = state
            if "buffer_X" in data:
                for enc, idx in zip(data["buffer_X"], data["buffer_y"]):
                    model.buffer.append((enc.copy(), int(idx)))
        return model


def entropy(probabilities) -> float:
    """Shannon entropy (natural log) of a softmax vector; 0*ln0 counts as 0."""
    p = np.asarray(probabilities, dtype=float)
    if p.ndim != 1:
        raise ContractError("probability vector must be one-dimensional")
    if np.any(p < -1e-12) or abs(float(p.sum()) - 1.0) > 1e-6:
        raise ContractError("input is not a probability vector")
    pos = p[p > 0]
    return float(-(pos * np.log(pos)).sum())


def mc_dropout(model: CostMultiplierModel, encoding, passes: int) -> float:
    """Max per-class variance across dropout-on passes (biased 1/m estimator)."""
    if passes < 2:
        raise ValueError("passes must be >= 2")
    enc = model._check_input(encoding)
    if model.dropout_rate == 0.0:
        return 0.0  # all passes are identical by construction
    X = np.repeat(enc, passes, axis=0)
    digest = zlib.crc32(np.ascontiguousarray(enc).tobytes())
    rng = rng_for(model.seed, model.step_count, digest, passes)
    probs = model._forward(X, drop_rng=rng)["probs"]
    return float(probs.var(axis=0).max())


@dataclass(frozen=True)
class UncertaintyScore:
    entropy: float
    mcd: float
    combined: float
    mix_weight: float


def combined_uncertainty(
    model: CostMultiplierModel, encoding, mix_weight: float, passes: int
) -> UncertaintyScore:
    """U = mix_weight * mcd + (1 - mix_weight) * entropy(dropout-off softmax)."""
    if not 0.0 < mix_weight < 1.0:
        raise ConfigurationError("mix_weight must lie strictly between 0 and 1")
    mcd_value = mc_dropout(model, encoding, passes)
    ent = entropy(model.predict(encoding, dropout=False))
    combined = mix_weight * mcd_value + (1.0 - mix_weight) * ent
    return UncertaintyScore(ent, mcd_value, combined, mix_weight)


def regression_multiplier(
    plan, leaf, actual_benefit: float, baseline_cost: float, tolerance: float
) -> float:
    """Find the multiplier in [0.1, 100] whose corrected-plan benefit best
    matches the observed one, via log-space search.

    Falls back to a 64-point log-spaced grid scan when the corrected cost is
    not monotone over the bracket (a leaf that cannot move the root).
    """
    from .correction import update_cost
    from .plan import leaves

    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    if baseline_cost <= 0:
        raise ContractError("baseline cost must be positive")
    position = [i for i, n in enumerate(leaves(plan)) if n is leaf]
    if not position:
        raise ContractError("leaf is not part of the plan")
    pos = position[0]

    def corrected_cost(multiplier: float) -> float:
        copy = plan.clone()
        update_cost(copy, leaves(copy)[pos], multiplier)
        return copy.total_cost

    def objective(multiplier: float) -> float:
        benefit = 1.0 - corrected_cost(multiplier) / baseline_cost
        return abs(actual_benefit - benefit)

    lo, hi = 0.1, 100.0
    samples = np.exp(np.linspace(math.log(lo), math.log(hi), 5))
    costs = [corrected_cost(w) for w in samples]
    diffs = np.diff(costs)
    if not np.all(diffs > 0):
        grid = np.exp(np.linspace(math.log(lo), math.log(hi), 64))
        values = [objective(w) for w in grid]
        return float(grid[int(np.argmin(values))])

    log_lo, log_hi = math.log(lo), math.log(hi)
    while math.exp(log_hi) - math.exp(log_lo) > tolerance:
        m1 = log_lo + (log_hi - log_lo) / 3.0
        m2 = log_hi - (log_hi - log_lo) / 3.0
        if objective(math.exp(m1)) <= objective(math.exp(m2)):
            log_hi = m2
        else:
            log_lo = m1
    return float(math.exp((log_lo + log_hi) / 2.0))
