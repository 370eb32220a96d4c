"""Small feed-forward classifier, trained online with Adam.

Implemented directly on numpy so training is reproducible to the bit:
given the same seed, data and config, two runs produce identical weights.
The network is input -> 1..3 ReLU layers -> 2-way softmax, trained with
one-hot cross-entropy one sample at a time for a single pass over the
data, mirroring an online setting where each motion arrives once.

Inputs are standardized with mean/scale fitted on the training set and
stored in the model; fine-tuning keeps the original standardization so a
clinic update cannot silently shift the feature frame.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, InsufficientDataError

logger = logging.getLogger(__name__)

UNITS_GRID = (16, 32, 64, 128, 256, 512)
LR_GRID = (0.0001, 0.005, 0.001, 0.01, 0.1)
MAX_HIDDEN_LAYERS = 3

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

_N_CLASSES = 2
_SCALE_FLOOR = 1e-8
MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class MlpConfig:
    """Architecture and optimizer settings, restricted to the search grid."""

    hidden: tuple[int, ...]
    lr: float
    seed: int = 0

    def __post_init__(self) -> None:
        hidden = tuple(int(h) for h in self.hidden)
        object.__setattr__(self, "hidden", hidden)
        if not 1 <= len(hidden) <= MAX_HIDDEN_LAYERS:
            raise ConfigError(
                f"hidden layer count must be 1..{MAX_HIDDEN_LAYERS}, "
                f"got {len(hidden)}")
        for h in hidden:
            if h not in UNITS_GRID:
                raise ConfigError(f"hidden units {h} not in grid {UNITS_GRID}")
        if not any(abs(self.lr - g) < 1e-12 for g in LR_GRID):
            raise ConfigError(f"learning rate {self.lr} not in grid {LR_GRID}")

    def to_json(self) -> dict:
        return {"hidden": list(self.hidden), "lr": self.lr, "seed": self.seed}

    @classmethod
    def from_json(cls, data: dict) -> "MlpConfig":
        return cls(tuple(data["hidden"]), float(data["lr"]), int(data["seed"]))


@dataclass
class MlpModel:
    """Weights plus everything needed to continue training deterministically."""

    config: MlpConfig
    input_dim: int
    weights: list[np.ndarray]      # per layer, (fan_in, fan_out)
    biases: list[np.ndarray]       # per layer, (fan_out,)
    x_mean: np.ndarray
    x_scale: np.ndarray
    adam_m: list[np.ndarray] = field(default_factory=list)
    adam_v: list[np.ndarray] = field(default_factory=list)
    adam_t: int = 0
    rng_state: dict | None = None

    def copy(self) -> "MlpModel":
        return MlpModel(
            config=self.config,
            input_dim=self.input_dim,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            x_mean=self.x_mean.copy(),
            x_scale=self.x_scale.copy(),
            adam_m=[m.copy() for m in self.adam_m],
            adam_v=[v.copy() for v in self.adam_v],
            adam_t=self.adam_t,
            rng_state=json.loads(json.dumps(self.rng_state)),
        )

    # -- persistence --------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "config": self.config.to_json(),
            "input_dim": self.input_dim,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "x_mean": self.x_mean.tolist(),
            "x_scale": self.x_scale.tolist(),
            "adam_m": [m.tolist() for m in self.adam_m],
            "adam_v": [v.tolist() for v in self.adam_v],
            "adam_t": self.adam_t,
            "rng_state": self.rng_state,
        }

    @classmethod
    def from_json(cls, data: dict) -> "MlpModel":
        version = data.get("format_version")
        if version != MODEL_FORMAT_VERSION:
            raise ConfigError(f"unsupported model format version {version!r}")
        return cls(
            config=MlpConfig.from_json(data["config"]),
            input_dim=int(data["input_dim"]),
            weights=[np.asarray(w, dtype=np.float64) for w in data["weights"]],
            biases=[np.asarray(b, dtype=np.float64) for b in data["biases"]],
            x_mean=np.asarray(data["x_mean"], dtype=np.float64),
            x_scale=np.asarray(data["x_scale"], dtype=np.float64),
            adam_m=[np.asarray(m, dtype=np.float64) for m in data["adam_m"]],
            adam_v=[np.asarray(v, dtype=np.float64) for v in data["adam_v"]],
            adam_t=int(data["adam_t"]),
            rng_state=data.get("rng_state"),
        )

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(json.dumps(self.to_json()), encoding="utf-8")
        os.replace(tmp, path)

    @classmethod
    def load(cls, path: str | Path) -> "MlpModel":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def _init_model(config: MlpConfig, input_dim: int,
                x_mean: np.ndarray, x_scale: np.ndarray) -> MlpModel:
    rng = np.random.default_rng(config.seed)
    dims = [input_dim, *config.hidden, _N_CLASSES]
    weights, biases = [], []
    for i in range(len(dims) - 1):
        fan_in, fan_out = dims[i], dims[i + 1]
        if i == len(dims) - 2:
            # zero output head: an untrained model says exactly p = 0.5
            w = np.zeros((fan_in, fan_out))
        else:
            bound = np.sqrt(6.0 / fan_in)
            w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        weights.append(w)
        biases.append(np.zeros(fan_out))
    model = MlpModel(config, input_dim, weights, biases, x_mean, x_scale,
                     adam_m=[np.zeros_like(w) for w in weights + biases],
                     adam_v=[np.zeros_like(w) for w in weights + biases],
                     adam_t=0,
                     rng_state=rng.bit_generator.state)
    return model


def _standardize(model: MlpModel, X: np.ndarray) -> np.ndarray:
    return (X - model.x_mean) / model.x_scale


def _forward(model: MlpModel, x: np.ndarray):
    """Single standardized sample -> (activations, pre-activations, logits)."""
    acts = [x]
    pres = []
    h = x
    n_hidden = len(model.weights) - 1
    for i in range(n_hidden):
        z = h @ model.weights[i] + model.biases[i]
        pres.append(z)
        h = np.maximum(z, 0.0)
        acts.append(h)
    logits = h @ model.weights[-1] + model.biases[-1]
    return acts, pres, logits


def _loss_from_logits(logits: np.ndarray, label: int) -> float:
    m = float(np.max(logits))
    lse = m + np.log(np.sum(np.exp(logits - m)))
    return float(lse - logits[label])


def _sample_grads(model: MlpModel, x: np.ndarray, label: int):
    """Cross-entropy loss and per-parameter gradients for one sample."""
    acts, pres, logits = _forward(model, x)
    loss = _loss_from_logits(logits, label)
    shifted = logits - np.max(logits)
    p = np.exp(shifted)
    p /= p.sum()
    delta = p.copy()
    delta[label] -= 1.0

    n_layers = len(model.weights)
    grads_w = [None] * n_layers
    grads_b = [None] * n_layers
    grads_w[-1] = np.outer(acts[-1], delta)
    grads_b[-1] = delta
    upstream = delta
    for i in range(n_layers - 2, -1, -1):
        upstream = (model.weights[i + 1] @ upstream) * (pres[i] > 0)
        grads_w[i] = np.outer(acts[i], upstream)
        grads_b[i] = upstream
    return loss, grads_w, grads_b


def _adam_step(model: MlpModel, grads_w, grads_b) -> None:
    lr = model.config.lr
    model.adam_t += 1
    t = model.adam_t
    params = model.weights + model.biases
    grads = grads_w + grads_b
    bc1 = 1.0 - ADAM_BETA1 ** t
    bc2 = 1.0 - ADAM_BETA2 ** t
    for p, g, m, v in zip(params, grads, model.adam_m, model.adam_v):
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * np.square(g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)


def _check_data(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    if X.ndim != 2:
        raise ConfigError(f"X must be 2-D, got shape {X.shape}")
    if X.shape[0] != y.shape[0]:
        raise ConfigError(f"{X.shape[0]} rows but {y.shape[0]} labels")
    if X.shape[0] == 0:
        raise InsufficientDataError("no training samples")
    if not np.isfinite(X).all():
        raise ConfigError("training data contains non-finite values")
    if not np.isin(y, (0, 1)).all():
        raise ConfigError("labels must be 0 or 1")
    return X, y


def _run_epoch(model: MlpModel, X: np.ndarray, y: np.ndarray) -> float:
    """One shuffled pass, batch size 1. Returns mean loss over the pass."""
    rng = np.random.default_rng()
    rng.bit_generator.state = model.rng_state
    order = rng.permutation(X.shape[0])
    model.rng_state = rng.bit_generator.state
    Xs = _standardize(model, X)
    total = 0.0
    for idx in order:
        loss, gw, gb = _sample_grads(model, Xs[idx], int(y[idx]))
        _adam_step(model, gw, gb)
        total += loss
    return total / X.shape[0]


def train(X, y, config: MlpConfig) -> MlpModel:
    """Fit a fresh model: seeded init, one shuffled batch-1 epoch of Adam."""
    X, y = _check_data(X, y)
    mean = X.mean(axis=0)
    scale = np.maximum(X.std(axis=0), _SCALE_FLOOR)
    model = _init_model(config, X.shape[1], mean, scale)
    mean_loss = _run_epoch(model, X, y)
    logger.debug("trained mlp hidden=%s lr=%s on %d samples, mean loss %.4f",
                 config.hidden, config.lr, X.shape[0], mean_loss)
    return model


def finetune(model: MlpModel, X, y) -> MlpModel:
    """Continue training on new data; returns a new model, input untouched.

    Optimizer state, learning rate and input standardization all carry
    over, so this is exactly one more epoch of the same training run.
    """
    X, y = _check_data(X, y)
    if X.shape[1] != model.input_dim:
        raise ConfigError(
            f"model expects {model.input_dim} features, got {X.shape[1]}")
    out = model.copy()
    _run_epoch(out, X, y)
    return out


def predict_proba(model: MlpModel, X) -> np.ndarray:
    """P(label == 1) per row."""
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.shape[1] != model.input_dim:
        raise ConfigError(
            f"model expects {model.input_dim} features, got {X.shape[1]}")
    h = _standardize(model, X)
    n_hidden = len(model.weights) - 1
    for i in range(n_hidden):
        h = np.maximum(h @ model.weights[i] + model.biases[i], 0.0)
    logits = h @ model.weights[-1] + model.biases[-1]
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    p1 = e[:, 1] / e.sum(axis=1)
    return p1[0] if single else p1


def predict(model: MlpModel, X) -> np.ndarray:
    p = np.atleast_1d(predict_proba(model, X))
    return (p >= 0.5).astype(np.int64)


def mean_loss(model: MlpModel, X, y) -> float:
    """Mean cross-entropy of the model on a labeled set."""
    X, y = _check_data(X, y)
    Xs = _standardize(model, X)
    total = 0.0
    for i in range(X.shape[0]):
        _, _, logits = _forward(model, Xs[i])
        total += _loss_from_logits(logits, int(y[i]))
    return total / X.shape[0]


def gradient_check(model: MlpModel, X, y, step: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    The objective is the mean cross-entropy over the given batch at the
    model's current weights.  Relative error uses a floored denominator so
    near-zero gradients do not blow the ratio up.
    """
    X, y = _check_data(X, y)
    Xs = _standardize(model, X)

    params = model.weights + model.biases
    acc_w = [np.zeros_like(w) for w in model.weights]
    acc_b = [np.zeros_like(b) for b in model.biases]
    for i in range(X.shape[0]):
        _, gw, gb = _sample_grads(model, Xs[i], int(y[i]))
        for a, g in zip(acc_w, gw):
            a += g
        for a, g in zip(acc_b, gb):
            a += g
    analytic = [a / X.shape[0] for a in acc_w + acc_b]

    def batch_loss() -> float:
        total = 0.0
        for i in range(X.shape[0]):
            _, _, logits = _forward(model, Xs[i])
            total += _loss_from_logits(logits, int(y[i]))
        return total / X.shape[0]

    worst = 0.0
    for p, ga in zip(params, analytic):
        it = np.nditer(p, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = p[idx]
            p[idx] = orig + step
            up = batch_loss()
            p[idx] = orig - step
            down = batch_loss()
            p[idx] = orig
            gn = (up - down) / (2.0 * step)
            denom = max(abs(ga[idx]), abs(gn), 1e-6)
            worst = max(worst, abs(ga[idx] - gn) / denom)
            it.iternext()
    return worst
