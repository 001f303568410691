"""Small fully-connected network engine in float64 numpy.

Forward pass, the half-MSE loss ``sum ||y - a||^2 / (2 n)``, hand-written
backpropagation and three optimizers. The same :class:`MLP` serves as
surrogate regressor, GAN generator and GAN discriminator.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import ShapeError, TrainingDivergedError, ValidationError, VersionError

MODEL_FORMAT = "hetkit-mlp/1"

SELU_ALPHA = 1.6732632423543772
SELU_SCALE = 1.0507009873554805

MIN_WIDTH, MAX_WIDTH = 4, 128


def _sigmoid(z):
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _selu(z):
    return SELU_SCALE * np.where(z > 0, z, SELU_ALPHA * np.expm1(np.minimum(z, 0.0)))


def _selu_grad(z, a):
    return SELU_SCALE * np.where(z > 0, 1.0, SELU_ALPHA * np.exp(np.minimum(z, 0.0)))


# name -> (activation(z), derivative(z, activation(z)))
ACTIVATIONS: dict[str, tuple[Callable, Callable]] = {
    "identity": (lambda z: z, lambda z, a: np.ones_like(z)),
    "relu": (lambda z: np.maximum(z, 0.0), lambda z, a: (z > 0).astype(float)),
    "tanh": (np.tanh, lambda z, a: 1.0 - a * a),
    "selu": (_selu, _selu_grad),
    "sigmoid": (_sigmoid, lambda z, a: a * (1.0 - a)),
}


def _check_activation(name: str) -> str:
    key = name.lower()
    if key not in ACTIVATIONS:
        raise ValidationError(f"unknown activation {name!r}; expected one of {sorted(ACTIVATIONS)}")
    return key


@dataclass(frozen=True)
class LayerSpec:
    """Hidden layer description. Output layers are built separately and exempt from the width range."""

    width: int
    activation: str = "relu"

    def __post_init__(self):
        if not MIN_WIDTH <= self.width <= MAX_WIDTH:
            raise ValidationError(f"hidden width {self.width} outside [{MIN_WIDTH}, {MAX_WIDTH}]")
        object.__setattr__(self, "activation", _check_activation(self.activation))


@dataclass
class Layer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str

    @property
    def fan_in(self) -> int:
        return self.weight.shape[1]

    @property
    def fan_out(self) -> int:
        return self.weight.shape[0]


class MLP:
    def __init__(self, layers: Sequence[Layer], seed: int | None = None):
        if not layers:
            raise ShapeError("an MLP needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.fan_out != nxt.fan_in:
                raise ShapeError(f"layer dims do not chain: {prev.fan_out} -> {nxt.fan_in}")
        for layer in layers:
            if layer.bias.shape != (layer.fan_out,):
                raise ShapeError(f"bias shape {layer.bias.shape} does not match {layer.fan_out} outputs")
            layer.activation = _check_activation(layer.activation)
        self.layers = list(layers)
        self.seed = seed

    @property
    def input_dim(self) -> int:
        return self.layers[0].fan_in

    @property
    def output_dim(self) -> int:
        return self.layers[-1].fan_out

    @property
    def n_hidden(self) -> int:
        return len(self.layers) - 1

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend((layer.weight, layer.bias))
        return out

    def copy(self) -> "MLP":
        return MLP(
            [Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers], seed=self.seed
        )

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return forward(self, x)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return forward(self, x)

    def __repr__(self) -> str:
        dims = [self.input_dim] + [l.fan_out for l in self.layers]
        acts = [l.activation for l in self.layers]
        return f"MLP(dims={dims}, activations={acts})"

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "input_dim": self.input_dim,
            "output_dim": self.output_dim,
            "seed": self.seed,
            "layers": [
                {
                    "in": l.fan_in,
                    "out": l.fan_out,
                    "activation": l.activation,
                    "weight": l.weight.ravel(order="C").tolist(),
                    "bias": l.bias.tolist(),
                }
                for l in self.layers
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MLP":
        tag = data.get("format")
        if tag != MODEL_FORMAT:
            raise VersionError(f"unsupported model format {tag!r}; expected {MODEL_FORMAT!r}")
        layers = []
        for spec in data["layers"]:
            weight = np.asarray(spec["weight"], dtype=float).reshape(spec["out"], spec["in"])
            layers.append(Layer(weight, np.asarray(spec["bias"], dtype=float), spec["activation"]))
        mlp = cls(layers, seed=data.get("seed"))
        if mlp.input_dim != data["input_dim"] or mlp.output_dim != data["output_dim"]:
            raise ShapeError("model file dims disagree with its layers")
        return mlp


def build_mlp(
    input_dim: int,
    hidden: Sequence[LayerSpec],
    output_dim: int,
    output_activation: str = "identity",
    seed: int = 0,
) -> MLP:
    """Glorot-uniform weights in +/-sqrt(6 / (fan_in + fan_out)), zero biases."""
    rng = np.random.default_rng(seed)
    widths = [input_dim] + [spec.width for spec in hidden] + [output_dim]
    acts = [spec.activation for spec in hidden] + [output_activation]
    layers = []
    for fan_in, fan_out, act in zip(widths, widths[1:], acts):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weight = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        layers.append(Layer(weight, np.zeros(fan_out), act))
    return MLP(layers, seed=seed)


def _as_batch(mlp: MLP, x) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != mlp.input_dim:
        raise ShapeError(f"expected input width {mlp.input_dim}, got shape {np.shape(x)}")
    return arr, single


def forward_cache(mlp: MLP, x: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Run a batch ``(n, input_dim)`` forward, keeping (pre-activation, activation) per layer.

    Entry 0 is ``(x, x)`` for the input itself.
    """
    a = x
    cache = [(x, x)]
    for layer in mlp.layers:
        z = a @ layer.weight.T + layer.bias
        a = ACTIVATIONS[layer.activation][0](z)
        cache.append((z, a))
    return cache


def forward(mlp: MLP, x) -> np.ndarray:
    batch, single = _as_batch(mlp, x)
    out = forward_cache(mlp, batch)[-1][1]
    return out[0] if single else out


def backprop(
    mlp: MLP, cache: list[tuple[np.ndarray, np.ndarray]], grad_out: np.ndarray
) -> tuple[list[np.ndarray], np.ndarray]:
    """Chain ``dL/d(output)`` back through the network.

    Returns gradients in :meth:`MLP.parameters` order and ``dL/d(input)``.
    """
    grads: list[np.ndarray] = []
    delta = grad_out
    for i in range(len(mlp.layers) - 1, -1, -1):
        layer = mlp.layers[i]
        z, a = cache[i + 1]
        delta = delta * ACTIVATIONS[layer.activation][1](z, a)
        a_prev = cache[i][1]
        grads.append(delta.sum(axis=0))
        grads.append(delta.T @ a_prev)
        delta = delta @ layer.weight
    grads.reverse()
    return grads, delta


def _as_targets(predictions: np.ndarray, targets) -> np.ndarray:
    t = np.asarray(targets, dtype=float)
    if t.ndim == 1 and predictions.ndim == 2 and predictions.shape[1] == 1:
        t = t[:, None]
    if t.shape != predictions.shape:
        raise ShapeError(f"prediction shape {predictions.shape} != target shape {t.shape}")
    return t


def mse_loss(predictions, targets) -> float:
    """``sum ||y - a||^2 / (2 n)`` where n counts samples (rows); a 1-D array is n scalar samples."""
    y = np.asarray(predictions, dtype=float)
    a = np.asarray(targets, dtype=float)
    if y.shape != a.shape:
        raise ShapeError(f"prediction shape {y.shape} != target shape {a.shape}")
    n = y.shape[0] if y.ndim else 1
    if n < 1:
        raise ShapeError("mse_loss needs at least one sample")
    return float(np.sum((y - a) ** 2) / (2.0 * n))


def backward(mlp: MLP, x, target) -> list[np.ndarray]:
    """Gradients of :func:`mse_loss` w.r.t. every weight and bias, in :meth:`MLP.parameters` order."""
    batch, single = _as_batch(mlp, x)
    cache = forward_cache(mlp, batch)
    y = cache[-1][1]
    t = np.asarray(target, dtype=float)
    t = t.reshape(1, -1) if single else t
    t = _as_targets(y, t)
    grads, _ = backprop(mlp, cache, (y - t) / y.shape[0])
    return grads


# -- optimizers --------------------------------------------------------------


class SGD:
    def __init__(self, learning_rate: float):
        self.learning_rate = learning_rate

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        for p, g in zip(params, grads):
            p -= self.learning_rate * g


class Momentum:
    def __init__(self, learning_rate: float, beta: float = 0.9):
        self.learning_rate = learning_rate
        self.beta = beta
        self._velocity: list[np.ndarray] | None = None

    def step(self, params, grads):
        if self._velocity is None:
            self._velocity = [np.zeros_like(p) for p in params]
        for p, g, v in zip(params, grads, self._velocity):
            v *= self.beta
            v += g
            p -= self.learning_rate * v


class Adam:
    def __init__(self, learning_rate: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.learning_rate = learning_rate
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self._m: list[np.ndarray] | None = None
        self._v: list[np.ndarray] | None = None
        self.t = 0

    def step(self, params, grads):
        if self._m is None:
            self._m = [np.zeros_like(p) for p in params]
            self._v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self._m, self._v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.learning_rate * (m / c1) / (np.sqrt(v / c2) + self.eps)


OPTIMIZERS = {"sgd": SGD, "momentum": Momentum, "adam": Adam}


def make_optimizer(name: str, learning_rate: float):
    try:
        return OPTIMIZERS[name.lower()](learning_rate)
    except KeyError:
        raise ValidationError(f"unknown optimizer {name!r}; expected one of {sorted(OPTIMIZERS)}") from None


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    learning_rate: float = 1e-2
    optimizer: str = "adam"
    batch_size: int | None = None  # None: full batch
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValidationError(f"epochs must be >= 1, got {self.epochs}")
        if not self.learning_rate > 0:
            raise ValidationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.optimizer.lower() not in OPTIMIZERS:
            raise ValidationError(f"unknown optimizer {self.optimizer!r}")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValidationError("batch_size must be positive")


def train(mlp: MLP, x: np.ndarray, y: np.ndarray, config: TrainConfig) -> tuple[MLP, list[float]]:
    """Fit a copy of ``mlp`` to ``(x, y)`` by minimizing the half-MSE.

    The history holds the full-data loss before each epoch plus the loss
    after the last update, so ``len(history) == epochs + 1``.
    """
    net = mlp.copy()
    x, _ = _as_batch(net, x)
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if y.shape != (x.shape[0], net.output_dim):
        raise ShapeError(f"targets shape {y.shape} does not match ({x.shape[0]}, {net.output_dim})")
    opt = make_optimizer(config.optimizer, config.learning_rate)
    rng = np.random.default_rng(config.seed)
    history: list[float] = []

    def check(loss, epoch):
        if not math.isfinite(loss):
            raise TrainingDivergedError(epoch, loss)

    with np.errstate(over="ignore", invalid="ignore"):
        _run_epochs(net, x, y, config, opt, rng, history, check)
        final = mse_loss(forward(net, x), y)
    check(final, config.epochs)
    history.append(final)
    return net, history


def _run_epochs(net, x, y, config, opt, rng, history, check):
    params = net.parameters()
    n = x.shape[0]
    for epoch in range(config.epochs):
        if config.batch_size is None or config.batch_size >= n:
            cache = forward_cache(net, x)
            pred = cache[-1][1]
            loss = mse_loss(pred, y)
            check(loss, epoch)
            history.append(loss)
            grads, _ = backprop(net, cache, (pred - y) / n)
            opt.step(params, grads)
        else:
            history.append(mse_loss(forward(net, x), y))
            check(history[-1], epoch)
            order = rng.permutation(n)
            for start in range(0, n, config.batch_size):
                idx = order[start : start + config.batch_size]
                cache = forward_cache(net, x[idx])
                pred = cache[-1][1]
                grads, _ = backprop(net, cache, (pred - y[idx]) / len(idx))
                opt.step(params, grads)


# -- model files -------------------------------------------------------------


def save_model(path: str | Path, mlp: MLP, metadata: dict | None = None) -> Path:
    """Write the portable JSON model file (weights row-major, floats round-trip exactly)."""
    path = Path(path)
    payload = mlp.to_dict()
    payload["metadata"] = metadata or {}
    try:
        path.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write model file {path}: {exc.strerror}") from exc
    return path


def load_model(path: str | Path) -> tuple[MLP, dict]:
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict):
        raise VersionError(f"{path}: not a model file; expected format {MODEL_FORMAT!r}")
    return MLP.from_dict(data), data.get("metadata", {})


def r2_score(y_true, y_pred) -> float:
    """Coefficient of determination, averaged over output columns; nan for zero-variance targets."""
    yt = np.asarray(y_true, dtype=float)
    yp = np.asarray(y_pred, dtype=float)
    if yt.ndim == 1:
        yt = yt[:, None]
    if yp.ndim == 1:
        yp = yp[:, None]
    ss_tot = np.sum((yt - yt.mean(axis=0)) ** 2, axis=0)
    if np.any(ss_tot == 0):
        return float("nan")
    ss_res = np.sum((yt - yp) ** 2, axis=0)
    return float(np.mean(1.0 - ss_res / ss_tot))
