"""Multilayer perceptron trained by mini-batch SGD, written against numpy.

Weight matrix ``weights[l]`` has one row per neuron of layer ``l`` and one
column per input of that layer, with column 0 holding the bias (the
connection to the constant unit O_0 = 1).  A layer's net input is therefore
``W @ [1, o_prev]`` and its output vector is ``[1, f(net)]`` for hidden
layers; the final layer is a softmax over the M classes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import TrainingError, ValidationError

__all__ = [
    "LayerSpec",
    "MlpModel",
    "ForwardTrace",
    "TrainConfig",
    "TrainHistory",
    "init_mlp",
    "forward",
    "cross_entropy_loss",
    "backward",
    "sgd_step",
    "train_mlp",
    "predict_proba",
    "predict_class",
    "gradient_check",
    "save_mlp",
    "load_mlp",
]

ACTIVATIONS = ("sigmoid", "relu", "softmax")
LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class LayerSpec:
    width: int
    activation: str

    @classmethod
    def parse(cls, obj) -> "LayerSpec":
        if isinstance(obj, LayerSpec):
            return obj
        if isinstance(obj, dict):
            return cls(int(obj["width"]), str(obj["activation"]))
        width, activation = obj
        return cls(int(width), str(activation))


def _check_layers(layers: Sequence[LayerSpec]) -> tuple[LayerSpec, ...]:
    layers = tuple(LayerSpec.parse(l) for l in layers)
    if not layers:
        raise ValidationError("an MLP needs at least an output layer")
    for i, spec in enumerate(layers):
        if spec.width < 1:
            raise ValidationError(f"layer {i} has width {spec.width}")
        if spec.activation not in ACTIVATIONS:
            raise ValidationError(f"layer {i}: unknown activation {spec.activation!r}")
        last = i == len(layers) - 1
        if spec.activation == "softmax" and not last:
            raise ValidationError(f"softmax is only allowed on the final layer (found on layer {i})")
        if last and spec.activation != "softmax":
            raise ValidationError("the final layer must be softmax")
    return layers


@dataclass(frozen=True)
class MlpModel:
    layers: tuple[LayerSpec, ...]
    weights: tuple[np.ndarray, ...]
    n_0: int

    @property
    def M(self) -> int:
        return self.layers[-1].width

    def to_dict(self) -> dict:
        return {
            "n_0": self.n_0,
            "layers": [{"width": l.width, "activation": l.activation} for l in self.layers],
            "weights": [w.tolist() for w in self.weights],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpModel":
        layers = _check_layers(d["layers"])
        weights = tuple(np.asarray(w, dtype=np.float64).reshape(l.width, -1) for w, l in zip(d["weights"], layers))
        model = cls(layers, weights, int(d["n_0"]))
        _check_shapes(model)
        return model


def _check_shapes(model: MlpModel) -> None:
    fan_in = model.n_0
    if len(model.weights) != len(model.layers):
        raise ValidationError("one weight matrix per layer expected")
    for l, (w, spec) in enumerate(zip(model.weights, model.layers)):
        if w.shape != (spec.width, fan_in + 1):
            raise ValidationError(f"layer {l} weights have shape {w.shape}, expected {(spec.width, fan_in + 1)}")
        fan_in = spec.width


def init_mlp(input_dim: int, layers: Sequence[LayerSpec], seed: int = 0) -> MlpModel:
    """Glorot-uniform weights, zero bias column."""
    if input_dim < 1:
        raise ValidationError("input_dim must be >= 1")
    layers = _check_layers(layers)
    rng = np.random.default_rng(seed)
    weights = []
    fan_in = input_dim
    for spec in layers:
        limit = np.sqrt(6.0 / (fan_in + spec.width))
        w = np.zeros((spec.width, fan_in + 1))
        w[:, 1:] = rng.uniform(-limit, limit, size=(spec.width, fan_in))
        weights.append(w)
        fan_in = spec.width
    return MlpModel(layers, tuple(weights), input_dim)


@dataclass
class ForwardTrace:
    """Per-layer quantities of one forward pass over a batch of rows.

    ``activations[l]`` is the input of layer ``l`` without the bias unit
    (``activations[0]`` is the raw input); ``outputs`` adds the leading
    O_0 = 1 column.  ``probs`` is the softmax output.  ``masks[l]`` is the
    binary dropout mask of hidden layer ``l`` (``None`` when not applied).
    """

    nets: list[np.ndarray]
    activations: list[np.ndarray]
    probs: np.ndarray
    masks: list[np.ndarray | None]
    dropout_rate: float = 0.0

    @property
    def outputs(self) -> list[np.ndarray]:
        return [np.hstack([np.ones((a.shape[0], 1)), a]) for a in self.activations]


def _activate(name: str, net: np.ndarray) -> np.ndarray:
    if name == "sigmoid":
        return 0.5 * (1.0 + np.tanh(0.5 * net))
    if name == "relu":
        return np.maximum(net, 0.0)
    z = net - net.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _derivative(name: str, net: np.ndarray) -> np.ndarray:
    if name == "sigmoid":
        s = 0.5 * (1.0 + np.tanh(0.5 * net))
        return s * (1.0 - s)
    return (net > 0.0).astype(np.float64)


def _as_rows(x, n_0: int) -> np.ndarray:
    X = np.asarray(x, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != n_0:
        raise ValidationError(f"expected inputs of dimension {n_0}, got shape {np.shape(x)}")
    return X


def _split(weights):
    # contiguous (W, b) pairs keep the matmuls on the BLAS path
    return [np.ascontiguousarray(w[:, 1:]) for w in weights], [w[:, 0].copy() for w in weights]


def _join(Ws, bs):
    return tuple(np.hstack([b[:, None], W]) for W, b in zip(Ws, bs))


def _forward(Ws, bs, layers, X, dropout_rate, rng):
    a = X
    nets, acts, masks = [], [X], []
    last = len(layers) - 1
    for l, (W, b, spec) in enumerate(zip(Ws, bs, layers)):
        net = a @ W.T
        net += b
        nets.append(net)
        a = _activate(spec.activation, net)
        if l == last:
            break
        mask = None
        if dropout_rate > 0.0:
            mask = rng.random(a.shape, dtype=np.float32) >= dropout_rate
            a = a * mask
            a *= 1.0 / (1.0 - dropout_rate)
        masks.append(mask)
        acts.append(a)
    return nets, acts, masks, a


def _backward(Ws, layers, nets, acts, masks, dropout_rate, probs, D, l2_lambda):
    """Returns per-layer (dW, db) lists and the dE/dnet arrays."""
    delta = (probs - D) / probs.shape[0]
    L = len(layers)
    gW, gb, deltas = [None] * L, [None] * L, [None] * L
    for l in range(L - 1, -1, -1):
        deltas[l] = delta
        gb[l] = delta.sum(axis=0)
        g = delta.T @ acts[l]
        if l2_lambda:
            g += l2_lambda * Ws[l]
        gW[l] = g
        if l == 0:
            break
        deriv = _derivative(layers[l - 1].activation, nets[l - 1])
        mask = masks[l - 1]
        if mask is not None:
            deriv = deriv * mask
            deriv *= 1.0 / (1.0 - dropout_rate)
        delta = (delta @ Ws[l]) * deriv
    return gW, gb, deltas


def forward(
    model: MlpModel,
    x,
    mode: str = "infer",
    dropout_rate: float = 0.0,
    rng: np.random.Generator | int | None = None,
) -> ForwardTrace:
    """Feed-forward pass for one sample (1-d ``x``) or a batch (2-d ``x``).

    In ``"train"`` mode each hidden unit is dropped with probability
    ``dropout_rate`` and the survivors are scaled by ``1/(1-dropout_rate)``.
    """
    if mode not in ("train", "infer"):
        raise ValidationError(f"mode must be 'train' or 'infer', got {mode!r}")
    if not 0.0 <= dropout_rate < 1.0:
        raise ValidationError("dropout_rate must lie in [0, 1)")
    X = _as_rows(x, model.n_0)
    rate = dropout_rate if mode == "train" else 0.0
    if rate > 0.0 and not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    Ws, bs = _split(model.weights)
    nets, acts, masks, probs = _forward(Ws, bs, model.layers, X, rate, rng)
    if not np.all(np.isfinite(probs)):
        raise TrainingError("non-finite activation in forward pass")
    return ForwardTrace(nets, acts, probs, masks, rate)


def _check_targets(target, M: int, n: int) -> np.ndarray:
    D = np.asarray(target, dtype=np.float64)
    if D.ndim == 1:
        D = D[None, :]
    if D.shape != (n, M):
        raise ValidationError(f"target shape {np.shape(target)} does not match {n} rows x {M} classes")
    if not np.all((D == 0.0) | (D == 1.0)) or not np.all(D.sum(axis=1) == 1.0):
        raise ValidationError("target rows must be one-hot")
    return D


def l2_penalty(model: MlpModel) -> float:
    return float(sum((w[:, 1:] ** 2).sum() for w in model.weights))


def cross_entropy_loss(trace: ForwardTrace, target, model: MlpModel, l2_lambda: float = 0.0) -> float:
    """Mean over rows of -sum_c D(c) log O(c), plus (lambda/2) * sum of squared non-bias weights."""
    D = _check_targets(target, model.M, trace.probs.shape[0])
    ce = -(D * np.log(np.maximum(trace.probs, LOG_FLOOR))).sum(axis=1).mean()
    return float(ce + 0.5 * l2_lambda * l2_penalty(model))


def backward(
    model: MlpModel,
    trace: ForwardTrace,
    target,
    l2_lambda: float = 0.0,
    return_deltas: bool = False,
):
    """Gradients of :func:`cross_entropy_loss` with respect to every weight matrix.

    The output error signal of the fused softmax/cross-entropy is O - D; it is
    propagated back through the hidden layers, gated by any dropout masks in
    the trace.  With ``return_deltas`` the per-layer dE/dnet arrays (batch
    averaged) are returned alongside the gradients.
    """
    if len(trace.nets) != len(model.layers) or trace.activations[0].shape[1] != model.n_0:
        raise ValidationError("trace was not produced by this model")
    D = _check_targets(target, model.M, trace.probs.shape[0])
    Ws, _ = _split(model.weights)
    gW, gb, deltas = _backward(
        Ws, model.layers, trace.nets, trace.activations, trace.masks,
        trace.dropout_rate, trace.probs, D, l2_lambda,
    )
    grads = _join(gW, gb)
    if return_deltas:
        return tuple(grads), tuple(deltas)
    return tuple(grads)


def sgd_step(model: MlpModel, gradients: Sequence[np.ndarray], eta: float) -> MlpModel:
    """Return a new model with w <- w - eta * grad; ``model`` is left untouched."""
    if len(gradients) != len(model.weights):
        raise ValidationError("one gradient per weight matrix expected")
    new = []
    for w, g in zip(model.weights, gradients):
        g = np.asarray(g, dtype=np.float64)
        if g.shape != w.shape:
            raise ValidationError(f"gradient shape {g.shape} does not match weights {w.shape}")
        if not np.all(np.isfinite(g)):
            raise TrainingError("non-finite gradient")
        new.append(w - eta * g)
    return MlpModel(model.layers, tuple(new), model.n_0)


@dataclass(frozen=True)
class TrainConfig:
    eta: float = 0.01
    batch_size: int = 128
    epochs: int = 200
    dropout_rate: float = 0.2
    l2_lambda: float = 1e-4
    seed: int = 0
    early_stop_patience: int = 20

    def validate(self) -> None:
        if not self.eta > 0:
            raise ValidationError("eta must be positive")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValidationError("epochs must be >= 0")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValidationError("dropout_rate must lie in [0, 1)")
        if self.l2_lambda < 0:
            raise ValidationError("l2_lambda must be >= 0")
        if self.early_stop_patience < 0:
            raise ValidationError("early_stop_patience must be >= 0")


@dataclass
class TrainHistory:
    iteration_loss: list[float] = field(default_factory=list)
    epoch_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    best_epoch: int | None = None
    stopped_early: bool = False


def _evaluate(model: MlpModel, X: np.ndarray, Y: np.ndarray) -> tuple[float, float]:
    probs = forward(model, X).probs
    loss = float(-(Y * np.log(np.maximum(probs, LOG_FLOOR))).sum(axis=1).mean())
    acc = float((probs.argmax(axis=1) == Y.argmax(axis=1)).mean())
    return loss, acc


def train_mlp(
    model: MlpModel,
    X,
    Y,
    val: tuple[np.ndarray, np.ndarray] | None = None,
    config: TrainConfig = TrainConfig(),
) -> tuple[MlpModel, TrainHistory]:
    """Mini-batch SGD on the regularised cross-entropy.

    Each epoch reshuffles the rows with a generator seeded from
    ``config.seed``; every batch contributes one update with the gradient
    averaged over its rows.  When ``val`` is given and
    ``early_stop_patience > 0`` training stops after that many epochs
    without a lower validation loss and the best snapshot is returned.
    """
    config.validate()
    X = _as_rows(X, model.n_0)
    Y = _check_targets(Y, model.M, X.shape[0]) if len(X) else np.zeros((0, model.M))
    n = X.shape[0]
    if n == 0:
        raise ValidationError("no training rows")
    if config.batch_size > n:
        raise ValidationError(f"batch_size {config.batch_size} exceeds {n} training rows")
    if val is not None:
        vX = _as_rows(val[0], model.n_0)
        vY = _check_targets(val[1], model.M, vX.shape[0])
    history = TrainHistory()
    rng = np.random.default_rng(config.seed)
    layers = model.layers
    Ws, bs = _split(model.weights)
    lam, eta, rate = config.l2_lambda, config.eta, config.dropout_rate
    best_loss = np.inf
    best_weights = None
    wait = 0
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        batch_losses = []
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            D = Y[idx]
            nets, acts, masks, probs = _forward(Ws, bs, layers, X[idx], rate, rng)
            loss = -(D * np.log(np.maximum(probs, LOG_FLOOR))).sum() / len(idx)
            if lam:
                loss += 0.5 * lam * sum(float(np.vdot(W, W)) for W in Ws)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch starting at {start}")
            history.iteration_loss.append(float(loss))
            batch_losses.append(float(loss))
            gW, gb, _ = _backward(Ws, layers, nets, acts, masks, rate, probs, D, lam)
            for W, b, g, h in zip(Ws, bs, gW, gb):
                W -= eta * g
                b -= eta * h
        history.epoch_loss.append(float(np.mean(batch_losses)))
        if val is None:
            continue
        vloss, vacc = _evaluate(MlpModel(layers, _join(Ws, bs), model.n_0), vX, vY)
        history.val_loss.append(vloss)
        history.val_accuracy.append(vacc)
        if vloss < best_loss:
            best_loss, wait = vloss, 0
            best_weights = _join(Ws, bs)
            history.best_epoch = epoch
        else:
            wait += 1
            if config.early_stop_patience and wait >= config.early_stop_patience:
                history.stopped_early = True
                break
    weights = _join(Ws, bs)
    if val is not None and config.early_stop_patience and best_weights is not None:
        weights = best_weights
    if config.epochs == 0:
        return model, history
    return MlpModel(layers, weights, model.n_0), history


def predict_proba(model: MlpModel, X) -> np.ndarray:
    return forward(model, X).probs


def predict_class(model: MlpModel, X) -> np.ndarray:
    """Argmax of the inference-mode softmax; ties go to the lowest class."""
    return np.argmax(predict_proba(model, X), axis=1)


def gradient_check(model: MlpModel, x, target, epsilon: float = 1e-5, l2_lambda: float = 0.0) -> float:
    """Largest relative gap between backprop and central-difference gradients."""
    if not epsilon > 0:
        raise ValidationError("epsilon must be positive")
    trace = forward(model, x)
    analytic = backward(model, trace, target, l2_lambda)
    worst = 0.0
    for l, w in enumerate(model.weights):
        for idx in np.ndindex(w.shape):
            plus = [m.copy() for m in model.weights]
            minus = [m.copy() for m in model.weights]
            plus[l][idx] += epsilon
            minus[l][idx] -= epsilon
            mp = MlpModel(model.layers, tuple(plus), model.n_0)
            mm = MlpModel(model.layers, tuple(minus), model.n_0)
            ep = cross_entropy_loss(forward(mp, x), target, mp, l2_lambda)
            em = cross_entropy_loss(forward(mm, x), target, mm, l2_lambda)
            fd = (ep - em) / (2.0 * epsilon)
            ga = analytic[l][idx]
            rel = abs(ga - fd) / max(abs(ga), abs(fd), 1e-8)
            worst = max(worst, rel)
    return worst


def save_mlp(model: MlpModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model.to_dict()))


def load_mlp(path: str | Path) -> MlpModel:
    return MlpModel.from_dict(json.loads(Path(path).read_text()))
