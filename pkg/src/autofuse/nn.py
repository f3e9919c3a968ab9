"""Dense feed-forward networks with explicit forward and backward passes.

This is the engine behind the MLP classifier, the early/joint fusion heads,
and integrated-gradients attribution. Everything is plain numpy so the
gradients can be checked against finite differences and the input
gradients reused for attribution.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .exceptions import DivergenceError, ShapeMismatch
from .validation import as_labels, as_matrix, check_min_classes

ACTIVATIONS = ("relu", "tanh")


def _act(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    raise ValueError(f"unknown activation {kind!r}")


def _act_grad(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return (z > 0.0).astype(np.float64)
    if kind == "tanh":
        t = np.tanh(z)
        return 1.0 - t * t
    raise ValueError(f"unknown activation {kind!r}")


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def one_hot(y: np.ndarray, n_classes: int) -> np.ndarray:
    Y = np.zeros((len(y), n_classes), dtype=np.float64)
    Y[np.arange(len(y)), y] = 1.0
    return Y


def cross_entropy(probs: np.ndarray, y: np.ndarray) -> float:
    picked = np.clip(probs[np.arange(len(y)), y], 1e-300, None)
    return float(np.mean(-np.log(picked)))


@dataclass
class MlpParams:
    """Weights and biases of a dense stack; the output layer is linear."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if len(self.weights) != len(self.biases):
            raise ShapeMismatch("weights and biases must pair up")
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape[1] != b.shape[0]:
                raise ShapeMismatch(f"layer {i}: weight/bias width mismatch")
            if i > 0 and self.weights[i - 1].shape[1] != W.shape[0]:
                raise ShapeMismatch(f"layer {i}: dimension chain broken")
            if not (np.isfinite(W).all() and np.isfinite(b).all()):
                raise ShapeMismatch(f"layer {i}: non-finite parameters")

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [W.shape[1] for W in self.weights]

    @property
    def n_inputs(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_outputs(self) -> int:
        return self.weights[-1].shape[1]

    def copy(self) -> "MlpParams":
        return replace(
            self,
            weights=[W.copy() for W in self.weights],
            biases=[b.copy() for b in self.biases],
        )

    def to_dict(self) -> dict:
        return {
            "activation": self.activation,
            "weights": [W.tolist() for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpParams":
        return cls(
            weights=[np.asarray(W, dtype=np.float64) for W in d["weights"]],
            biases=[np.asarray(b, dtype=np.float64) for b in d["biases"]],
            activation=d["activation"],
        )


def init_mlp(layer_sizes, activation: str = "relu", seed: int = 0) -> MlpParams:
    """Glorot-uniform initialization, deterministic in the seed."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes, layer_sizes[1:]):
        a = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-a, a, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights=weights, biases=biases, activation=activation)


def _stack_forward(params: MlpParams, X: np.ndarray, activate_last: bool):
    """Returns the stack output and a cache of layer inputs/pre-activations."""
    inputs, preacts = [X], []
    h = X
    last = len(params.weights) - 1
    for i, (W, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ W + b
        preacts.append(z)
        h = _act(z, params.activation) if (i < last or activate_last) else z
        inputs.append(h)
    return h, (inputs, preacts)


def _stack_backward(params: MlpParams, cache, d_out: np.ndarray, activate_last: bool):
    """Backprop an upstream gradient; returns per-layer grads and d(input)."""
    inputs, preacts = cache
    grads_w = [None] * len(params.weights)
    grads_b = [None] * len(params.biases)
    last = len(params.weights) - 1
    d = d_out
    for i in range(last, -1, -1):
        if i < last or activate_last:
            d = d * _act_grad(preacts[i], params.activation)
        grads_w[i] = inputs[i].T @ d
        grads_b[i] = d.sum(axis=0)
        d = d @ params.weights[i].T
    return grads_w, grads_b, d


def mlp_forward(params: MlpParams, X) -> tuple[np.ndarray, np.ndarray]:
    """Logits and row-softmax probabilities for a batch."""
    X = as_matrix(X)
    if X.shape[1] != params.n_inputs:
        raise ShapeMismatch(f"input width {X.shape[1]} != {params.n_inputs}")
    logits, _ = _stack_forward(params, X, activate_last=False)
    return logits, softmax(logits)


@dataclass
class MlpGradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    inputs: np.ndarray


def mlp_gradients(params: MlpParams, X, y) -> MlpGradients:
    """Gradients of the mean cross-entropy loss w.r.t. parameters and inputs."""
    X = as_matrix(X)
    if X.shape[1] != params.n_inputs:
        raise ShapeMismatch(f"input width {X.shape[1]} != {params.n_inputs}")
    y = as_labels(y)
    if len(y) != X.shape[0]:
        raise ShapeMismatch(f"{X.shape[0]} rows vs {len(y)} labels")
    logits, cache = _stack_forward(params, X, activate_last=False)
    probs = softmax(logits)
    dlogits = (probs - one_hot(y, params.n_outputs)) / len(y)
    gw, gb, dX = _stack_backward(params, cache, dlogits, activate_last=False)
    return MlpGradients(weights=gw, biases=gb, inputs=dX)


@dataclass(frozen=True)
class TrainConfig:
    """Gradient-descent schedule; batch_size 0 means full batch."""

    learning_rate: float = 0.01
    epochs: int = 200
    batch_size: int = 0
    weight_decay: float = 0.0
    seed: int = 0
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError("optimizer must be 'sgd' or 'adam'")


class MlpNetwork:
    """Adapter giving an MlpParams stack the generic trainable-network shape."""

    def __init__(self, params: MlpParams):
        self.params = params

    def parameters(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.params.weights, self.params.biases):
            out.extend([W, b])
        return out

    def decay_flags(self) -> list[bool]:
        return [True, False] * len(self.params.weights)

    def forward(self, X):
        return _stack_forward(self.params, X, activate_last=False)

    def backward(self, cache, dlogits):
        gw, gb, dX = _stack_backward(self.params, cache, dlogits, activate_last=False)
        grads = []
        for w, b in zip(gw, gb):
            grads.extend([w, b])
        return grads, [dX]

    def n_inputs(self):
        return self.params.n_inputs


def _rows(X) -> int:
    return X[0].shape[0] if isinstance(X, tuple) else X.shape[0]


def _take(X, idx):
    return tuple(x[idx] for x in X) if isinstance(X, tuple) else X[idx]


def network_objective(net, X, y, weight_decay: float) -> float:
    logits, _ = net.forward(X)
    loss = cross_entropy(softmax(logits), as_labels(y))
    if weight_decay > 0:
        reg = sum(
            float((p * p).sum())
            for p, decay in zip(net.parameters(), net.decay_flags())
            if decay
        )
        loss += 0.5 * weight_decay * reg
    return loss


def train_network(net, X, y, config: TrainConfig, lr_scales=None) -> dict:
    """Train any forward/backward network by mini-batch gradient descent.

    Parameters are updated in place. ``lr_scales`` optionally rescales the
    step per parameter (a scale of 0 freezes that parameter exactly).
    Raises DivergenceError when the loss or any parameter becomes
    non-finite.
    """
    y = as_labels(y)
    n = _rows(X)
    if len(y) != n:
        raise ShapeMismatch(f"{n} rows vs {len(y)} labels")
    params = net.parameters()
    decay = net.decay_flags()
    if lr_scales is None:
        lr_scales = [1.0] * len(params)

    rng = np.random.default_rng(config.seed)
    history = {"initial_loss": network_objective(net, X, y, config.weight_decay)}

    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    step = 0
    first_grads = None

    batch = config.batch_size if config.batch_size and config.batch_size < n else n
    for _ in range(config.epochs):
        order = np.arange(n) if batch == n else rng.permutation(n)
        for start in range(0, n, batch):
            idx = order[start : start + batch]
            Xb, yb = _take(X, idx), y[idx]
            logits, cache = net.forward(Xb)
            if not np.isfinite(logits).all():
                raise DivergenceError("logits became non-finite during training")
            probs = softmax(logits)
            dlogits = (probs - one_hot(yb, logits.shape[1])) / len(yb)
            grads, _ = net.backward(cache, dlogits)
            if config.weight_decay > 0:
                grads = [
                    g + config.weight_decay * p if d else g
                    for g, p, d in zip(grads, params, decay)
                ]
            if first_grads is None:
                first_grads = [g.copy() for g in grads]
            step += 1
            for i, (p, g, scale) in enumerate(zip(params, grads, lr_scales)):
                if scale == 0.0:
                    continue
                if config.optimizer == "sgd":
                    p -= config.learning_rate * scale * g
                else:
                    m[i] = config.beta1 * m[i] + (1 - config.beta1) * g
                    v[i] = config.beta2 * v[i] + (1 - config.beta2) * (g * g)
                    m_hat = m[i] / (1 - config.beta1**step)
                    v_hat = v[i] / (1 - config.beta2**step)
                    p -= config.learning_rate * scale * m_hat / (np.sqrt(v_hat) + config.eps)

    if not all(np.isfinite(p).all() for p in params):
        raise DivergenceError("parameters became non-finite during training")
    history["final_loss"] = network_objective(net, X, y, config.weight_decay)
    if not np.isfinite(history["final_loss"]):
        raise DivergenceError("training loss became non-finite")
    history["first_step_grads"] = first_grads
    return history


def train_mlp(
    X,
    y,
    hidden,
    config: TrainConfig,
    activation: str = "relu",
    n_classes: int | None = None,
    init: MlpParams | None = None,
    return_history: bool = False,
):
    """Train a dense classifier head; deterministic given the config seed."""
    X = as_matrix(X)
    y = as_labels(y)
    observed = check_min_classes(y)
    C = n_classes if n_classes is not None else observed
    if init is None:
        sizes = [X.shape[1], *list(hidden), C]
        init = init_mlp(sizes, activation=activation, seed=config.seed)
    else:
        if init.n_inputs != X.shape[1]:
            raise ShapeMismatch("init width does not match the data")
    params = init.copy()
    history = train_network(MlpNetwork(params), X, y, config)
    return (params, history) if return_history else params


def integrated_gradients(
    params: MlpParams,
    x,
    baseline=None,
    steps: int = 64,
    target: int | None = None,
) -> np.ndarray:
    """Midpoint-rule path integral of the target logit's input gradient.

    Attribution i is (x_i - baseline_i) times the mean gradient of the
    target class logit along the straight path from baseline to x; the
    attributions sum to F(x) - F(baseline) as steps grows (completeness).
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    x = np.asarray(x, dtype=np.float64).ravel()
    baseline = np.zeros_like(x) if baseline is None else np.asarray(baseline, dtype=np.float64).ravel()
    if x.shape != baseline.shape:
        raise ShapeMismatch("input and baseline widths differ")
    if x.shape[0] != params.n_inputs:
        raise ShapeMismatch(f"input width {x.shape[0]} != {params.n_inputs}")

    if target is None:
        _, probs = mlp_forward(params, x.reshape(1, -1))
        target = int(probs[0].argmax())

    alphas = (np.arange(steps, dtype=np.float64) + 0.5) / steps
    path = baseline + alphas[:, None] * (x - baseline)
    _, cache = _stack_forward(params, path, activate_last=False)
    d_logits = np.zeros((steps, params.n_outputs))
    d_logits[:, target] = 1.0
    _, _, d_inputs = _stack_backward(params, cache, d_logits, activate_last=False)
    return (x - baseline) * d_inputs.mean(axis=0)


def target_logit(params: MlpParams, x, target: int) -> float:
    logits, _ = mlp_forward(params, np.asarray(x, dtype=np.float64).reshape(1, -1))
    return float(logits[0, target])
