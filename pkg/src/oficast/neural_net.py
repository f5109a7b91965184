"""From-scratch feedforward network for residual and imbalance regression.

Dense layers with a configurable hidden activation (relu, tanh, or
sigmoid), identity output, mean-squared-error loss, exact reverse-mode
gradients, and mini-batch SGD or Adam.  Everything is plain numpy; no
autograd framework is involved, which is why :func:`gradient_check` exists.

Inputs and targets are standardized internally: an affine scaler fitted on
the training slice maps features to zero mean and unit variance, and the
inverse target scaler is applied on the way out.  Raw order-count scales
would otherwise saturate the squashing activations and stall the default
learning rate.  ``forward`` always speaks raw units.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FNN_FORMAT_TAG = "oficast-fnn v1"

#: ReLU's derivative at exactly zero is taken as 0 (one-sided subgradient).
ACTIVATIONS = ("relu", "tanh", "sigmoid")


def _relu(x):
    return np.maximum(x, 0.0)


def _relu_grad(x):
    return (x > 0.0).astype(float)


def _tanh(x):
    return np.tanh(x)


def _tanh_grad(x):
    t = np.tanh(x)
    return 1.0 - t * t


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _sigmoid_grad(x):
    s = _sigmoid(x)
    return s * (1.0 - s)


_ACTIVATION_FUNCS = {
    "relu": (_relu, _relu_grad),
    "tanh": (_tanh, _tanh_grad),
    "sigmoid": (_sigmoid, _sigmoid_grad),
}


@dataclass(frozen=True)
class FnnTopology:
    """Layer widths and hidden activation; the output layer is linear."""

    input_dim: int
    hidden_layers: tuple[int, ...]
    output_dim: int
    activation: str = "relu"

    def __post_init__(self) -> None:
        if self.input_dim < 1:
            raise ValueError(f"input_dim must be >= 1, got {self.input_dim}")
        if self.output_dim < 1:
            raise ValueError(f"output_dim must be >= 1, got {self.output_dim}")
        if any(w < 1 for w in self.hidden_layers):
            raise ValueError(f"hidden layer widths must be >= 1, got {self.hidden_layers}")
        if self.activation not in _ACTIVATION_FUNCS:
            raise ValueError(
                f"activation must be one of {ACTIVATIONS}, got {self.activation!r}"
            )

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_layers, self.output_dim)


@dataclass(frozen=True)
class AffineScaler:
    """Per-feature standardization x -> (x - mean) / scale, invertible."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, data: np.ndarray) -> "AffineScaler":
        data = np.asarray(data, dtype=float)
        mean = data.mean(axis=0)
        scale = data.std(axis=0)
        # constant features keep scale 1 so the transform stays invertible
        scale = np.where(scale == 0.0, 1.0, scale)
        return cls(mean=mean, scale=scale)

    @classmethod
    def identity(cls, dim: int) -> "AffineScaler":
        return cls(mean=np.zeros(dim), scale=np.ones(dim))

    def transform(self, data: np.ndarray) -> np.ndarray:
        return (np.asarray(data, dtype=float) - self.mean) / self.scale

    def inverse(self, data: np.ndarray) -> np.ndarray:
        return np.asarray(data, dtype=float) * self.scale + self.mean


@dataclass
class FnnModel:
    topology: FnnTopology
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    input_scaler: AffineScaler
    target_scaler: AffineScaler


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings; defaults are the library's standard operating point."""

    epochs: int = 50
    batch_size: int = 8
    optimizer: str = "adam"
    learning_rate: float = 0.001
    early_stopping: bool = True
    patience: int = 5
    validation_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")
        if self.early_stopping and not 0.0 < self.validation_fraction < 1.0:
            raise ValueError(
                f"validation_fraction must lie in (0, 1), got {self.validation_fraction}"
            )


@dataclass
class TrainingTrace:
    """Per-epoch losses (scaled space); epochs are 1-based in exports."""

    train_losses: list[float] = field(default_factory=list)
    val_losses: list[float | None] = field(default_factory=list)
    stopped_epoch: int = 0
    best_epoch: int = 0


def write_trace_csv(trace: TrainingTrace, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("epoch,train_loss,val_loss\n")
        for i, (tr, va) in enumerate(zip(trace.train_losses, trace.val_losses), start=1):
            va_txt = "" if va is None else repr(va)
            fh.write(f"{i},{tr!r},{va_txt}\n")


def init_model(topology: FnnTopology, seed: int = 0) -> FnnModel:
    """Xavier-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases,
    identity scalers.  Deterministic for a given seed."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    dims = topology.layer_dims
    for fan_in, fan_out in zip(dims, dims[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return FnnModel(
        topology=topology,
        weights=weights,
        biases=biases,
        input_scaler=AffineScaler.identity(topology.input_dim),
        target_scaler=AffineScaler.identity(topology.output_dim),
    )


def _forward_scaled(model: FnnModel, xs: np.ndarray):
    """Forward pass in scaled space; returns (per-layer activations,
    per-layer pre-activations).  activations[0] is the input."""
    act, _ = _ACTIVATION_FUNCS[model.topology.activation]
    activations = [xs]
    pre_activations = []
    out = xs
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = out @ w + b
        pre_activations.append(z)
        out = z if i == last else act(z)  # identity output layer
        activations.append(out)
    return activations, pre_activations


def forward(model: FnnModel, inputs: np.ndarray) -> np.ndarray:
    """Predict in raw units: scale inputs, run the network, invert the
    target scaler.  Accepts a single sample (d,) or a batch (n, d)."""
    x = np.asarray(inputs, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != model.topology.input_dim:
        raise ValueError(
            f"expected inputs of width {model.topology.input_dim}, got {x.shape[1]}"
        )
    activations, _ = _forward_scaled(model, model.input_scaler.transform(x))
    out = model.target_scaler.inverse(activations[-1])
    return out[0] if single else out


def loss(predictions: np.ndarray, targets: np.ndarray) -> float:
    """Mean squared error over every output element."""
    p = np.asarray(predictions, dtype=float)
    t = np.asarray(targets, dtype=float)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {t.shape}")
    if p.size == 0:
        raise ValueError("empty batch")
    diff = p - t
    return float(np.mean(diff * diff))


def _scaled_batch(model: FnnModel, inputs, targets):
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    y = np.atleast_2d(np.asarray(targets, dtype=float))
    return model.input_scaler.transform(x), model.target_scaler.transform(y)


def training_loss(model: FnnModel, inputs, targets) -> float:
    """The objective the optimizer sees: MSE in scaled space."""
    xs, ys = _scaled_batch(model, inputs, targets)
    activations, _ = _forward_scaled(model, xs)
    return loss(activations[-1], ys)


def _backward_scaled(model: FnnModel, xs: np.ndarray, ys: np.ndarray):
    _, act_grad = _ACTIVATION_FUNCS[model.topology.activation]
    activations, pre_activations = _forward_scaled(model, xs)
    out = activations[-1]
    n_layers = len(model.weights)
    weight_grads = [None] * n_layers
    bias_grads = [None] * n_layers
    # d(MSE)/d(out); the mean runs over batch * output_dim elements
    delta = 2.0 * (out - ys) / out.size
    for i in range(n_layers - 1, -1, -1):
        weight_grads[i] = activations[i].T @ delta
        bias_grads[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ model.weights[i].T) * act_grad(pre_activations[i - 1])
    return weight_grads, bias_grads


def backward(model: FnnModel, inputs, targets):
    """Exact gradients of :func:`training_loss` w.r.t. every weight and bias.

    Returns (weight_grads, bias_grads) shaped like the parameter lists.
    """
    xs, ys = _scaled_batch(model, inputs, targets)
    return _backward_scaled(model, xs, ys)


class _Sgd:
    def __init__(self, lr):
        self.lr = lr

    def step(self, params, grads):
        for p, g in zip(params, grads):
            p -= self.lr * g


class _Adam:
    beta1 = 0.9
    beta2 = 0.999
    eps = 1e-8

    def __init__(self, lr, params):
        self.lr = lr
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            m_hat = self.m[i] / (1.0 - self.beta1**self.t)
            v_hat = self.v[i] / (1.0 - self.beta2**self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def train(inputs, targets, topology: FnnTopology, config: TrainConfig):
    """Mini-batch training; returns (FnnModel, TrainingTrace).

    The batch order reshuffles every epoch from the config seed.  With
    early stopping on, the chronologically last ``validation_fraction`` of
    the samples is held out, training stops after ``patience`` epochs
    without validation improvement, and the best-epoch parameters are
    restored.  Scalers are fitted on the training slice only.  The whole
    procedure is a pure function of (data, topology, config).
    """
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    y = np.asarray(targets, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    n = x.shape[0]
    if y.shape[0] != n:
        raise ValueError(f"inputs/targets length mismatch: {n} vs {y.shape[0]}")
    if n < 1:
        raise ValueError("no training samples")
    if x.shape[1] != topology.input_dim or y.shape[1] != topology.output_dim:
        raise ValueError(
            f"data shaped {x.shape}/{y.shape} does not match topology "
            f"{topology.input_dim}->{topology.output_dim}"
        )

    if config.early_stopping:
        if n < 2:
            raise ValueError("early stopping needs at least 2 samples")
        n_val = max(1, int(math.floor(config.validation_fraction * n + 1e-9)))
        n_train = n - n_val
        if n_train < 1:
            raise ValueError(
                f"validation_fraction={config.validation_fraction} leaves no training rows"
            )
    else:
        n_train = n
        n_val = 0
    x_train, y_train = x[:n_train], y[:n_train]
    x_val, y_val = x[n_train:], y[n_train:]

    if n_train > 1 and np.all(x_train == x_train[0]) and not np.all(y_train == y_train[0]):
        warnings.warn(
            "all training inputs are identical but targets conflict; "
            "the fit can only learn the mean target",
            stacklevel=2,
        )

    model = init_model(topology, seed=config.seed)
    model.input_scaler = AffineScaler.fit(x_train)
    model.target_scaler = AffineScaler.fit(y_train)
    xs = model.input_scaler.transform(x_train)
    ys = model.target_scaler.transform(y_train)
    xs_val = model.input_scaler.transform(x_val) if n_val else None
    ys_val = model.target_scaler.transform(y_val) if n_val else None

    params = model.weights + model.biases
    if config.optimizer == "adam":
        optimizer = _Adam(config.learning_rate, params)
    else:
        optimizer = _Sgd(config.learning_rate)

    rng = np.random.default_rng(config.seed)
    trace = TrainingTrace()
    best_val = math.inf
    best_params = None
    epochs_since_best = 0

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n_train)
        for lo in range(0, n_train, config.batch_size):
            batch = order[lo : lo + config.batch_size]  # last partial batch kept
            wg, bg = _backward_scaled(model, xs[batch], ys[batch])
            optimizer.step(params, wg + bg)

        out_train, _ = _forward_scaled(model, xs)
        trace.train_losses.append(loss(out_train[-1], ys))
        if n_val:
            out_val, _ = _forward_scaled(model, xs_val)
            val_loss = loss(out_val[-1], ys_val)
        else:
            val_loss = None
        trace.val_losses.append(val_loss)
        trace.stopped_epoch = epoch

        if config.early_stopping:
            if val_loss < best_val:
                best_val = val_loss
                trace.best_epoch = epoch
                best_params = (
                    [w.copy() for w in model.weights],
                    [b.copy() for b in model.biases],
                )
                epochs_since_best = 0
            else:
                epochs_since_best += 1
                if epochs_since_best >= config.patience:
                    break
        else:
            trace.best_epoch = epoch

    if config.early_stopping and best_params is not None:
        model.weights = [w.copy() for w in best_params[0]]
        model.biases = [b.copy() for b in best_params[1]]
    return model, trace


@dataclass(frozen=True)
class GradientCheckReport:
    max_rel_error: float
    worst_param: str
    passed: bool


def gradient_check(
    model: FnnModel,
    inputs,
    targets,
    step: float = 1e-5,
    tolerance: float = 1e-4,
    analytic=None,
) -> GradientCheckReport:
    """Compare :func:`backward` against central finite differences.

    Each parameter entry is perturbed by +-step, the training loss is
    re-evaluated, and the relative error against the analytic gradient is
    recorded; the check passes when the worst entry beats ``tolerance``.
    ``analytic`` overrides the gradients under test (used to prove the
    check catches corrupted values).  Meaningful for relu only away from
    kinks, where the loss is differentiable.
    """
    if analytic is None:
        analytic = backward(model, inputs, targets)
    weight_grads, bias_grads = analytic
    max_rel = 0.0
    worst = ""
    for kind, arrays, grads in (
        ("W", model.weights, weight_grads),
        ("b", model.biases, bias_grads),
    ):
        for layer, (arr, grad) in enumerate(zip(arrays, grads)):
            flat = arr.ravel()
            gflat = np.asarray(grad).ravel()
            for idx in range(flat.size):
                orig = flat[idx]
                flat[idx] = orig + step
                up = training_loss(model, inputs, targets)
                flat[idx] = orig - step
                down = training_loss(model, inputs, targets)
                flat[idx] = orig
                numeric = (up - down) / (2.0 * step)
                a = float(gflat[idx])
                denom = max(abs(a), abs(numeric), 1e-8)
                rel = abs(a - numeric) / denom
                if rel > max_rel:
                    max_rel = rel
                    worst = f"{kind}{layer}[{idx}]"
    return GradientCheckReport(
        max_rel_error=max_rel, worst_param=worst, passed=max_rel < tolerance
    )


def save_fnn(model: FnnModel, path: str | Path) -> None:
    """Versioned text persistence at full precision (repr round-trip)."""
    t = model.topology
    lines = [FNN_FORMAT_TAG]
    lines.append(f"input_dim: {t.input_dim}")
    lines.append("hidden: " + ",".join(str(w) for w in t.hidden_layers))
    lines.append(f"output_dim: {t.output_dim}")
    lines.append(f"activation: {t.activation}")
    for name, scaler in (
        ("input_scaler", model.input_scaler),
        ("target_scaler", model.target_scaler),
    ):
        lines.append(f"{name}_mean: " + " ".join(repr(float(v)) for v in scaler.mean))
        lines.append(f"{name}_scale: " + " ".join(repr(float(v)) for v in scaler.scale))
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        lines.append(f"layer {i} weight {w.shape[0]} {w.shape[1]}")
        for row in w:
            lines.append(" ".join(repr(float(v)) for v in row))
        lines.append(f"layer {i} bias {b.shape[0]}")
        lines.append(" ".join(repr(float(v)) for v in b))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_fnn(path: str | Path) -> FnnModel:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != FNN_FORMAT_TAG:
        raise ValueError(f"{path}: not a {FNN_FORMAT_TAG} file")

    def expect(idx: int, key: str) -> str:
        prefix = key + ": "
        if idx >= len(lines) or not lines[idx].startswith(prefix):
            raise ValueError(f"{path}: expected '{key}:' on line {idx + 1}")
        return lines[idx][len(prefix) :]

    input_dim = int(expect(1, "input_dim"))
    hidden_txt = expect(2, "hidden")
    hidden = tuple(int(tok) for tok in hidden_txt.split(",")) if hidden_txt else ()
    output_dim = int(expect(3, "output_dim"))
    activation = expect(4, "activation")
    topology = FnnTopology(
        input_dim=input_dim,
        hidden_layers=hidden,
        output_dim=output_dim,
        activation=activation,
    )
    scalers = {}
    row = 5
    for name in ("input_scaler", "target_scaler"):
        mean = np.array([float(v) for v in expect(row, f"{name}_mean").split()])
        scale = np.array([float(v) for v in expect(row + 1, f"{name}_scale").split()])
        scalers[name] = AffineScaler(mean=mean, scale=scale)
        row += 2
    dims = topology.layer_dims
    weights, biases = [], []
    for i, (fan_in, fan_out) in enumerate(zip(dims, dims[1:])):
        if lines[row] != f"layer {i} weight {fan_in} {fan_out}":
            raise ValueError(f"{path}: bad layer header on line {row + 1}: {lines[row]!r}")
        row += 1
        w = np.array(
            [[float(v) for v in lines[row + r].split()] for r in range(fan_in)]
        )
        if w.shape != (fan_in, fan_out):
            raise ValueError(f"{path}: layer {i} weight block has wrong shape")
        row += fan_in
        if lines[row] != f"layer {i} bias {fan_out}":
            raise ValueError(f"{path}: bad bias header on line {row + 1}: {lines[row]!r}")
        row += 1
        b = np.array([float(v) for v in lines[row].split()])
        if b.shape != (fan_out,):
            raise ValueError(f"{path}: layer {i} bias block has wrong shape")
        row += 1
        weights.append(w)
        biases.append(b)
    return FnnModel(
        topology=topology,
        weights=weights,
        biases=biases,
        input_scaler=scalers["input_scaler"],
        target_scaler=scalers["target_scaler"],
    )
