"""Dense feedforward regression network written directly in numpy.

Hidden layers use ELU, the output layer is linear and the loss is the mean
squared error over all output entries. Training uses mini-batch Adam with
a plateau learning-rate schedule, early stopping on the validation loss and
restoration of the best-validation parameters.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError
from .estimation import PhaseBeamSolution

FORMAT_MAGIC = b"IRSDLMLP"
FORMAT_VERSION = 1


# ---------------------------------------------------------------------------
# Complex/real layout and input scaling
# ---------------------------------------------------------------------------

def complex_to_real_stack(z) -> np.ndarray:
    """``[Re z, Im z]`` along the last axis."""
    z = np.asarray(z)
    return np.concatenate([z.real, z.imag], axis=-1).astype(float)


def real_to_complex_stack(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] % 2:
        raise DimensionError(f"real stack needs even length, got {x.shape[-1]}")
    k = x.shape[-1] // 2
    return x[..., :k] + 1j * x[..., k:]


@dataclass
class StandardScaler:
    """Per-feature standardization; zero-variance features are only centered."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X) -> "StandardScaler":
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[0] < 2:
            raise ValueError("scaler needs a 2-D array with at least two samples")
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        std[std == 0] = 1.0
        return cls(mean=mean, std=std)

    def apply(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.std


def scaler_fit(X) -> StandardScaler:
    return StandardScaler.fit(X)


def scaler_apply(scaler: StandardScaler, x) -> np.ndarray:
    return scaler.apply(x)


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------

def elu(x):
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0)))


def elu_grad(x):
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, 1.0, np.exp(np.minimum(x, 0)))


@dataclass
class MlpModel:
    """Weights are stored ``(fan_in, fan_out)`` so a batch maps as ``X @ W + b``."""

    layer_sizes: list
    weights: list
    biases: list
    scaler: StandardScaler | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.layer_sizes = [int(s) for s in self.layer_sizes]
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise DimensionError("need one weight matrix and bias per layer transition")
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            shape = (self.layer_sizes[k], self.layer_sizes[k + 1])
            if W.shape != shape or b.shape != (shape[1],):
                raise DimensionError(f"layer {k}: got W{W.shape}, b{b.shape}, expected W{shape}")

    @property
    def input_width(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_width(self) -> int:
        return self.layer_sizes[-1]

    @property
    def params(self) -> list:
        """Parameters in the order ``[W0, b0, W1, b1, ...]`` (views, not copies)."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def copy(self) -> "MlpModel":
        return MlpModel(list(self.layer_sizes), [W.copy() for W in self.weights],
                        [b.copy() for b in self.biases], self.scaler, dict(self.meta))

    def predict(self, X) -> np.ndarray:
        """Forward pass on raw (unscaled) inputs."""
        X = np.asarray(X, dtype=float)
        if self.scaler is not None:
            X = self.scaler.apply(X)
        return forward(self, X)


def init_model(layer_sizes, rng: np.random.Generator) -> MlpModel:
    """Uniform Glorot weights, zero biases."""
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(list(layer_sizes), weights, biases)


def _check_input(model, X):
    X = np.asarray(X, dtype=float)
    if X.shape[-1] != model.input_width:
        raise DimensionError(f"input width {X.shape[-1]} != model input width {model.input_width}")
    return X


def forward(model: MlpModel, x, return_cache: bool = False):
    """Network output for an input vector or a batch of row inputs."""
    X = _check_input(model, x)
    a = X
    pre = []
    last = len(model.weights) - 1
    for k, (W, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ W + b
        pre.append(z)
        a = z if k == last else elu(z)
    if return_cache:
        return a, (X, pre)
    return a


def backward(model: MlpModel, x, target):
    """MSE loss and its gradients, ordered like :attr:`MlpModel.params`."""
    out, (X, pre) = forward(model, x, return_cache=True)
    target = np.asarray(target, dtype=float)
    if target.shape != out.shape:
        raise DimensionError(f"target shape {target.shape} != output shape {out.shape}")
    err = out - target
    loss = float(np.mean(err ** 2))
    delta = 2.0 * err / err.size
    grads = [None] * (2 * len(model.weights))
    for k in range(len(model.weights) - 1, -1, -1):
        a_in = X if k == 0 else elu(pre[k - 1])
        if delta.ndim == 1:
            grads[2 * k] = np.outer(a_in, delta)
            grads[2 * k + 1] = delta.copy()
        else:
            grads[2 * k] = a_in.T @ delta
            grads[2 * k + 1] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ model.weights[k].T) * elu_grad(pre[k - 1])
    return loss, grads


# ---------------------------------------------------------------------------
# Optimizer and training loop
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params, **kw) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], **kw)


def adam_step(params, grads, state: AdamState, lr: float) -> AdamState:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1 - b1 ** state.t
    c2 = 1 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return state


@dataclass(frozen=True)
class TrainConfig:
    lr0: float = 5e-4
    batch: int = 32
    max_epochs: int = 200
    plateau_patience: int = 5
    plateau_factor: float = 0.5
    early_stop_patience: int = 10
    min_lr: float = 1e-6
    min_delta: float = 1e-8
    train_fraction: float = 0.8
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie in (0, 1)")
        if self.lr0 <= 0 or self.batch < 1 or self.max_epochs < 1:
            raise ValueError("lr0, batch and max_epochs must be positive")


def mse(model: MlpModel, X, Y, chunk: int = 4096) -> float:
    total = 0.0
    for s in range(0, len(X), chunk):
        total += float(np.sum((forward(model, X[s:s + chunk]) - Y[s:s + chunk]) ** 2))
    return total / np.asarray(Y).size


def train(model: MlpModel, X_train, Y_train, X_val, Y_val, tc: TrainConfig = TrainConfig(),
          rng: np.random.Generator | None = None, log=None):
    """Train ``model`` on already-scaled inputs.

    Returns ``(best_model, history)`` where ``history`` holds one dict per
    epoch with ``epoch``, ``train_mse``, ``val_mse`` and ``lr``. The input
    model is left untouched.
    """
    X_train = np.asarray(X_train, dtype=float)
    Y_train = np.asarray(Y_train, dtype=float)
    X_val = np.asarray(X_val, dtype=float)
    Y_val = np.asarray(Y_val, dtype=float)
    if len(X_train) == 0 or len(X_val) == 0:
        raise ValueError("training and validation sets must be non-empty")
    if rng is None:
        rng = np.random.default_rng(tc.seed)

    model = model.copy()
    params = model.params
    state = AdamState.zeros_like(params, beta1=tc.beta1, beta2=tc.beta2, eps=tc.eps)
    lr = tc.lr0
    best_val = np.inf
    best = model.copy()
    since_best = since_reduce = 0
    history = []
    n = len(X_train)
    for epoch in range(1, tc.max_epochs + 1):
        order = rng.permutation(n)
        running = 0.0
        for s in range(0, n, tc.batch):
            idx = order[s:s + tc.batch]
            loss, grads = backward(model, X_train[idx], Y_train[idx])
            adam_step(params, grads, state, lr)
            running += loss * len(idx)
        val = mse(model, X_val, Y_val)
        history.append({"epoch": epoch, "train_mse": running / n, "val_mse": val, "lr": lr})
        if log is not None:
            log(history[-1])

        if val < best_val - tc.min_delta:
            best_val = val
            best = model.copy()
            since_best = since_reduce = 0
            continue
        since_best += 1
        since_reduce += 1
        if since_best >= tc.early_stop_patience:
            break
        if since_reduce >= tc.plateau_patience:
            since_reduce = 0
            if lr * tc.plateau_factor >= tc.min_lr:
                lr *= tc.plateau_factor
    return best, history


def split_indices(n: int, train_fraction: float, rng: np.random.Generator):
    """Random train/validation index split."""
    order = rng.permutation(n)
    n_train = int(round(train_fraction * n))
    n_train = min(max(n_train, 1), n - 1)
    return np.sort(order[:n_train]), np.sort(order[n_train:])


def fit_regressor(layer_sizes, X_train, Y_train, X_val, Y_val, tc: TrainConfig = TrainConfig(),
                  meta: dict | None = None, log=None):
    """Fit the scaler on the training inputs, initialize and train a network."""
    rng = np.random.default_rng(tc.seed)
    scaler = StandardScaler.fit(X_train)
    model = init_model(layer_sizes, rng)
    best, history = train(model, scaler.apply(X_train), Y_train, scaler.apply(X_val), Y_val,
                          tc, rng=rng, log=log)
    best.scaler = scaler
    best.meta = dict(meta or {})
    return best, history


def project_solution(omega, N: int) -> PhaseBeamSolution:
    """Map a raw complex ``[phi; w]`` estimate onto the feasible set.

    Each phase entry keeps its angle and gets unit modulus (an exact zero
    maps to phase 0); the beam is scaled to unit norm (an all-zero beam
    falls back to the uniform beam).
    """
    omega = np.asarray(omega, dtype=complex)
    phi, w = omega[:N], omega[N:]
    mag = np.abs(phi)
    phi = np.where(mag > 0, phi / np.where(mag > 0, mag, 1), 1.0 + 0j)
    norm = np.linalg.norm(w)
    w = w / norm if norm > 0 else np.full(w.shape, 1 / np.sqrt(w.size), dtype=complex)
    return PhaseBeamSolution(phi=phi, w=w)


def predict_solution(model: MlpModel, y_p, N: int) -> PhaseBeamSolution:
    """Map one received pilot vector straight to a feasible phase/beam pair."""
    y_p = getattr(y_p, "y_p", y_p)
    x = complex_to_real_stack(np.asarray(y_p))
    return project_solution(real_to_complex_stack(model.predict(x)), N)


def predict_solutions(model: MlpModel, inputs, N: int) -> list:
    """Batched :func:`predict_solution` on already real-stacked inputs."""
    raw = real_to_complex_stack(model.predict(inputs))
    return [project_solution(row, N) for row in raw]


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def save_model(model: MlpModel, path) -> None:
    """Binary format: magic, version, JSON header, then little-endian doubles.

    Payload order is scaler mean, scaler std, then for each layer the
    row-major ``(fan_in, fan_out)`` weight matrix followed by its bias.
    """
    if model.scaler is None:
        raise ValueError("only trained models with a fitted scaler can be saved")
    header = json.dumps({"layer_sizes": model.layer_sizes, "hidden_activation": "elu",
                         "output_activation": "linear", "meta": model.meta},
                        sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(FORMAT_MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(header)))
        fh.write(header)
        for arr in [model.scaler.mean, model.scaler.std] + model.params:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_model(path, input_width: int | None = None, output_width: int | None = None) -> MlpModel:
    data = Path(path).read_bytes()
    if data[:8] != FORMAT_MAGIC:
        raise ValueError(f"{path} is not a model file")
    version, hlen = struct.unpack_from("<II", data, 8)
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {version}")
    header = json.loads(data[16:16 + hlen])
    sizes = header["layer_sizes"]
    if input_width is not None and sizes[0] != input_width:
        raise DimensionError(f"model input width {sizes[0]} != expected {input_width}")
    if output_width is not None and sizes[-1] != output_width:
        raise DimensionError(f"model output width {sizes[-1]} != expected {output_width}")
    payload = np.frombuffer(data, dtype="<f8", offset=16 + hlen).astype(float)
    shapes = [(sizes[0],), (sizes[0],)]
    for a, b in zip(sizes[:-1], sizes[1:]):
        shapes += [(a, b), (b,)]
    if payload.size != sum(int(np.prod(s)) for s in shapes):
        raise ValueError(f"{path}: payload size does not match layer sizes {sizes}")
    arrays, pos = [], 0
    for s in shapes:
        k = int(np.prod(s))
        arrays.append(payload[pos:pos + k].reshape(s))
        pos += k
    scaler = StandardScaler(arrays[0], arrays[1])
    return MlpModel(sizes, arrays[2::2], arrays[3::2], scaler, header.get("meta", {}))
