"""
gsdlab Models

Small differentiable models with hand-written backprop. The central product is
the per-sample gradient matrix: one row per example, one column per parameter.
"""

from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.special import expit, logsumexp, softmax

from src.errors import ConfigError, DimMismatch


class ModelKind(str, Enum):
    """Supported model families"""
    LINEAR_REGRESSION = "linear-regression"
    LOGISTIC_REGRESSION = "logistic-regression"
    SOFTMAX_REGRESSION = "softmax-regression"
    MLP = "mlp"


class Activation(str, Enum):
    """Hidden-layer nonlinearity (mlp only)"""
    TANH = "tanh"
    RELU = "relu"


CONVEX_KINDS = (
    ModelKind.LINEAR_REGRESSION,
    ModelKind.LOGISTIC_REGRESSION,
    ModelKind.SOFTMAX_REGRESSION,
)


class ModelSpec(BaseModel):
    """
    Architecture descriptor.

    num_classes is ignored for linear-regression (single real output).
    """
    kind: ModelKind
    input_dim: int = Field(gt=0)
    hidden_dims: List[int] = Field(default_factory=list)
    num_classes: int = Field(default=2, gt=0)
    activation: Activation = Activation.TANH

    @model_validator(mode="after")
    def _check_kind(self):
        if any(h <= 0 for h in self.hidden_dims):
            raise ValueError("hidden_dims must be positive")
        if self.kind != ModelKind.MLP and self.hidden_dims:
            raise ValueError(f"hidden_dims only apply to mlp, not {self.kind.value}")
        if self.kind == ModelKind.LOGISTIC_REGRESSION and self.num_classes != 2:
            raise ValueError("logistic-regression requires num_classes == 2")
        if self.kind in (ModelKind.SOFTMAX_REGRESSION, ModelKind.MLP) and self.num_classes < 2:
            raise ValueError(f"{self.kind.value} requires num_classes >= 2")
        return self

    @property
    def is_classifier(self) -> bool:
        return self.kind != ModelKind.LINEAR_REGRESSION

    @property
    def is_convex(self) -> bool:
        return self.kind in CONVEX_KINDS

    @property
    def output_dim(self) -> int:
        if self.kind in (ModelKind.LINEAR_REGRESSION, ModelKind.LOGISTIC_REGRESSION):
            return 1
        return self.num_classes

    def layer_shapes(self) -> List[Tuple[int, int]]:
        """(fan_in, fan_out) of every affine layer, input to output"""
        dims = [self.input_dim] + list(self.hidden_dims) + [self.output_dim]
        return list(zip(dims[:-1], dims[1:]))

    @property
    def num_params(self) -> int:
        return sum(fan_in * fan_out + fan_out for fan_in, fan_out in self.layer_shapes())


class ModelParams(BaseModel):
    """Flat parameter vector theta laid out as W1, b1, W2, b2, ... (W row-major)"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    spec: ModelSpec
    theta: np.ndarray

    @field_validator("theta", mode="before")
    @classmethod
    def _as_vector(cls, v):
        return np.array(v, dtype=np.float64, copy=True).reshape(-1)

    @model_validator(mode="after")
    def _check_length(self):
        if self.theta.size != self.spec.num_params:
            raise ValueError(
                f"theta has {self.theta.size} entries, spec needs {self.spec.num_params}"
            )
        return self

    @property
    def p(self) -> int:
        return self.theta.size

    def layers(self) -> List[Tuple[np.ndarray, np.ndarray]]:
        """Views (W, b) into theta for every layer"""
        out = []
        offset = 0
        for fan_in, fan_out in self.spec.layer_shapes():
            W = self.theta[offset:offset + fan_in * fan_out].reshape(fan_in, fan_out)
            offset += fan_in * fan_out
            b = self.theta[offset:offset + fan_out]
            offset += fan_out
            out.append((W, b))
        return out

    def with_theta(self, theta: np.ndarray) -> "ModelParams":
        return ModelParams(spec=self.spec, theta=theta)


class Batch(BaseModel):
    """m examples: features (m×d) and labels (length m)"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    features: np.ndarray
    labels: np.ndarray

    @field_validator("features", "labels", mode="before")
    @classmethod
    def _as_array(cls, v):
        return np.array(v, dtype=np.float64, copy=True)

    @model_validator(mode="after")
    def _check_shapes(self):
        if self.features.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {self.features.shape}")
        if self.labels.ndim != 1 or self.labels.size != self.features.shape[0]:
            raise ValueError("labels must be a vector with one entry per feature row")
        if self.features.shape[0] < 1:
            raise ValueError("a batch needs at least one example")
        if not (np.all(np.isfinite(self.features)) and np.all(np.isfinite(self.labels))):
            raise ValueError("batch contains NaN or Inf")
        return self

    @property
    def size(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Batch":
        return Batch(features=self.features[idx], labels=self.labels[idx])

    def with_labels(self, labels) -> "Batch":
        return Batch(features=self.features, labels=labels)


class Metrics(BaseModel):
    """Mean loss and accuracy over a batch"""
    loss: float
    accuracy: float


class SgdConfig(BaseModel):
    """Vanilla minibatch SGD settings"""
    learning_rate: float = Field(default=1.0, gt=0)
    steps: int = Field(default=100, ge=1)
    batch_size: int = Field(default=64, ge=1)
    seed: int = 0


def init_model(spec: ModelSpec, seed: int) -> ModelParams:
    """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero"""
    rng = np.random.default_rng(seed)
    blocks = []
    for fan_in, fan_out in spec.layer_shapes():
        bound = 1.0 / np.sqrt(fan_in)
        blocks.append(rng.uniform(-bound, bound, size=fan_in * fan_out))
        blocks.append(np.zeros(fan_out))
    return ModelParams(spec=spec, theta=np.concatenate(blocks))


def _check_batch(spec: ModelSpec, batch: Batch) -> np.ndarray:
    """Validate batch against spec; returns labels in the model's dtype"""
    if batch.dim != spec.input_dim:
        raise DimMismatch(f"Batch has {batch.dim} features, model expects {spec.input_dim}")
    if not spec.is_classifier:
        return batch.labels
    labels = batch.labels
    if np.any(labels != np.round(labels)) or labels.min() < 0 or labels.max() >= spec.num_classes:
        raise DimMismatch(f"Labels must be integers in [0, {spec.num_classes})")
    return labels.astype(np.int64)


def _activate(spec: ModelSpec, z: np.ndarray) -> np.ndarray:
    if spec.activation == Activation.TANH:
        return np.tanh(z)
    return np.maximum(z, 0.0)


def _activation_grad(spec: ModelSpec, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if spec.activation == Activation.TANH:
        return 1.0 - a ** 2
    return (z > 0).astype(np.float64)


def _forward(model: ModelParams, X: np.ndarray):
    """Returns output pre-activations and the per-layer (z, a) cache"""
    layers = model.layers()
    a = X
    cache = [(None, X)]
    for i, (W, b) in enumerate(layers):
        z = a @ W + b
        if i < len(layers) - 1:
            a = _activate(model.spec, z)
        else:
            a = z
        cache.append((z, a))
    return a, cache


def per_sample_losses(model: ModelParams, batch: Batch) -> np.ndarray:
    """Loss of every example: ½ squared error for regression, cross-entropy otherwise"""
    spec = model.spec
    y = _check_batch(spec, batch)
    out, _ = _forward(model, batch.features)

    if spec.kind == ModelKind.LINEAR_REGRESSION:
        return 0.5 * (out[:, 0] - y) ** 2
    if spec.kind == ModelKind.LOGISTIC_REGRESSION:
        z = out[:, 0]
        return np.logaddexp(0.0, z) - y * z
    return logsumexp(out, axis=1) - out[np.arange(batch.size), y]


def per_sample_gradients(model: ModelParams, batch: Batch) -> np.ndarray:
    """
    Per-sample gradient matrix G (m×p).

    Row i is the gradient of example i's loss w.r.t. theta, in theta's layout.
    All rows are computed in one vectorized backward pass.
    """
    spec = model.spec
    y = _check_batch(spec, batch)
    m = batch.size
    out, cache = _forward(model, batch.features)

    if spec.kind == ModelKind.LINEAR_REGRESSION:
        delta = (out[:, 0] - y)[:, None]
    elif spec.kind == ModelKind.LOGISTIC_REGRESSION:
        delta = (expit(out[:, 0]) - y)[:, None]
    else:
        delta = softmax(out, axis=1)
        delta[np.arange(m), y] -= 1.0

    layers = model.layers()
    blocks: List[np.ndarray] = []
    for i in range(len(layers) - 1, -1, -1):
        a_prev = cache[i][1]
        grad_W = np.einsum("mi,mj->mij", a_prev, delta).reshape(m, -1)
        blocks = [grad_W, delta] + blocks
        if i > 0:
            z_prev, a_prev_act = cache[i]
            W = layers[i][0]
            delta = (delta @ W.T) * _activation_grad(spec, z_prev, a_prev_act)

    return np.concatenate(blocks, axis=1)


def mean_gradient(model: ModelParams, batch: Batch) -> np.ndarray:
    """Gradient of the mean loss over the batch"""
    return per_sample_gradients(model, batch).mean(axis=0)


def evaluate(model: ModelParams, batch: Batch) -> Metrics:
    """Mean per-example loss and argmax accuracy (0.0 for regression)"""
    spec = model.spec
    losses = per_sample_losses(model, batch)

    if not spec.is_classifier:
        accuracy = 0.0
    else:
        y = batch.labels.astype(np.int64)
        out, _ = _forward(model, batch.features)
        if spec.kind == ModelKind.LOGISTIC_REGRESSION:
            pred = (out[:, 0] > 0).astype(np.int64)
        else:
            pred = np.argmax(out, axis=1)
        accuracy = float(np.mean(pred == y))

    return Metrics(loss=float(np.mean(losses)), accuracy=accuracy)


def random_labels(spec: ModelSpec, batch: Batch, rng: np.random.Generator) -> Batch:
    """Same features, labels drawn uniformly over the label range"""
    if spec.is_classifier:
        labels = rng.integers(0, spec.num_classes, size=batch.size)
    else:
        lo, hi = float(batch.labels.min()), float(batch.labels.max())
        labels = rng.uniform(lo, hi, size=batch.size) if hi > lo else np.full(batch.size, lo)
    return batch.with_labels(labels)


def sample_minibatch(rng: np.random.Generator, n: int, size: int) -> np.ndarray:
    """Indices of a minibatch drawn without replacement"""
    return rng.choice(n, size=min(size, n), replace=False)


def sgd_step(
    model: ModelParams,
    minibatch: Batch,
    learning_rate: float,
    grads: Optional[np.ndarray] = None,
) -> ModelParams:
    """
    One step on the minibatch mean loss. grads, when given, are the
    minibatch's per-sample gradients at model and are reused.
    """
    step = mean_gradient(model, minibatch) if grads is None else grads.mean(axis=0)
    return model.with_theta(model.theta - learning_rate * step)


def fit_sgd(model: ModelParams, batch: Batch, sgd: SgdConfig) -> ModelParams:
    """Plain minibatch SGD on the mean loss"""
    rng = np.random.default_rng(sgd.seed)
    for _ in range(sgd.steps):
        idx = sample_minibatch(rng, batch.size, sgd.batch_size)
        model = sgd_step(model, batch.subset(idx), sgd.learning_rate)
    return model


def estimate_smoothness(spec: ModelSpec, features: np.ndarray) -> float:
    """
    Smoothness constant β of the mean loss for the convex model kinds.

    Uses R² = max ‖[x, 1]‖²: regression R², logistic R²/4, softmax R²/2.
    """
    radius_sq = float(np.max(np.sum(np.asarray(features) ** 2, axis=1))) + 1.0
    if spec.kind == ModelKind.LINEAR_REGRESSION:
        return radius_sq
    if spec.kind == ModelKind.LOGISTIC_REGRESSION:
        return radius_sq / 4.0
    if spec.kind == ModelKind.SOFTMAX_REGRESSION:
        return radius_sq / 2.0
    raise ConfigError("Smoothness is only defined for convex model kinds")


def default_spec_for(input_dim: int, num_classes: int, kind: Optional[ModelKind] = None) -> ModelSpec:
    """Logistic regression for binary tasks, softmax regression otherwise"""
    if kind is None:
        kind = ModelKind.LOGISTIC_REGRESSION if num_classes == 2 else ModelKind.SOFTMAX_REGRESSION
    return ModelSpec(kind=kind, input_dim=input_dim, num_classes=num_classes)
