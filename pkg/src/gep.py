"""
gsdlab Gradient Embedding Perturbation

Private training that projects per-sample gradients onto a subspace estimated
from public gradients, clips the embedding and the residual separately and
perturbs both with Gaussian noise. Every step also records the reconstruction
error of the private gradients and its subspace-distance bound.
"""

import logging
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator

from src.errors import BadK, ConfigError, DimMismatch
from src.gsd import lemma1_terms
from src.linalg import Subspace, as_matrix, qr_basis
from src.models import (
    Metrics,
    ModelParams,
    ModelSpec,
    estimate_smoothness,
    evaluate,
    per_sample_gradients,
    sample_minibatch,
)
from src.privacy import PrivacyParams, clip_rows, gep_noise_scale
from src.synth import Dataset

logger = logging.getLogger(__name__)


class GepConfig(BaseModel):
    """
    GEP hyperparameters.

    learning_rate, iterations and the two noise multipliers may stay unset;
    gep_train then uses 1/β, the default schedule and gep_noise_scale.
    A clip norm of 0 drops that component from the update.
    """
    k: int = Field(default=8, ge=1)
    power_iterations: int = Field(default=20, ge=1)
    learning_rate: Optional[float] = Field(default=None, gt=0)
    iterations: Optional[int] = Field(default=None, ge=1)
    clip_embedding: float = Field(default=1.0, ge=0)
    clip_residual: float = Field(default=1.0, ge=0)
    sigma_embedding: Optional[float] = Field(default=None, ge=0)
    sigma_residual: Optional[float] = Field(default=None, ge=0)
    batch_size: int = Field(default=64, ge=1)
    seed: int = 0
    allow_nonconvex: bool = False


class GepRunConfig(BaseModel):
    """Everything gep-train reads from its config file"""
    model: ModelSpec
    gep: GepConfig = Field(default_factory=GepConfig)
    privacy: PrivacyParams
    init_seed: int = 0


class GepStepTrace(BaseModel):
    """Reconstruction error r_t and bound d_t = √2·s1·GSD + s_{k+1} at one step"""
    step: int = 0
    reconstruction_error: float
    lemma1_bound: float
    gsd: float
    s1: float
    s_k1: float
    train_loss: Optional[float] = None

    @property
    def slack(self) -> float:
        return self.lemma1_bound - self.reconstruction_error


class TrainResult(BaseModel):
    """Final and iterate-averaged models of a private training run"""
    final: ModelParams
    averaged: ModelParams
    losses: List[float]
    test_metrics: Optional[Metrics] = None
    averaged_test_metrics: Optional[Metrics] = None
    learning_rate: float
    iterations: int

    @model_validator(mode="after")
    def _check_length(self):
        if len(self.losses) != self.iterations:
            raise ValueError(f"expected {self.iterations} losses, got {len(self.losses)}")
        return self


class GepResult(TrainResult):
    """TrainResult plus the per-step trace and the noise actually injected"""
    trace: List[GepStepTrace]
    sigma_embedding: float
    sigma_residual: float

    @model_validator(mode="after")
    def _check_trace(self):
        if len(self.trace) != self.iterations:
            raise ValueError(f"expected {self.iterations} trace steps, got {len(self.trace)}")
        return self


def default_iterations(n: int, beta: float, epsilon: float, p: int) -> int:
    """Iteration schedule T = round(n·β·ε/√p), at least 1"""
    return max(1, int(round(n * beta * epsilon / np.sqrt(p))))


def public_subspace(G_pub, k: int, power_iterations: int, seed) -> Subspace:
    """
    Top-k right subspace of G_pub by orthogonal iteration on G_pubᵀG_pub,
    starting from a seeded Gaussian basis and re-orthonormalizing every round.
    """
    G = as_matrix(G_pub)
    m, p = G.shape
    if not 1 <= k <= min(m, p):
        raise BadK(f"k={k} outside [1, min(m_pub={m}, p={p})]")
    if power_iterations < 1:
        raise ConfigError(f"power_iterations must be at least 1, got {power_iterations}")

    rng = np.random.default_rng(seed)
    V = qr_basis(rng.standard_normal((p, k)))
    for _ in range(power_iterations):
        V = qr_basis(G.T @ (G @ V))
    return Subspace(basis=V)


def _clip(M: np.ndarray, c: float) -> np.ndarray:
    if c == 0:
        return np.zeros_like(M)
    return clip_rows(M, c)


def gep_step(G_priv, V: Subspace, cfg: GepConfig, seed) -> Tuple[np.ndarray, GepStepTrace]:
    """
    One perturbed update direction from a private gradient batch.

    W = G·V and R = G − W·Vᵀ are clipped row-wise to the embedding and residual
    norms; the noisy sums give v̂ = (V·ŵ + r̂)/m. seed may be an int or a Generator.
    """
    G = as_matrix(G_priv)
    m, p = G.shape
    if p != V.p:
        raise DimMismatch(f"G has {p} columns, subspace lives in R^{V.p}")
    if cfg.sigma_embedding is None or cfg.sigma_residual is None:
        raise ConfigError("gep_step needs resolved noise multipliers")
    rng = np.random.default_rng(seed)

    B = V.basis
    W = G @ B
    R = G - W @ B.T
    W_hat = _clip(W, cfg.clip_embedding)
    R_hat = _clip(R, cfg.clip_residual)

    w_noise = rng.normal(0.0, cfg.sigma_embedding * cfg.clip_embedding, size=V.k)
    r_noise = rng.normal(0.0, cfg.sigma_residual * cfg.clip_residual, size=p)
    w_sum = W_hat.sum(axis=0) + w_noise
    r_sum = R_hat.sum(axis=0) + r_noise
    update = (B @ w_sum + r_sum) / m

    terms = lemma1_terms(G, V)
    trace = GepStepTrace(
        reconstruction_error=terms.reconstruction_error,
        lemma1_bound=terms.bound,
        gsd=terms.gsd,
        s1=terms.s1,
        s_k1=terms.s_k1,
    )
    return update, trace


def _schedule(
    private: Dataset,
    model0: ModelParams,
    cfg: GepConfig,
    privacy: Optional[PrivacyParams],
) -> Tuple[float, int]:
    spec = model0.spec
    if not spec.is_convex and not cfg.allow_nonconvex:
        raise ConfigError(f"{spec.kind.value} is non-convex; set allow_nonconvex to train it")

    need_beta = cfg.learning_rate is None or cfg.iterations is None
    beta = estimate_smoothness(spec, private.train.features) if need_beta else None
    learning_rate = cfg.learning_rate if cfg.learning_rate is not None else 1.0 / beta

    if cfg.iterations is not None:
        iterations = cfg.iterations
    elif privacy is None:
        raise ConfigError("iterations must be set when no privacy budget is given")
    else:
        iterations = default_iterations(private.train.size, beta, privacy.epsilon, model0.p)
    return learning_rate, iterations


def _streams(seed: int):
    """Independent generators for minibatches, power iteration and noise"""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3)]


def _test_metrics(private: Dataset, model: ModelParams) -> Metrics:
    return evaluate(model, private.test)


def gep_train(
    private: Dataset,
    public: Dataset,
    model0: ModelParams,
    cfg: GepConfig,
    privacy: PrivacyParams,
) -> GepResult:
    """
    Train with gradient embedding perturbation.

    Each iteration samples a private minibatch, recomputes public gradients
    at the current iterate, estimates the public subspace, takes one gep_step
    and moves θ ← θ − η·v̂. Test metrics are read off private.test.
    """
    if cfg.k > model0.p:
        raise BadK(f"k={cfg.k} exceeds the parameter count {model0.p}")
    learning_rate, iterations = _schedule(private, model0, cfg, privacy)

    if cfg.sigma_embedding is None or cfg.sigma_residual is None:
        sigma = gep_noise_scale(privacy.model_copy(update={"iterations": iterations}))
        cfg = cfg.model_copy(update={
            "sigma_embedding": sigma if cfg.sigma_embedding is None else cfg.sigma_embedding,
            "sigma_residual": sigma if cfg.sigma_residual is None else cfg.sigma_residual,
        })
    logger.info(
        f"🚀 GEP: T={iterations}, lr={learning_rate:.4g}, k={cfg.k}, "
        f"sigma=({cfg.sigma_embedding:.4g}, {cfg.sigma_residual:.4g})"
    )

    batch_rng, power_rng, noise_rng = _streams(cfg.seed)
    train = private.train
    public_batch = public.public_examples
    theta = model0.theta.copy()
    theta_sum = np.zeros_like(theta)
    trace: List[GepStepTrace] = []

    for t in range(iterations):
        model = model0.with_theta(theta)
        loss = evaluate(model, train).loss

        idx = sample_minibatch(batch_rng, train.size, cfg.batch_size)
        G_priv = per_sample_gradients(model, train.subset(idx))
        G_pub = per_sample_gradients(model, public_batch)
        V = public_subspace(G_pub, cfg.k, cfg.power_iterations, power_rng)

        update, step = gep_step(G_priv, V, cfg, noise_rng)
        trace.append(step.model_copy(update={"step": t, "train_loss": loss}))

        theta = theta - learning_rate * update
        theta_sum += theta

    final = model0.with_theta(theta)
    averaged = model0.with_theta(theta_sum / iterations)
    result = GepResult(
        final=final,
        averaged=averaged,
        losses=[s.train_loss for s in trace],
        test_metrics=_test_metrics(private, final),
        averaged_test_metrics=_test_metrics(private, averaged),
        learning_rate=learning_rate,
        iterations=iterations,
        trace=trace,
        sigma_embedding=cfg.sigma_embedding,
        sigma_residual=cfg.sigma_residual,
    )
    logger.info(f"✅ GEP done: test accuracy {result.test_metrics.accuracy:.4f}")
    return result


def clipped_sgd_train(
    private: Dataset,
    model0: ModelParams,
    cfg: GepConfig,
    privacy: Optional[PrivacyParams] = None,
) -> TrainResult:
    """
    Per-row clipped SGD without projection, on the same minibatch stream as gep_train.

    Rows are clipped to clip_embedding; noise uses sigma_embedding, falling back
    to gep_noise_scale when a budget is given and to no noise otherwise.
    """
    learning_rate, iterations = _schedule(private, model0, cfg, privacy)
    sigma = cfg.sigma_embedding
    if sigma is None:
        sigma = (
            gep_noise_scale(privacy.model_copy(update={"iterations": iterations}))
            if privacy is not None else 0.0
        )

    batch_rng, _, noise_rng = _streams(cfg.seed)
    train = private.train
    theta = model0.theta.copy()
    theta_sum = np.zeros_like(theta)
    losses: List[float] = []

    for _ in range(iterations):
        model = model0.with_theta(theta)
        losses.append(evaluate(model, train).loss)

        idx = sample_minibatch(batch_rng, train.size, cfg.batch_size)
        G = per_sample_gradients(model, train.subset(idx))
        total = _clip(G, cfg.clip_embedding).sum(axis=0)
        total += noise_rng.normal(0.0, sigma * cfg.clip_embedding, size=G.shape[1])

        theta = theta - learning_rate * total / G.shape[0]
        theta_sum += theta

    final = model0.with_theta(theta)
    averaged = model0.with_theta(theta_sum / iterations)
    return TrainResult(
        final=final,
        averaged=averaged,
        losses=losses,
        test_metrics=_test_metrics(private, final),
        averaged_test_metrics=_test_metrics(private, averaged),
        learning_rate=learning_rate,
        iterations=iterations,
    )
