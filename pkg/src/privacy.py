"""
gsdlab Privacy

Differential-privacy building blocks: per-row clipping, Bingham sampling,
private top eigenvector extraction (exponential mechanism), the private
subspace distance, and noise calibration for gradient embedding perturbation.

Randomness comes from numpy's default generator (PCG64) seeded per call, so
draws are reproducible within a build.
"""

import logging
import warnings
from typing import Optional

import numpy as np
import scipy.linalg
from pydantic import BaseModel, Field, model_validator
from scipy.optimize import brentq

from src.errors import (
    ConfigError,
    DimMismatch,
    EmptyMatrix,
    NonSymmetric,
    PrivacyRangeWarning,
    ZeroGap,
)
from src.gsd import GsdReport
from src.linalg import Subspace, as_matrix, principal_angles, projection_metric, top_k_svd
from src.models import Batch, ModelParams, per_sample_gradients

logger = logging.getLogger(__name__)


SYMMETRY_TOL = 1e-9
MIN_ACCEPTANCE = 0.01
MIN_PROPOSALS = 10_000
MAX_PROPOSAL_BATCH = 1_000_000
GIBBS_BURN_IN = 200
GIBBS_THIN = 10
MECHANISM = "exponential-mechanism/bingham"


class PrivacyParams(BaseModel):
    """Privacy budget, clip norm and iteration count"""
    epsilon: float = Field(gt=0)
    delta: float = Field(default=1e-5, gt=0, lt=1)
    clip_norm: float = Field(default=1.0, gt=0)
    iterations: int = Field(default=1, ge=1)


class DpPcaDiagnostics(BaseModel):
    """Spectral quantities of A = (1/m)GᵀG that drive the sample-size bound"""
    top_eigenvalue: float
    eigengap: float
    p: int = Field(ge=1)
    m: int = Field(ge=1)

    @model_validator(mode="after")
    def _check_order(self):
        second = self.top_eigenvalue - self.eigengap
        if self.eigengap > self.top_eigenvalue + 1e-12 or second < -1e-12:
            raise ValueError("need top_eigenvalue >= top_eigenvalue - eigengap >= 0")
        return self

    def required_m(self, close: "CloseApprox", epsilon: float, c: float) -> float:
        return required_sample_size(self, close, epsilon, c)


class CloseApprox(BaseModel):
    """(rho, eta): estimate within rho of the true distance w.p. >= 1 - eta"""
    rho: float = Field(gt=0, lt=1)
    eta: float = Field(gt=0, lt=1)


def clip_rows(G, c: float) -> np.ndarray:
    """Scale every row g to g·min(1, c/‖g‖₂)"""
    if c <= 0:
        raise ConfigError(f"clip norm must be positive, got {c}")
    G = as_matrix(G)
    norms = np.linalg.norm(G, axis=1)
    factors = np.ones_like(norms)
    over = norms > c
    factors[over] = c / norms[over]
    return G * factors[:, None]


def _symmetric(A) -> np.ndarray:
    A = as_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise DimMismatch(f"Expected a square matrix, got {A.shape}")
    scale = float(np.max(np.abs(A))) if A.size else 0.0
    if np.max(np.abs(A - A.T), initial=0.0) > SYMMETRY_TOL * scale:
        raise NonSymmetric("Concentration matrix is not symmetric")
    return 0.5 * (A + A.T)


def _acg_b(shifted: np.ndarray) -> float:
    """Root b of Σ 1/(b + 2λᵢ) = 1 that tunes the angular central Gaussian envelope"""
    q = shifted.size
    f = lambda b: np.sum(1.0 / (b + 2.0 * shifted)) - 1.0
    if f(float(q)) >= 0.0:
        return float(q)
    return brentq(f, 1e-12, float(q), xtol=1e-14)


def _bingham_gibbs(lam: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """
    Gibbs draws in the eigenbasis, updating one coordinate pair at a time.

    For a pair (i, j) at fixed radius r the angle φ has density
    ∝ exp(r²(λᵢ−λⱼ)/2 · cos 2φ), so 2φ is von Mises distributed.
    """
    q = lam.size
    x = np.zeros(q)
    x[int(np.argmax(lam))] = 1.0
    draws = np.empty((n, q))
    pairs = [(i, j) for i in range(q) for j in range(i + 1, q)]

    def sweep():
        for i, j in pairs:
            r_sq = x[i] ** 2 + x[j] ** 2
            if r_sq == 0.0:
                continue
            kappa = 0.5 * r_sq * (lam[i] - lam[j])
            psi = rng.vonmises(0.0 if kappa >= 0 else np.pi, abs(kappa))
            phi = 0.5 * psi + (np.pi if rng.random() < 0.5 else 0.0)
            r = np.sqrt(r_sq)
            x[i], x[j] = r * np.cos(phi), r * np.sin(phi)

    for _ in range(GIBBS_BURN_IN):
        sweep()
    for s in range(n):
        for _ in range(GIBBS_THIN):
            sweep()
        draws[s] = x / np.linalg.norm(x)
    return draws


def _bingham_eigbasis(lam: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """
    n draws from density ∝ exp(Σ λᵢxᵢ²) on the unit sphere, in eigen-coordinates.

    Rejection sampling against an angular central Gaussian envelope; switches
    to Gibbs updates when acceptance stays under MIN_ACCEPTANCE.
    """
    q = lam.size
    if q == 1:
        return np.where(rng.random((n, 1)) < 0.5, -1.0, 1.0)

    # density ∝ exp(-Σ shiftedᵢ xᵢ²) with min(shifted) == 0
    shifted = lam.max() - lam
    if shifted.max() <= 0.0:
        y = rng.standard_normal((n, q))
        return y / np.linalg.norm(y, axis=1, keepdims=True)

    b = _acg_b(shifted)
    omega = 1.0 + 2.0 * shifted / b
    log_bound = -0.5 * (q - b) + 0.5 * q * np.log(q / b)

    accepted = []
    n_accepted = 0
    n_proposed = 0
    rate = 0.5
    while n_accepted < n:
        batch = int(min(MAX_PROPOSAL_BATCH, max(64, 2 * (n - n_accepted) / max(rate, MIN_ACCEPTANCE))))
        y = rng.standard_normal((batch, q)) / np.sqrt(omega)
        x = y / np.linalg.norm(y, axis=1, keepdims=True)
        x_sq = x ** 2
        log_ratio = -(x_sq @ shifted) + 0.5 * q * np.log(x_sq @ omega) - log_bound
        keep = np.log(rng.random(batch)) < log_ratio

        accepted.append(x[keep])
        n_accepted += int(keep.sum())
        n_proposed += batch
        rate = max(n_accepted, 1) / n_proposed

        if n_accepted < n and n_proposed >= MIN_PROPOSALS and n_accepted / n_proposed < MIN_ACCEPTANCE:
            logger.warning(
                f"⚠️  Bingham rejection acceptance {n_accepted / n_proposed:.4f} too low, "
                "switching to Gibbs updates"
            )
            accepted.append(_bingham_gibbs(lam, n - n_accepted, rng))
            n_accepted = n
            break

    return np.concatenate(accepted, axis=0)[:n]


def bingham_sample(A, seed, size: Optional[int] = None) -> np.ndarray:
    """
    Draw unit vectors from the Bingham density ∝ exp(vᵀAv).

    Returns one vector of length p, or a (size, p) array when size is given.
    seed may be an int or a numpy Generator.
    """
    A = _symmetric(A)
    rng = np.random.default_rng(seed)
    lam, Q = scipy.linalg.eigh(A)
    n = 1 if size is None else int(size)
    draws = _bingham_eigbasis(lam, n, rng) @ Q.T
    return draws[0] if size is None else draws


def dp_pca(G, epsilon: float, c: float, seed) -> Subspace:
    """
    Private top eigenvector of A = (1/m)GᵀG via one Bingham draw
    with concentration (m·epsilon/2)·A.

    Rows of G are expected to be clipped to norm c already.
    """
    G = as_matrix(G)
    m = G.shape[0]
    if m == 0:
        raise EmptyMatrix("DPPCA needs at least one gradient row")
    if epsilon <= 0:
        raise ConfigError(f"epsilon must be positive, got {epsilon}")
    if np.max(np.linalg.norm(G, axis=1)) > c * (1 + 1e-9):
        logger.warning(f"⚠️  DPPCA input has rows above clip norm {c}; privacy claim does not hold")

    A = (G.T @ G) / m
    v = bingham_sample(0.5 * m * epsilon * A, seed)
    v = v / np.linalg.norm(v)
    return Subspace(basis=v[:, None])


def pca_diagnostics(G) -> DpPcaDiagnostics:
    """Top eigenvalue and eigengap of A = (1/m)GᵀG"""
    G = as_matrix(G)
    m, p = G.shape
    if m == 0:
        raise EmptyMatrix("Diagnostics need at least one gradient row")
    eig = np.clip(np.sort(scipy.linalg.eigvalsh((G.T @ G) / m))[::-1], 0.0, None)
    second = float(eig[1]) if p > 1 else 0.0
    return DpPcaDiagnostics(
        top_eigenvalue=float(eig[0]),
        eigengap=float(eig[0]) - second,
        p=p,
        m=m,
    )


def required_sample_size(
    diag: DpPcaDiagnostics,
    close: CloseApprox,
    epsilon: float,
    c: float,
) -> float:
    """
    Smallest m for which the private distance is (rho, eta)-close (k = 1):

        p·c² / (ε·α·(1 − sqrt(1 − ρ²))) · (4·ln(1/η)/p + 2·ln(8·λ1/(ρ²·α)))
    """
    alpha = diag.eigengap
    if alpha <= 0:
        raise ZeroGap(f"eigengap must be positive, got {alpha}")
    p, rho, eta = diag.p, close.rho, close.eta
    lead = p * c ** 2 / (epsilon * alpha * (1.0 - np.sqrt(1.0 - rho ** 2)))
    tail = 4.0 * np.log(1.0 / eta) / p + 2.0 * np.log(8.0 * diag.top_eigenvalue / (rho ** 2 * alpha))
    return float(lead * tail)


def epsilon_effective(params: PrivacyParams) -> float:
    """Privacy level of the private distance: epsilon / c²"""
    return params.epsilon / params.clip_norm ** 2


def privacy_block(params: PrivacyParams) -> dict:
    """Privacy summary attached to private distance reports"""
    return {
        "mechanism": MECHANISM,
        "epsilon": params.epsilon,
        "clip_norm": params.clip_norm,
        "epsilon_effective": epsilon_effective(params),
        # the sampler is pure epsilon-DP; delta is accepted but unused
        "delta_used": False,
    }


def dp_gsd_from_gradients(G_priv, G_pub, params: PrivacyParams, seed) -> GsdReport:
    """
    Private k=1 subspace distance on precomputed gradients.

    The private matrix is touched only through clipping and one Bingham draw,
    so the report carries no private singular values.
    """
    G_priv = as_matrix(G_priv)
    G_pub = as_matrix(G_pub)
    if G_priv.shape[1] != G_pub.shape[1]:
        raise DimMismatch(
            f"Gradient matrices have {G_priv.shape[1]} and {G_pub.shape[1]} columns"
        )

    V_priv = dp_pca(clip_rows(G_priv, params.clip_norm), params.epsilon, params.clip_norm, seed)
    pub_svd = top_k_svd(G_pub, 1)
    raw = projection_metric(V_priv, pub_svd.right)
    return GsdReport(
        k=1,
        angles=principal_angles(V_priv, pub_svd.right).angles,
        distance_raw=raw,
        distance_normalized=raw,
        priv_singular_values=[],
        pub_singular_values=[float(s) for s in pub_svd.singular_values],
        m_priv=G_priv.shape[0],
        m_pub=G_pub.shape[0],
        p=G_priv.shape[1],
    )


def dp_gsd(
    priv: Batch,
    pub: Batch,
    model: ModelParams,
    params: PrivacyParams,
    seed,
) -> GsdReport:
    """Private subspace distance between a private and a public batch (k = 1)"""
    G_priv = per_sample_gradients(model, priv)
    G_pub = per_sample_gradients(model, pub)
    return dp_gsd_from_gradients(G_priv, G_pub, params, seed)


def gep_noise_scale(params: PrivacyParams) -> float:
    """
    Noise multiplier σ = 2·sqrt(2T·ln(1/δ))/ε for gradient embedding perturbation.

    Warns when ε >= 2·ln(1/δ), outside the range the guarantee covers.
    """
    log_inv_delta = np.log(1.0 / params.delta)
    if params.epsilon >= 2.0 * log_inv_delta:
        warnings.warn(
            f"epsilon={params.epsilon} is not below 2·ln(1/δ)={2 * log_inv_delta:.4f}; "
            "the GEP privacy guarantee does not cover it",
            PrivacyRangeWarning,
            stacklevel=2,
        )
    return float(2.0 * np.sqrt(2.0 * params.iterations * log_inv_delta) / params.epsilon)
