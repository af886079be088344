"""
gsdlab Gradient Subspace Distance

Per-sample gradients → top-k right singular subspaces → projection metric,
plus the training-trajectory tracker and public-dataset ranking.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator

from src.config import load_settings
from src.errors import BadK, ConfigError, DimMismatch
from src.linalg import (
    Subspace,
    SvdResult,
    as_matrix,
    principal_angles,
    projection_metric,
    singular_values,
    spectral_norm,
    top_k_svd,
)
from src.models import (
    Batch,
    ModelParams,
    SgdConfig,
    per_sample_gradients,
    random_labels,
    sample_minibatch,
    sgd_step,
)
from src.synth import Dataset

logger = logging.getLogger(__name__)


DEFAULT_K = 16
TIE_TOL = 1e-12


class GsdReport(BaseModel):
    """Result of one subspace-distance computation"""
    k: int = Field(ge=1)
    angles: List[float]
    distance_raw: float
    distance_normalized: float
    priv_singular_values: List[float] = Field(default_factory=list)
    pub_singular_values: List[float] = Field(default_factory=list)
    m_priv: int
    m_pub: int
    p: int

    @model_validator(mode="after")
    def _check_consistency(self):
        if len(self.angles) != self.k:
            raise ValueError(f"expected {self.k} angles, got {len(self.angles)}")
        if abs(self.distance_normalized - self.distance_raw / np.sqrt(self.k)) > 1e-12:
            raise ValueError("distance_normalized must equal distance_raw / sqrt(k)")
        return self

    def distance(self, raw: bool = False) -> float:
        """Displayed distance: normalized to [0, 1] unless raw"""
        return self.distance_raw if raw else self.distance_normalized


class TrajectoryStep(BaseModel):
    """Distances to every public batch at one SGD iteration"""
    iteration: int
    reports: List[GsdReport]
    ranking: List[int]


class TrajectoryReport(BaseModel):
    """Distances over training and how often the step-0 ordering held"""
    steps: List[TrajectoryStep]
    order_agreement: float = Field(ge=0.0, le=1.0)


class RankedPublic(BaseModel):
    """One row of a public-dataset ranking (rank 1 = recommended)"""
    rank: int
    name: str
    distance_raw: float
    distance_normalized: float
    tied: bool = False


class Lemma1Terms(BaseModel):
    """Reconstruction error of G on a subspace V and its distance bound"""
    reconstruction_error: float
    bound: float
    gsd: float
    s1: float
    s_k1: float

    @property
    def slack(self) -> float:
        return self.bound - self.reconstruction_error


def _report(
    priv_right: Subspace,
    pub_right: Subspace,
    priv_spectrum: np.ndarray,
    pub_spectrum: np.ndarray,
    m_priv: int,
    m_pub: int,
) -> GsdReport:
    k = priv_right.k
    raw = projection_metric(priv_right, pub_right)
    return GsdReport(
        k=k,
        angles=principal_angles(priv_right, pub_right).angles,
        distance_raw=raw,
        distance_normalized=raw / np.sqrt(k),
        priv_singular_values=[float(s) for s in priv_spectrum],
        pub_singular_values=[float(s) for s in pub_spectrum],
        m_priv=m_priv,
        m_pub=m_pub,
        p=priv_right.p,
    )


def _check_k(k: int, m_priv: int, m_pub: int, p: int) -> None:
    if not 1 <= k <= min(m_priv, m_pub, p):
        raise BadK(f"k={k} outside [1, min(m_priv={m_priv}, m_pub={m_pub}, p={p})]")


def gsd_from_gradients(
    G_priv,
    G_pub,
    k: int,
    priv_svd: Optional[SvdResult] = None,
) -> GsdReport:
    """
    Subspace distance between two per-sample gradient matrices.

    priv_svd lets callers comparing one private matrix against many public
    ones reuse the private decomposition.
    """
    G_priv = as_matrix(G_priv)
    G_pub = as_matrix(G_pub)
    if G_priv.shape[1] != G_pub.shape[1]:
        raise DimMismatch(
            f"Gradient matrices have {G_priv.shape[1]} and {G_pub.shape[1]} columns"
        )
    m_priv, p = G_priv.shape
    m_pub = G_pub.shape[0]
    _check_k(k, m_priv, m_pub, p)

    if priv_svd is None or priv_svd.right.k != k:
        priv_svd = top_k_svd(G_priv, k)
    pub_svd = top_k_svd(G_pub, k)

    return _report(
        priv_svd.right,
        pub_svd.right,
        singular_values(G_priv),
        singular_values(G_pub),
        m_priv,
        m_pub,
    )


def gsd(
    priv: Batch,
    pub: Batch,
    model: ModelParams,
    k: int = DEFAULT_K,
    random_label: bool = False,
    seed: int = 0,
) -> GsdReport:
    """
    Gradient subspace distance between a private and a public batch.

    With random_label the task labels of both batches are replaced by
    uniformly random ones before the gradients are taken.
    """
    if random_label:
        rng = np.random.default_rng(seed)
        priv = random_labels(model.spec, priv, rng)
        pub = random_labels(model.spec, pub, rng)

    G_priv = per_sample_gradients(model, priv)
    G_pub = per_sample_gradients(model, pub)
    return gsd_from_gradients(G_priv, G_pub, k)


def lemma1_terms(G_priv, V: Subspace) -> Lemma1Terms:
    """
    Reconstruction error ‖G − G·V·Vᵀ‖₂ and its bound √2·s1·GSD + s_{k+1},
    with GSD measured between G's own top-k subspace and V.
    """
    G = as_matrix(G_priv)
    if G.shape[1] != V.p:
        raise DimMismatch(f"G has {G.shape[1]} columns, subspace lives in R^{V.p}")
    k = V.k
    spectrum = singular_values(G)
    s1 = float(spectrum[0]) if spectrum.size else 0.0
    s_k1 = float(spectrum[k]) if spectrum.size > k else 0.0

    # zero rows leave the row space unchanged and make the top-k subspace defined
    padded = G if G.shape[0] >= k else np.vstack([G, np.zeros((k - G.shape[0], G.shape[1]))])
    distance = projection_metric(top_k_svd(padded, k).right, V)
    B = V.basis
    error = spectral_norm(G - (G @ B) @ B.T)
    return Lemma1Terms(
        reconstruction_error=error,
        bound=np.sqrt(2.0) * s1 * distance + s_k1,
        gsd=distance,
        s1=s1,
        s_k1=s_k1,
    )


def _ranking(reports: List[GsdReport]) -> List[int]:
    distances = np.array([r.distance_raw for r in reports])
    return [int(i) for i in np.argsort(distances, kind="stable")]


def gsd_trajectory(
    priv_train: Dataset,
    publics: List[Batch],
    model0: ModelParams,
    k: int,
    sgd: SgdConfig,
    threads: Optional[int] = None,
) -> TrajectoryReport:
    """
    Track distances to every public batch along a vanilla SGD run.

    At each iteration the current private minibatch is compared with every
    public batch (in parallel), then one SGD step is taken on that minibatch.
    """
    if len(publics) < 2:
        raise ConfigError("gsd_trajectory needs at least two public batches")
    threads = threads or load_settings().threads

    train = priv_train.train
    rng = np.random.default_rng(sgd.seed)
    model = model0
    steps: List[TrajectoryStep] = []

    with ThreadPoolExecutor(max_workers=threads) as pool:
        for t in range(sgd.steps):
            minibatch = train.subset(sample_minibatch(rng, train.size, sgd.batch_size))
            G_priv = per_sample_gradients(model, minibatch)
            _check_k(k, G_priv.shape[0], min(b.size for b in publics), model.p)
            priv_svd = top_k_svd(G_priv, k)

            def distance_to(pub: Batch) -> GsdReport:
                return gsd_from_gradients(G_priv, per_sample_gradients(model, pub), k, priv_svd)

            reports = list(pool.map(distance_to, publics))
            steps.append(TrajectoryStep(iteration=t, reports=reports, ranking=_ranking(reports)))
            model = sgd_step(model, minibatch, sgd.learning_rate, G_priv)

    reference = steps[0].ranking
    agreement = float(np.mean([s.ranking == reference for s in steps]))
    logger.info(f"✅ Trajectory done: {len(steps)} steps, order agreement {agreement:.3f}")
    return TrajectoryReport(steps=steps, order_agreement=agreement)


def rank_publics(reports: List[Tuple[str, GsdReport]]) -> List[RankedPublic]:
    """
    Ascending by raw distance. Distances within TIE_TOL of their neighbour form
    one tied group, ordered by name and flagged.
    """
    if not reports:
        raise ConfigError("No public datasets to rank")

    by_distance = sorted(reports, key=lambda item: (item[1].distance_raw, item[0]))
    groups: List[List[Tuple[str, GsdReport]]] = []
    for item in by_distance:
        if groups and item[1].distance_raw - groups[-1][-1][1].distance_raw <= TIE_TOL:
            groups[-1].append(item)
        else:
            groups.append([item])

    ranked = []
    for group in groups:
        for name, report in sorted(group, key=lambda item: item[0]):
            ranked.append(RankedPublic(
                rank=len(ranked) + 1,
                name=name,
                distance_raw=report.distance_raw,
                distance_normalized=report.distance_normalized,
                tied=len(group) > 1,
            ))
    return ranked
