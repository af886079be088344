"""
gsdlab Linear Algebra

Dense kernels behind the subspace distance: orthonormal bases, top-k SVD,
principal angles, the projection metric and the spectral norm.
"""

from typing import List

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from src.errors import BadK, DimMismatch, NonFinite, RankDeficient


ORTHONORMAL_TOL = 1e-10
RANK_TOL = 1e-12


def as_matrix(M) -> np.ndarray:
    """Coerce input to a finite 2-D float64 array"""
    arr = np.asarray(M, dtype=np.float64)
    if arr.ndim != 2:
        raise DimMismatch(f"Expected a 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFinite("Matrix contains NaN or Inf entries")
    return arr


def _frozen_copy(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out


class Subspace(BaseModel):
    """k-dimensional subspace of R^p held as a p×k column-orthonormal basis"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    basis: np.ndarray

    @field_validator("basis", mode="before")
    @classmethod
    def _copy_basis(cls, v):
        return _frozen_copy(as_matrix(v))

    @model_validator(mode="after")
    def _check_orthonormal(self):
        p, k = self.basis.shape
        if k < 1 or k > p:
            raise ValueError(f"Subspace needs 1 <= k <= p, got p={p}, k={k}")
        gram = self.basis.T @ self.basis
        err = np.max(np.abs(gram - np.eye(k)))
        if err > ORTHONORMAL_TOL:
            raise ValueError(f"Basis is not column-orthonormal (max error {err:.2e})")
        return self

    @property
    def p(self) -> int:
        return self.basis.shape[0]

    @property
    def k(self) -> int:
        return self.basis.shape[1]

    def projector(self) -> np.ndarray:
        """Orthogonal projector B·Bᵀ onto the subspace"""
        return self.basis @ self.basis.T


class SvdResult(BaseModel):
    """Top-k singular triplets U_k, s_k, V_k"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    left: np.ndarray
    singular_values: np.ndarray
    right: Subspace

    @field_validator("left", "singular_values", mode="before")
    @classmethod
    def _copy_arrays(cls, v):
        return _frozen_copy(v)

    @model_validator(mode="after")
    def _check_sorted(self):
        s = self.singular_values
        if np.any(s < 0) or np.any(np.diff(s) > 0):
            raise ValueError("Singular values must be non-negative and non-increasing")
        return self


class PrincipalAngles(BaseModel):
    """Principal angles 0 <= θ1 <= ... <= θk <= π/2"""
    angles: List[float]

    @model_validator(mode="after")
    def _check_range(self):
        a = np.asarray(self.angles)
        if np.any(a < 0) or np.any(a > np.pi / 2) or np.any(np.diff(a) < 0):
            raise ValueError("Angles must be non-decreasing within [0, π/2]")
        return self


def orthonormalize(M) -> Subspace:
    """
    Orthonormal basis for the column space of M (Householder QR).

    Raises RankDeficient when a QR pivot falls below RANK_TOL times the
    largest pivot.
    """
    M = as_matrix(M)
    rows, cols = M.shape
    if cols == 0 or cols > rows:
        raise RankDeficient(f"{rows}×{cols} matrix cannot have full column rank")

    Q, R = scipy.linalg.qr(M, mode="economic")
    pivots = np.abs(np.diag(R))
    if pivots.max() == 0.0 or pivots.min() <= RANK_TOL * pivots.max():
        raise RankDeficient(
            f"Column rank deficient (pivot ratio {pivots.min() / max(pivots.max(), 1e-300):.2e})"
        )

    # positive diagonal of R fixes the basis uniquely
    signs = np.where(np.diag(R) < 0, -1.0, 1.0)
    return Subspace(basis=Q * signs)


def qr_basis(M) -> np.ndarray:
    """Orthonormal Q of a thin QR with no rank check (for iterative methods)"""
    Q, R = scipy.linalg.qr(as_matrix(M), mode="economic")
    signs = np.where(np.diag(R) < 0, -1.0, 1.0)
    return Q * signs


def _fix_signs(U: np.ndarray, V: np.ndarray):
    """Make the largest-magnitude entry of each right vector non-negative"""
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.where(V[idx, np.arange(V.shape[1])] < 0, -1.0, 1.0)
    return U * signs, V * signs


def top_k_svd(M, k: int) -> SvdResult:
    """Top-k singular triplets of M, deterministic up to the sign convention"""
    M = as_matrix(M)
    rows, cols = M.shape
    if not 1 <= k <= min(rows, cols):
        raise BadK(f"k={k} outside [1, {min(rows, cols)}] for a {rows}×{cols} matrix")

    U, s, Vt = scipy.linalg.svd(M, full_matrices=False, lapack_driver="gesvd")
    # ties keep their original index order
    order = np.argsort(-s, kind="stable")
    U, s, V = U[:, order], s[order], Vt[order].T

    U_k, V_k = _fix_signs(U[:, :k], V[:, :k])
    return SvdResult(left=U_k, singular_values=s[:k], right=Subspace(basis=V_k))


def singular_values(M) -> np.ndarray:
    """Full singular spectrum of M, non-increasing"""
    M = as_matrix(M)
    if M.size == 0:
        return np.zeros(0)
    return np.sort(scipy.linalg.svdvals(M))[::-1]


def _check_pair(V1: Subspace, V2: Subspace) -> None:
    if V1.p != V2.p or V1.k != V2.k:
        raise DimMismatch(
            f"Subspaces differ in shape: p={V1.p}, k={V1.k} vs p={V2.p}, k={V2.k}"
        )


def principal_angles(V1: Subspace, V2: Subspace) -> PrincipalAngles:
    """
    Principal angles between two k-dimensional subspaces.

    Cosines are the singular values of V1ᵀV2, clamped to [0, 1]. Angles whose
    cosine exceeds 1/√2 are taken from the matching sines, the singular values
    of (I − V1V1ᵀ)V2, where arccos loses precision.
    """
    _check_pair(V1, V2)
    B1, B2 = V1.basis, V2.basis

    cosines = np.clip(np.sort(scipy.linalg.svdvals(B1.T @ B2))[::-1], 0.0, 1.0)
    sines = np.clip(np.sort(scipy.linalg.svdvals(B2 - B1 @ (B1.T @ B2))), 0.0, 1.0)

    angles = np.where(cosines ** 2 >= 0.5, np.arcsin(sines), np.arccos(cosines))
    angles = np.clip(np.sort(angles), 0.0, np.pi / 2)
    return PrincipalAngles(angles=[float(a) for a in angles])


def projection_metric(V1: Subspace, V2: Subspace) -> float:
    """
    Projection metric sqrt(Σ sin²θᵢ) between two k-dimensional subspaces.

    Evaluated as ‖(I − V1V1ᵀ)V2‖_F, whose squared singular values are the
    sin²θᵢ; the result lies in [0, √k].
    """
    _check_pair(V1, V2)
    B1, B2 = V1.basis, V2.basis
    d = np.linalg.norm(B2 - B1 @ (B1.T @ B2), "fro")
    return float(min(d, np.sqrt(V1.k)))


def spectral_norm(M) -> float:
    """Largest singular value s1(M)"""
    M = as_matrix(M)
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M, 2))


def random_subspace(p: int, k: int, rng: np.random.Generator) -> Subspace:
    """Uniformly distributed k-dimensional subspace of R^p"""
    return Subspace(basis=qr_basis(rng.standard_normal((p, k))))
