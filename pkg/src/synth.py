"""
gsdlab Synthetic Tasks

Gaussian class-conditional tasks and public variants with a controlled
distribution shift, so candidate public datasets come with a known ordering.
"""

from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.errors import BadMagnitude, DimMismatch
from src.models import Batch


# the two highest-variance generative directions; rotations act on this plane
ROTATION_PLANE = (0, 1)
MAX_ROTATION = 2 * np.pi
MEAN_OFFSET = np.pi / 4


class TaskSpec(BaseModel):
    """Generator settings for one synthetic classification task"""
    name: str = "task"
    input_dim: int = Field(default=10, ge=2)
    num_classes: int = Field(default=2, ge=2)
    n_train: int = Field(default=1000, gt=0)
    n_test: int = Field(default=1000, gt=0)
    n_public: int = Field(default=200, gt=0)
    margin: float = Field(default=2.0, ge=0)
    noise: float = Field(default=0.5, ge=0)
    seed: int = 0


class ShiftKind(str, Enum):
    """Kinds of private→public distribution shift"""
    ROTATION = "rotation"
    LABEL_FLIP = "label-flip"
    FEATURE_MASK = "feature-mask"


class ShiftSpec(BaseModel):
    """
    One shift: radians for rotation, flip probability for label-flip,
    masked fraction of coordinates for feature-mask.
    """
    kind: ShiftKind
    magnitude: float

    def label(self) -> str:
        return f"{self.kind.value}_{self.magnitude:.6g}"


class Dataset(BaseModel):
    """Named train/test/public splits of one task"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    name: str
    train: Batch
    test: Batch
    public: Optional[Batch] = None
    num_classes: int
    seed: int = 0
    shift: Optional[ShiftSpec] = None

    @property
    def input_dim(self) -> int:
        return self.train.dim

    @property
    def public_examples(self) -> Batch:
        """Public split, or the training split when there is none"""
        return self.public if self.public is not None else self.train

    def manifest(self) -> dict:
        return {
            "name": self.name,
            "n": self.train.size,
            "n_test": self.test.size,
            "n_public": self.public.size if self.public is not None else 0,
            "d": self.input_dim,
            "num_classes": self.num_classes,
            "seed": self.seed,
            "shift": self.shift.model_dump(mode="json") if self.shift else None,
        }


def class_means(spec: TaskSpec) -> np.ndarray:
    """
    Class means evenly spaced on a circle of radius margin/2 in ROTATION_PLANE.

    The circle starts at π/4 so both plane axes carry class signal even for
    two classes.
    """
    means = np.zeros((spec.num_classes, spec.input_dim))
    angles = MEAN_OFFSET + 2 * np.pi * np.arange(spec.num_classes) / spec.num_classes
    i, j = ROTATION_PLANE
    means[:, i] = 0.5 * spec.margin * np.cos(angles)
    means[:, j] = 0.5 * spec.margin * np.sin(angles)
    return means


def make_task(spec: TaskSpec) -> Dataset:
    """
    Draw a Gaussian mixture task, deterministic per spec.seed.

    Features are scaled by one common factor so the largest row has unit
    Euclidean norm; train, test and public splits are disjoint draws.
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.n_train + spec.n_test + spec.n_public

    labels = rng.permutation(np.arange(n) % spec.num_classes)
    X = class_means(spec)[labels] + spec.noise * rng.standard_normal((n, spec.input_dim))

    max_norm = float(np.max(np.linalg.norm(X, axis=1)))
    if max_norm > 0:
        X = X / max_norm

    a, b = spec.n_train, spec.n_train + spec.n_test
    return Dataset(
        name=spec.name,
        train=Batch(features=X[:a], labels=labels[:a]),
        test=Batch(features=X[a:b], labels=labels[a:b]),
        public=Batch(features=X[b:], labels=labels[b:]),
        num_classes=spec.num_classes,
        seed=spec.seed,
    )


def rotation_matrix(d: int, angle: float, plane=ROTATION_PLANE) -> np.ndarray:
    """d×d Givens rotation by angle in the given coordinate plane"""
    i, j = plane
    if d < 2 or max(i, j) >= d:
        raise DimMismatch(f"Rotation plane {plane} needs at least {max(i, j) + 1} features")
    R = np.eye(d)
    c, s = np.cos(angle), np.sin(angle)
    R[i, i], R[i, j] = c, -s
    R[j, i], R[j, j] = s, c
    return R


def _check_magnitude(shift: ShiftSpec) -> None:
    m = shift.magnitude
    if not np.isfinite(m):
        raise BadMagnitude(f"{shift.kind.value} magnitude must be finite")
    if shift.kind == ShiftKind.ROTATION and abs(m) > MAX_ROTATION:
        raise BadMagnitude(f"rotation angle {m} outside [-2π, 2π]")
    if shift.kind in (ShiftKind.LABEL_FLIP, ShiftKind.FEATURE_MASK) and not 0.0 <= m <= 1.0:
        raise BadMagnitude(f"{shift.kind.value} magnitude {m} outside [0, 1]")


def _flip_labels(labels: np.ndarray, prob: float, num_classes: int, rng) -> np.ndarray:
    y = labels.astype(np.int64).copy()
    flip = rng.random(y.size) < prob
    if num_classes == 2:
        y[flip] = 1 - y[flip]
    else:
        # move to a different class chosen uniformly
        y[flip] = (y[flip] + rng.integers(1, num_classes, size=int(flip.sum()))) % num_classes
    return y


def make_shifted_public(ds: Dataset, shift: ShiftSpec, seed: int) -> Dataset:
    """Copy of ds with the shift applied to every split"""
    _check_magnitude(shift)
    rng = np.random.default_rng(seed)
    d = ds.input_dim

    if shift.kind == ShiftKind.ROTATION:
        R = rotation_matrix(d, shift.magnitude)
        transform = lambda b: Batch(features=b.features @ R.T, labels=b.labels)
    elif shift.kind == ShiftKind.LABEL_FLIP:
        transform = lambda b: b.with_labels(
            _flip_labels(b.labels, shift.magnitude, ds.num_classes, rng)
        )
    else:
        n_masked = int(round(shift.magnitude * d))
        cols = rng.choice(d, size=n_masked, replace=False)

        def transform(b: Batch) -> Batch:
            X = b.features.copy()
            X[:, cols] = 0.0
            return Batch(features=X, labels=b.labels)

    return Dataset(
        name=f"{ds.name}_{shift.label()}",
        train=transform(ds.train),
        test=transform(ds.test),
        public=transform(ds.public) if ds.public is not None else None,
        num_classes=ds.num_classes,
        seed=seed,
        shift=shift,
    )
