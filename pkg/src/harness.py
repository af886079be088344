"""
gsdlab Experiment Harness

Runs the desk-scale experiments over a list of seeds and assembles
machine-readable reports: per-seed records, aggregates, pass/fail against
thresholds, and CSV-ready side tables.
"""

import logging
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Dict, List, Literal, Optional, TypeVar

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy.stats import ConstantInputWarning, ortho_group, spearmanr

from src.config import load_settings
from src.errors import ConfigError
from src.gep import GepConfig, gep_train
from src.gsd import gsd, gsd_from_gradients, gsd_trajectory, lemma1_terms
from src.linalg import Subspace, qr_basis, random_subspace, singular_values, top_k_svd
from src.models import (
    ModelKind,
    ModelSpec,
    SgdConfig,
    default_spec_for,
    init_model,
    per_sample_gradients,
    sample_minibatch,
    sgd_step,
)
from src.privacy import (
    CloseApprox,
    DpPcaDiagnostics,
    PrivacyParams,
    dp_gsd_from_gradients,
    dp_pca,
    required_sample_size,
)
from src.synth import ShiftKind, ShiftSpec, TaskSpec, make_shifted_public, make_task, rotation_matrix

logger = logging.getLogger(__name__)

T = TypeVar("T")

SCHEMA_VERSION = "1.0"
LEMMA1_TOL = 1e-8
ORDER_AGREEMENT_MIN = 0.9
ENERGY_RATIO_MIN = 0.9
ALIGNMENT_MIN = 0.9
COVERAGE_SLACK = 0.05
TRANSFER_SPEARMAN_MIN = 1.0
TRANSFER_HIDDEN = [16]

ExperimentKind = Literal[
    "monotonicity",
    "ordering-stability",
    "lemma1-audit",
    "spectrum",
    "dppca-utility",
    "dpgsd-closeness",
    "transferability",
]


class DpPcaSettings(BaseModel):
    """Planted-spectrum gradients for the DPPCA utility sweep"""
    p: int = Field(default=20, ge=2)
    top_eigenvalue: float = Field(default=0.6, gt=0)
    eigengap: float = Field(default=0.5, gt=0)
    m_grid: List[int] = Field(default_factory=lambda: [100, 1000, 10000], min_length=1)
    epsilon: float = Field(default=1.0, gt=0)
    clip: float = Field(default=1.0, gt=0)
    trials: int = Field(default=1, ge=1)


class ClosenessSettings(BaseModel):
    """Planted private/public spectra for the DP-GSD closeness check"""
    p: int = Field(default=5, ge=2)
    top_eigenvalue: float = Field(default=0.6, gt=0)
    eigengap: float = Field(default=0.5, gt=0)
    rho: float = Field(default=0.5, gt=0, lt=1)
    eta: float = Field(default=0.1, gt=0, lt=1)
    trials: int = Field(default=100, ge=1)
    epsilon: float = Field(default=1.0, gt=0)
    clip: float = Field(default=1.0, gt=0)
    public_angle: float = 0.6


class ExperimentConfig(BaseModel):
    """One experiment run: what to run, on which task, over which seeds"""
    experiment: ExperimentKind
    task: TaskSpec = Field(default_factory=TaskSpec)
    shifts: List[ShiftSpec] = Field(default_factory=list)
    gep: GepConfig = Field(default_factory=GepConfig)
    privacy: PrivacyParams = Field(default_factory=lambda: PrivacyParams(epsilon=8.0))
    seeds: List[int] = Field(default_factory=lambda: [0], min_length=1)
    output: Optional[Path] = None
    model: Optional[ModelSpec] = None
    gsd_k: int = Field(default=2, ge=1)
    gsd_batch: int = Field(default=500, ge=1)
    sgd: SgdConfig = Field(default_factory=SgdConfig)
    audit_instances: int = Field(default=1000, ge=1)
    spectrum_k: int = Field(default=16, ge=1)
    spectrum_every: int = Field(default=10, ge=1)
    dppca: DpPcaSettings = Field(default_factory=DpPcaSettings)
    closeness: ClosenessSettings = Field(default_factory=ClosenessSettings)
    transfer_model: Optional[ModelSpec] = None

    @model_validator(mode="after")
    def _check_experiment_fields(self):
        if self.experiment == "monotonicity" and not self.shifts:
            raise ValueError("monotonicity needs at least one shift")
        if self.experiment in ("ordering-stability", "transferability") and len(self.shifts) < 2:
            raise ValueError(f"{self.experiment} needs at least two shifts")
        return self


class ExperimentReport(BaseModel):
    """Config echo, per-seed records, aggregates and the pass/fail verdict"""
    schema_version: str = SCHEMA_VERSION
    experiment: ExperimentKind
    config: dict
    per_seed: List[dict]
    aggregates: dict
    thresholds: dict = Field(default_factory=dict)
    passed: Optional[bool] = None
    warnings: List[str] = Field(default_factory=list)
    tables: Dict[str, List[dict]] = Field(default_factory=dict)
    wall_clock_seconds: float = 0.0

    def to_json(self, include_wall_clock: bool = True) -> str:
        exclude = None if include_wall_clock else {"wall_clock_seconds"}
        return self.model_dump_json(indent=2, exclude=exclude)


def run_seeds(fn: Callable[[int], T], seeds: List[int], threads: Optional[int] = None) -> List[T]:
    """fn over every seed in a thread pool; results come back in seed order"""
    threads = threads or load_settings().threads
    with ThreadPoolExecutor(max_workers=max(1, min(threads, len(seeds)))) as pool:
        return list(pool.map(fn, seeds))


def _median(values) -> Optional[float]:
    values = [v for v in values if v is not None]
    return float(np.median(values)) if values else None


def _model_spec(cfg: ExperimentConfig, input_dim: int, num_classes: int) -> ModelSpec:
    return cfg.model or default_spec_for(input_dim, num_classes)


def _canonical(shifts: List[ShiftSpec]) -> List[ShiftSpec]:
    return sorted(shifts, key=lambda s: (s.kind.value, s.magnitude))


def _spearman(x: List[float], y: List[float]) -> Optional[float]:
    if len(x) < 2:
        return None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConstantInputWarning)
        rho, _ = spearmanr(x, y)
    return None if np.isnan(rho) else float(rho)


def _strictly(values: List[float], increasing: bool) -> bool:
    steps = np.diff(values)
    return bool(np.all(steps > 0) if increasing else np.all(steps < 0))


# ---------------------------------------------------------------------------
# monotonicity


def _monotonicity_seed(cfg: ExperimentConfig, seed: int) -> dict:
    ds = make_task(cfg.task.model_copy(update={"seed": seed}))
    model0 = init_model(_model_spec(cfg, ds.input_dim, ds.num_classes), seed)
    sample = ds.train.subset(np.arange(min(cfg.gsd_batch, ds.train.size)))
    gep_cfg = cfg.gep.model_copy(update={"seed": seed})

    rows = []
    for shift in _canonical(cfg.shifts):
        pub = make_shifted_public(ds, shift, seed)
        report = gsd(sample, pub.public_examples, model0, k=cfg.gsd_k)
        result = gep_train(ds, pub, model0, gep_cfg, cfg.privacy)
        rows.append({
            "shift": shift.label(),
            "gsd": report.distance_raw,
            "gsd_normalized": report.distance_normalized,
            "accuracy": result.test_metrics.accuracy,
        })

    spearman = _spearman([-r["gsd"] for r in rows], [r["accuracy"] for r in rows])
    return {"seed": seed, "shifts": rows, "spearman": spearman}


def _monotonicity_report(cfg: ExperimentConfig, per_seed: List[dict]) -> dict:
    labels = [r["shift"] for r in per_seed[0]["shifts"]]
    gsd_median = [_median(s["shifts"][i]["gsd"] for s in per_seed) for i in range(len(labels))]
    acc_median = [_median(s["shifts"][i]["accuracy"] for s in per_seed) for i in range(len(labels))]
    spearman_median = _median(s["spearman"] for s in per_seed)

    warns = []
    if len(labels) < 2:
        warns.append("⚠️  single shift: rank correlation is undefined")
    elif spearman_median is None:
        warns.append("⚠️  rank correlation undefined for every seed (constant GSD or accuracy)")

    return {
        "aggregates": {
            "shifts": labels,
            "gsd_median": gsd_median,
            "accuracy_median": acc_median,
            "spearman_median": spearman_median,
            "gsd_increasing": _strictly(gsd_median, True) if len(labels) > 1 else None,
            "accuracy_decreasing": _strictly(acc_median, False) if len(labels) > 1 else None,
        },
        "thresholds": {"spearman_median": 1.0},
        "passed": None if spearman_median is None else spearman_median >= 1.0 - 1e-12,
        "warnings": warns,
        "tables": {"shifts": [
            {"seed": s["seed"], **row} for s in per_seed for row in s["shifts"]
        ]},
    }


# ---------------------------------------------------------------------------
# ordering stability


def _ordering_seed(cfg: ExperimentConfig, seed: int) -> dict:
    ds = make_task(cfg.task.model_copy(update={"seed": seed}))
    model0 = init_model(_model_spec(cfg, ds.input_dim, ds.num_classes), seed)
    shifts = _canonical(cfg.shifts)
    publics = [make_shifted_public(ds, s, seed).public_examples for s in shifts]

    sgd = cfg.sgd.model_copy(update={"seed": seed})
    trajectory = gsd_trajectory(ds, publics, model0, cfg.gsd_k, sgd, threads=1)
    return {
        "seed": seed,
        "publics": [s.label() for s in shifts],
        "order_agreement": trajectory.order_agreement,
        "initial_ranking": trajectory.steps[0].ranking,
        "distances": [[r.distance_raw for r in step.reports] for step in trajectory.steps],
    }


def _ordering_report(cfg: ExperimentConfig, per_seed: List[dict]) -> dict:
    agreement = _median(s["order_agreement"] for s in per_seed)
    table = [
        {"seed": s["seed"], "iteration": t, "public": name, "distance": d}
        for s in per_seed
        for t, row in enumerate(s["distances"])
        for name, d in zip(s["publics"], row)
    ]
    return {
        "aggregates": {
            "order_agreement_median": agreement,
            "order_agreement_min": min(s["order_agreement"] for s in per_seed),
        },
        "thresholds": {"order_agreement_median": ORDER_AGREEMENT_MIN},
        "passed": agreement >= ORDER_AGREEMENT_MIN,
        "warnings": [],
        "tables": {"distances": table},
    }


# ---------------------------------------------------------------------------
# reconstruction bound audit


def _audit_instance(rng: np.random.Generator) -> float:
    """r − d on one random (G, V); half the subspaces are perturbed top-k ones"""
    m = int(rng.integers(2, 41))
    p = int(rng.integers(2, 17))
    k = int(rng.integers(1, min(m, p) + 1))
    decay = rng.uniform(0.0, 3.0)
    G = rng.standard_normal((m, p)) * np.exp(-decay * np.arange(p))

    if rng.random() < 0.5:
        V = random_subspace(p, k, rng)
    else:
        B = top_k_svd(G, k).right.basis
        V = Subspace(basis=qr_basis(B + rng.uniform(0.0, 0.5) * rng.standard_normal((p, k))))
    terms = lemma1_terms(G, V)
    return terms.reconstruction_error - terms.bound


def _lemma1_seed(cfg: ExperimentConfig, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    violations = [_audit_instance(rng) for _ in range(cfg.audit_instances)]

    ds = make_task(cfg.task.model_copy(update={"seed": seed}))
    model0 = init_model(_model_spec(cfg, ds.input_dim, ds.num_classes), seed)
    result = gep_train(ds, ds, model0, cfg.gep.model_copy(update={"seed": seed}), cfg.privacy)
    trace_violations = [-step.slack for step in result.trace]

    return {
        "seed": seed,
        "instances": len(violations),
        "max_violation": float(max(violations)),
        "trace_steps": len(trace_violations),
        "trace_max_violation": float(max(trace_violations)),
    }


def _lemma1_report(cfg: ExperimentConfig, per_seed: List[dict]) -> dict:
    worst = max(max(s["max_violation"], s["trace_max_violation"]) for s in per_seed)
    return {
        "aggregates": {
            "instances": sum(s["instances"] for s in per_seed),
            "trace_steps": sum(s["trace_steps"] for s in per_seed),
            "max_violation": worst,
        },
        "thresholds": {"max_violation": LEMMA1_TOL},
        "passed": worst <= LEMMA1_TOL,
        "warnings": [],
        "tables": {"violations": [
            {"seed": s["seed"], "random": s["max_violation"], "trace": s["trace_max_violation"]}
            for s in per_seed
        ]},
    }


# ---------------------------------------------------------------------------
# spectrum


def _energy_ratio(spectrum: np.ndarray, k: int) -> float:
    total = float(np.sum(spectrum ** 2))
    if total == 0.0:
        return 1.0
    return float(np.sum(spectrum[:k] ** 2) / total)


def _spectrum_seed(cfg: ExperimentConfig, seed: int) -> dict:
    ds = make_task(cfg.task.model_copy(update={"seed": seed}))
    model = init_model(_model_spec(cfg, ds.input_dim, ds.num_classes), seed)
    sample = ds.train.subset(np.arange(min(cfg.gsd_batch, ds.train.size)))
    rng = np.random.default_rng(seed)

    checkpoints = []
    for t in range(cfg.sgd.steps + 1):
        if t % cfg.spectrum_every == 0 or t == cfg.sgd.steps:
            s = singular_values(per_sample_gradients(model, sample))
            checkpoints.append({
                "step": t,
                "energy_ratio": _energy_ratio(s, cfg.spectrum_k),
                "singular_values": [float(v) for v in s],
            })
        if t == cfg.sgd.steps:
            break
        idx = sample_minibatch(rng, ds.train.size, cfg.sgd.batch_size)
        model = sgd_step(model, ds.train.subset(idx), cfg.sgd.learning_rate)

    return {
        "seed": seed,
        "p": model.p,
        "checkpoints": checkpoints,
        "min_energy_ratio": min(c["energy_ratio"] for c in checkpoints),
    }


def _spectrum_report(cfg: ExperimentConfig, per_seed: List[dict]) -> dict:
    worst = min(s["min_energy_ratio"] for s in per_seed)
    table = [
        {"seed": s["seed"], "step": c["step"], "index": i + 1, "singular_value": v}
        for s in per_seed
        for c in s["checkpoints"]
        for i, v in enumerate(c["singular_values"])
    ]
    warns = []
    if cfg.spectrum_k >= per_seed[0]["p"]:
        warns.append(f"⚠️  spectrum_k={cfg.spectrum_k} covers all {per_seed[0]['p']} parameters")
    return {
        "aggregates": {
            "k": cfg.spectrum_k,
            "min_energy_ratio": worst,
            "median_min_energy_ratio": _median(s["min_energy_ratio"] for s in per_seed),
        },
        "thresholds": {"min_energy_ratio": ENERGY_RATIO_MIN},
        "passed": worst >= ENERGY_RATIO_MIN,
        "warnings": warns,
        "tables": {"spectrum": table},
    }


# ---------------------------------------------------------------------------
# planted-spectrum gradients for the privacy experiments


def planted_spectrum(p: int, top: float, gap: float, c: float) -> np.ndarray:
    """
    Eigenvalues [top, top − gap, rest...] with the rest equal and no larger
    than (top − gap)/2, summing to at most c².
    """
    second = top - gap
    if second < 0:
        raise ConfigError(f"eigengap {gap} exceeds the top eigenvalue {top}")
    budget = c ** 2 - top - second
    if budget < 0:
        raise ConfigError(f"top two eigenvalues exceed c²={c ** 2}")
    rest = min(second / 2.0, budget / (p - 2)) if p > 2 else 0.0
    return np.array([top, second] + [rest] * (p - 2))


def planted_gradients(Q: np.ndarray, spectrum: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    """
    m rows Q·(s ⊙ √λ) with random signs s; every row has norm² = Σλ and
    (1/m)GᵀG concentrates on Q·diag(λ)·Qᵀ.
    """
    signs = rng.choice([-1.0, 1.0], size=(m, spectrum.size))
    return (signs * np.sqrt(spectrum)) @ Q.T


def _top_eigenvector(G: np.ndarray) -> np.ndarray:
    _, vecs = np.linalg.eigh(G.T @ G / G.shape[0])
    return vecs[:, -1]


def _dppca_seed(cfg: ExperimentConfig, seed: int) -> dict:
    s = cfg.dppca
    rng = np.random.default_rng(seed)
    spectrum = planted_spectrum(s.p, s.top_eigenvalue, s.eigengap, s.clip)
    Q = ortho_group.rvs(s.p, random_state=rng)

    rows = []
    for m in s.m_grid:
        G = planted_gradients(Q, spectrum, m, rng)
        v_top = _top_eigenvector(G)
        alignments = [
            abs(float(dp_pca(G, s.epsilon, s.clip, rng).basis[:, 0] @ v_top))
            for _ in range(s.trials)
        ]
        rows.append({"m": m, "alignment": float(np.median(alignments))})
    return {"seed": seed, "alignments": rows}


def _dppca_report(cfg: ExperimentConfig, per_seed: List[dict]) -> dict:
    grid = [r["m"] for r in per_seed[0]["alignments"]]
    medians = [_median(s["alignments"][i]["alignment"] for s in per_seed) for i in range(len(grid))]
    non_decreasing = bool(np.all(np.diff(medians) >= 0))
    return {
        "aggregates": {
            "m_grid": grid,
            "median_alignment": medians,
            "non_decreasing": non_decreasing,
        },
        "thresholds": {"final_median_alignment": ALIGNMENT_MIN},
        "passed": non_decreasing and medians[-1] >= ALIGNMENT_MIN,
        "warnings": [],
        "tables": {"alignment": [
            {"seed": s["seed"], **row} for s in per_seed for row in s["alignments"]
        ]},
    }


def closeness_sample_size(s: ClosenessSettings) -> int:
    """Smallest integer m satisfying the closeness bound for the planted spectrum"""
    diag = DpPcaDiagnostics(top_eigenvalue=s.top_eigenvalue, eigengap=s.eigengap, p=s.p, m=1)
    bound = required_sample_size(diag, CloseApprox(rho=s.rho, eta=s.eta), s.epsilon, s.clip)
    return int(math.ceil(bound))


def _closeness_seed(cfg: ExperimentConfig, seed: int) -> dict:
    s = cfg.closeness
    rng = np.random.default_rng(seed)
    spectrum = planted_spectrum(s.p, s.top_eigenvalue, s.eigengap, s.clip)
    m = closeness_sample_size(s)

    Q = ortho_group.rvs(s.p, random_state=rng)
    Q_pub = Q @ rotation_matrix(s.p, s.public_angle)
    G_priv = planted_gradients(Q, spectrum, m, rng)
    G_pub = planted_gradients(Q_pub, spectrum, m, rng)

    d_true = gsd_from_gradients(G_priv, G_pub, 1).distance_raw
    params = PrivacyParams(epsilon=s.epsilon, clip_norm=s.clip)
    estimates = [
        dp_gsd_from_gradients(G_priv, G_pub, params, rng).distance_raw
        for _ in range(s.trials)
    ]
    within = [abs(d - d_true) <= s.rho for d in estimates]
    return {
        "seed": seed,
        "m": m,
        "d_true": d_true,
        "estimates": [float(d) for d in estimates],
        "within": int(sum(within)),
        "trials": len(within),
    }


def _closeness_report(cfg: ExperimentConfig, per_seed: List[dict]) -> dict:
    s = cfg.closeness
    coverage = sum(r["within"] for r in per_seed) / sum(r["trials"] for r in per_seed)
    target = 1.0 - s.eta - COVERAGE_SLACK
    return {
        "aggregates": {"m": per_seed[0]["m"], "coverage": coverage},
        "thresholds": {"coverage": target},
        "passed": coverage >= target,
        "warnings": [],
        "tables": {"estimates": [
            {"seed": r["seed"], "trial": i, "d_true": r["d_true"], "d_hat": d}
            for r in per_seed
            for i, d in enumerate(r["estimates"])
        ]},
    }


# ---------------------------------------------------------------------------
# transferability


def _transfer_spec(cfg: ExperimentConfig, input_dim: int, num_classes: int) -> ModelSpec:
    if cfg.transfer_model is not None:
        return cfg.transfer_model
    return ModelSpec(kind=ModelKind.MLP, input_dim=input_dim,
                     hidden_dims=TRANSFER_HIDDEN, num_classes=num_classes)


def _transfer_seed(cfg: ExperimentConfig, seed: int) -> dict:
    ds = make_task(cfg.task.model_copy(update={"seed": seed}))
    simple = init_model(_model_spec(cfg, ds.input_dim, ds.num_classes), seed)
    larger = init_model(_transfer_spec(cfg, ds.input_dim, ds.num_classes), seed)
    sample = ds.train.subset(np.arange(min(cfg.gsd_batch, ds.train.size)))

    rows = []
    for shift in _canonical(cfg.shifts):
        pub = make_shifted_public(ds, shift, seed).public_examples
        rows.append({
            "shift": shift.label(),
            "gsd_simple": gsd(sample, pub, simple, k=cfg.gsd_k).distance_normalized,
            "gsd_larger": gsd(sample, pub, larger, k=cfg.gsd_k).distance_normalized,
        })

    simple_d = [r["gsd_simple"] for r in rows]
    larger_d = [r["gsd_larger"] for r in rows]
    return {
        "seed": seed,
        "p_simple": simple.p,
        "p_larger": larger.p,
        "shifts": rows,
        "spearman": _spearman(simple_d, larger_d),
        "same_ranking": [int(i) for i in np.argsort(simple_d, kind="stable")]
        == [int(i) for i in np.argsort(larger_d, kind="stable")],
    }


def _transfer_report(cfg: ExperimentConfig, per_seed: List[dict]) -> dict:
    labels = [r["shift"] for r in per_seed[0]["shifts"]]
    spearman_median = _median(s["spearman"] for s in per_seed)
    warns = []
    if spearman_median is None:
        warns.append("⚠️  rank correlation undefined for every seed (constant distances)")
    return {
        "aggregates": {
            "shifts": labels,
            "p_simple": per_seed[0]["p_simple"],
            "p_larger": per_seed[0]["p_larger"],
            "gsd_simple_median": [
                _median(s["shifts"][i]["gsd_simple"] for s in per_seed) for i in range(len(labels))
            ],
            "gsd_larger_median": [
                _median(s["shifts"][i]["gsd_larger"] for s in per_seed) for i in range(len(labels))
            ],
            "spearman_median": spearman_median,
            "same_ranking_fraction": float(np.mean([s["same_ranking"] for s in per_seed])),
        },
        "thresholds": {"spearman_median": TRANSFER_SPEARMAN_MIN},
        "passed": None if spearman_median is None
        else spearman_median >= TRANSFER_SPEARMAN_MIN - 1e-12,
        "warnings": warns,
        "tables": {"distances": [
            {"seed": s["seed"], **row} for s in per_seed for row in s["shifts"]
        ]},
    }


# ---------------------------------------------------------------------------


EXPERIMENTS = {
    "monotonicity": (_monotonicity_seed, _monotonicity_report),
    "ordering-stability": (_ordering_seed, _ordering_report),
    "lemma1-audit": (_lemma1_seed, _lemma1_report),
    "spectrum": (_spectrum_seed, _spectrum_report),
    "dppca-utility": (_dppca_seed, _dppca_report),
    "dpgsd-closeness": (_closeness_seed, _closeness_report),
    "transferability": (_transfer_seed, _transfer_report),
}


def run_experiment(cfg: ExperimentConfig, threads: Optional[int] = None) -> ExperimentReport:
    """Run cfg.experiment over all seeds and assemble the report"""
    seed_fn, assemble = EXPERIMENTS[cfg.experiment]
    logger.info(f"🔬 {cfg.experiment}: {len(cfg.seeds)} seed(s)")

    start = time.perf_counter()
    per_seed = run_seeds(lambda seed: seed_fn(cfg, seed), cfg.seeds, threads)
    parts = assemble(cfg, per_seed)
    elapsed = time.perf_counter() - start

    report = ExperimentReport(
        experiment=cfg.experiment,
        config=cfg.model_dump(mode="json"),
        per_seed=per_seed,
        wall_clock_seconds=elapsed,
        **parts,
    )
    for message in report.warnings:
        logger.warning(message)
    verdict = {True: "✅ passed", False: "❌ failed", None: "⚠️  no verdict"}[report.passed]
    logger.info(f"{verdict}: {cfg.experiment} in {elapsed:.1f}s")
    return report


def run_monotonicity(cfg: ExperimentConfig) -> ExperimentReport:
    return run_experiment(cfg.model_copy(update={"experiment": "monotonicity"}))


def run_ordering_stability(cfg: ExperimentConfig) -> ExperimentReport:
    return run_experiment(cfg.model_copy(update={"experiment": "ordering-stability"}))


def run_lemma1_audit(cfg: ExperimentConfig) -> ExperimentReport:
    return run_experiment(cfg.model_copy(update={"experiment": "lemma1-audit"}))


def run_spectrum(cfg: ExperimentConfig) -> ExperimentReport:
    return run_experiment(cfg.model_copy(update={"experiment": "spectrum"}))


def run_dppca_utility(cfg: ExperimentConfig) -> ExperimentReport:
    return run_experiment(cfg.model_copy(update={"experiment": "dppca-utility"}))


def run_dpgsd_closeness(cfg: ExperimentConfig) -> ExperimentReport:
    return run_experiment(cfg.model_copy(update={"experiment": "dpgsd-closeness"}))


def run_transferability(cfg: ExperimentConfig) -> ExperimentReport:
    return run_experiment(cfg.model_copy(update={"experiment": "transferability"}))


def _rotations(*angles: float) -> List[ShiftSpec]:
    return [ShiftSpec(kind=ShiftKind.ROTATION, magnitude=a) for a in angles]


def default_config(experiment: str) -> ExperimentConfig:
    """Stock configuration that reproduces the experiment's pass criterion"""
    binary = TaskSpec(
        name="binary", input_dim=10, num_classes=2,
        n_train=2000, n_test=2000, n_public=500, margin=2.0, noise=0.5,
    )
    if experiment == "monotonicity":
        return ExperimentConfig(
            experiment=experiment,
            task=binary,
            shifts=_rotations(0.0, np.pi / 6, np.pi / 3),
            gep=GepConfig(
                k=2, learning_rate=2.0, iterations=100, batch_size=500,
                clip_embedding=1.0, clip_residual=0.0,
            ),
            privacy=PrivacyParams(epsilon=20.0, delta=1e-5),
            seeds=list(range(5)),
            gsd_k=2,
            gsd_batch=500,
        )
    if experiment == "ordering-stability":
        return ExperimentConfig(
            experiment=experiment,
            task=binary.model_copy(update={"n_train": 4000, "n_public": 1000}),
            shifts=_rotations(0.0, np.pi / 4, np.pi / 2),
            sgd=SgdConfig(learning_rate=0.05, steps=200, batch_size=1000),
            seeds=list(range(5)),
            gsd_k=2,
        )
    if experiment == "lemma1-audit":
        return ExperimentConfig(
            experiment=experiment,
            task=binary.model_copy(update={"n_train": 1000, "n_test": 500, "n_public": 200}),
            gep=GepConfig(k=2, iterations=30, batch_size=128),
            privacy=PrivacyParams(epsilon=8.0, delta=1e-5),
            audit_instances=1000,
        )
    if experiment == "spectrum":
        return ExperimentConfig(
            experiment=experiment,
            task=TaskSpec(
                name="softmax", input_dim=12, num_classes=3,
                n_train=2000, n_test=500, n_public=200, margin=6.0, noise=0.3,
            ),
            model=ModelSpec(kind=ModelKind.SOFTMAX_REGRESSION, input_dim=12, num_classes=3),
            sgd=SgdConfig(learning_rate=1.0, steps=100, batch_size=128),
            spectrum_k=16,
            spectrum_every=10,
            gsd_batch=500,
            seeds=list(range(3)),
        )
    if experiment == "dppca-utility":
        return ExperimentConfig(experiment=experiment, seeds=list(range(50)))
    if experiment == "dpgsd-closeness":
        return ExperimentConfig(experiment=experiment, seeds=[0])
    if experiment == "transferability":
        return ExperimentConfig(
            experiment=experiment,
            task=binary,
            shifts=_rotations(0.0, np.pi / 4, np.pi / 2),
            seeds=list(range(5)),
            gsd_k=2,
            gsd_batch=500,
        )
    raise ConfigError(f"Unknown experiment '{experiment}'")
