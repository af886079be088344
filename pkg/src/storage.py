"""
gsdlab Storage

Reads and writes matrices, batches, datasets, model files, reports and
training traces as CSV and JSON.
"""

import csv
import json
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

import numpy as np
from pydantic import ValidationError

from src.errors import StorageError
from src.gep import GepStepTrace
from src.models import Batch, ModelParams, ModelSpec
from src.synth import Dataset, ShiftSpec

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

TRACE_COLUMNS = ["t", "r_t", "d_t", "gsd_t", "s1_t", "sk1_t", "loss"]
MANIFEST = "manifest.json"


def _fmt(x: float) -> str:
    # repr gives the shortest string that round-trips
    return repr(float(x))


class LabStorage:
    """File persistence rooted at an optional data directory"""

    def __init__(self, data_dir: Optional[PathLike] = None):
        self.data_dir = Path(data_dir) if data_dir is not None else None

    def resolve(self, path: PathLike) -> Path:
        """Relative paths land under data_dir when one is set"""
        path = Path(path)
        if self.data_dir is not None and not path.is_absolute():
            return self.data_dir / path
        return path

    def _for_write(self, path: PathLike) -> Path:
        target = self.resolve(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        return target

    def _for_read(self, path: PathLike) -> Path:
        target = self.resolve(path)
        if not target.is_file():
            raise StorageError(f"File not found: {target}")
        return target

    # matrices and batches

    def save_matrix(self, M, path: PathLike) -> Path:
        """Row-major CSV without header"""
        target = self._for_write(path)
        M = np.atleast_2d(np.asarray(M, dtype=np.float64))
        with open(target, "w", newline="") as f:
            writer = csv.writer(f)
            for row in M:
                writer.writerow([_fmt(x) for x in row])
        return target

    def load_matrix(self, path: PathLike) -> np.ndarray:
        source = self._for_read(path)
        try:
            M = np.loadtxt(source, delimiter=",", ndmin=2, dtype=np.float64)
        except ValueError as e:
            raise StorageError(f"Cannot parse {source}: {e}") from e
        if M.size == 0:
            raise StorageError(f"No data in {source}")
        return M

    def save_batch(self, batch: Batch, path: PathLike) -> Path:
        """Features followed by the label in the last column"""
        target = self._for_write(path)
        integral = bool(np.all(batch.labels == np.round(batch.labels)))
        with open(target, "w", newline="") as f:
            writer = csv.writer(f)
            for x, y in zip(batch.features, batch.labels):
                label = str(int(y)) if integral else _fmt(y)
                writer.writerow([_fmt(v) for v in x] + [label])
        return target

    def load_batch(self, path: PathLike, spec: Optional[ModelSpec] = None) -> Batch:
        M = self.load_matrix(path)
        if M.shape[1] < 2:
            raise StorageError(f"{self.resolve(path)} needs feature columns plus a label column")
        labels = M[:, -1]
        if spec is not None and spec.is_classifier:
            bad = np.flatnonzero(labels != np.round(labels))
            if bad.size:
                raise StorageError(
                    f"{self.resolve(path)} row {int(bad[0]) + 1}: class label "
                    f"{labels[bad[0]]!r} is not an integer"
                )
            labels = labels.astype(np.int64)
        try:
            return Batch(features=M[:, :-1], labels=labels)
        except ValidationError as e:
            raise StorageError(f"Invalid batch in {self.resolve(path)}: {e}") from e

    # models

    def save_json(self, data: dict, path: PathLike) -> Path:
        target = self._for_write(path)
        with open(target, "w") as f:
            json.dump(data, f, indent=2)
        return target

    def load_json(self, path: PathLike) -> dict:
        source = self._for_read(path)
        try:
            with open(source) as f:
                return json.load(f)
        except json.JSONDecodeError as e:
            raise StorageError(f"Invalid JSON in {source}: {e}") from e

    def save_model_spec(self, spec: ModelSpec, path: PathLike) -> Path:
        return self.save_json(spec.model_dump(mode="json"), path)

    def load_model_spec(self, path: PathLike) -> ModelSpec:
        try:
            return ModelSpec(**self.load_json(path))
        except (ValidationError, TypeError) as e:
            raise StorageError(f"Invalid model spec in {self.resolve(path)}: {e}") from e

    def save_params(self, model: ModelParams, path: PathLike) -> Path:
        """theta as a single CSV row"""
        return self.save_matrix(model.theta[None, :], path)

    def load_params(self, spec: ModelSpec, path: PathLike) -> ModelParams:
        theta = self.load_matrix(path).reshape(-1)
        try:
            return ModelParams(spec=spec, theta=theta)
        except ValidationError as e:
            raise StorageError(f"Parameters in {self.resolve(path)} do not fit the spec: {e}") from e

    # datasets

    def save_dataset(
        self,
        ds: Dataset,
        out_dir: PathLike,
        publics: Iterable[Dataset] = (),
    ) -> Path:
        """
        train.csv, test.csv, one public_<name>.csv per public split and a
        manifest.json describing them.
        """
        out = self.resolve(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        self.save_batch(ds.train, out / "train.csv")
        self.save_batch(ds.test, out / "test.csv")

        entries = []
        for variant in ([ds] if ds.public is not None else []) + list(publics):
            if variant.public is None:
                continue
            filename = f"public_{variant.name}.csv"
            self.save_batch(variant.public, out / filename)
            entries.append({
                "name": variant.name,
                "file": filename,
                "shift": variant.shift.model_dump(mode="json") if variant.shift else None,
            })

        manifest = ds.manifest()
        manifest["publics"] = entries
        self.save_json(manifest, out / MANIFEST)
        logger.info(f"✅ Dataset '{ds.name}' saved to {out} ({len(entries)} public split(s))")
        return out

    def load_dataset(self, directory: PathLike) -> Tuple[Dataset, Dict[str, Batch]]:
        """Dataset plus every public split listed in the manifest, keyed by name"""
        root = self.resolve(directory)
        manifest = self.load_json(root / MANIFEST)
        try:
            publics = {
                entry["name"]: self.load_batch(root / entry["file"])
                for entry in manifest.get("publics", [])
            }
            shift = manifest.get("shift")
            ds = Dataset(
                name=manifest["name"],
                train=self.load_batch(root / "train.csv"),
                test=self.load_batch(root / "test.csv"),
                public=publics.get(manifest["name"]),
                num_classes=manifest["num_classes"],
                seed=manifest.get("seed", 0),
                shift=ShiftSpec(**shift) if shift else None,
            )
        except (KeyError, ValidationError) as e:
            raise StorageError(f"Invalid manifest in {root}: {e}") from e
        return ds, publics

    # reports and traces

    def save_rows(self, rows: List[dict], path: PathLike) -> Path:
        """List of flat records as a CSV with a header"""
        target = self._for_write(path)
        columns: List[str] = []
        for row in rows:
            columns.extend(c for c in row if c not in columns)
        with open(target, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=columns)
            writer.writeheader()
            writer.writerows(rows)
        return target

    def save_report(self, report, path: PathLike) -> Path:
        """Report JSON plus one <stem>_<table>.csv per side table"""
        target = self._for_write(path)
        with open(target, "w") as f:
            f.write(report.to_json())
        for name, rows in report.tables.items():
            if rows:
                self.save_rows(rows, target.with_name(f"{target.stem}_{name}.csv"))
        logger.info(f"✅ Report saved to {target}")
        return target

    def save_trace(self, trace: List[GepStepTrace], path: PathLike) -> Path:
        rows = [
            {
                "t": step.step,
                "r_t": _fmt(step.reconstruction_error),
                "d_t": _fmt(step.lemma1_bound),
                "gsd_t": _fmt(step.gsd),
                "s1_t": _fmt(step.s1),
                "sk1_t": _fmt(step.s_k1),
                "loss": "" if step.train_loss is None else _fmt(step.train_loss),
            }
            for step in trace
        ]
        target = self._for_write(path)
        with open(target, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=TRACE_COLUMNS)
            writer.writeheader()
            writer.writerows(rows)
        return target

    def load_trace(self, path: PathLike) -> List[GepStepTrace]:
        source = self._for_read(path)
        with open(source, newline="") as f:
            reader = csv.DictReader(f)
            try:
                return [
                    GepStepTrace(
                        step=int(row["t"]),
                        reconstruction_error=float(row["r_t"]),
                        lemma1_bound=float(row["d_t"]),
                        gsd=float(row["gsd_t"]),
                        s1=float(row["s1_t"]),
                        s_k1=float(row["sk1_t"]),
                        train_loss=float(row["loss"]) if row["loss"] else None,
                    )
                    for row in reader
                ]
            except (KeyError, ValueError) as e:
                raise StorageError(f"Invalid trace in {source}: {e}") from e
