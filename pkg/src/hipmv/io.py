"""Files on disk: CSV data sets with a JSON manifest, result JSON, run manifests.

A data set directory holds one CSV per (view, subgroup), rows are samples
and the header carries variable names, plus one outcome CSV per subgroup
with a ``class`` column (multiclass) or a ``count`` column and optional
``offset`` column. ``dataset.json`` ties them together.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from . import __version__
from .core import DataError, MultiViewDataset, OutcomeData, Subgroup, View

FLOAT_FMT = "%.17g"


def schema(name: str) -> dict:
    text = resources.files("hipmv").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


def validate_json(obj: dict, name: str) -> None:
    jsonschema.validate(obj, schema(name))


def _clean(obj):
    # numpy scalars and arrays to plain JSON types
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        obj = float(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def write_json(path, obj: dict, schema_name: Optional[str] = None) -> Path:
    obj = _clean(obj)
    if schema_name:
        validate_json(obj, schema_name)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2) + "\n")
    return path


def read_json(path, schema_name: Optional[str] = None) -> dict:
    try:
        obj = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read JSON {path}: {exc}") from exc
    if schema_name:
        try:
            validate_json(obj, schema_name)
        except jsonschema.ValidationError as exc:
            raise DataError(f"{path} is not a valid {schema_name} file: {exc.message}") from exc
    return obj


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_csv(path, header: list, columns: list) -> Path:
    """Columns of equal length; floats written with round-trip precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([_cell(v) for v in row])
    return path


def _cell(v):
    if isinstance(v, (str, int, np.integer)):
        return str(v)
    return FLOAT_FMT % float(v)


def write_matrix_csv(path, names, X: np.ndarray) -> Path:
    return write_csv(path, list(names), list(np.asarray(X).T))


def read_matrix_csv(path):
    """Return ``(header, float matrix)``."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataError(f"{path} is empty")
    header, body = rows[0], rows[1:]
    try:
        X = np.array([[float(v) for v in r] for r in body], dtype=float).reshape(len(body), len(header))
    except ValueError as exc:
        raise DataError(f"{path}: non-numeric or ragged rows ({exc})") from exc
    return header, X


@dataclass
class DatasetFiles:
    manifest: Path
    files: list = field(default_factory=list)


def save_dataset(data: MultiViewDataset, directory, prefix: str = "") -> DatasetFiles:
    """Write CSVs and ``dataset.json`` under ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = []
    X_entry = {}
    for d, view in enumerate(data.views):
        X_entry[view.name] = {}
        for s, grp in enumerate(data.subgroups):
            name = f"{prefix}X_{view.name}_{grp.name}.csv"
            files.append(write_matrix_csv(directory / name, view.variables, data.X[d][s]))
            X_entry[view.name][grp.name] = name
    out = data.outcome
    y_entry = None
    if out is not None:
        y_entry = {}
        for s, grp in enumerate(data.subgroups):
            name = f"{prefix}y_{grp.name}.csv"
            if out.family == "multiclass":
                files.append(write_csv(directory / name, ["class"], [out.labels(s).tolist()]))
            else:
                files.append(write_csv(directory / name, ["count", "offset"],
                                       [out.values[s].astype(int).tolist(), out.offsets[s]]))
            y_entry[grp.name] = name
    manifest = {
        "format": "hipmv-dataset",
        "views": [v.name for v in data.views],
        "subgroups": [g.name for g in data.subgroups],
        "family": out.family if out is not None else None,
        "n_classes": out.n_classes if out is not None else None,
        "X": X_entry,
        "outcome": y_entry,
    }
    path = write_json(directory / f"{prefix}dataset.json", manifest, "dataset")
    return DatasetFiles(path, files + [path])


def load_dataset(manifest_path, family: Optional[str] = None) -> MultiViewDataset:
    """Read a data set; ``family`` overrides the manifest family for counts."""
    manifest_path = Path(manifest_path)
    m = read_json(manifest_path, "dataset")
    root = manifest_path.parent
    views, X = [], []
    sizes = {}
    for vname in m["views"]:
        row, header0 = [], None
        for gname in m["subgroups"]:
            try:
                rel = m["X"][vname][gname]
            except KeyError:
                raise DataError(f"manifest has no file for view {vname!r}, subgroup {gname!r}") from None
            header, x = read_matrix_csv(root / rel)
            if header0 is not None and header != header0:
                raise DataError(f"view {vname!r}: subgroups disagree on variable names")
            header0 = header
            if sizes.setdefault(gname, x.shape[0]) != x.shape[0]:
                raise DataError(f"subgroup {gname!r}: views disagree on the number of samples")
            row.append(x)
        views.append(View(vname, tuple(header0)))
        X.append(row)
    subgroups = [Subgroup(g, sizes[g]) for g in m["subgroups"]]
    outcome = None
    if m.get("outcome"):
        outcome = _load_outcome(root, m, family)
    return MultiViewDataset(views, subgroups, X, outcome)


def _load_outcome(root: Path, m: dict, family: Optional[str]) -> OutcomeData:
    stored = m["family"]
    family = family or stored
    if (family == "multiclass") != (stored == "multiclass"):
        raise DataError(f"cannot read a {stored!r} outcome as {family!r}")
    tables = []
    for gname in m["subgroups"]:
        header, y = read_matrix_csv(root / m["outcome"][gname])
        tables.append(dict(zip(header, y.T)))
    if family == "multiclass":
        if any("class" not in t for t in tables):
            raise DataError("multiclass outcome files need a 'class' column")
        labels = [t["class"] for t in tables]
        if any(np.any(lab != np.round(lab)) or np.any(lab < 0) for lab in labels):
            raise DataError("class labels must be non-negative integers")
        return OutcomeData.from_labels([lab.astype(int) for lab in labels], n_classes=m.get("n_classes"))
    if any("count" not in t for t in tables):
        raise DataError("count outcome files need a 'count' column")
    offsets = [t.get("offset", np.ones(len(t["count"]))) for t in tables]
    return OutcomeData(family, [t["count"] for t in tables], offsets)


@dataclass
class RunManifest:
    """What was run, with which inputs and settings, and what it wrote.

    Timings live here only, so result files stay byte-identical across runs.
    """

    command: str
    argv: list
    config: dict
    seeds: list
    inputs: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    exit_code: int = 0
    warnings: list = field(default_factory=list)

    def add_input(self, path) -> None:
        self.inputs[str(path)] = sha256(path)

    def to_dict(self) -> dict:
        return {
            "format": "hipmv-run",
            "command": self.command,
            "argv": list(self.argv),
            "config": self.config,
            "seeds": list(self.seeds),
            "engine_version": __version__,
            "inputs": dict(self.inputs),
            "outputs": [str(p) for p in self.outputs],
            "timings": dict(self.timings),
            "exit_code": self.exit_code,
            "warnings": list(self.warnings),
        }

    def write(self, path) -> Path:
        return write_json(path, self.to_dict(), "run_manifest")
