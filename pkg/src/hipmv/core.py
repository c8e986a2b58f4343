"""Data model, validation, standardization and parameter initialization."""

from __future__ import annotations

import dataclasses
import functools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import gammaln

FAMILIES = ("multiclass", "poisson", "zip")
STANDARDIZATIONS = ("subgroup", "none")

# Bound keeping the zero-inflation probability strictly inside (0, 1).
TAU_EPS = 1e-4
INIT_COND_MAX = 1e12
INIT_RIDGE = 1e-8


class HipError(Exception):
    """Base class for engine failures."""


class DataError(HipError):
    pass


class NumericalError(HipError):
    pass


@dataclass(frozen=True)
class View:
    name: str
    variables: tuple

    @property
    def p(self) -> int:
        return len(self.variables)


@dataclass(frozen=True)
class Subgroup:
    name: str
    n: int


@dataclass
class OutcomeData:
    """Outcome container, one entry per subgroup.

    For ``multiclass`` each entry of ``values`` is an ``n_s x m`` indicator
    matrix. For ``poisson`` and ``zip`` it is a count vector and ``offsets``
    holds the matching strictly positive exposure vector.
    """

    family: str
    values: list
    offsets: Optional[list] = None
    n_classes: Optional[int] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        # contiguous copies: reductions over strided views round differently
        self.values = [np.ascontiguousarray(v, dtype=float) for v in self.values]
        if self.family == "multiclass":
            if self.n_classes is None:
                self.n_classes = self.values[0].shape[1]
        elif self.offsets is None:
            self.offsets = [np.ones(len(v)) for v in self.values]
        else:
            self.offsets = [np.ascontiguousarray(t, dtype=float) for t in self.offsets]

    @classmethod
    def from_labels(cls, labels: Sequence, n_classes: Optional[int] = None) -> "OutcomeData":
        labels = [np.asarray(lab, dtype=int) for lab in labels]
        if n_classes is None:
            n_classes = int(max(lab.max() for lab in labels if lab.size)) + 1
        eye = np.eye(n_classes)
        return cls("multiclass", [eye[lab] for lab in labels], n_classes=n_classes)

    @classmethod
    def counts(cls, y: Sequence, offsets: Optional[Sequence] = None, zip: bool = False) -> "OutcomeData":
        return cls("zip" if zip else "poisson", list(y), None if offsets is None else list(offsets))

    @property
    def q(self) -> int:
        return self.n_classes if self.family == "multiclass" else 1

    @functools.cached_property
    def log_factorials(self) -> list:
        # log(y!) does not depend on any parameter; computed once.
        if self.family == "multiclass":
            return [np.zeros(len(v)) for v in self.values]
        return [gammaln(v + 1.0) for v in self.values]

    def labels(self, s: int) -> np.ndarray:
        return np.argmax(self.values[s], axis=1)

    def subset_rows(self, rows: list) -> "OutcomeData":
        vals = [v[r] for v, r in zip(self.values, rows)]
        offs = None if self.offsets is None else [t[r] for t, r in zip(self.offsets, rows)]
        return OutcomeData(self.family, vals, offs, self.n_classes)


@dataclass
class MultiViewDataset:
    """Covariates ``X[d][s]`` (``n_s x p_d``) plus an optional outcome."""

    views: list
    subgroups: list
    X: list
    outcome: Optional[OutcomeData] = None

    def __post_init__(self):
        self.X = [[np.ascontiguousarray(x, dtype=float) for x in row] for row in self.X]

    @classmethod
    def from_arrays(cls, X, outcome=None, view_names=None, subgroup_names=None, variable_names=None):
        D, S = len(X), len(X[0])
        view_names = view_names or [f"view{d + 1}" for d in range(D)]
        subgroup_names = subgroup_names or [f"subgroup{s + 1}" for s in range(S)]
        views = []
        for d in range(D):
            p = np.shape(X[d][0])[1]
            names = variable_names[d] if variable_names else [f"{view_names[d]}_v{j}" for j in range(p)]
            views.append(View(view_names[d], tuple(names)))
        subgroups = [Subgroup(subgroup_names[s], int(np.shape(X[0][s])[0])) for s in range(S)]
        return cls(views, subgroups, X, outcome)

    @property
    def D(self) -> int:
        return len(self.views)

    @property
    def S(self) -> int:
        return len(self.subgroups)

    @property
    def p(self) -> list:
        return [v.p for v in self.views]

    @property
    def n(self) -> list:
        return [g.n for g in self.subgroups]

    @property
    def N(self) -> int:
        return sum(self.n)

    def select_columns(self, columns: list) -> "MultiViewDataset":
        """Keep only ``columns[d]`` (integer indices) of every view."""
        views = [View(v.name, tuple(v.variables[j] for j in cols)) for v, cols in zip(self.views, columns)]
        X = [[x[:, cols] for x in row] for row, cols in zip(self.X, columns)]
        return MultiViewDataset(views, list(self.subgroups), X, self.outcome)


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok


def validate_dataset(data: MultiViewDataset, K: Optional[int] = None, training: bool = True) -> ValidationReport:
    """Collect every contract violation instead of stopping at the first.

    With ``training=False`` (held-out data) classes may be absent from a
    subgroup.
    """
    report = ValidationReport()
    bad = report.violations.append
    if data.D < 1 or data.S < 1:
        bad("dataset needs at least one view and one subgroup")
        return report
    if len(data.X) != data.D:
        bad(f"expected {data.D} views of matrices, got {len(data.X)}")
        return report
    for d, view in enumerate(data.views):
        if len(data.X[d]) != data.S:
            bad(f"view {d + 1} ({view.name}): expected {data.S} subgroup matrices, got {len(data.X[d])}")
            continue
        for s, grp in enumerate(data.subgroups):
            x = data.X[d][s]
            where = f"view {d + 1} ({view.name}), subgroup {s + 1} ({grp.name})"
            if x.ndim != 2 or x.shape != (grp.n, view.p):
                bad(f"shape: {where} has shape {x.shape}, expected ({grp.n}, {view.p})")
            elif not np.all(np.isfinite(x)):
                bad(f"non-finite: {where} contains non-finite values")
    if K is not None:
        bound = min(min(g.n, v.p) for g in data.subgroups for v in data.views)
        if K < 1 or K > bound:
            bad(f"K={K} outside [1, {bound}]")

    out = data.outcome
    if out is None:
        return report
    if len(out.values) != data.S:
        bad(f"outcome: expected {data.S} subgroups, got {len(out.values)}")
        return report
    for s, grp in enumerate(data.subgroups):
        y = out.values[s]
        where = f"subgroup {s + 1} ({grp.name})"
        if y.shape[0] != grp.n:
            bad(f"outcome shape: {where} has {y.shape[0]} rows, expected {grp.n}")
            continue
        if not np.all(np.isfinite(y)):
            bad(f"outcome non-finite: {where}")
            continue
        if out.family == "multiclass":
            if y.ndim != 2 or y.shape[1] != out.n_classes:
                bad(f"outcome shape: {where} indicator matrix must have {out.n_classes} columns")
            elif not (np.all((y == 0) | (y == 1)) and np.all(y.sum(axis=1) == 1)):
                bad(f"outcome indicator: {where} rows must contain exactly one 1")
            elif training:
                missing = np.flatnonzero(y.sum(axis=0) == 0)
                if missing.size:
                    bad(f"empty class: {where} has no observations of class(es) {missing.tolist()}")
        else:
            t = out.offsets[s]
            if y.ndim != 1:
                bad(f"outcome shape: {where} counts must be a vector")
            elif np.any(y < 0) or np.any(y != np.round(y)):
                bad(f"counts: {where} must be non-negative integers")
            if t.shape != (grp.n,) or not np.all(np.isfinite(t)) or np.any(t <= 0):
                bad(f"offset: {where} offsets must be finite and strictly positive")
    return report


@dataclass
class StandardizationParams:
    """Per-(view, subgroup) column means and scales from the training data."""

    means: list
    scales: list
    constant: list

    def apply(self, data: MultiViewDataset) -> MultiViewDataset:
        X = []
        for d, row in enumerate(data.X):
            X.append([_apply_columns(x, self.means[d][s], self.scales[d][s], self.constant[d][s])
                      for s, x in enumerate(row)])
        return dataclasses.replace(data, X=X)

    def select_columns(self, columns: list) -> "StandardizationParams":
        pick = lambda arrs: [[a[cols] for a in row] for row, cols in zip(arrs, columns)]
        return StandardizationParams(pick(self.means), pick(self.scales), pick(self.constant))

    def to_dict(self) -> dict:
        tolist = lambda arrs: [[np.asarray(a).tolist() for a in row] for row in arrs]
        return {"means": tolist(self.means), "scales": tolist(self.scales), "constant": tolist(self.constant)}

    @classmethod
    def from_dict(cls, obj: dict) -> "StandardizationParams":
        conv = lambda arrs, dt: [[np.asarray(a, dtype=dt) for a in row] for row in arrs]
        return cls(conv(obj["means"], float), conv(obj["scales"], float), conv(obj["constant"], bool))


def _apply_columns(x, mean, scale, constant):
    out = (x - mean) / scale
    out[:, constant] = 0.0
    return out


def standardize_subgroup(data: MultiViewDataset):
    """Center and scale every column within each (view, subgroup) block.

    Uses the sample standard deviation (``ddof=1``). Constant columns become
    all zeros and are flagged in the returned parameters.
    """
    means, scales, constant = [], [], []
    for row in data.X:
        means.append([x.mean(axis=0) for x in row])
        sds = [x.std(axis=0, ddof=1) if x.shape[0] > 1 else np.zeros(x.shape[1]) for x in row]
        flags = [sd <= 1e-12 * np.maximum(1.0, np.abs(m)) for sd, m in zip(sds, means[-1])]
        scales.append([np.where(f, 1.0, sd) for sd, f in zip(sds, flags)])
        constant.append(flags)
    params = StandardizationParams(means, scales, constant)
    return params.apply(data), params


def identity_standardization(data: MultiViewDataset) -> StandardizationParams:
    return StandardizationParams(
        [[np.zeros(p) for _ in range(data.S)] for p in data.p],
        [[np.ones(p) for _ in range(data.S)] for p in data.p],
        [[np.zeros(p, dtype=bool) for _ in range(data.S)] for p in data.p],
    )


def standardize_columns(Z: np.ndarray) -> np.ndarray:
    """Columns to mean 0 and sample variance 1; constant columns to zero."""
    Zc = Z - Z.mean(axis=0)
    sd = Zc.std(axis=0, ddof=1) if Z.shape[0] > 1 else np.zeros(Z.shape[1])
    ok = sd > 1e-12
    Zc[:, ok] /= sd[ok]
    Zc[:, ~ok] = 0.0
    return Zc


@dataclass(frozen=True)
class SolverSettings:
    """Step-size and stopping controls shared by the inner solvers."""

    L0: float = 1.0
    eta: float = 0.5
    max_iter: int = 500
    tol: float = 1e-6
    adagrad_lr: float = 0.1
    adagrad_floor: float = 1e-10

    def __post_init__(self):
        if not (self.L0 > 0 and 0 < self.eta < 1 and self.max_iter > 0 and self.tol > 0
                and self.adagrad_lr > 0 and self.adagrad_floor > 0):
            raise ValueError("solver settings must be positive with 0 < eta < 1")


@dataclass(frozen=True)
class FitConfig:
    K: int
    lambda_G: float
    lambda_xi: float
    family: str
    gamma: Optional[tuple] = None
    epsilon_conv: float = 1e-5
    iter_max: int = 200
    seed: int = 0
    standardization: str = "subgroup"
    solver: SolverSettings = SolverSettings()

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be a positive integer")
        if not (self.lambda_G > 0 and self.lambda_xi > 0):
            raise ValueError("lambda_G and lambda_xi must be strictly positive")
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.standardization not in STANDARDIZATIONS:
            raise ValueError(f"unknown standardization {self.standardization!r}")
        if self.gamma is not None:
            if any(g not in (0, 1) for g in self.gamma) or not any(self.gamma):
                raise ValueError("gamma entries must be 0/1 with at least one 1")
        if self.epsilon_conv <= 0 or self.iter_max < 1:
            raise ValueError("epsilon_conv must be positive and iter_max >= 1")

    def gamma_for(self, D: int) -> tuple:
        if self.gamma is None:
            return (1,) * D
        if len(self.gamma) != D:
            raise ValueError(f"gamma has {len(self.gamma)} entries for {D} views")
        return tuple(self.gamma)

    def replace(self, **changes) -> "FitConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "FitConfig":
        obj = dict(obj)
        if isinstance(obj.get("solver"), dict):
            obj["solver"] = SolverSettings(**obj["solver"])
        if obj.get("gamma") is not None:
            obj["gamma"] = tuple(obj["gamma"])
        return cls(**obj)


@dataclass
class HipParams:
    Z: list
    G: list
    Xi: list
    Theta: np.ndarray
    beta0: np.ndarray
    tau: Optional[float] = None

    def B(self, d: int, s: int) -> np.ndarray:
        return self.G[d] * self.Xi[d][s]

    def all_B(self) -> list:
        return [[self.B(d, s) for s in range(len(self.Xi[d]))] for d in range(len(self.G))]

    def copy(self) -> "HipParams":
        return HipParams(
            [z.copy() for z in self.Z],
            [g.copy() for g in self.G],
            [[x.copy() for x in row] for row in self.Xi],
            self.Theta.copy(),
            self.beta0.copy(),
            self.tau,
        )


def clamp_tau(tau: float) -> float:
    return float(np.clip(tau, TAU_EPS, 1.0 - TAU_EPS))


def least_squares_loadings(Z: np.ndarray, X: np.ndarray) -> np.ndarray:
    """``[(Z^T Z)^{-1} Z^T X]^T``, ridged when Z^T Z is ill conditioned."""
    ZtZ = Z.T @ Z
    if np.linalg.cond(ZtZ) > INIT_COND_MAX:
        ZtZ = ZtZ + INIT_RIDGE * np.eye(ZtZ.shape[0])
    return np.linalg.solve(ZtZ, Z.T @ X).T


def initialize_params(data: MultiViewDataset, config: FitConfig, Z0: Optional[list] = None) -> HipParams:
    """Starting point of the alternating fit.

    Scores are drawn from U(0.9, 1.1) using ``numpy.random.Generator(PCG64(seed))``
    unless ``Z0`` is given; loadings, coefficients and intercepts start at one
    and the subgroup factors at the least-squares fit of X on the scores.
    """
    K = config.K
    rng = np.random.Generator(np.random.PCG64(config.seed))
    if Z0 is None:
        Z = [rng.uniform(0.9, 1.1, size=(n, K)) for n in data.n]
    else:
        Z = [np.array(z, dtype=float) for z in Z0]
    G = [np.ones((p, K)) for p in data.p]
    Xi = [[least_squares_loadings(Z[s], data.X[d][s]) for s in range(data.S)] for d in range(data.D)]
    q = data.outcome.q
    params = HipParams(Z, G, Xi, np.ones((K, q)), np.ones(q))
    if config.family == "zip":
        from .optimizers import update_tau

        params.tau = update_tau(data, params)
    return params
