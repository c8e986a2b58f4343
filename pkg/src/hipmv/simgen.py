"""Synthetic multi-view data with subgroup-specific sparse loadings.

Loadings have ``n_signal`` nonzero rows per (view, subgroup), drawn from the
two-sided uniform U(-1, -0.5) u U(0.5, 1) and orthonormalized by QR. Scores
are N(25, 3), view noise is N(0, 1) and ``X = Z B^T + E``. Outcomes follow
the binary (softmax of ``beta0 + Z Theta + E_y``), Poisson or zero-inflated
Poisson recipes, the count families using column-standardized scores.

Random streams come from ``numpy.random.SeedSequence(seed).spawn``: one for
loadings, one for the training draws and one for held-out test draws.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import MultiViewDataset, OutcomeData, standardize_columns

DIMENSIONS = {"low": (300, 350), "high": (2000, 3000)}

DEFAULT_TRUTH = {
    "multiclass": {"beta0": [0.5, 0.5], "Theta": [[1.0, 0.5], [0.2, 0.8]]},
    "poisson": {"beta0": [2.0], "Theta": [[0.7], [0.2]]},
    "zip": {"beta0": [2.0], "Theta": [[0.7], [0.2]]},
}


@dataclass(frozen=True)
class ScenarioSpec:
    overlap: str = "full"
    p: tuple = DIMENSIONS["low"]
    n: tuple = (250, 260)
    K: int = 2
    family: str = "zip"
    n_signal: int = 50
    n_common: int = 25
    seed: int = 0
    tau: float = 0.25
    z_mean: float = 25.0
    z_sd: float = 3.0
    noise_sd: float = 1.0
    n_test: Optional[tuple] = None
    beta0: Optional[tuple] = None
    Theta: Optional[tuple] = None

    def __post_init__(self):
        if self.overlap not in ("full", "partial"):
            raise ValueError("overlap must be 'full' or 'partial'")
        if self.family not in DEFAULT_TRUTH:
            raise ValueError(f"unknown family {self.family!r}")
        unique = self.n_signal - self.n_common if self.overlap == "partial" else 0
        need = self.n_signal + unique * (len(self.n) - 1)
        if any(p < need for p in self.p):
            raise ValueError(f"each view needs at least {need} variables for this scenario")
        if self.overlap == "partial" and not 0 <= self.n_common <= self.n_signal:
            raise ValueError("n_common must lie in [0, n_signal]")
        if self.K < 1 or self.K > self.n_signal:
            raise ValueError("K must lie in [1, n_signal]")

    @classmethod
    def standard(cls, family="zip", overlap="full", dimension="low", **kw) -> "ScenarioSpec":
        return cls(overlap=overlap, p=DIMENSIONS[dimension], family=family, **kw)

    def replace(self, **changes) -> "ScenarioSpec":
        return dataclasses.replace(self, **changes)

    @property
    def true_beta0(self) -> np.ndarray:
        return np.asarray(self.beta0 if self.beta0 is not None else DEFAULT_TRUTH[self.family]["beta0"], float)

    @property
    def true_Theta(self) -> np.ndarray:
        if self.Theta is not None:
            return np.asarray(self.Theta, float)
        Theta = np.asarray(DEFAULT_TRUTH[self.family]["Theta"], float)
        if Theta.shape[0] != self.K:
            raise ValueError(f"default Theta is defined for K=2; pass Theta explicitly for K={self.K}")
        return Theta


@dataclass
class GroundTruth:
    signal: list
    B: list
    Z: list = field(default_factory=list)
    Theta: Optional[np.ndarray] = None
    beta0: Optional[np.ndarray] = None
    tau: Optional[float] = None
    family: str = "zip"

    def union_signal(self, d: int) -> np.ndarray:
        return np.unique(np.concatenate(self.signal[d]))

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "signal": [[np.asarray(ix).tolist() for ix in row] for row in self.signal],
            "B": [[b.tolist() for b in row] for row in self.B],
            "Theta": None if self.Theta is None else self.Theta.tolist(),
            "beta0": None if self.beta0 is None else self.beta0.tolist(),
            "tau": self.tau,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "GroundTruth":
        return cls(
            signal=[[np.asarray(ix, dtype=int) for ix in row] for row in obj["signal"]],
            B=[[np.asarray(b, float) for b in row] for row in obj["B"]],
            Theta=None if obj.get("Theta") is None else np.asarray(obj["Theta"], float),
            beta0=None if obj.get("beta0") is None else np.asarray(obj["beta0"], float),
            tau=obj.get("tau"),
            family=obj.get("family", "zip"),
        )


def _streams(seed: int):
    return [np.random.Generator(np.random.PCG64(ss)) for ss in np.random.SeedSequence(seed).spawn(3)]


def signal_indices(spec: ScenarioSpec) -> list:
    """Signal rows per (view, subgroup) at fixed positions.

    Full overlap: rows ``0..n_signal-1`` for every subgroup. Partial overlap:
    rows ``0..n_common-1`` are shared and each subgroup then gets its own
    consecutive block of ``n_signal - n_common`` rows.
    """
    S = len(spec.n)
    out = []
    for _ in spec.p:
        row = []
        for s in range(S):
            if spec.overlap == "full":
                row.append(np.arange(spec.n_signal))
            else:
                u = spec.n_signal - spec.n_common
                start = spec.n_common + s * u
                row.append(np.concatenate([np.arange(spec.n_common), np.arange(start, start + u)]))
        out.append(row)
    return out


def orthonormalize(M: np.ndarray) -> np.ndarray:
    """Reduced QR factor with the first nonzero entry of each column positive."""
    Q, _ = np.linalg.qr(M)
    for k in range(Q.shape[1]):
        nz = np.flatnonzero(Q[:, k])
        if nz.size and Q[nz[0], k] < 0:
            Q[:, k] = -Q[:, k]
    return Q


def generate_loadings(spec: ScenarioSpec, rng: Optional[np.random.Generator] = None):
    """Loadings ``B[d][s]`` (orthonormal columns) and the matching ground truth."""
    rng = rng or _streams(spec.seed)[0]
    signal = signal_indices(spec)
    B = []
    for d, p in enumerate(spec.p):
        row = []
        for s in range(len(spec.n)):
            idx = signal[d][s]
            draws = rng.uniform(0.5, 1.0, size=(idx.size, spec.K))
            signs = np.where(rng.random(size=(idx.size, spec.K)) < 0.5, -1.0, 1.0)
            b = np.zeros((p, spec.K))
            # QR on the signal rows alone keeps the remaining rows exactly zero.
            b[idx] = orthonormalize(draws * signs)
            row.append(b)
        B.append(row)
    truth = GroundTruth(signal=signal, B=B, family=spec.family, Theta=spec.true_Theta,
                        beta0=spec.true_beta0, tau=spec.tau if spec.family == "zip" else None)
    return B, truth


def generate_views(spec: ScenarioSpec, truth: GroundTruth, rng: Optional[np.random.Generator] = None,
                   n: Optional[tuple] = None):
    """Scores and covariates; returns ``(X[d][s], Z[s])``."""
    rng = rng or _streams(spec.seed)[1]
    n = n or spec.n
    Z = [rng.normal(spec.z_mean, spec.z_sd, size=(n_s, spec.K)) for n_s in n]
    X = [[None] * len(n) for _ in spec.p]
    for s in range(len(n)):
        for d, p in enumerate(spec.p):
            E = rng.normal(0.0, 1.0, size=(n[s], p)) * spec.noise_sd
            X[d][s] = Z[s] @ truth.B[d][s].T + E
    return X, Z


def generate_outcome(spec: ScenarioSpec, truth: GroundTruth, Z: list,
                     rng: Optional[np.random.Generator] = None, noise: bool = True) -> OutcomeData:
    rng = rng or _streams(spec.seed)[1]
    beta0, Theta = truth.beta0, truth.Theta
    if spec.family == "multiclass":
        labels = []
        for Zs in Z:
            W = beta0[None, :] + Zs @ Theta
            if noise:
                W = W + rng.normal(size=W.shape)
            labels.append(np.argmax(W, axis=1))
        return OutcomeData.from_labels(labels, n_classes=Theta.shape[1])
    ys = []
    for Zs in Z:
        mean = np.exp(beta0[0] + standardize_columns(Zs) @ Theta[:, 0])
        y = rng.poisson(mean).astype(float)
        if spec.family == "zip":
            y = y * (rng.random(size=y.shape) >= spec.tau)
        ys.append(y)
    return OutcomeData(spec.family, ys)


def _assemble(spec, truth, X, outcome, n):
    return MultiViewDataset.from_arrays(
        X, outcome,
        view_names=[f"view{d + 1}" for d in range(len(spec.p))],
        subgroup_names=[f"subgroup{s + 1}" for s in range(len(n))],
    )


def generate_dataset(spec: ScenarioSpec):
    """Training data plus ground truth for a scenario."""
    load_rng, train_rng, _ = _streams(spec.seed)
    B, truth = generate_loadings(spec, load_rng)
    X, Z = generate_views(spec, truth, train_rng)
    truth.Z = Z
    outcome = generate_outcome(spec, truth, Z, train_rng)
    return _assemble(spec, truth, X, outcome, spec.n), truth


def generate_test_dataset(spec: ScenarioSpec, truth: GroundTruth) -> MultiViewDataset:
    """Independent draws from the same loadings and coefficients."""
    rng = _streams(spec.seed)[2]
    n = spec.n_test or spec.n
    X, Z = generate_views(spec, truth, rng, n)
    outcome = generate_outcome(spec, truth, Z, rng)
    return _assemble(spec, truth, X, outcome, n)
