"""Variable ranking, subset refits, eBIC and the lambda / K searches."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from joblib import Parallel, delayed
from scipy.special import gammaln, logsumexp

from .core import FitConfig, HipError, MultiViewDataset
from .losses import prediction_loss
from .optimizers import fit

log = logging.getLogger(__name__)

CRITERIA = {"ebic0": 0.0, "ebic0.5": 0.5, "ebic1": 1.0}


@dataclass(frozen=True)
class SearchSpec:
    n_top: tuple
    mode: str = "random"
    num_steps: int = 8
    lambda_range: tuple = (0.0, 2.0)
    criterion: str = "ebic1"
    random_fraction: float = 0.20
    seed: int = 0

    def __post_init__(self):
        low, high = self.lambda_range
        if self.mode not in ("grid", "random"):
            raise ValueError("mode must be 'grid' or 'random'")
        if self.num_steps < 2:
            raise ValueError("num_steps must be at least 2")
        if not (low >= 0 and high > low):
            raise ValueError("lambda_range must satisfy 0 <= low < high")
        if self.criterion not in CRITERIA:
            raise ValueError(f"criterion must be one of {sorted(CRITERIA)}")
        if not 0 < self.random_fraction <= 1:
            raise ValueError("random_fraction must lie in (0, 1]")
        if any(int(n) < 1 for n in self.n_top):
            raise ValueError("n_top entries must be positive")

    def grid_values(self) -> np.ndarray:
        """``num_steps`` points of (low, high]: the low end is excluded."""
        low, high = self.lambda_range
        step = (high - low) / self.num_steps
        return low + step * np.arange(1, self.num_steps + 1)

    def candidates(self) -> list:
        """(lambda_G, lambda_xi) pairs to evaluate, in grid order."""
        vals = self.grid_values()
        pairs = [(float(g), float(x)) for g in vals for x in vals]
        if self.mode == "grid":
            return pairs
        # guard against 0.2 * 25 = 5.000000000000001 rounding up
        size = max(1, math.ceil(self.random_fraction * len(pairs) - 1e-9))
        rng = np.random.Generator(np.random.PCG64(self.seed))
        pick = np.sort(rng.choice(len(pairs), size=size, replace=False))
        return [pairs[i] for i in pick]


@dataclass
class SelectionResult:
    n_top: tuple
    p: tuple
    scores: list          # [d][s] row norms of B, original variable order
    ranked: list          # [d][s] indices by descending norm
    selected: list        # [d][s] first n_top[d] of ranked
    union: list           # [d] sorted indices selected in at least one subgroup

    @property
    def nu(self) -> int:
        return sum(len(u) for u in self.union)

    def to_dict(self, views=None) -> dict:
        out = {
            "n_top": list(self.n_top),
            "nu": self.nu,
            "union": [u.tolist() for u in self.union],
            "selected": [[s.tolist() for s in row] for row in self.selected],
            "ranked": [[r.tolist() for r in row] for row in self.ranked],
            "scores": [[sc.tolist() for sc in row] for row in self.scores],
        }
        if views is not None:
            out["union_names"] = [[v.variables[j] for j in u] for v, u in zip(views, self.union)]
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "SelectionResult":
        arr = lambda rows, dt: [[np.asarray(a, dtype=dt) for a in row] for row in rows]
        scores = arr(obj["scores"], float)
        return cls(tuple(obj["n_top"]), tuple(len(row[0]) for row in scores), scores,
                   arr(obj["ranked"], int), arr(obj["selected"], int),
                   [np.asarray(u, dtype=int) for u in obj["union"]])


def rank_variables(params, n_top) -> SelectionResult:
    """Rank rows of every B^{d,s} by L2 norm and keep the top ``n_top[d]``.

    Ties are broken by ascending variable index.
    """
    D = len(params.G)
    n_top = tuple(int(n) for n in n_top)
    if len(n_top) != D:
        raise ValueError(f"n_top has {len(n_top)} entries for {D} views")
    p = tuple(g.shape[0] for g in params.G)
    for d in range(D):
        if n_top[d] > p[d]:
            raise ValueError(f"n_top[{d}]={n_top[d]} exceeds p={p[d]}")
    scores, ranked, selected, union = [], [], [], []
    for d in range(D):
        sc_row, rk_row, sel_row = [], [], []
        for s in range(len(params.Xi[d])):
            norms = np.linalg.norm(params.B(d, s), axis=1)
            order = np.lexsort((np.arange(p[d]), -norms))
            sc_row.append(norms)
            rk_row.append(order)
            sel_row.append(np.sort(order[:n_top[d]]))
        scores.append(sc_row)
        ranked.append(rk_row)
        selected.append(sel_row)
        union.append(np.unique(np.concatenate(sel_row)))
    return SelectionResult(n_top, p, scores, ranked, selected, union)


def subset_refit(data: MultiViewDataset, config: FitConfig, selection: SelectionResult):
    """Refit on the union-selected columns with the same config and seed.

    Returns ``(params, trace)``; rows of the refit loadings correspond to
    ``selection.union[d]`` (see :func:`expand_loadings`).
    """
    if any(len(u) == 0 for u in selection.union):
        raise ValueError("selection must be nonempty in every view")
    return fit(data.select_columns(selection.union), config)


def expand_loadings(params, selection: SelectionResult) -> list:
    """Refit loadings placed back on the full variable index (zeros elsewhere)."""
    out = []
    for d, cols in enumerate(selection.union):
        row = []
        for s in range(len(params.Xi[d])):
            B = np.zeros((selection.p[d], params.G[d].shape[1]))
            B[cols] = params.B(d, s)
            row.append(B)
        out.append(row)
    return out


def log_model_count(p: int, n_top: int, S: int) -> float:
    """log of sum_{w=n_top}^{S*n_top} C(p, w), accumulated in log space."""
    w = np.arange(n_top, min(S * n_top, p) + 1)
    if w.size == 0:
        return -np.inf
    return float(logsumexp(gammaln(p + 1) - gammaln(w + 1) - gammaln(p - w + 1)))


def ebic_penalty(selection: SelectionResult, S: int) -> float:
    """The model-space term sum_d log(...) multiplied by 2 * delta in eBIC."""
    return sum(log_model_count(p, n, S) for p, n in zip(selection.p, selection.n_top))


def compute_ebic(data: MultiViewDataset, params_subset, selection: SelectionResult, delta: float) -> float:
    loss = prediction_loss(data.outcome, params_subset)
    return 2.0 * loss + sum(np.log(data.n)) * selection.nu + 2.0 * delta * ebic_penalty(selection, data.S)


def ebic_triple(data, params_subset, selection) -> dict:
    return {name: compute_ebic(data, params_subset, selection, delta) for name, delta in CRITERIA.items()}


@dataclass
class Candidate:
    lambda_G: float
    lambda_xi: float
    ebic: Optional[dict] = None
    converged: Optional[bool] = None
    subset_converged: Optional[bool] = None
    error: Optional[str] = None
    seconds: float = 0.0
    params: object = None
    trace: object = None
    selection: Optional[SelectionResult] = None
    subset_params: object = None
    subset_trace: object = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def summary(self) -> dict:
        return {"lambda_G": self.lambda_G, "lambda_xi": self.lambda_xi, "ebic": self.ebic,
                "converged": self.converged, "subset_converged": self.subset_converged,
                "error": self.error}


def evaluate_candidate(data, config: FitConfig, n_top, keep: bool = True) -> Candidate:
    """Full fit, ranking, subset refit and eBIC for one lambda pair."""
    cand = Candidate(config.lambda_G, config.lambda_xi)
    t0 = time.perf_counter()
    try:
        params, trace = fit(data, config)
        selection = rank_variables(params, n_top)
        sub_params, sub_trace = subset_refit(data, config, selection)
        cand.ebic = ebic_triple(data, sub_params, selection)
        cand.converged, cand.subset_converged = trace.converged, sub_trace.converged
        if keep:
            cand.params, cand.trace, cand.selection = params, trace, selection
            cand.subset_params, cand.subset_trace = sub_params, sub_trace
    except (HipError, ValueError, np.linalg.LinAlgError) as exc:
        cand.error = f"{type(exc).__name__}: {exc}"
        log.warning("candidate (%g, %g) failed: %s", config.lambda_G, config.lambda_xi, cand.error)
    cand.seconds = time.perf_counter() - t0
    return cand


def _best(candidates: list, criterion: str) -> Candidate:
    ok = [c for c in candidates if c.ok]
    if not ok:
        raise HipError("every lambda candidate failed")
    return min(ok, key=lambda c: (c.ebic[criterion], c.lambda_G, c.lambda_xi))


def lambda_search(data: MultiViewDataset, config_base: FitConfig, spec: SearchSpec, jobs: int = 1):
    """Evaluate every candidate pair and return ``(best, candidates)``.

    Candidates are independent; ``jobs > 1`` evaluates them in worker
    processes and yields the same result as sequential evaluation. Only the
    winner keeps its fitted parameters.
    """
    pairs = spec.candidates()
    configs = [config_base.replace(lambda_G=g, lambda_xi=x) for g, x in pairs]
    if jobs == 1:
        candidates = [evaluate_candidate(data, c, spec.n_top) for c in configs]
    else:
        candidates = Parallel(n_jobs=jobs)(delayed(evaluate_candidate)(data, c, spec.n_top) for c in configs)
    best = _best(candidates, spec.criterion)
    for c in candidates:
        if c is not best:
            c.params = c.trace = c.subset_params = c.subset_trace = None
    return best, candidates


def _suggest_K(sigma: np.ndarray, threshold: float) -> int:
    if sigma.size == 0 or sigma[0] <= 0:
        raise ValueError("singular values are all zero")
    drops = (sigma[:-1] - sigma[1:]) / sigma[0]
    ok = np.flatnonzero(drops >= threshold)
    return int(ok[-1] + 1) if ok.size else 1


def select_K(data: MultiViewDataset, threshold: float = 0.20, target: str = "concatenated"):
    """Suggest K from a scree of singular values.

    K is the largest k whose drop ``(sigma_k - sigma_{k+1}) / sigma_1`` is at
    least ``threshold`` (1 if none is). ``target='concatenated'`` uses the
    views side by side, stacked over subgroups, and returns ``(K, sigma)``;
    ``'per_view_subgroup'`` returns ``{(d, s): (K, sigma)}``.
    """
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    if target == "concatenated":
        M = np.vstack([np.hstack([data.X[d][s] for d in range(data.D)]) for s in range(data.S)])
        sigma = np.linalg.svd(M, compute_uv=False)
        return _suggest_K(sigma, threshold), sigma
    if target == "per_view_subgroup":
        out = {}
        for d in range(data.D):
            for s in range(data.S):
                sigma = np.linalg.svd(data.X[d][s], compute_uv=False)
                out[(d, s)] = (_suggest_K(sigma, threshold), sigma)
        return out
    raise ValueError("target must be 'concatenated' or 'per_view_subgroup'")
