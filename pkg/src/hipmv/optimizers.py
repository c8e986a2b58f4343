"""Alternating minimization and its inner solvers.

One outer iteration updates, in order: the scores Z^s (accelerated proximal
gradient with backtracking, then column standardization), the common loadings
G^d and subgroup loadings Xi^{d,s} (Adagrad), the outcome coefficients
(proximal gradient with backtracking) and, for the zero-inflated family, the
zero-state probability.

The association term is evaluated through Gram matrices (X^T Z, Z^T Z, X B,
B^T B) precomputed once per block update, so inner iterations never touch
the full ``n x p`` matrices.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import (
    FitConfig,
    HipParams,
    MultiViewDataset,
    NumericalError,
    SolverSettings,
    clamp_tau,
    initialize_params,
    standardize_columns,
)
from .losses import PENALTY_EPS, ObjectiveBreakdown, outcome_kernel, total_objective

log = logging.getLogger(__name__)


@dataclass
class InnerResult:
    x: np.ndarray
    value: float
    n_iter: int
    converged: bool
    history: list = field(default_factory=list)
    # (iteration, L tried, sufficient decrease met) for every backtracking trial.
    steps: list = field(default_factory=list)


def _check(value, what):
    if not np.isfinite(value):
        raise NumericalError(f"non-finite objective in {what}")


def _rel_change(old, new):
    return abs(old - new) / max(abs(old), 1e-300)


def fista(fun: Callable, x0: np.ndarray, settings: SolverSettings, accelerate: bool = True,
          what: str = "fista") -> InnerResult:
    """Minimize a smooth function by (accelerated) gradient steps with backtracking.

    ``fun(x)`` returns ``(value, gradient)``. The Lipschitz estimate starts at
    ``settings.L0`` and is divided by ``settings.eta`` until the quadratic
    upper bound holds at the trial point. With ``accelerate`` the momentum is
    reset whenever a step would raise the objective, so accepted iterates
    never increase it.
    """
    x = np.array(x0, dtype=float)
    fx, gx = fun(x)
    _check(fx, what)
    y, fy, gy = x, fx, gx
    extrapolated = False
    t = 1.0
    L = settings.L0
    res = InnerResult(x, fx, 0, False, [fx])
    for k in range(1, settings.max_iter + 1):
        gnorm2 = float(np.sum(gy * gy))
        if gnorm2 == 0.0:
            res.converged = True
            break
        while True:
            z = y - gy / L
            fz, gz = fun(z)
            ok = bool(np.isfinite(fz) and fz <= fy - 0.5 * gnorm2 / L)
            res.steps.append((k, L, ok))
            if ok:
                break
            L /= settings.eta
            if L > 1e300:
                raise NumericalError(f"backtracking failed in {what}")
        res.n_iter = k
        if extrapolated and fz > fx:
            # momentum overshot: restart from the last accepted point
            t = 1.0
            y, fy, gy = x, fx, gx
            extrapolated = False
            continue
        rel = _rel_change(fx, fz)
        x_prev, x, fx, gx = x, z, fz, gz
        res.history.append(fx)
        if rel < settings.tol:
            res.converged = True
            break
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        beta = (t - 1.0) / t_new if accelerate else 0.0
        t = t_new
        if beta > 0.0:
            y = x + beta * (x - x_prev)
            fy, gy = fun(y)
            _check(fy, what)
            extrapolated = True
        else:
            y, fy, gy = x, fx, gx
            extrapolated = False
    res.x, res.value = x, fx
    return res


def adagrad(fun: Callable, x0: np.ndarray, settings: SolverSettings, what: str = "adagrad") -> InnerResult:
    """Adagrad with a monotone safeguard.

    ``fun(x)`` returns ``(value, gradient)``; the gradient may belong to a
    smoothed surrogate while ``value`` is the exact objective used for the
    relative-change stopping rule. A step that raises ``value`` is retried
    with the rate scaled by ``settings.eta``.
    """
    x = np.array(x0, dtype=float)
    fx, g = fun(x)
    _check(fx, what)
    acc = np.zeros_like(x)
    lr = settings.adagrad_lr
    res = InnerResult(x, fx, 0, False, [fx])
    for k in range(1, settings.max_iter + 1):
        acc += g * g
        direction = g / (np.sqrt(acc) + settings.adagrad_floor)
        while True:
            x_new = x - lr * direction
            f_new, g_new = fun(x_new)
            ok = bool(np.isfinite(f_new) and f_new <= fx)
            res.steps.append((k, lr, ok))
            if ok:
                break
            lr *= settings.eta
            if lr < 1e-12:
                x_new, f_new, g_new = x, fx, g
                break
        res.n_iter = k
        rel = _rel_change(fx, f_new)
        x, fx, g = x_new, f_new, g_new
        res.history.append(fx)
        if rel < settings.tol:
            res.converged = True
            break
    res.x, res.value = x, fx
    return res


def _z_problem(data, params, s, prediction_weight):
    XB = sum(data.X[d][s] @ params.B(d, s) for d in range(data.D))
    BtB = sum(params.B(d, s).T @ params.B(d, s) for d in range(data.D))
    const = sum(float(np.sum(data.X[d][s] ** 2)) for d in range(data.D))
    Theta, beta0 = params.Theta, params.beta0
    kernel = outcome_kernel(data.outcome, s, params.tau) if prediction_weight else None

    def fun(Z):
        ZBB = Z @ BtB
        val = const - 2.0 * np.vdot(Z, XB) + np.vdot(ZBB, Z)
        grad = 2.0 * (ZBB - XB)
        if prediction_weight:
            loss, dW = kernel(beta0[None, :] + Z @ Theta)
            val += prediction_weight * loss
            grad += prediction_weight * (dW @ Theta.T)
        return float(val), grad

    return fun


def update_Z(data: MultiViewDataset, params: HipParams, config: FitConfig,
             settings: Optional[SolverSettings] = None, prediction_weight: float = 1.0,
             standardize: bool = True):
    """New scores for every subgroup, column-standardized after the solve.

    ``prediction_weight`` scales the outcome loss; 0 leaves a pure
    least-squares problem.
    """
    settings = settings or config.solver
    Z_new, infos = [], []
    for s in range(data.S):
        res = fista(_z_problem(data, params, s, prediction_weight), params.Z[s], settings,
                    accelerate=True, what=f"Z update (subgroup {s + 1})")
        Z_new.append(standardize_columns(res.x) if standardize else res.x)
        infos.append(res)
    return Z_new, infos


def _gram(data, params):
    """Per subgroup Z^T Z and per block X^T Z for the loading updates."""
    M = [Z.T @ Z for Z in params.Z]
    C = [[data.X[d][s].T @ params.Z[s] for s in range(data.S)] for d in range(data.D)]
    sq = [[float(np.sum(data.X[d][s] ** 2)) for s in range(data.S)] for d in range(data.D)]
    return M, C, sq


def _block_assoc(B, C, M, sq):
    BM = B @ M
    return sq - 2.0 * np.vdot(C, B) + np.vdot(BM, B), 2.0 * (BM - C)


def _penalty(M, weight):
    """Exact row-norm penalty and its smoothed gradient."""
    if weight == 0:
        return 0.0, 0.0
    r2 = np.einsum("ij,ij->i", M, M)
    return weight * np.sqrt(r2).sum(), (weight * M) / np.sqrt(r2 + PENALTY_EPS)[:, None]


def _G_problem(Xi_d, C_d, M, sq_d, weight):
    def fun(G):
        val, grad = 0.0, 0.0
        for Xi, C, Ms, sq in zip(Xi_d, C_d, M, sq_d):
            v, gB = _block_assoc(G * Xi, C, Ms, sq)
            val += v
            grad = grad + gB * Xi
        pv, pg = _penalty(G, weight)
        return val + pv, grad + pg

    return fun


def _Xi_problem(G, C, M, sq, weight):
    def fun(Xi):
        val, gB = _block_assoc(G * Xi, C, M, sq)
        pv, pg = _penalty(Xi, weight)
        return val + pv, gB * G + pg

    return fun


def update_G(data: MultiViewDataset, params: HipParams, config: FitConfig,
             settings: Optional[SolverSettings] = None, gram=None):
    settings = settings or config.solver
    gamma = config.gamma_for(data.D)
    M, C, sq = gram or _gram(data, params)
    G_new, infos = [], []
    for d in range(data.D):
        fun = _G_problem(params.Xi[d], C[d], M, sq[d], config.lambda_G * gamma[d])
        res = adagrad(fun, params.G[d], settings, what=f"G update (view {d + 1})")
        G_new.append(res.x)
        infos.append(res)
    return G_new, infos


def update_Xi(data: MultiViewDataset, params: HipParams, config: FitConfig,
              settings: Optional[SolverSettings] = None, gram=None):
    settings = settings or config.solver
    gamma = config.gamma_for(data.D)
    M, C, sq = gram or _gram(data, params)
    Xi_new, infos = [], []
    for d in range(data.D):
        row = []
        for s in range(data.S):
            fun = _Xi_problem(params.G[d], C[d][s], M[s], sq[d][s], config.lambda_xi * gamma[d])
            res = adagrad(fun, params.Xi[d][s], settings, what=f"Xi update (view {d + 1}, subgroup {s + 1})")
            row.append(res.x)
            infos.append(res)
        Xi_new.append(row)
    return Xi_new, infos


def _theta_problem(data, params):
    Z1 = [np.hstack([np.ones((Z.shape[0], 1)), Z]) for Z in params.Z]
    kernels = [outcome_kernel(data.outcome, s, params.tau) for s in range(data.S)]

    def fun(P):
        val, grad = 0.0, np.zeros_like(P)
        for kernel, Zs in zip(kernels, Z1):
            loss, dW = kernel(Zs @ P)
            val += loss
            grad += Zs.T @ dW
        return val, grad

    return fun


def update_theta(data: MultiViewDataset, params: HipParams, config: FitConfig,
                 settings: Optional[SolverSettings] = None):
    """Outcome coefficients and intercept; returns ``(Theta, beta0, info)``."""
    settings = settings or config.solver
    P0 = np.vstack([params.beta0[None, :], params.Theta])
    res = fista(_theta_problem(data, params), P0, settings, accelerate=False, what="Theta/beta0 update")
    return res.x[1:].copy(), res.x[0].copy(), res


def update_tau(data: MultiViewDataset, params: HipParams) -> float:
    """Excess-zero estimate of the zero-state probability, clamped.

    The observed zero fraction minus the average Poisson zero probability
    exp(-exp(beta0 + Z_i Theta)); offsets are not included.
    """
    zeros, expected = 0.0, 0.0
    for s, Z in enumerate(params.Z):
        y = data.outcome.values[s]
        eta = params.beta0[0] + Z @ params.Theta[:, 0]
        zeros += float(np.sum(y == 0))
        expected += float(np.sum(np.exp(-np.exp(np.minimum(eta, 700.0)))))
    return clamp_tau((zeros - expected) / data.N)


@dataclass
class TraceEntry:
    iteration: int
    objective: ObjectiveBreakdown
    tau: Optional[float]
    inner_iterations: dict
    wall_time: float


@dataclass
class FitTrace:
    initial: Optional[ObjectiveBreakdown] = None
    entries: list = field(default_factory=list)
    converged: bool = False
    reason: str = ""
    warnings: list = field(default_factory=list)

    @property
    def totals(self) -> list:
        return [e.objective.total for e in self.entries]

    def to_dict(self, timings: bool = False) -> dict:
        rows = []
        for e in self.entries:
            row = {"iteration": e.iteration, "objective": e.objective.to_dict(), "tau": e.tau,
                   "inner_iterations": e.inner_iterations}
            if timings:
                row["wall_time"] = e.wall_time
            rows.append(row)
        return {"initial": self.initial.to_dict() if self.initial else None, "entries": rows,
                "converged": self.converged, "reason": self.reason, "warnings": list(self.warnings)}


def fit(data: MultiViewDataset, config: FitConfig, Z0: Optional[list] = None,
        callback: Optional[Callable] = None):
    """Run the alternating minimization to convergence or ``config.iter_max``.

    Returns ``(params, trace)``. ``callback(iteration, params, entry)`` is
    invoked after every outer iteration.
    """
    if data.outcome is None or data.outcome.family != config.family:
        raise ValueError("dataset outcome family must match config.family")
    settings = config.solver
    params = initialize_params(data, config, Z0)
    trace = FitTrace(initial=total_objective(data, params, config))
    prev = trace.initial.total
    _check(prev, "initial objective")
    capped = set()
    for it in range(1, config.iter_max + 1):
        t0 = time.perf_counter()
        params.Z, z_info = update_Z(data, params, config, settings)
        gram = _gram(data, params)
        params.G, g_info = update_G(data, params, config, settings, gram)
        params.Xi, xi_info = update_Xi(data, params, config, settings, gram)
        params.Theta, params.beta0, th_info = update_theta(data, params, config, settings)
        if config.family == "zip":
            params.tau = update_tau(data, params)
        obj = total_objective(data, params, config)
        _check(obj.total, f"outer iteration {it}")
        inner = {"Z": [r.n_iter for r in z_info], "G": [r.n_iter for r in g_info],
                 "Xi": [r.n_iter for r in xi_info], "Theta": th_info.n_iter}
        for name, infos in (("Z", z_info), ("G", g_info), ("Xi", xi_info), ("Theta", [th_info])):
            if any(not r.converged for r in infos) and name not in capped:
                capped.add(name)
                trace.warnings.append(f"{name} inner solver reached its iteration cap (first at iteration {it})")
        entry = TraceEntry(it, obj, params.tau, inner, time.perf_counter() - t0)
        trace.entries.append(entry)
        if callback is not None:
            callback(it, params, entry)
        rel = _rel_change(prev, obj.total)
        prev = obj.total
        if rel < config.epsilon_conv:
            trace.converged, trace.reason = True, "converged"
            break
    else:
        trace.reason = "iter_max"
        trace.warnings.append(f"no convergence within {config.iter_max} iterations")
        log.warning("fit stopped at iter_max=%d without convergence", config.iter_max)
    return params, trace
