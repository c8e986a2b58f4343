"""Test-time scores, outcome predictions and evaluation metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, gammaln, xlogy

from .losses import clipped_exp, logit

COND_MAX = 1e12
RIDGE = 1e-8


def predict_scores(X_test: list, B: list):
    """Least-squares scores from concatenated views.

    ``X_test[d][s]`` and ``B[d][s]`` as in the fit. Returns ``(Z, ridged)``
    where ``ridged[s]`` flags subgroups whose ``B_cat^T B_cat`` needed the
    ridge ``1e-8 * trace / K``.
    """
    D, S = len(X_test), len(X_test[0])
    Z, ridged = [], []
    for s in range(S):
        X_cat = np.hstack([X_test[d][s] for d in range(D)])
        B_cat = np.vstack([B[d][s] for d in range(D)])
        if not np.any(B_cat):
            raise ValueError(f"loadings for subgroup {s + 1} are all zero")
        BtB = B_cat.T @ B_cat
        flag = bool(np.linalg.cond(BtB) > COND_MAX)
        if flag:
            K = BtB.shape[0]
            BtB = BtB + RIDGE * np.trace(BtB) / K * np.eye(K)
        Z.append(np.linalg.solve(BtB, B_cat.T @ X_cat.T).T)
        ridged.append(flag)
    return Z, ridged


def predict_outcome(Z_pred: np.ndarray, Theta, beta0, family: str, tau=None, t=None) -> np.ndarray:
    """Class labels (argmax, lowest index on ties) or expected counts."""
    W = np.asarray(beta0)[None, :] + Z_pred @ np.asarray(Theta)
    if family == "multiclass":
        return np.argmax(W, axis=1)
    t = np.ones(W.shape[0]) if t is None else np.asarray(t, float)
    mean = t * clipped_exp(W[:, 0])
    if family == "poisson":
        return mean
    if family == "zip":
        return (1.0 - tau) * mean
    raise ValueError(f"unknown family {family!r}")


def classification_accuracy(y_true, y_pred) -> float:
    y_true, y_pred = np.asarray(y_true), np.asarray(y_pred)
    if y_true.size == 0:
        raise ValueError("empty input")
    if y_true.shape != y_pred.shape:
        raise ValueError("y_true and y_pred must have equal length")
    return float(np.mean(y_true == y_pred))


def poisson_nll(y, mean) -> float:
    y, mean = np.asarray(y, float), np.asarray(mean, float)
    return float(np.sum(mean - xlogy(y, mean) + gammaln(y + 1.0)))


def zip_nll(y, mean, tau) -> float:
    """Negative log-likelihood of a ZIP with Poisson-component means ``mean``."""
    y, mean = np.asarray(y, float), np.asarray(mean, float)
    zero = y == 0
    ll_zero = np.log(tau + (1.0 - tau) * np.exp(-mean[zero]))
    ll_pos = np.log1p(-tau) - mean[~zero] + xlogy(y[~zero], mean[~zero]) - gammaln(y[~zero] + 1.0)
    return float(-(ll_zero.sum() + ll_pos.sum()))


def saturated_nll(y) -> float:
    """Counts matched exactly; zeros get likelihood one under either family."""
    return poisson_nll(y, y)


def null_fit(y, t, family: str):
    """Intercept-only fit (plus zero-state probability for ZIP).

    Returns ``(mean, tau)`` with ``mean`` the Poisson-component mean per
    observation.
    """
    y, t = np.asarray(y, float), np.asarray(t, float)
    if family == "poisson":
        return t * y.sum() / t.sum(), None
    lt = np.log(t)
    zero = y == 0

    def fun(v):
        b, c = v
        mu = t * np.exp(b)
        lz = np.logaddexp(c, -mu[zero])
        val = (-lz.sum() - np.sum(y[~zero] * (lt[~zero] + b) - mu[~zero]) + y.size * np.logaddexp(0.0, c))
        d_eta = mu - y
        d_eta[zero] = mu[zero] * np.exp(-mu[zero] - lz)
        dc = -np.sum(expit(c + mu[zero])) + y.size * expit(c)
        return val, np.array([d_eta.sum(), dc])

    b0 = np.log(max(y.sum(), 0.5) / t.sum())
    c0 = logit(float(np.clip(zero.mean(), 0.01, 0.99)))
    bound = logit(1e-10)
    res = minimize(fun, [b0, c0], jac=True, method="L-BFGS-B",
                   bounds=[(None, None), (bound, -bound)], options={"ftol": 1e-15, "gtol": 1e-10})
    b, c = res.x
    return t * np.exp(b), float(expit(c))


def deviance_explained(y, mean, family: str, tau=None, t=None) -> float:
    """Fraction of deviance explained relative to the intercept-only model.

    ``mean`` holds the fitted Poisson-component means (offset included) and
    ``tau`` the zero-state probability for ZIP. Returns ``nan`` when the null
    deviance is zero.
    """
    y = np.asarray(y, float)
    t = np.ones_like(y) if t is None else np.asarray(t, float)
    sat = saturated_nll(y)
    null_mean, null_tau = null_fit(y, t, family)
    if family == "poisson":
        d_null = 2.0 * (poisson_nll(y, null_mean) - sat)
        d_model = 2.0 * (poisson_nll(y, mean) - sat)
    elif family == "zip":
        d_null = 2.0 * (zip_nll(y, null_mean, null_tau) - sat)
        d_model = 2.0 * (zip_nll(y, mean, tau) - sat)
    else:
        raise ValueError("deviance is defined for the count families only")
    if d_null <= 0:
        return float("nan")
    return (d_null - d_model) / d_null


@dataclass
class SelectionMetrics:
    tpr: float
    fpr: float
    f1: float
    undefined: tuple = ()


def selection_metrics(true_signal, selected, p: int) -> SelectionMetrics:
    truth = set(int(i) for i in true_signal)
    chosen = set(int(i) for i in selected)
    if not truth.union(chosen) <= set(range(p)):
        raise ValueError("indices must lie in [0, p)")
    tp = len(truth & chosen)
    fp = len(chosen - truth)
    fn = len(truth - chosen)
    tn = p - tp - fp - fn
    undefined = []

    def ratio(num, den, name):
        if den == 0:
            undefined.append(name)
            return 0.0
        return num / den

    tpr = ratio(tp, tp + fn, "tpr")
    fpr = ratio(fp, tn + fp, "fpr")
    f1 = ratio(tp, tp + 0.5 * (fp + fn), "f1")
    return SelectionMetrics(tpr, fpr, f1, tuple(undefined))
