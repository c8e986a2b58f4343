"""Objective terms and their closed-form gradients.

The objective is the sum over subgroups of an outcome (prediction) loss, the
squared reconstruction error of every view block, and the two-level row-norm
penalty on the common (G) and subgroup (Xi) loading factors.
"""

from __future__ import annotations

import threading
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

EXP_CLIP = 700.0
# Smoothing inside the row-norm penalty gradient.
PENALTY_EPS = 1e-8

_clip_lock = threading.Lock()
_clip_count = 0


def clipped_exp(x):
    """``exp`` with the argument clipped to [-700, 700]; clips are counted."""
    global _clip_count
    x = np.asarray(x, dtype=float)
    over = np.abs(x) > EXP_CLIP
    if over.any():
        with _clip_lock:
            _clip_count += int(over.sum())
        x = np.clip(x, -EXP_CLIP, EXP_CLIP)
    return np.exp(x)


def exp_clip_count() -> int:
    return _clip_count


def logit(p: float) -> float:
    return float(np.log(p) - np.log1p(-p))


@dataclass
class ObjectiveBreakdown:
    prediction_term: float
    association_term: float
    penalty_G: float
    penalty_Xi: float

    @property
    def total(self) -> float:
        return self.prediction_term + self.association_term + self.penalty_G + self.penalty_Xi

    def to_dict(self) -> dict:
        out = asdict(self)
        out["total"] = self.total
        return out


def association_loss(X, Z, B) -> float:
    X, Z, B = np.asarray(X, float), np.asarray(Z, float), np.asarray(B, float)
    if X.shape != (Z.shape[0], B.shape[0]) or Z.shape[1] != B.shape[1]:
        raise ValueError(f"shape mismatch: X {X.shape}, Z {Z.shape}, B {B.shape}")
    R = X - Z @ B.T
    return float(np.sum(R * R))


def row_norms(M: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(M * M, axis=1))


def penalty_value(G, Xi, lambda_G, lambda_xi, gamma):
    pen_G = lambda_G * sum(g_d * row_norms(G_d).sum() for G_d, g_d in zip(G, gamma))
    pen_Xi = lambda_xi * sum(g_d * sum(row_norms(x).sum() for x in Xi_d) for Xi_d, g_d in zip(Xi, gamma))
    return float(pen_G), float(pen_Xi)


def penalty_grad(M: np.ndarray, weight: float) -> np.ndarray:
    """Gradient of ``weight * sum_l sqrt(||m_l||^2 + eps)``."""
    if weight == 0:
        return np.zeros_like(M)
    return weight * M / np.sqrt(np.sum(M * M, axis=1, keepdims=True) + PENALTY_EPS)


def linear_predictor(Z, Theta, beta0):
    return np.asarray(beta0)[None, :] + Z @ Theta


# Outcome losses, expressed on the linear predictor W = 1 beta0 + Z Theta so the
# same code path yields the loss and dLoss/dW.

def multiclass_terms(Y, W):
    lse = logsumexp(W, axis=1)
    loss = float(np.sum(lse) - np.sum(Y * W))
    A = np.exp(W - lse[:, None])
    return loss, A - Y


def poisson_terms(y, t, eta, log_fact=None):
    if log_fact is None:
        log_fact = gammaln(y + 1.0)
    mu = t * clipped_exp(eta)
    loss = float(np.sum(-y * (np.log(t) + eta) + mu + log_fact))
    return loss, mu - y


def zip_terms(y, t, eta, tau, log_fact=None):
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    if log_fact is None:
        log_fact = gammaln(y + 1.0)
    return _zip_kernel(y, t, tau, float(np.sum(log_fact)))(eta)


def _zip_kernel(y, t, tau, log_fact_sum):
    c = logit(tau)
    zero = y == 0
    log_t = np.log(t)
    const = log_fact_sum + y.size * np.logaddexp(0.0, c) - float(y @ log_t)

    def terms(eta):
        mu = t * clipped_exp(eta)
        lz = np.logaddexp(c, -mu)
        # y = 0 rows contribute -log(e^c + e^-mu), the others the Poisson terms
        loss = float(np.where(zero, -lz, mu).sum() - y @ eta + const)
        grad = np.where(zero, mu * np.exp(-mu - lz), mu - y)
        return loss, grad

    return terms


def _poisson_kernel(y, t, log_fact_sum):
    const = log_fact_sum - float(y @ np.log(t))

    def terms(eta):
        mu = t * clipped_exp(eta)
        return float(mu.sum() - y @ eta + const), mu - y

    return terms


def multiclass_loss(Y, Z, Theta, beta0) -> float:
    return multiclass_terms(np.asarray(Y, float), linear_predictor(Z, Theta, beta0))[0]


def poisson_loss(y, t, Z, Theta, beta0, log_fact=None) -> float:
    eta = linear_predictor(Z, Theta, beta0)[:, 0]
    return poisson_terms(np.asarray(y, float), np.asarray(t, float), eta, log_fact)[0]


def zip_loss(y, t, Z, Theta, beta0, tau, log_fact=None) -> float:
    eta = linear_predictor(Z, Theta, beta0)[:, 0]
    return zip_terms(np.asarray(y, float), np.asarray(t, float), eta, tau, log_fact)[0]


def outcome_kernel(outcome, s, tau=None):
    """Callable ``W -> (loss, dLoss/dW)`` for subgroup ``s`` with constants precomputed."""
    family = outcome.family
    if family == "multiclass":
        Y = outcome.values[s]
        return lambda W: multiclass_terms(Y, W)
    y, t = outcome.values[s], outcome.offsets[s]
    lf = float(outcome.log_factorials[s].sum())
    if family == "poisson":
        kern = _poisson_kernel(y, t, lf)
    else:
        if tau is None or not 0.0 < tau < 1.0:
            raise ValueError(f"tau must lie in (0, 1), got {tau}")
        kern = _zip_kernel(y, t, tau, lf)

    def terms(W):
        loss, g = kern(W[:, 0])
        return loss, g[:, None]

    return terms


def prediction_terms(outcome, s, W, tau=None):
    """Loss and dLoss/dW for subgroup ``s`` given its linear predictor ``W``."""
    return outcome_kernel(outcome, s, tau)(W)


def prediction_loss(outcome, params) -> float:
    total = 0.0
    for s, Z in enumerate(params.Z):
        total += prediction_terms(outcome, s, linear_predictor(Z, params.Theta, params.beta0), params.tau)[0]
    return total


def total_objective(data, params, config) -> ObjectiveBreakdown:
    if data.outcome.family != config.family:
        raise ValueError(f"data family {data.outcome.family!r} does not match config {config.family!r}")
    gamma = config.gamma_for(data.D)
    assoc = sum(association_loss(data.X[d][s], params.Z[s], params.B(d, s))
                for d in range(data.D) for s in range(data.S))
    pen_G, pen_Xi = penalty_value(params.G, params.Xi, config.lambda_G, config.lambda_xi, gamma)
    return ObjectiveBreakdown(prediction_loss(data.outcome, params), assoc, pen_G, pen_Xi)


def association_grad_B(X, Z, B):
    """d/dB of ||X - Z B^T||_F^2."""
    return -2.0 * (X - Z @ B.T).T @ Z


def gradients(data, params, config, block):
    """Gradient of the smooth part of the objective for one parameter block.

    ``block`` is ``("Z", s)``, ``("G", d)``, ``("Xi", d, s)`` or
    ``"ThetaBeta"``; the last returns a ``(dTheta, dbeta0)`` pair.
    """
    gamma = config.gamma_for(data.D)
    kind = block if isinstance(block, str) else block[0]
    if kind == "Z":
        s = block[1]
        Z = params.Z[s]
        _, dW = prediction_terms(data.outcome, s, linear_predictor(Z, params.Theta, params.beta0), params.tau)
        grad = dW @ params.Theta.T
        for d in range(data.D):
            B = params.B(d, s)
            grad -= 2.0 * (data.X[d][s] - Z @ B.T) @ B
        return grad
    if kind == "G":
        d = block[1]
        grad = sum(association_grad_B(data.X[d][s], params.Z[s], params.B(d, s)) * params.Xi[d][s]
                   for s in range(data.S))
        return grad + penalty_grad(params.G[d], config.lambda_G * gamma[d])
    if kind == "Xi":
        d, s = block[1], block[2]
        grad = association_grad_B(data.X[d][s], params.Z[s], params.B(d, s)) * params.G[d]
        return grad + penalty_grad(params.Xi[d][s], config.lambda_xi * gamma[d])
    if kind == "ThetaBeta":
        dTheta = np.zeros_like(params.Theta)
        dbeta = np.zeros_like(params.beta0)
        for s, Z in enumerate(params.Z):
            _, dW = prediction_terms(data.outcome, s, linear_predictor(Z, params.Theta, params.beta0), params.tau)
            dTheta += Z.T @ dW
            dbeta += dW.sum(axis=0)
        return dTheta, dbeta
    raise ValueError(f"unknown block {block!r}")
