"""Poisson and zero-inflated NB2 log-likelihoods with analytic derivatives.

Parameter layout for the ZINB is ``theta = [beta (p), log_alpha, gamma (q)]``
with count predictor ``eta = X @ beta``, dispersion ``alpha = exp(log_alpha)``
and inflation predictor ``zeta = Z @ gamma``.  Per-row derivatives are taken
with respect to ``(eta, log_alpha, zeta)`` and chained through the design
matrices, which keeps the Hessian assembly a handful of weighted products.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import digamma, gammaln, polygamma


class NumericalError(ArithmeticError):
    """Non-finite likelihood, singular information or failed convergence."""


def log_logistic(x):
    """``log(1 / (1 + exp(-x)))`` without overflow."""
    return -np.logaddexp(0.0, -x)


def poisson_logpmf(y, mu):
    y = np.asarray(y, dtype=float)
    return y * np.log(mu) - mu - gammaln(y + 1.0)


def nb2_logpmf(y, mu, alpha):
    """NB2 log mass, variance ``mu + alpha * mu**2``."""
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    r = 1.0 / alpha
    am = alpha * mu
    return (gammaln(y + r) - gammaln(r) - gammaln(y + 1.0)
            - r * np.log1p(am) + y * (np.log(am) - np.log1p(am)))


# --------------------------------------------------------------------------
# Poisson


def poisson_loglik(beta, X, y) -> float:
    eta = X @ beta
    return float(np.sum(y * eta - np.exp(eta) - gammaln(y + 1.0)))


def poisson_derivs(beta, X, y):
    """Return ``(loglik, gradient, hessian, per-row scores)``."""
    eta = X @ beta
    mu = np.exp(eta)
    ll = float(np.sum(y * eta - mu - gammaln(y + 1.0)))
    resid = y - mu
    scores = X * resid[:, None]
    grad = X.T @ resid
    hess = -(X.T * mu) @ X
    return ll, grad, hess, scores


# --------------------------------------------------------------------------
# ZINB


@dataclass
class RowTerms:
    """Per-row log-likelihood and its derivatives in (eta, log_alpha, zeta)."""

    ll: np.ndarray
    d: np.ndarray            # (n, 3)
    h: np.ndarray | None     # (n, 3, 3) symmetric, or None


def split_theta(theta, p: int, q: int):
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (p + 1 + q,):
        raise ValueError(f"theta has shape {theta.shape}, expected ({p + 1 + q},)")
    return theta[:p], theta[p], theta[p + 1:]


def _nb_derivs(y, eta, log_alpha):
    """Log mass of NB2 and its first/second derivatives in (eta, log_alpha)."""
    alpha = np.exp(log_alpha)
    r = 1.0 / alpha
    mu = np.exp(eta)
    am = alpha * mu
    l1p = np.log1p(am)
    ell = (gammaln(y + r) - gammaln(r) - gammaln(y + 1.0)
           - r * l1p + y * (np.log(alpha) + eta - l1p))

    den = 1.0 + am
    e_eta = (y - mu) / den
    e_eta_eta = -mu * (1.0 + alpha * y) / den**2
    e_eta_a = -(y - mu) * am / den**2

    g = digamma(y + r) - digamma(r) - l1p + alpha * (mu - y) / den
    gp = (polygamma(1, y + r) - polygamma(1, r)
          + mu / (r * (r + mu)) - (mu - y) / (r + mu) ** 2)
    e_a = -r * g
    e_a_a = r * g + r * r * gp
    return ell, e_eta, e_a, e_eta_eta, e_eta_a, e_a_a


def zinb_row_terms(theta, X, Z, y, hessian: bool = True) -> RowTerms:
    p, q = X.shape[1], Z.shape[1]
    beta, log_alpha, gamma = split_theta(theta, p, q)
    y = np.asarray(y, dtype=float)
    eta = X @ beta
    zeta = Z @ gamma

    ell, e_eta, e_a, e_ee, e_ea, e_aa = _nb_derivs(y, eta, log_alpha)
    l_pi = log_logistic(zeta)
    l_1mpi = log_logistic(-zeta)
    pi = np.exp(l_pi)

    zero = y == 0
    n = y.shape[0]
    ll = np.empty(n)
    d = np.empty((n, 3))

    # y > 0: log(1 - pi) + log f
    pos = ~zero
    ll[pos] = l_1mpi[pos] + ell[pos]
    d[pos, 0] = e_eta[pos]
    d[pos, 1] = e_a[pos]
    d[pos, 2] = -pi[pos]

    # y == 0: log(pi + (1 - pi) f(0)); q0 = P(count-process zero | y = 0)
    a1 = l_1mpi[zero] + ell[zero]
    lp0 = np.logaddexp(l_pi[zero], a1)
    q0 = np.exp(a1 - lp0)
    ll[zero] = lp0
    d[zero, 0] = q0 * e_eta[zero]
    d[zero, 1] = q0 * e_a[zero]
    d[zero, 2] = (1.0 - q0) - pi[zero]

    h = None
    if hessian:
        h = np.zeros((n, 3, 3))
        ppi = pi * np.exp(l_1mpi)
        h[pos, 0, 0] = e_ee[pos]
        h[pos, 0, 1] = e_ea[pos]
        h[pos, 1, 1] = e_aa[pos]
        h[pos, 2, 2] = -ppi[pos]

        w = q0 * (1.0 - q0)
        ez, az = e_eta[zero], e_a[zero]
        h[zero, 0, 0] = q0 * e_ee[zero] + w * ez * ez
        h[zero, 0, 1] = q0 * e_ea[zero] + w * ez * az
        h[zero, 1, 1] = q0 * e_aa[zero] + w * az * az
        h[zero, 0, 2] = -w * ez
        h[zero, 1, 2] = -w * az
        h[zero, 2, 2] = w - ppi[zero]
        h[:, 1, 0] = h[:, 0, 1]
        h[:, 2, 0] = h[:, 0, 2]
        h[:, 2, 1] = h[:, 1, 2]
    return RowTerms(ll, d, h)


def _check_finite(values, what: str) -> None:
    bad = ~np.isfinite(values)
    if np.any(bad):
        idx = np.flatnonzero(bad.reshape(bad.shape[0], -1).any(axis=1))
        raise NumericalError(f"non-finite {what} at row {int(idx[0])} "
                             f"({idx.size} rows affected)")


def zinb_loglik(theta, X, Z, y) -> float:
    """Zero-inflated NB2 log-likelihood summed over rows."""
    terms = zinb_row_terms(theta, X, Z, y, hessian=False)
    _check_finite(terms.ll, "log-likelihood")
    return float(np.sum(terms.ll))


def zinb_scores(theta, X, Z, y) -> np.ndarray:
    """Per-row gradient contributions, shape ``(n, p + 1 + q)``."""
    d = zinb_row_terms(theta, X, Z, y, hessian=False).d
    return np.hstack([X * d[:, :1], d[:, 1:2], Z * d[:, 2:3]])


def zinb_derivs(theta, X, Z, y, hessian: bool = True):
    """Return ``(loglik, gradient, hessian or None)``."""
    t = zinb_row_terms(theta, X, Z, y, hessian=hessian)
    _check_finite(t.ll, "log-likelihood")
    _check_finite(t.d, "gradient")
    d = t.d
    grad = np.concatenate([X.T @ d[:, 0], [d[:, 1].sum()], Z.T @ d[:, 2]])
    if not hessian:
        return float(np.sum(t.ll)), grad, None

    h = t.h
    p, q = X.shape[1], Z.shape[1]
    H = np.empty((p + 1 + q, p + 1 + q))
    H[:p, :p] = (X.T * h[:, 0, 0]) @ X
    H[:p, p] = X.T @ h[:, 0, 1]
    H[:p, p + 1:] = (X.T * h[:, 0, 2]) @ Z
    H[p, p] = h[:, 1, 1].sum()
    H[p, p + 1:] = Z.T @ h[:, 1, 2]
    H[p + 1:, p + 1:] = (Z.T * h[:, 2, 2]) @ Z
    H[p:, :p] = H[:p, p:].T
    H[p + 1:, p] = H[p, p + 1:]
    _check_finite(H, "Hessian")
    return float(np.sum(t.ll)), grad, H
