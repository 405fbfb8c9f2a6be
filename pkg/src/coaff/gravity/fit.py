"""Maximum-likelihood fits: Poisson, NB2 and zero-inflated NB2 with sandwich errors."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logit
from scipy.stats import norm

from coaff.gravity.design import INFLATE, LN_PROD, LN_TT, Design
from coaff.gravity.likelihood import (
    NumericalError,
    _nb_derivs,
    poisson_derivs,
    zinb_derivs,
    zinb_scores,
)
from coaff.gravity.optimize import bfgs_maximize

logger = logging.getLogger(__name__)

SEPARATION_BOUND = 30.0
MAX_COND = 1e15


class SeparationWarning(UserWarning):
    """Inflation coefficients diverge (quasi-complete separation)."""


@dataclass
class FitOptions:
    rtol: float = 1e-8
    gtol: float = 1e-5
    max_iter: int = 500


def _check_columns(X: np.ndarray, what: str) -> None:
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError(f"{what} matrix is empty")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{what} matrix has non-finite entries")
    const = np.ptp(X, axis=0) == 0
    if const.sum() > 1 or (const.any() and not np.all(X[:, const] == 1.0)):
        bad = [int(k) for k in np.flatnonzero(const)]
        raise ValueError(f"{what} matrix has constant columns {bad} besides the intercept")


def _covariance(hess: np.ndarray, scores: np.ndarray | None) -> tuple[np.ndarray, float]:
    info = -hess
    cond = float(np.linalg.cond(info))
    if not np.isfinite(cond) or cond > MAX_COND:
        raise NumericalError(f"singular information matrix (condition number {cond:.3g})")
    inv = np.linalg.inv(info)
    if scores is None:
        cov = inv
    else:
        meat = scores.T @ scores
        cov = inv @ meat @ inv
    return (cov + cov.T) / 2.0, cond


def information_criteria(loglik: float, k: int, n: int) -> tuple[float, float]:
    """Return ``(AIC, BIC)`` = ``(2k - 2 lnL, k ln n - 2 lnL)``."""
    return 2.0 * k - 2.0 * loglik, k * math.log(n) - 2.0 * loglik


@dataclass
class CountFit:
    """Shared result layout for the Poisson and NB2 fits."""

    params: np.ndarray
    names: list[str]
    loglik: float
    cov: np.ndarray
    cov_model: np.ndarray
    converged: bool
    iterations: int
    n: int

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))

    @property
    def se_model(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov_model))


def fit_poisson(X, y, names=None, options: FitOptions | None = None) -> CountFit:
    """Poisson ML by damped Newton iterations; robust (sandwich) covariance."""
    opts = options or FitOptions()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_columns(X, "count")
    if np.any(y < 0):
        raise ValueError("negative counts")
    if not np.any(y > 0):
        raise NumericalError("degenerate all-zero outcome")

    beta = np.zeros(X.shape[1])
    if np.all(X[:, 0] == 1.0):
        beta[0] = math.log(y.mean())
    ll, grad, hess, _ = poisson_derivs(beta, X, y)
    converged = False
    it = 0
    for it in range(1, opts.max_iter + 1):
        try:
            step = np.linalg.solve(-hess, grad)
        except np.linalg.LinAlgError:
            raise NumericalError("singular Poisson information matrix") from None
        t = 1.0
        while True:
            cand = beta + t * step
            with np.errstate(over="ignore"):
                ll_new, g_new, h_new, _ = poisson_derivs(cand, X, y)
            if np.isfinite(ll_new) and ll_new >= ll - 1e-12 * abs(ll):
                break
            t *= 0.5
            if t < 1e-10:
                raise NumericalError("Poisson line search failed")
        rel = abs(ll_new - ll) / max(abs(ll_new), 1.0)
        beta, ll, grad, hess = cand, ll_new, g_new, h_new
        if rel < opts.rtol and np.max(np.abs(grad)) < opts.gtol:
            converged = True
            break
    if not converged:
        raise NumericalError(f"Poisson fit did not converge in {opts.max_iter} iterations")
    _, _, hess, scores = poisson_derivs(beta, X, y)
    cov, _ = _covariance(hess, scores)
    cov_model, _ = _covariance(hess, None)
    names = list(names) if names is not None else [f"x{k}" for k in range(X.shape[1])]
    return CountFit(beta, names, ll, cov, cov_model, converged, it, X.shape[0])


def _nb_fg(theta, X, y, hessian=False):
    p = X.shape[1]
    eta = X @ theta[:p]
    ell, e_eta, e_a, e_ee, e_ea, e_aa = _nb_derivs(y, eta, theta[p])
    ll = float(ell.sum())
    grad = np.concatenate([X.T @ e_eta, [e_a.sum()]])
    if not hessian:
        return ll, grad, np.column_stack([X * e_eta[:, None], e_a])
    H = np.empty((p + 1, p + 1))
    H[:p, :p] = (X.T * e_ee) @ X
    H[:p, p] = H[p, :p] = X.T @ e_ea
    H[p, p] = e_aa.sum()
    return ll, grad, H


def fit_negbin(X, y, names=None, options: FitOptions | None = None) -> CountFit:
    """Plain NB2 regression; the last parameter is ``log(alpha)``."""
    opts = options or FitOptions()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    start = np.append(fit_poisson(X, y, options=opts).params, 0.0)
    res = bfgs_maximize(lambda th: _nb_fg(th, X, y)[:2], start,
                        hess=lambda th: _nb_fg(th, X, y, True)[2],
                        rtol=opts.rtol, gtol=opts.gtol, max_iter=opts.max_iter)
    if not res.converged:
        raise NumericalError(f"NB2 fit did not converge: {res.message}")
    _, _, H = _nb_fg(res.x, X, y, True)
    _, _, S = _nb_fg(res.x, X, y)
    cov, _ = _covariance(H, S)
    cov_model, _ = _covariance(H, None)
    names = (list(names) if names is not None else [f"x{k}" for k in range(X.shape[1])]) + ["ln_alpha"]
    return CountFit(res.x, names, res.fun, cov, cov_model, True, res.iterations, X.shape[0])


@dataclass
class ZinbFit:
    params: np.ndarray
    count_names: list[str]
    inflate_names: list[str]
    loglik: float
    cov: np.ndarray
    converged: bool
    iterations: int
    n: int
    message: str = ""
    condition_number: float = float("nan")
    history: list[float] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def p(self) -> int:
        return len(self.count_names)

    @property
    def beta(self) -> np.ndarray:
        return self.params[:self.p]

    @property
    def log_alpha(self) -> float:
        return float(self.params[self.p])

    @property
    def alpha(self) -> float:
        return math.exp(self.log_alpha)

    @property
    def gamma(self) -> np.ndarray:
        return self.params[self.p + 1:]

    @property
    def names(self) -> list[str]:
        return [*self.count_names, "ln_alpha", *self.inflate_names]

    @property
    def k(self) -> int:
        return self.params.size

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))

    @property
    def z(self) -> np.ndarray:
        return self.params / self.se

    @property
    def pvalues(self) -> np.ndarray:
        return 2.0 * norm.sf(np.abs(self.z))

    @property
    def aic(self) -> float:
        return information_criteria(self.loglik, self.k, self.n)[0]

    @property
    def bic(self) -> float:
        return information_criteria(self.loglik, self.k, self.n)[1]

    def coef(self, name: str) -> float:
        return float(self.params[self.names.index(name)])

    def stderr(self, name: str) -> float:
        return float(self.se[self.names.index(name)])

    def pvalue(self, name: str) -> float:
        return float(self.pvalues[self.names.index(name)])


def zinb_start(X, Z, y, poisson_beta) -> np.ndarray:
    """Starting point: Poisson count part, unit dispersion, zero-share inflation."""
    mu = np.exp(X @ poisson_beta)
    observed = float(np.mean(y == 0))
    implied = float(np.mean(1.0 / (1.0 + mu)))  # NB2 zero mass at alpha = 1
    share = (observed - implied) / (1.0 - implied) if implied < 1.0 else 0.5
    share = min(max(share, 0.01), 0.99)
    gamma = np.zeros(Z.shape[1])
    gamma[0] = logit(share)
    return np.concatenate([poisson_beta, [0.0], gamma])


def fit_zinb(X, Z, y, count_names=None, inflate_names=None,
             options: FitOptions | None = None, start=None) -> ZinbFit:
    """Zero-inflated NB2 by BFGS ascent; robust sandwich covariance.

    Raises
    ------
    NumericalError
        On an all-zero outcome, non-convergence, or singular information.
    """
    opts = options or FitOptions()
    X = np.asarray(X, dtype=float)
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_columns(X, "count")
    _check_columns(Z, "inflation")
    if not np.any(y > 0):
        raise NumericalError("degenerate all-zero outcome")
    if np.all(y > 0):
        raise ValueError("no zero outcomes: zero inflation is not identified")

    if start is None:
        start = zinb_start(X, Z, y, fit_poisson(X, y, options=opts).params)

    def fg(th):
        ll, g, _ = zinb_derivs(th, X, Z, y, hessian=False)
        return ll, g

    def hess(th):
        return zinb_derivs(th, X, Z, y, hessian=True)[2]

    res = bfgs_maximize(fg, start, hess=hess, rtol=opts.rtol, gtol=opts.gtol,
                        max_iter=opts.max_iter)
    if not res.converged:
        raise NumericalError(f"ZINB fit did not converge after {res.iterations} iterations "
                             f"({res.message}; max |grad| = {np.max(np.abs(res.grad)):.3g})")

    theta = res.x.copy()
    notes = []
    p = X.shape[1]
    g = theta[p + 1:]
    if np.any(np.abs(g) > SEPARATION_BOUND):
        msg = (f"inflation coefficients diverge (|gamma| > {SEPARATION_BOUND:g}); "
               f"estimates clamped")
        warnings.warn(msg, SeparationWarning, stacklevel=2)
        notes.append(msg)
        theta[p + 1:] = np.clip(g, -SEPARATION_BOUND, SEPARATION_BOUND)

    ll, _, H = zinb_derivs(theta, X, Z, y, hessian=True)
    cov, cond = _covariance(H, zinb_scores(theta, X, Z, y))
    return ZinbFit(
        params=theta,
        count_names=list(count_names) if count_names is not None else [f"x{k}" for k in range(p)],
        inflate_names=list(inflate_names) if inflate_names is not None
        else [f"z{k}" for k in range(Z.shape[1])],
        loglik=ll, cov=cov, converged=True, iterations=res.iterations, n=X.shape[0],
        message=res.message, condition_number=cond, history=res.history, warnings=notes,
    )


def robust_covariance(fit: ZinbFit, X, Z, y) -> np.ndarray:
    """Sandwich ``H^-1 S H^-1`` at the fitted parameters."""
    _, _, H = zinb_derivs(fit.params, X, Z, y, hessian=True)
    return _covariance(H, zinb_scores(fit.params, X, Z, y))[0]


def unidentified_dummies(design: Design) -> list[str]:
    """Dummies whose rows are all zero: their count coefficient drifts to -inf."""
    out = []
    for k, name in enumerate(design.dummy_names):
        on = design.dummies[:, k] == 1
        if on.any() and not np.any(design.y[on] > 0):
            out.append(name)
    return out


def fit_gravity(design: Design, options: FitOptions | None = None) -> ZinbFit:
    fit = fit_zinb(design.count_matrix(), design.inflate_matrix(), design.y,
                   count_names=design.count_names, inflate_names=list(INFLATE),
                   options=options)
    flat = unidentified_dummies(design)
    if flat:
        msg = f"no links among pairs of {flat}; those coefficients are not identified"
        logger.warning(msg)
        fit.warnings.append(msg)
    return fit


def predicted_zero_share(fit: ZinbFit, X, Z) -> float:
    mu = np.exp(X @ fit.beta)
    pi = expit(Z @ fit.gamma)
    f0 = np.exp(-np.log1p(fit.alpha * mu) / fit.alpha)
    return float(np.mean(pi + (1.0 - pi) * f0))


def report_rows(fit: ZinbFit) -> list[tuple[str, float, float, float, float]]:
    """Rows ``(variable, coef, robust_se, z, p)`` in the published table order."""
    order = [LN_PROD, LN_TT, *[n for n in fit.count_names if n not in ("constant", LN_PROD, LN_TT)],
             *fit.inflate_names, "constant", "ln_alpha"]
    names = fit.names
    se, z, pv = fit.se, fit.z, fit.pvalues
    out = []
    for nm in order:
        k = names.index(nm)
        out.append((nm, float(fit.params[k]), float(se[k]), float(z[k]), float(pv[k])))
    return out


def significance(p: float) -> str:
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    if p < 0.1:
        return "."
    return ""

