import math
import warnings

import numpy as np
import pytest
from scipy.stats import nbinom, poisson

from coaff.geo import Impedance, TravelTimeTable
from coaff.gravity import (
    CROSS_TYPE,
    SAME_TYPE,
    FitOptions,
    NumericalError,
    SeparationWarning,
    build_design,
    fit_negbin,
    fit_poisson,
    fit_zinb,
    information_criteria,
    predicted_zero_share,
    robust_covariance,
    zinb_derivs,
    zinb_loglik,
)
from coaff.gravity.likelihood import nb2_logpmf, poisson_logpmf, zinb_scores
from coaff.gravity.optimize import bfgs_maximize
from coaff.linkgen import ALL, CoAffLink, LinkSet
from coaff.network import build_network
from coaff.synthetic import simulate_gravity, simulate_poisson

from conftest import make_registry


# ---------------------------------------------------------------- design

def _net(types, edges):
    reg = make_registry({o: (t, []) for o, t in types.items()})
    links = [CoAffLink("a", f"p{a}{b}{k}", 2015, *sorted((a, b)), 0, 1)
             for (a, b), s in edges.items() for k in range(s)]
    return build_network(LinkSet(ALL, links), reg), reg


def _imp(reg):
    return Impedance(TravelTimeTable(), lambda o: reg.coords(o))


def test_design_three_orgs():
    net, reg = _net({"A": "uni", "B": "res", "C": "uni"}, {("A", "B"): 2, ("B", "C"): 1})
    d = build_design(net, _imp(reg), "M1", drop_empty_dummies=False)
    assert len(d) == 3
    rows = {r.pair: r for r in d.rows()}
    assert rows[("A", "C")].y == 0 and rows[("A", "B")].y == 2
    assert rows[("A", "C")].dummies["uni_uni"] == 1
    assert sum(rows[("A", "B")].dummies.values()) == 0
    assert d.dummy_names == SAME_TYPE
    assert np.all(np.isfinite(d.ln_prod)) and np.all(np.isfinite(d.ln_tt))


def test_design_m2_cross_dummy():
    net, reg = _net({"A": "uni", "B": "res"}, {("A", "B"): 1})
    d = build_design(net, _imp(reg), "M2", drop_empty_dummies=False)
    (row,) = d.rows()
    assert row.dummies["res_uni"] == 1 and sum(row.dummies.values()) == 1
    assert d.dummy_names == CROSS_TYPE and len(CROSS_TYPE) == 21
    assert CROSS_TYPE[0] == "coll_comp" and CROSS_TYPE[-1] == "res_uni"


def test_design_at_most_one_dummy_and_drops_other():
    types = {"A": "uni", "B": "res", "C": "med", "D": "comp", "E": "gov", "X": "other"}
    edges = {("A", "B"): 3, ("C", "D"): 1, ("A", "E"): 2, ("A", "X"): 4, ("B", "C"): 1}
    net, reg = _net(types, edges)
    for model in ("M1", "M2"):
        d = build_design(net, _imp(reg), model)
        assert len(d) == 5 * 4 // 2
        assert np.all(d.dummies.sum(axis=1) <= 1)
        assert "X" not in set(d.org_lo) | set(d.org_hi)
        assert d.y.sum() == 3 + 1 + 2 + 1


def test_design_drops_absent_dummies():
    net, reg = _net({"A": "uni", "B": "res", "C": "uni"}, {("A", "B"): 1, ("B", "C"): 1})
    assert build_design(net, _imp(reg), "M1").dummy_names == ("uni_uni",)


# ------------------------------------------------------------ likelihood

def test_single_row_hand_value():
    # mu = 4, alpha = 1 -> f_NB(0) = 1/5; pi = 0.5
    theta = np.array([math.log(4.0), 0.0, 0.0])
    ll = zinb_loglik(theta, np.ones((1, 1)), np.ones((1, 1)), np.zeros(1))
    assert ll == pytest.approx(math.log(0.6), abs=1e-14)


def test_nb2_matches_scipy():
    y = np.arange(0, 40)
    for mu, alpha in [(0.3, 0.2), (4.0, 1.0), (25.0, 3.5)]:
        want = nbinom.logpmf(y, 1 / alpha, 1 / (1 + alpha * mu))
        assert np.allclose(nb2_logpmf(y, mu, alpha), want, rtol=1e-10, atol=1e-12)


def exact_nb2_logpmf(y, mu, alpha):
    """Oracle: lgamma(y + r) - lgamma(r) as an explicit sum of logs."""
    r = 1.0 / alpha
    return (math.fsum(math.log(r + k) for k in range(y)) - math.lgamma(y + 1)
            - r * math.log1p(alpha * mu) + y * (math.log(alpha * mu) - math.log1p(alpha * mu)))


def test_alpha_to_zero_is_poisson():
    alpha = 1e-6
    for mu in (0.1, 1.0, 3.3, 6.0, 10.0):
        for y in range(21):
            got = float(nb2_logpmf(y, mu, alpha))
            assert got == pytest.approx(exact_nb2_logpmf(y, mu, alpha), abs=1e-8)
            gap = got - poisson.logpmf(y, mu)
            # leading term of the expansion in alpha
            assert gap == pytest.approx(alpha / 2 * ((y - mu) ** 2 - y), abs=2e-8)
            if (y - mu) ** 2 - y < 200:
                assert abs(gap) < 1e-4
    assert np.allclose(poisson_logpmf(np.arange(21), 2.5), poisson.logpmf(np.arange(21), 2.5))


def _instance(n, seed):
    s = simulate_gravity(n, dummy_coefs=(0.7,), seed=seed)
    return s.X, s.Z, s.y.astype(float), s.theta


def test_pi_to_zero_is_nb():
    X, Z, y, theta = _instance(500, 3)
    theta = theta.copy()
    theta[-2:] = (-30.0, 0.0)
    p = X.shape[1]
    nb = nb2_logpmf(y, np.exp(X @ theta[:p]), math.exp(theta[p])).sum()
    assert zinb_loglik(theta, X, Z, y) == pytest.approx(nb, abs=1e-8)


def _fd_grad(f, x, h=1e-6):
    g = np.empty_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h * max(1.0, abs(x[k]))
        g[k] = (f(x + e) - f(x - e)) / (2 * e[k])
    return g


def test_gradient_matches_finite_differences():
    X, Z, y, theta0 = _instance(100, 5)
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(20):
        th = theta0 + rng.normal(0, 0.3, theta0.size)
        _, g, _ = zinb_derivs(th, X, Z, y, hessian=False)
        fd = _fd_grad(lambda t: zinb_loglik(t, X, Z, y), th)
        worst = max(worst, np.max(np.abs(g - fd) / np.maximum(np.abs(fd), 1.0)))
    assert worst < 1e-5


def test_hessian_matches_finite_differences():
    X, Z, y, theta = _instance(50, 8)
    _, _, H = zinb_derivs(theta, X, Z, y)
    fd = np.empty_like(H)
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = 1e-5
        fd[:, k] = (zinb_derivs(theta + e, X, Z, y, False)[1]
                    - zinb_derivs(theta - e, X, Z, y, False)[1]) / 2e-5
    assert np.max(np.abs(H - fd) / np.maximum(np.abs(fd), 1.0)) < 1e-4
    assert np.allclose(H, H.T)


def test_scores_sum_to_gradient():
    X, Z, y, theta = _instance(200, 9)
    assert np.allclose(zinb_scores(theta, X, Z, y).sum(axis=0), zinb_derivs(theta, X, Z, y, False)[1])


def test_non_finite_reports_row():
    X, Z, y, theta = _instance(20, 1)
    X = X.copy()
    X[7, 1] = np.nan
    with pytest.raises(NumericalError, match="row 7"):
        zinb_loglik(theta, X, Z, y)


# ------------------------------------------------------------ optimiser

def test_bfgs_quadratic():
    A = np.array([[3.0, 0.5], [0.5, 1.0]])
    b = np.array([1.0, -2.0])
    res = bfgs_maximize(lambda x: (-0.5 * x @ A @ x + b @ x, b - A @ x), np.zeros(2))
    assert res.converged
    assert np.allclose(res.x, np.linalg.solve(A, b), atol=1e-6)
    assert np.all(np.diff(res.history) >= 0)


# ----------------------------------------------------------------- fits

def test_poisson_recovery():
    X, y = simulate_poisson(10_000, (1.0, -0.5), seed=4)
    fit = fit_poisson(X, y)
    assert np.all(np.abs(fit.params - [1.0, -0.5]) < 3 * fit.se)


def test_poisson_intercept_only():
    y = np.array([0, 1, 2, 5, 3, 0, 4], dtype=float)
    fit = fit_poisson(np.ones((7, 1)), y)
    assert fit.params[0] == pytest.approx(math.log(y.mean()), abs=1e-9)


def test_poisson_all_zero():
    with pytest.raises(NumericalError, match="degenerate all-zero outcome"):
        fit_poisson(np.ones((5, 1)), np.zeros(5))


def test_collinear_constant_column_rejected():
    X = np.column_stack([np.ones(10), np.full(10, 2.0)])
    with pytest.raises(ValueError, match="constant columns"):
        fit_poisson(X, np.arange(10.0))


def test_robust_close_to_model_se_when_well_specified():
    X, y = simulate_poisson(20_000, (1.0, -0.5), seed=6)
    fit = fit_poisson(X, y)
    assert np.all(np.abs(fit.se / fit.se_model - 1) < 0.15)


def test_sandwich_hand_assembled():
    x = np.array([-1.0, 0.0, 0.5, 1.0, 2.0, -0.3])
    y = np.array([0, 1, 1, 3, 6, 1], dtype=float)
    X = np.column_stack([np.ones(6), x])
    fit = fit_poisson(X, y)
    b = fit.params
    H = np.zeros((2, 2))
    S = np.zeros((2, 2))
    for xi, yi in zip(X, y):
        mu = math.exp(xi @ b)
        s = (yi - mu) * xi
        S += np.outer(s, s)
        H -= mu * np.outer(xi, xi)
    Hi = np.linalg.inv(-H)
    assert np.allclose(fit.cov, Hi @ S @ Hi, rtol=1e-10)


def test_information_criteria():
    aic, bic = information_criteria(-10.0, 3, 100)
    assert aic == 26.0
    assert bic == pytest.approx(33.815510557964274, abs=1e-12)
    assert information_criteria(-10.0, 0, 100)[0] == 20.0


@pytest.fixture(scope="module")
def zinb_case():
    s = simulate_gravity(20_000, seed=2)
    return s, fit_zinb(s.X, s.Z, s.y)


def test_zinb_recovery_single_seed(zinb_case):
    s, fit = zinb_case
    assert fit.converged
    assert np.all(np.abs(fit.params - s.theta) < 3 * fit.se)
    assert fit.alpha > 0
    assert np.allclose(fit.cov, fit.cov.T)
    assert np.all(np.linalg.eigvalsh(fit.cov) > 0)
    assert np.allclose(robust_covariance(fit, s.X, s.Z, s.y), fit.cov)


def test_loglik_history_non_decreasing(zinb_case):
    _, fit = zinb_case
    assert np.all(np.diff(fit.history) >= 0)
    assert fit.history[-1] == pytest.approx(fit.loglik, rel=1e-12)


def test_predicted_zero_share(zinb_case):
    s, fit = zinb_case
    emp = float(np.mean(s.y == 0))
    assert abs(predicted_zero_share(fit, s.X, s.Z) - emp) < 0.01 * emp


def test_travel_time_scale_invariance(zinb_case):
    s, fit = zinb_case
    c = 7.0
    X2 = s.X.copy()
    X2[:, 2] += math.log(c)
    fit2 = fit_zinb(X2, s.Z, s.y)
    assert fit2.params[0] == pytest.approx(fit.params[0] - fit.beta[2] * math.log(c), abs=1e-4)
    assert np.allclose(fit2.params[1:], fit.params[1:], atol=1e-4)
    assert np.allclose(X2 @ fit2.beta, s.X @ fit.beta, atol=1e-4)


def test_nested_negbin():
    s = simulate_gravity(20_000, gamma=(-30.0, 0.0), seed=0)
    nb = fit_negbin(s.X, s.y)
    # the ZINB likelihood at the NB optimum with pi -> 0 is the NB likelihood
    theta = np.concatenate([nb.params, [-30.0, 0.0]])
    assert zinb_loglik(theta, s.X, s.Z, s.y) == pytest.approx(nb.loglik, abs=1e-6)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SeparationWarning)
        fit = fit_zinb(s.X, s.Z, s.y)
    assert fit.loglik >= nb.loglik - 1e-6
    # this replication sits on the boundary (pi -> 0), so the count parts coincide
    assert fit.gamma[0] <= -30.0 + 1e-9
    assert np.max(np.abs(fit.params[:4] - nb.params)) < 1e-3


def test_nested_negbin_interior_optimum_is_small_gain():
    # with sampling noise the unrestricted optimum can sit inside; the gain is then small
    s = simulate_gravity(20_000, gamma=(-30.0, 0.0), seed=1)
    nb = fit_negbin(s.X, s.y)
    fit = fit_zinb(s.X, s.Z, s.y)
    lr = 2 * (fit.loglik - nb.loglik)
    assert 0 <= lr < 9.21  # chi2(2) 99% quantile


def test_separation_warning():
    s = simulate_gravity(20_000, gamma=(-30.0, 0.0), seed=0)
    with pytest.warns(SeparationWarning):
        fit = fit_zinb(s.X, s.Z, s.y)
    assert np.all(np.abs(fit.gamma) <= 30.0)
    assert fit.warnings


def test_non_convergence_is_reported():
    s = simulate_gravity(2_000, seed=3)
    with pytest.raises(NumericalError, match="did not converge"):
        fit_zinb(s.X, s.Z, s.y, options=FitOptions(max_iter=2))


def test_no_zero_outcomes_rejected():
    X = np.column_stack([np.ones(4), [0.1, 0.2, 0.3, 0.5]])
    with pytest.raises(ValueError, match="no zero outcomes"):
        fit_zinb(X, X, np.array([1.0, 2.0, 3.0, 1.0]))


# --------------------------------------------------- independent package oracle

def test_zinb_loglik_matches_statsmodels():
    from statsmodels.discrete.count_model import ZeroInflatedNegativeBinomialP

    s = simulate_gravity(3_000, dummy_coefs=(0.8,), seed=12)
    p = s.X.shape[1]
    model = ZeroInflatedNegativeBinomialP(s.y, s.X, exog_infl=s.Z, p=2, inflation="logit")

    def to_sm(theta):
        # statsmodels orders [inflation, count, alpha]
        return np.concatenate([theta[p + 1:], theta[:p], [math.exp(theta[p])]])

    rng = np.random.default_rng(1)
    for _ in range(5):
        th = s.theta + rng.normal(0, 0.2, s.theta.size)
        assert zinb_loglik(th, s.X, s.Z, s.y) == pytest.approx(model.loglike(to_sm(th)), rel=1e-10)

    fit = fit_zinb(s.X, s.Z, s.y)
    score = model.score(to_sm(fit.params))
    assert np.max(np.abs(score)) < 1e-3
