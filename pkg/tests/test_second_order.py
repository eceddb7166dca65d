import math

import numpy as np
import pytest
from scipy import integrate

from conftest import mc_mean
from evidential import family
from evidential import second_order as so
from evidential.errors import DomainError, VariantError
from evidential.family import Bernoulli, Categorical, Gaussian, Poisson
from evidential.specfun import EULER_GAMMA, reg_inc_gamma_upper


# -- densities -------------------------------------------------------------


def test_uniform_dirichlet_density_is_one():
    for t in (0.01, 0.3, 0.99):
        assert so.log_density(so.Dirichlet([1.0, 1.0]), Bernoulli(t)) == pytest.approx(0.0, abs=1e-15)


def test_exponential_density():
    for t in (0.1, 1.0, 4.0):
        assert so.log_density(so.GammaPrior(1.0, 1.0), Poisson(t)) == pytest.approx(-t, abs=1e-14)


def test_nig_density_integrates_to_one():
    m = so.NIG(0.5, 2.0, 3.0, 1.5)

    def dens(mu, s2):
        return math.exp(so.log_density(m, Gaussian(mu, s2)))

    total, _ = integrate.dblquad(
        dens, 0.0, 40.0, lambda s2: 0.5 - 30.0 * math.sqrt(s2 / 2.0), lambda s2: 0.5 + 30.0 * math.sqrt(s2 / 2.0),
        epsabs=1e-10, epsrel=1e-10,
    )
    assert total == pytest.approx(1.0, abs=1e-4)


def test_density_outside_support_and_variant_mismatch():
    assert so.log_density(so.Dirichlet([2.0, 2.0, 2.0]), Categorical([0.5, 0.5 - 1e-13, 1e-13])) < 0
    with pytest.raises(VariantError):
        so.log_density(so.GammaPrior(1.0, 1.0), Gaussian(0.0, 1.0))
    with pytest.raises(VariantError):
        so.log_density(so.Dirichlet([1.0, 1.0, 1.0]), Bernoulli(0.5))


# -- entropy -----------------------------------------------------------------


def test_entropy_examples():
    assert so.entropy(so.beta(1.0, 1.0)) == pytest.approx(0.0, abs=1e-14)
    assert so.entropy(so.GammaPrior(1.0, 1.0)) == pytest.approx(1.0, abs=1e-14)


def test_nig_entropy_monte_carlo(rng):
    m = so.NIG(0.0, 1.0, 2.0, 1.0)
    draws = so.sample(m, rng, 1_000_000)
    est, se = mc_mean(-so.log_density(m, draws))
    assert abs(so.entropy(m) - est) <= 3 * se


@pytest.mark.parametrize("m", [[2.0, 6.0], [0.7, 1.3, 4.0], [15.0, 3.0, 0.5, 2.0]])
def test_dirichlet_entropy_monte_carlo(m, rng):
    d = so.Dirichlet(m)
    draws = so.sample(d, rng, 400_000)
    est, se = mc_mean(-so.log_density(d, draws))
    assert abs(so.entropy(d) - est) <= 3 * se


# -- KL --------------------------------------------------------------------------


def test_kl_self_is_zero():
    for m in (so.Dirichlet([2.0, 3.0]), so.NIG(1.0, 2.0, 3.0, 4.0), so.GammaPrior(2.0, 5.0)):
        assert so.kl(m, m) == pytest.approx(0.0, abs=1e-14)


@pytest.mark.parametrize(
    "m,m0",
    [
        (so.Dirichlet([2.0, 2.0]), so.Dirichlet([1.0, 1.0])),
        (so.GammaPrior(2.0, 1.0), so.GammaPrior(1.0, 1.0)),
        (so.NIG(0.3, 2.0, 3.0, 2.0), so.NIG(0.0, 1.0, 2.0, 1.0)),
    ],
)
def test_kl_monte_carlo(m, m0, rng):
    draws = so.sample(m, rng, 1_000_000)
    est, se = mc_mean(so.log_density(m, draws) - so.log_density(m0, draws))
    assert abs(so.kl(m, m0) - est) <= 3 * se


def test_kl_nonnegative_random(rng):
    for _ in range(200):
        k = rng.integers(2, 5)
        a, b = np.exp(rng.uniform(-2, 3, (2, k)))
        assert so.kl(so.Dirichlet(a), so.Dirichlet(b)) >= 0
        p = np.exp(rng.uniform(-2, 3, 6))
        assert so.kl(so.NIG(rng.normal(), *p[:3]), so.NIG(rng.normal(), *p[3:])) >= 0
        assert so.kl(so.GammaPrior(*p[:2]), so.GammaPrior(*p[2:4])) >= 0


def test_kl_to_uniform_is_negative_entropy_plus_constant(rng):
    for k in (2, 3, 5):
        const = -math.lgamma(k)
        for _ in range(20):
            m = so.Dirichlet(np.exp(rng.uniform(-1, 4, k)))
            assert so.kl(m, so.Dirichlet(np.ones(k))) == pytest.approx(-so.entropy(m) + const, abs=1e-10)


def test_kl_variant_mismatch():
    with pytest.raises(VariantError):
        so.kl(so.GammaPrior(1.0, 1.0), so.Dirichlet([1.0, 1.0]))
    with pytest.raises(VariantError):
        so.kl(so.Dirichlet([1.0, 1.0]), so.Dirichlet([1.0, 1.0, 1.0]))


# -- predictive ------------------------------------------------------------------


def test_predictive_examples():
    cat = so.predictive(so.Dirichlet([2.0, 6.0]))
    np.testing.assert_allclose(cat.theta, [0.25, 0.75], rtol=0, atol=1e-15)
    st = so.predictive(so.NIG(0.0, 1.0, 1.0, 1.0))
    assert (st.loc, st.scale2, st.df) == (0.0, 2.0, 2.0)
    nb = so.predictive(so.GammaPrior(1.0, 1.0))
    assert (nb.r, nb.p) == (1.0, 0.5)
    for k in range(10):
        assert math.exp(nb.logpmf(k)) == pytest.approx(2.0 ** -(k + 1), rel=1e-13)


def test_predictive_nll_examples():
    assert so.predictive_nll(so.Dirichlet([1.0, 1.0]), 1) == pytest.approx(math.log(2))
    assert so.predictive_nll(so.GammaPrior(1.0, 1.0), 0) == pytest.approx(math.log(2))


def test_predictive_nll_nig_monte_carlo(rng):
    m = so.NIG(0.2, 1.5, 2.5, 1.2)
    y = 0.9
    draws = so.sample(m, rng, 1_000_000)
    lik = np.exp(-family.nll(draws, y))
    mean, se = mc_mean(lik)
    assert abs(so.predictive_nll(m, y) - (-math.log(mean))) <= 3 * se / mean


def test_student_t_entropy_against_quadrature():
    st = so.StudentT(0.5, 2.0, 3.0)
    h, _ = integrate.quad(lambda y: st.nll(y) * math.exp(-st.nll(y)), -np.inf, np.inf)
    assert st.entropy() == pytest.approx(h, abs=1e-8)


# -- expected nll -----------------------------------------------------------------


def test_expected_nll_examples():
    for y in (0, 1):
        assert so.expected_nll(so.Dirichlet([1.0, 1.0]), y) == pytest.approx(1.0, abs=1e-15)
    assert so.expected_nll(so.GammaPrior(1.0, 1.0), 0) == pytest.approx(1.0, abs=1e-15)
    expected = 0.5 * (1.0 + EULER_GAMMA + math.log(2 * math.pi))
    assert so.expected_nll(so.NIG(0.0, 1.0, 1.0, 1.0), 0.0) == pytest.approx(expected, abs=1e-14)


@pytest.mark.parametrize(
    "m,y",
    [
        (so.Dirichlet([0.8, 2.5, 4.0]), 2),
        (so.NIG(-0.4, 0.7, 3.0, 2.0), 1.3),
        (so.GammaPrior(3.0, 0.5), 4),
    ],
)
def test_expected_nll_monte_carlo(m, y, rng):
    draws = so.sample(m, rng, 100_000)
    est, se = mc_mean(family.nll(draws, y))
    assert abs(so.expected_nll(m, y) - est) <= 3 * se


def test_outcome_domain_errors():
    with pytest.raises(DomainError):
        so.expected_nll(so.Dirichlet([1.0, 1.0]), 2)
    with pytest.raises(DomainError):
        so.predictive_nll(so.GammaPrior(1.0, 1.0), -1)


# -- sampling ----------------------------------------------------------------------


def test_sample_means(rng):
    draws = so.sample(so.Dirichlet([2.0, 6.0]), rng, 1_000_000)
    # theta is P(class 1); class probabilities are (0.25, 0.75)
    est, se = mc_mean(draws.theta)
    assert abs(est - 0.75) <= 3 * se
    a, b = 3.0, 2.0
    est, se = mc_mean(so.sample(so.GammaPrior(a, b), rng, 1_000_000).rate)
    assert abs(est - a / b) <= 3 * se


def test_sample_deterministic():
    m = so.NIG(0.0, 1.0, 2.0, 1.0)
    a = so.sample(m, np.random.default_rng(5), 10)
    b = so.sample(m, np.random.default_rng(5), 10)
    np.testing.assert_array_equal(a.mu, b.mu)
    np.testing.assert_array_equal(a.var, b.var)


# -- quantiles ---------------------------------------------------------------------


def test_quantile_examples():
    assert so.quantile(so.beta(1.0, 1.0), "theta", 0.975) == pytest.approx(0.975, abs=1e-9)
    assert so.quantile(so.NIG(1.7, 2.0, 3.0, 1.0), "mu", 0.5) == pytest.approx(1.7, abs=1e-9)


def test_inverse_gamma_quantile_round_trip():
    m = so.NIG(0.0, 1.0, 1.0, 1.0)
    for p in (0.01, 0.3, 0.5, 0.9, 0.99):
        q = so.quantile(m, "sigma2", p)
        assert so.cdf(m, "sigma2", q) == pytest.approx(p, abs=1e-9)
        # InvGamma(1, 1) has CDF exp(-1/t)
        assert q == pytest.approx(-1.0 / math.log(p), rel=1e-8)


def test_quantile_unsupported_component():
    with pytest.raises(VariantError):
        so.quantile(so.beta(1.0, 1.0), "mu", 0.5)
    with pytest.raises(VariantError):
        so.quantile(so.Dirichlet([1.0, 1.0, 1.0]), "theta", 0.5)


def test_marginal_partial_means_against_quadrature():
    cases = [
        (so.marginal(so.beta(2.0, 5.0), "theta"), 0.0),
        (so.marginal(so.NIG(1.0, 2.0, 3.0, 4.0), "mu"), -np.inf),
        (so.marginal(so.NIG(1.0, 2.0, 3.0, 4.0), "sigma2"), 0.0),
        (so.marginal(so.GammaPrior(2.5, 1.5), "rate"), 0.0),
    ]
    for marg, lo in cases:
        for p in (0.1, 0.5, 0.9):
            t = so.inverse_cdf_bisect(marg.cdf, p, marg.lo, marg.hi)
            # integral of F up to t equals t F(t) - E[X; X <= t]
            g, _ = integrate.quad(marg.cdf, lo if lo > -np.inf else marg.lo, t, epsabs=1e-12)
            assert g == pytest.approx(t * marg.cdf(t) - marg.partial_mean(t), abs=1e-8)


# -- epistemic measures ------------------------------------------------------------


def test_epistemic_examples():
    assert so.epistemic_measures(so.Dirichlet([2.0, 6.0])).pseudo_counts == 8.0
    assert so.epistemic_measures(so.NIG(0.0, 1.0, 2.0, 1.0)).var_mu == pytest.approx(1.0)
    assert so.epistemic_measures(so.NIG(0.0, 1.0, 1.0, 1.0)).var_mu is None


def test_uniform_beta_mutual_information_quadrature():
    # E[H(Bernoulli(theta))] under theta ~ U(0, 1), by quadrature
    eh, _ = integrate.quad(lambda t: family.entropy(Bernoulli(t)) if 0 < t < 1 else 0.0, 0, 1)
    assert eh == pytest.approx(0.5, abs=1e-10)
    mi = so.epistemic_measures(so.Dirichlet([1.0, 1.0])).mutual_information
    assert mi == pytest.approx(math.log(2) - eh, abs=1e-10)


@pytest.mark.parametrize("m", [so.Dirichlet([0.5, 2.0, 3.5]), so.NIG(0.0, 0.8, 3.0, 2.0), so.GammaPrior(2.0, 0.7)])
def test_mutual_information_monte_carlo(m, rng):
    n = 20_000 if isinstance(m, so.GammaPrior) else 200_000
    est, se = mc_mean(family.entropy(so.sample(m, rng, n)))
    pred = so.predictive(m)
    h_pred = family.entropy(pred) if isinstance(pred, Categorical) else pred.entropy()
    assert abs(so.mutual_information(m) - (h_pred - est)) <= 3 * se


# -- identifiability ---------------------------------------------------------------


def test_dirichlet_predictive_scale_invariant(rng):
    for _ in range(200):
        m = np.exp(rng.uniform(-3, 5, rng.integers(2, 6)))
        c = math.exp(rng.uniform(-5, 5))
        a = so.predictive(so.Dirichlet(m)).theta
        b = so.predictive(so.Dirichlet(c * m)).theta
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


def test_nig_predictive_nu_beta_trade(rng):
    for _ in range(200):
        g, a = rng.normal(), 1.0 + math.exp(rng.uniform(-2, 3))
        nu, b = np.exp(rng.uniform(-3, 3, 2))
        nu2 = math.exp(rng.uniform(-3, 3))
        b2 = b * (1 + nu) / nu * nu2 / (1 + nu2)
        p, q = so.predictive(so.NIG(g, nu, a, b)), so.predictive(so.NIG(g, nu2, a, b2))
        assert abs(p.loc - q.loc) <= 1e-12
        assert abs(p.scale2 - q.scale2) <= 1e-12 * max(1.0, p.scale2)
        assert abs(p.df - q.df) <= 1e-12


def test_gamma_negbinomial_bijective():
    alphas = np.exp(np.linspace(-3, 4, 25))
    betas = np.exp(np.linspace(-3, 4, 25))
    seen = set()
    for a in alphas:
        for b in betas:
            nb = so.predictive(so.GammaPrior(a, b))
            seen.add((round(float(nb.r), 12), round(float(nb.p), 12)))
            back = so.gamma_from_negbinomial(nb)
            assert abs(back.alpha - a) <= 1e-12 * a
            assert abs(back.beta - b) <= 1e-12 * max(1.0, b)
    assert len(seen) == alphas.size * betas.size


def test_jensen_ordering(rng):
    for _ in range(300):
        m = so.Dirichlet(np.exp(rng.uniform(-3, 4, 3)))
        y = rng.integers(0, 3)
        assert so.expected_nll(m, y) - so.predictive_nll(m, y) >= -1e-10
        n = so.NIG(rng.normal(), *np.exp(rng.uniform(-3, 3, 3)))
        y = rng.normal() * 3
        assert so.expected_nll(n, y) - so.predictive_nll(n, y) >= -1e-10
        g = so.GammaPrior(*np.exp(rng.uniform(-3, 3, 2)))
        y = rng.poisson(3)
        assert so.expected_nll(g, y) - so.predictive_nll(g, y) >= -1e-10
