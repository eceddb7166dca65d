import math

import numpy as np
import pytest
from scipy import special as sp

from evidential.errors import DomainError
from evidential.family import Bernoulli, Categorical, Gaussian, Poisson, entropy, nll


def test_nll_examples():
    assert nll(Bernoulli(0.5), 1) == pytest.approx(math.log(2))
    assert nll(Gaussian(0.0, 1.0), 0.0) == pytest.approx(0.5 * math.log(2 * math.pi))
    assert nll(Poisson(1.0), 0) == pytest.approx(1.0)


def test_entropy_examples():
    assert entropy(Bernoulli(0.5)) == pytest.approx(math.log(2))
    assert entropy(Gaussian(3.0, 1.0)) == pytest.approx(0.5 * math.log(2 * math.pi * math.e))
    for k in (2, 3, 7):
        assert entropy(Categorical(np.full(k, 1.0 / k))) == pytest.approx(math.log(k))


def test_discrete_nll_nonnegative_and_normalised():
    theta = np.array([0.1, 0.2, 0.3, 0.4])
    probs = [math.exp(-nll(Categorical(theta), k)) for k in range(4)]
    assert all(nll(Categorical(theta), k) >= 0 for k in range(4))
    assert sum(probs) == pytest.approx(1.0, abs=1e-15)
    for lam in (0.3, 1.0, 7.5, 20.0):
        ks = np.arange(201)
        assert np.sum(np.exp(-nll(Poisson(lam), ks))) == pytest.approx(1.0, abs=1e-10)


def test_bernoulli_entropy_maximised_at_half():
    grid = np.linspace(0.01, 0.99, 99)
    assert grid[np.argmax(entropy(Bernoulli(grid)))] == pytest.approx(0.5)


def test_poisson_nll_large_counts_finite():
    assert math.isfinite(nll(Poisson(5000.0), 5000))
    assert nll(Poisson(5000.0), 5000) == pytest.approx(
        5000 - 5000 * math.log(5000) + sp.gammaln(5001), rel=1e-12
    )


def test_poisson_entropy_against_direct_sum():
    lam = 4.2
    ks = np.arange(200)
    p = np.exp(-nll(Poisson(lam), ks))
    assert entropy(Poisson(lam)) == pytest.approx(-np.sum(p * np.log(p)), abs=1e-10)


@pytest.mark.parametrize(
    "params,y",
    [(Bernoulli(0.3), 2), (Bernoulli(0.3), 0.5), (Categorical([0.5, 0.5]), 3), (Poisson(1.0), -1), (Poisson(1.0), 1.5)],
)
def test_outcome_domain_errors(params, y):
    with pytest.raises(DomainError):
        nll(params, y)


@pytest.mark.parametrize(
    "make",
    [lambda: Bernoulli(1.0), lambda: Categorical([0.7, 0.4]), lambda: Gaussian(0.0, 0.0), lambda: Poisson(-1.0)],
)
def test_invalid_params(make):
    with pytest.raises(DomainError):
        make()
