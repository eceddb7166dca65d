"""Second-order distributions p(theta | m) over first-order parameters.

Three conjugate families are covered: Dirichlet (Beta for K=2) over categorical
probabilities, normal-inverse-gamma over Gaussian (mu, sigma^2), and Gamma over a
Poisson rate. For K=2 the Dirichlet vector is indexed by class, so Beta(a, b) on
theta = P(y=1) is ``Dirichlet([b, a])``; :func:`beta` builds it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy import special as _sp

from . import family
from .errors import DomainError, VariantError
from .family import LOG_2PI, Bernoulli, Categorical, Gaussian, Poisson
from .specfun import (
    digamma,
    inverse_cdf_bisect,
    reg_inc_beta,
    reg_inc_gamma_lower,
    reg_inc_gamma_upper,
    trigamma,
)


def _arr(x):
    return np.asarray(x, dtype=float)


def _ret(x):
    return float(x) if np.ndim(x) == 0 else x


def _check_positive(name, value):
    v = _arr(value)
    if not np.all(np.isfinite(v) & (v > 0)):
        raise DomainError(f"{name} must be finite and > 0, got {value!r}")


@dataclass(frozen=True)
class Dirichlet:
    m: np.ndarray

    def __post_init__(self):
        m = _arr(self.m)
        object.__setattr__(self, "m", m)
        if m.ndim < 1 or m.shape[-1] < 2:
            raise DomainError("Dirichlet needs K >= 2 concentration parameters")
        _check_positive("Dirichlet m", m)

    @property
    def k(self) -> int:
        return self.m.shape[-1]

    @property
    def m0(self):
        return self.m.sum(axis=-1)


@dataclass(frozen=True)
class NIG:
    """Normal-inverse-gamma over (mu, sigma^2).

    ``alpha`` only has to be positive here; quantities that need alpha > 1
    (the variance of mu, the mean of sigma^2) check it themselves.
    """

    gamma: float | np.ndarray
    nu: float | np.ndarray
    alpha: float | np.ndarray
    beta: float | np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(_arr(self.gamma))):
            raise DomainError("NIG gamma must be finite")
        _check_positive("NIG nu", self.nu)
        _check_positive("NIG alpha", self.alpha)
        _check_positive("NIG beta", self.beta)


@dataclass(frozen=True)
class GammaPrior:
    """Gamma(alpha, rate=beta) over a Poisson rate."""

    alpha: float | np.ndarray
    beta: float | np.ndarray

    def __post_init__(self):
        _check_positive("Gamma alpha", self.alpha)
        _check_positive("Gamma beta", self.beta)


SecondOrderParams = Union[Dirichlet, NIG, GammaPrior]


def beta(a, b) -> Dirichlet:
    """Beta(a, b) on theta = P(y=1), as a two-class Dirichlet."""
    return Dirichlet(np.stack([_arr(b), _arr(a)], axis=-1))


# -- predictive distributions -------------------------------------------------


@dataclass(frozen=True)
class StudentT:
    loc: float | np.ndarray
    scale2: float | np.ndarray
    df: float | np.ndarray

    def __post_init__(self):
        _check_positive("Student-t scale2", self.scale2)
        _check_positive("Student-t df", self.df)

    def nll(self, y):
        y = _arr(y)
        df, s2 = _arr(self.df), _arr(self.scale2)
        z2 = (y - self.loc) ** 2 / s2
        out = (
            _sp.gammaln(0.5 * df)
            - _sp.gammaln(0.5 * (df + 1.0))
            + 0.5 * np.log(math.pi * df * s2)
            + 0.5 * (df + 1.0) * np.log1p(z2 / df)
        )
        return _ret(out)

    def entropy(self):
        df, s2 = _arr(self.df), _arr(self.scale2)
        h = (
            0.5 * (df + 1.0) * (digamma(0.5 * (df + 1.0)) - digamma(0.5 * df))
            + 0.5 * np.log(df * s2)
            + _sp.betaln(0.5 * df, 0.5)
        )
        return _ret(h)


@dataclass(frozen=True)
class NegBinomial:
    """Number of failures before the r-th success, success probability p."""

    r: float | np.ndarray
    p: float | np.ndarray

    def __post_init__(self):
        _check_positive("negative binomial r", self.r)
        p = _arr(self.p)
        if not np.all((p > 0) & (p < 1)):
            raise DomainError(f"negative binomial p must lie in (0, 1), got {self.p!r}")

    def logpmf(self, k):
        k = family._count(k)
        r, p = _arr(self.r), _arr(self.p)
        out = (
            _sp.gammaln(k + r) - _sp.gammaln(k + 1.0) - _sp.gammaln(r)
            + r * np.log(p) + k * np.log1p(-p)
        )
        return _ret(out)

    def entropy(self, tail: float = 1e-14) -> float:
        r, p = float(self.r), float(self.p)
        mean = r * (1 - p) / p
        sd = math.sqrt(r * (1 - p)) / p
        kmax = int(mean + 40.0 * sd + 100.0)
        k = np.arange(kmax + 1, dtype=float)
        lp = np.asarray(self.logpmf(k))
        return float(-np.sum(np.exp(lp) * lp))


PredictiveDist = Union[Categorical, StudentT, NegBinomial]


def predictive(m: SecondOrderParams) -> PredictiveDist:
    """Marginal of y after integrating theta out."""
    if isinstance(m, Dirichlet):
        return Categorical(m.m / m.m.sum(axis=-1, keepdims=True))
    if isinstance(m, NIG):
        a, b, nu = _arr(m.alpha), _arr(m.beta), _arr(m.nu)
        return StudentT(m.gamma, b * (1.0 + nu) / (nu * a), 2.0 * a)
    if isinstance(m, GammaPrior):
        b = _arr(m.beta)
        return NegBinomial(m.alpha, b / (b + 1.0))
    raise VariantError(f"unsupported second-order params {type(m).__name__}")


def gamma_from_negbinomial(nb: NegBinomial) -> GammaPrior:
    """Inverse of the Gamma -> negative-binomial predictive map."""
    p = _arr(nb.p)
    return GammaPrior(nb.r, p / (1.0 - p))


# -- losses -------------------------------------------------------------------


def predictive_nll(m: SecondOrderParams, y):
    """-log of the predictive density / pmf at y."""
    if isinstance(m, Dirichlet):
        y = family._class_index(y, m.k)
        my = np.take_along_axis(m.m, np.broadcast_to(y, m.m.shape[:-1])[..., None], axis=-1)[..., 0]
        return _ret(np.log(m.m0) - np.log(my))
    if isinstance(m, NIG):
        return predictive(m).nll(y)
    if isinstance(m, GammaPrior):
        return _ret(-_arr(predictive(m).logpmf(y)))
    raise VariantError(f"unsupported second-order params {type(m).__name__}")


def expected_nll(m: SecondOrderParams, y):
    """-E_{theta ~ p(theta|m)} log p(y | theta), in closed form."""
    if isinstance(m, Dirichlet):
        y = family._class_index(y, m.k)
        my = np.take_along_axis(m.m, np.broadcast_to(y, m.m.shape[:-1])[..., None], axis=-1)[..., 0]
        return _ret(digamma(m.m0) - digamma(my))
    if isinstance(m, NIG):
        y = _arr(y)
        a, b, nu = _arr(m.alpha), _arr(m.beta), _arr(m.nu)
        return _ret(0.5 * ((a / b) * (y - m.gamma) ** 2 + 1.0 / nu - digamma(a) + np.log(b) + LOG_2PI))
    if isinstance(m, GammaPrior):
        y = family._count(y)
        a, b = _arr(m.alpha), _arr(m.beta)
        return _ret(-((digamma(a) - np.log(b)) * y - a / b - _sp.gammaln(y + 1.0)))
    raise VariantError(f"unsupported second-order params {type(m).__name__}")


# -- densities, entropies, divergences ----------------------------------------


def log_density(m: SecondOrderParams, theta: family.FirstOrderParams):
    """log p(theta | m); -inf outside the support."""
    if isinstance(m, Dirichlet):
        if isinstance(theta, Bernoulli):
            t = _arr(theta.theta)
            vec = np.stack([1.0 - t, t], axis=-1)
        elif isinstance(theta, Categorical):
            vec = theta.theta
        else:
            raise VariantError("Dirichlet density needs Bernoulli or Categorical theta")
        if vec.shape[-1] != m.k:
            raise VariantError(f"theta has {vec.shape[-1]} classes, Dirichlet has {m.k}")
        lnb = np.sum(_sp.gammaln(m.m), axis=-1) - _sp.gammaln(m.m0)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.sum((m.m - 1.0) * np.log(vec), axis=-1) - lnb
        return _ret(out)
    if isinstance(m, NIG):
        if not isinstance(theta, Gaussian):
            raise VariantError("NIG density needs Gaussian theta")
        a, b, nu = _arr(m.alpha), _arr(m.beta), _arr(m.nu)
        s2 = _arr(theta.var)
        out = (
            0.5 * np.log(nu) - 0.5 * (LOG_2PI + np.log(s2))
            + a * np.log(b) - _sp.gammaln(a) - (a + 1.0) * np.log(s2)
            - (2.0 * b + nu * (theta.mu - m.gamma) ** 2) / (2.0 * s2)
        )
        return _ret(out)
    if isinstance(m, GammaPrior):
        if not isinstance(theta, Poisson):
            raise VariantError("Gamma density needs Poisson theta")
        a, b = _arr(m.alpha), _arr(m.beta)
        lam = _arr(theta.rate)
        return _ret(a * np.log(b) - _sp.gammaln(a) + (a - 1.0) * np.log(lam) - b * lam)
    raise VariantError(f"unsupported second-order params {type(m).__name__}")


def entropy(m: SecondOrderParams):
    """Differential entropy of p(theta | m)."""
    if isinstance(m, Dirichlet):
        k = m.k
        m0 = m.m0
        lnb = np.sum(_sp.gammaln(m.m), axis=-1) - _sp.gammaln(m0)
        out = lnb + (m0 - k) * digamma(m0) - np.sum((m.m - 1.0) * digamma(m.m), axis=-1)
        return _ret(out)
    if isinstance(m, NIG):
        a, b, nu = _arr(m.alpha), _arr(m.beta), _arr(m.nu)
        out = (
            0.5 + 0.5 * LOG_2PI + 1.5 * np.log(b) + _sp.gammaln(a)
            - 0.5 * np.log(nu) + a - (a + 1.5) * digamma(a)
        )
        return _ret(out)
    if isinstance(m, GammaPrior):
        a, b = _arr(m.alpha), _arr(m.beta)
        return _ret(a - np.log(b) + _sp.gammaln(a) + (1.0 - a) * digamma(a))
    raise VariantError(f"unsupported second-order params {type(m).__name__}")


def _gamma_kl(a1, b1, a2, b2):
    # Gamma(shape, rate); also the inverse-gamma KL since KL is reparametrisation invariant
    return (
        (a1 - a2) * digamma(a1) - _sp.gammaln(a1) + _sp.gammaln(a2)
        + a2 * (np.log(b1) - np.log(b2)) + a1 * (b2 - b1) / b1
    )


def kl(m: SecondOrderParams, m0: SecondOrderParams):
    """KL(p(.|m) || p(.|m0))."""
    if type(m) is not type(m0):
        raise VariantError(f"KL between {type(m).__name__} and {type(m0).__name__}")
    if isinstance(m, Dirichlet):
        if m.k != m0.k:
            raise VariantError("KL between Dirichlets of different K")
        a, b = m.m, m0.m
        a0, b0 = a.sum(axis=-1), b.sum(axis=-1)
        out = (
            _sp.gammaln(a0) - np.sum(_sp.gammaln(a), axis=-1)
            - _sp.gammaln(b0) + np.sum(_sp.gammaln(b), axis=-1)
            + np.sum((a - b) * (digamma(a) - np.asarray(digamma(a0))[..., None]), axis=-1)
        )
    elif isinstance(m, NIG):
        a1, b1, n1 = _arr(m.alpha), _arr(m.beta), _arr(m.nu)
        a2, b2, n2 = _arr(m0.alpha), _arr(m0.beta), _arr(m0.nu)
        d = _arr(m.gamma) - _arr(m0.gamma)
        normal_part = 0.5 * (n2 / n1 - 1.0 + np.log(n1 / n2) + n2 * d * d * a1 / b1)
        out = _gamma_kl(a1, b1, a2, b2) + normal_part
    else:
        out = _gamma_kl(_arr(m.alpha), _arr(m.beta), _arr(m0.alpha), _arr(m0.beta))
    return _ret(np.maximum(out, 0.0))


# -- sampling -----------------------------------------------------------------


def sample(m: SecondOrderParams, rng: np.random.Generator, size: Optional[int] = None):
    """Draw theta ~ p(theta | m) for scalar-parameter m.

    With ``size`` the returned first-order params hold arrays of draws.
    """
    if isinstance(m, Dirichlet):
        if m.m.ndim != 1:
            raise DomainError("sample expects a single Dirichlet parameter vector")
        g = rng.gamma(m.m, size=(size,) + m.m.shape if size is not None else m.m.shape)
        theta = g / g.sum(axis=-1, keepdims=True)
        if m.k == 2:
            return Bernoulli(np.clip(theta[..., 1], 1e-300, 1 - 1e-16))
        return Categorical(theta / theta.sum(axis=-1, keepdims=True))
    if isinstance(m, NIG):
        precision = rng.gamma(m.alpha, 1.0 / m.beta, size=size)
        var = 1.0 / precision
        mu = m.gamma + np.sqrt(var / m.nu) * rng.standard_normal(size=size)
        return Gaussian(mu, var)
    if isinstance(m, GammaPrior):
        return Poisson(rng.gamma(m.alpha, 1.0 / m.beta, size=size))
    raise VariantError(f"unsupported second-order params {type(m).__name__}")


# -- one-dimensional marginals, quantiles --------------------------------------


@dataclass(frozen=True)
class _BetaMarginal:
    a: float
    b: float
    lo: float = 0.0
    hi: float = 1.0

    def cdf(self, t: float) -> float:
        if t <= 0.0:
            return 0.0
        if t >= 1.0:
            return 1.0
        return reg_inc_beta(self.a, self.b, t)

    @property
    def mean(self) -> float:
        return self.a / (self.a + self.b)

    def partial_mean(self, t: float) -> float:
        """E[X; X <= t]."""
        if t <= 0.0:
            return 0.0
        if t >= 1.0:
            return self.mean
        return self.mean * reg_inc_beta(self.a + 1.0, self.b, t)


@dataclass(frozen=True)
class _NormalMarginal:
    mu: float
    var: float

    @property
    def lo(self) -> float:
        return self.mu - 40.0 * math.sqrt(self.var)

    @property
    def hi(self) -> float:
        return self.mu + 40.0 * math.sqrt(self.var)

    def cdf(self, t: float) -> float:
        return 0.5 * math.erfc(-(t - self.mu) / math.sqrt(2.0 * self.var))

    @property
    def mean(self) -> float:
        return self.mu

    def partial_mean(self, t: float) -> float:
        s = math.sqrt(self.var)
        z = (t - self.mu) / s
        phi = math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
        return self.mu * self.cdf(t) - s * phi


@dataclass(frozen=True)
class _InvGammaMarginal:
    a: float
    b: float
    lo: float = 0.0

    @property
    def hi(self) -> float:
        return max(1.0, self.b / max(self.a - 1.0, 1e-3)) * 10.0

    def cdf(self, t: float) -> float:
        if t <= 0.0:
            return 0.0
        return reg_inc_gamma_upper(self.a, self.b / t)

    @property
    def mean(self) -> float:
        return self.b / (self.a - 1.0) if self.a > 1.0 else math.inf

    def partial_mean(self, t: float) -> float:
        if t <= 0.0:
            return 0.0
        if self.a <= 1.0:
            raise DomainError("inverse-gamma partial mean needs alpha > 1")
        return self.mean * reg_inc_gamma_upper(self.a - 1.0, self.b / t)


@dataclass(frozen=True)
class _GammaMarginal:
    a: float
    b: float
    lo: float = 0.0

    @property
    def hi(self) -> float:
        return 10.0 * (self.a + 1.0) / self.b

    def cdf(self, t: float) -> float:
        if t <= 0.0:
            return 0.0
        return reg_inc_gamma_lower(self.a, self.b * t)

    @property
    def mean(self) -> float:
        return self.a / self.b

    def partial_mean(self, t: float) -> float:
        if t <= 0.0:
            return 0.0
        return self.mean * reg_inc_gamma_lower(self.a + 1.0, self.b * t)


COMPONENTS = {Dirichlet: ("theta",), NIG: ("mu", "sigma2"), GammaPrior: ("rate",)}


def marginal(m: SecondOrderParams, component: str):
    """One-dimensional marginal used for bands and Wasserstein distances.

    ``theta`` is P(y=1) under a two-class Dirichlet. For NIG, ``mu`` uses the
    normal approximation N(gamma, beta / ((alpha - 1) nu)) and ``sigma2`` the exact
    inverse-gamma marginal.
    """
    if component not in COMPONENTS.get(type(m), ()):
        raise VariantError(f"component {component!r} not available for {type(m).__name__}")
    if isinstance(m, Dirichlet):
        if m.k != 2 or m.m.ndim != 1:
            raise VariantError("theta marginal needs a single two-class Dirichlet")
        return _BetaMarginal(float(m.m[1]), float(m.m[0]))
    if isinstance(m, NIG):
        if component == "mu":
            return _NormalMarginal(float(m.gamma), float(var_mu(m)))
        return _InvGammaMarginal(float(m.alpha), float(m.beta))
    return _GammaMarginal(float(m.alpha), float(m.beta))


def cdf(m: SecondOrderParams, component: str, t: float) -> float:
    return marginal(m, component).cdf(t)


def quantile(m: SecondOrderParams, component: str, p: float) -> float:
    marg = marginal(m, component)
    return inverse_cdf_bisect(marg.cdf, p, marg.lo, marg.hi)


# -- epistemic uncertainty ----------------------------------------------------


def var_mu(m: NIG):
    a = _arr(m.alpha)
    if np.any(a <= 1.0):
        raise DomainError("Var(mu) needs alpha > 1")
    return _ret(_arr(m.beta) / ((a - 1.0) * _arr(m.nu)))


@dataclass(frozen=True)
class EpistemicMeasures:
    pseudo_counts: float
    mutual_information: Optional[float]
    entropy: float
    var_mu: Optional[float] = None


def mutual_information(m: SecondOrderParams) -> float:
    """Entropy of the predictive minus the expected first-order entropy."""
    if isinstance(m, Dirichlet):
        p = m.m / m.m0
        h_pred = -np.sum(p * np.log(p))
        return float(h_pred + np.sum(p * (digamma(m.m + 1.0) - digamma(m.m0 + 1.0))))
    if isinstance(m, NIG):
        a, b = float(m.alpha), float(m.beta)
        expected_h = 0.5 * (1.0 + LOG_2PI) + 0.5 * (math.log(b) - float(digamma(a)))
        return float(predictive(m).entropy() - expected_h)
    if isinstance(m, GammaPrior):
        from scipy import integrate

        a, b = float(m.alpha), float(m.beta)
        dens = lambda lam: math.exp(a * math.log(b) - math.lgamma(a) + (a - 1) * math.log(lam) - b * lam)
        expected_h, _ = integrate.quad(
            lambda lam: dens(lam) * family._poisson_entropy(lam), 0.0, np.inf, limit=200
        )
        return float(predictive(m).entropy() - expected_h)
    raise VariantError(f"unsupported second-order params {type(m).__name__}")


def epistemic_measures(m: SecondOrderParams) -> EpistemicMeasures:
    if isinstance(m, Dirichlet):
        return EpistemicMeasures(float(m.m0), mutual_information(m), float(entropy(m)))
    if isinstance(m, NIG):
        vm = float(var_mu(m)) if float(m.alpha) > 1.0 else None
        return EpistemicMeasures(float(m.nu), mutual_information(m), float(entropy(m)), vm)
    if isinstance(m, GammaPrior):
        return EpistemicMeasures(float(m.beta), mutual_information(m), float(entropy(m)))
    raise VariantError(f"unsupported second-order params {type(m).__name__}")
