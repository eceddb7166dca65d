"""First-order likelihoods p(y | theta) and their entropies.

Parameters may be scalars or numpy arrays of matching shape; the validation and
the formulas broadcast, which is what the training code relies on.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import special as _sp

from .errors import DomainError

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Bernoulli:
    """Probability ``theta`` of outcome 1."""

    theta: float | np.ndarray

    def __post_init__(self):
        t = np.asarray(self.theta, dtype=float)
        if not np.all((t > 0) & (t < 1)):
            raise DomainError(f"Bernoulli theta must lie in (0, 1), got {self.theta!r}")


@dataclass(frozen=True)
class Categorical:
    theta: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.theta, dtype=float)
        object.__setattr__(self, "theta", t)
        if t.shape[-1] < 2:
            raise DomainError("Categorical needs K >= 2 classes")
        if not np.all((t > 0) & (t < 1)):
            raise DomainError("Categorical probabilities must lie in (0, 1)")
        if not np.allclose(t.sum(axis=-1), 1.0, rtol=0, atol=1e-12):
            raise DomainError("Categorical probabilities must sum to 1")


@dataclass(frozen=True)
class Gaussian:
    mu: float | np.ndarray
    var: float | np.ndarray

    def __post_init__(self):
        v = np.asarray(self.var, dtype=float)
        if not np.all(np.isfinite(self.mu)) or not np.all(np.isfinite(v) & (v > 0)):
            raise DomainError(f"Gaussian needs finite mu and var > 0, got ({self.mu!r}, {self.var!r})")


@dataclass(frozen=True)
class Poisson:
    rate: float | np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rate, dtype=float)
        if not np.all(np.isfinite(r) & (r > 0)):
            raise DomainError(f"Poisson rate must be > 0, got {self.rate!r}")


FirstOrderParams = Union[Bernoulli, Categorical, Gaussian, Poisson]


def _class_index(y, k: int) -> np.ndarray:
    y = np.asarray(y)
    if not np.issubdtype(y.dtype, np.integer):
        if not np.all(np.mod(y, 1) == 0):
            raise DomainError(f"class label must be an integer, got {y!r}")
        y = y.astype(int)
    if np.any((y < 0) | (y >= k)):
        raise DomainError(f"class label outside 0..{k - 1}: {y!r}")
    return y


def _count(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if np.any((y < 0) | (np.mod(y, 1) != 0)):
        raise DomainError(f"count outcome must be a non-negative integer, got {y!r}")
    return y


def nll(params: FirstOrderParams, y):
    """-log p(y | theta)."""
    if isinstance(params, Bernoulli):
        y = _class_index(y, 2)
        t = np.asarray(params.theta, dtype=float)
        out = -np.where(y == 1, np.log(t), np.log1p(-t))
    elif isinstance(params, Categorical):
        theta = params.theta
        y = _class_index(y, theta.shape[-1])
        shape = np.broadcast_shapes(y.shape, theta.shape[:-1])
        theta = np.broadcast_to(theta, shape + theta.shape[-1:])
        y = np.broadcast_to(y, shape)
        out = -np.log(np.take_along_axis(theta, y[..., None], axis=-1)[..., 0])
    elif isinstance(params, Gaussian):
        y = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(y)):
            raise DomainError("Gaussian outcome must be finite")
        v = np.asarray(params.var, dtype=float)
        out = 0.5 * (LOG_2PI + np.log(v)) + (y - params.mu) ** 2 / (2.0 * v)
    elif isinstance(params, Poisson):
        y = _count(y)
        lam = np.asarray(params.rate, dtype=float)
        out = lam - y * np.log(lam) + _sp.gammaln(y + 1.0)
    else:
        raise TypeError(f"unsupported first-order params {type(params).__name__}")
    return float(out) if np.ndim(out) == 0 else out


def entropy(params: FirstOrderParams):
    """Shannon entropy (discrete variants) or differential entropy (Gaussian), in nats."""
    if isinstance(params, Bernoulli):
        t = np.asarray(params.theta, dtype=float)
        out = -(t * np.log(t) + (1 - t) * np.log1p(-t))
    elif isinstance(params, Categorical):
        out = -np.sum(params.theta * np.log(params.theta), axis=-1)
    elif isinstance(params, Gaussian):
        out = 0.5 * (LOG_2PI + 1.0 + np.log(np.asarray(params.var, dtype=float)))
    elif isinstance(params, Poisson):
        out = np.vectorize(_poisson_entropy)(np.asarray(params.rate, dtype=float))
    else:
        raise TypeError(f"unsupported first-order params {type(params).__name__}")
    return float(out) if np.ndim(out) == 0 else out


def _poisson_entropy(lam: float) -> float:
    kmax = int(lam + 20.0 * math.sqrt(lam) + 60.0)
    k = np.arange(kmax + 1, dtype=float)
    logp = -lam + k * math.log(lam) - _sp.gammaln(k + 1.0)
    return float(-np.sum(np.exp(logp) * logp))
