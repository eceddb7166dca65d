"""Independent numerical oracles for the closed forms, gradients and optimizer.

``run_oracles(seed)`` checks every analytic formula against an estimate computed
a different way (Monte Carlo, quadrature, finite differences, a scalar
re-implementation of Adam, the DKW bound) and reports the measured errors. A
deliberately wrong Dirichlet entropy is included as a mutant that the entropy
oracle has to reject.

Run as ``python -m evidential.oracles [--seed S] [--json PATH]``.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from . import family, nn, reference, train
from . import second_order as so
from .specfun import digamma, ln_gamma

FAMILIES = ("dirichlet", "nig", "gamma")
Z_LIMIT = 3.0


# -- random configurations -----------------------------------------------------------


def random_params(fam: str, rng: np.random.Generator) -> so.SecondOrderParams:
    if fam == "dirichlet":
        return so.Dirichlet(np.exp(rng.uniform(-1.0, 3.0, rng.integers(2, 5))))
    if fam == "nig":
        nu, beta = np.exp(rng.uniform(-1.5, 1.5, 2))
        return so.NIG(rng.normal(), nu, 1.0 + math.exp(rng.uniform(-1.0, 2.0)), beta)
    if fam == "gamma":
        a, b = np.exp(rng.uniform(-1.0, 2.0, 2))
        return so.GammaPrior(a, b)
    raise ValueError(f"unknown family {fam!r}")


def random_outcome(m: so.SecondOrderParams, rng: np.random.Generator):
    if isinstance(m, so.Dirichlet):
        return int(rng.integers(0, m.k))
    if isinstance(m, so.NIG):
        st = so.predictive(m)
        return float(st.loc + math.sqrt(st.scale2) * rng.normal())
    return int(rng.poisson(m.alpha / m.beta))


# -- Monte Carlo estimators ----------------------------------------------------------------


def _mean_se(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def mc_expected_nll(m, y, rng, n: int) -> tuple[float, float]:
    return _mean_se(family.nll(so.sample(m, rng, n), y))


def mc_predictive_nll(m, y, rng, n: int) -> tuple[float, float]:
    """-log of the MC mean likelihood with a delta-method standard error."""
    lik = np.exp(-family.nll(so.sample(m, rng, n), y))
    mean, se = _mean_se(lik)
    return -math.log(mean), se / mean


def mc_entropy(m, rng, n: int) -> tuple[float, float]:
    return _mean_se(-so.log_density(m, so.sample(m, rng, n)))


def mc_kl(m, m0, rng, n: int) -> tuple[float, float]:
    draws = so.sample(m, rng, n)
    return _mean_se(so.log_density(m, draws) - so.log_density(m0, draws))


def z_score(closed: float, estimate: float, se: float) -> float:
    if se == 0:
        return 0.0 if closed == estimate else math.inf
    return abs(closed - estimate) / se


def dirichlet_entropy_mutant(m: so.Dirichlet) -> float:
    """Dirichlet entropy with (m_k - K) in place of (m_k - 1); known to be wrong."""
    a = m.m
    k, a0 = a.size, a.sum()
    lnb = float(np.sum(ln_gamma(a)) - ln_gamma(a0))
    return lnb + (a0 - k) * float(digamma(a0)) - float(np.sum((a - k) * digamma(a)))


# -- gradients --------------------------------------------------------------------------------

GRADIENT_CASES = [
    (train.LossSpec("first_order"), "bernoulli"),
    (train.LossSpec("first_order"), "gaussian"),
    *[(train.LossSpec(kind, reg, 0.3 if reg != "none" else 0.0), head)
      for kind in ("inner", "outer") for reg in ("none", "neg_entropy") for head in ("beta", "nig", "gamma")],
    (train.LossSpec("outer", "kl", 0.3, so.Dirichlet([1.0, 1.0])), "beta"),
    (train.LossSpec("outer", "kl", 0.3, so.NIG(0.0, 1.0, 2.0, 1.0)), "nig"),
    (train.LossSpec("inner", "kl", 0.3, so.GammaPrior(1.0, 1.0)), "gamma"),
]


def _random_targets(head: str, n: int, rng):
    if head in ("bernoulli", "beta"):
        return rng.integers(0, 2, n)
    if head == "gamma":
        return rng.poisson(2.0, n)
    return rng.normal(0.0, 1.5, n)


def gradient_check(spec: train.LossSpec, head: str, rng, hidden=(5,), n_data: int = 4, h: float = 1e-6) -> float:
    """Relative error ||g - g_fd|| / max(||g||, ||g_fd||) at one random point."""
    cfg = nn.MlpConfig(1, hidden, "tanh", head)
    params = nn.init(cfg, int(rng.integers(2**31))) + rng.normal(0.0, 0.2, cfg.n_params)
    xs = rng.uniform(-1.5, 1.5, n_data)
    ys = _random_targets(head, n_data, rng)
    g = train.batch_loss(spec, params, cfg, xs, ys).grad
    fd = np.empty_like(params)
    for i in range(params.size):
        e = np.zeros_like(params)
        e[i] = h
        fd[i] = (train.batch_loss(spec, params + e, cfg, xs, ys).value
                 - train.batch_loss(spec, params - e, cfg, xs, ys).value) / (2 * h)
    scale = max(np.linalg.norm(g), np.linalg.norm(fd), 1e-12)
    return float(np.linalg.norm(g - fd) / scale)


# -- Adam ----------------------------------------------------------------------------------------


def scalar_adam(params, grad_fn: Callable, steps: int, lr: float, beta1=0.9, beta2=0.999, eps=1e-8) -> list[float]:
    """Coordinate-wise Adam on python floats, written independently of train.adam_step."""
    p = [float(v) for v in params]
    m = [0.0] * len(p)
    v = [0.0] * len(p)
    for t in range(1, steps + 1):
        g = [float(x) for x in grad_fn(np.array(p))]
        for i in range(len(p)):
            m[i] = beta1 * m[i] + (1 - beta1) * g[i]
            v[i] = beta2 * v[i] + (1 - beta2) * g[i] ** 2
            mh = m[i] / (1 - beta1**t)
            vh = v[i] / (1 - beta2**t)
            p[i] -= lr * mh / (math.sqrt(vh) + eps)
    return p


def adam_discrepancy(rng, steps: int = 100, dim: int = 6) -> float:
    a = rng.normal(size=(dim, dim))
    a = a @ a.T + np.eye(dim)
    b = rng.normal(size=dim)

    def grad_fn(p):
        return a @ p - b

    start = rng.normal(size=dim)
    p, state = start.copy(), train.AdamState.zeros(dim)
    for _ in range(steps):
        p, state = train.adam_step(state, p, grad_fn(p), 0.01)
    return float(np.max(np.abs(p - np.array(scalar_adam(start, grad_fn, steps, 0.01)))))


# -- empirical CDF ------------------------------------------------------------------------------


def dkw_epsilon(n: int, alpha: float = 1e-3) -> float:
    """Sup-norm radius that |F_n - F| stays within with probability 1 - alpha."""
    return math.sqrt(math.log(2.0 / alpha) / (2.0 * n))


def empirical_cdf_sup_error(rng, n: int = 20_000) -> float:
    m = so.beta(2.0, 5.0)
    draws = np.sort(so.sample(m, rng, n).theta)
    est = reference.ReferenceEstimate(np.array([0.0]), {"theta": draws[None, :]}, n, "synthetic", 0, "fresh")
    cdf = so.marginal(m, "theta").cdf
    f = np.array([cdf(x) for x in draws])
    i = np.arange(1, n + 1)
    # the reference's own empirical CDF must agree with the order statistics
    for j in (0, n // 2, n - 1):
        if reference.empirical_cdf(est, 0, draws[j], "theta") != (j + 1) / n:
            return math.inf
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))


# -- convexity ---------------------------------------------------------------------------------


def segment_convexity_gap(f: Callable, a: np.ndarray, b: np.ndarray, ts=np.linspace(0.1, 0.9, 9)) -> float:
    """max_t f((1-t)a + tb) - ((1-t)f(a) + t f(b)); positive means non-convex on the segment."""
    fa, fb = f(a), f(b)
    return max(f((1 - t) * a + t * b) - ((1 - t) * fa + t * fb) for t in ts)


# -- report --------------------------------------------------------------------------------------


@dataclass
class OracleResult:
    name: str
    passed: bool
    measured: float
    tolerance: float
    detail: str = ""


@dataclass
class OracleReport:
    seed: int
    results: list[OracleResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def failures(self) -> list[str]:
        return [r.name for r in self.results if not r.passed]

    def to_text(self) -> str:
        lines = [
            f"{'PASS' if r.passed else 'FAIL'}  {r.name}: measured {r.measured:.3g} (limit {r.tolerance:.3g})"
            + (f"  {r.detail}" if r.detail else "")
            for r in self.results
        ]
        lines.append(f"{sum(r.passed for r in self.results)}/{len(self.results)} oracles passed")
        return "\n".join(lines)

    def to_json(self) -> str:
        return json.dumps({"seed": self.seed, "passed": self.passed, "results": [asdict(r) for r in self.results]},
                          indent=2)


def _zcheck(report, name, closed, est, se, limit=Z_LIMIT, detail=""):
    z = z_score(closed, est, se)
    report.results.append(OracleResult(name, bool(z <= limit), z, limit, detail))


def run_oracles(seed: int = 0, n_configs: int = 3, mc_draws: int = 100_000) -> OracleReport:
    rng = np.random.default_rng(seed)
    report = OracleReport(seed)

    for fam in FAMILIES:
        for c in range(n_configs):
            m = random_params(fam, rng)
            y = random_outcome(m, rng)
            est, se = mc_expected_nll(m, y, rng, mc_draws)
            _zcheck(report, f"expected_nll_mc[{fam}#{c}]", so.expected_nll(m, y), est, se)
            est, se = mc_predictive_nll(m, y, rng, mc_draws)
            _zcheck(report, f"predictive_nll_mc[{fam}#{c}]", so.predictive_nll(m, y), est, se)
            est, se = mc_entropy(m, rng, mc_draws)
            _zcheck(report, f"entropy_mc[{fam}#{c}]", so.entropy(m), est, se)
            m0 = random_params(fam, rng)
            if fam == "dirichlet":
                m0 = so.Dirichlet(np.exp(rng.uniform(-1.0, 2.0, m.k)))
            est, se = mc_kl(m, m0, rng, mc_draws)
            _zcheck(report, f"kl_mc[{fam}#{c}]", so.kl(m, m0), est, se)

    # entropy by quadrature for the one-dimensional families
    for name, m, comp in [("beta", so.beta(2.0, 5.0), "theta"), ("gamma", so.GammaPrior(2.5, 1.5), "rate")]:
        marg = so.marginal(m, comp)

        def integrand(t, m=m, comp=comp):
            draw = family.Bernoulli(t) if comp == "theta" else family.Poisson(t)
            lp = so.log_density(m, draw)
            return -lp * math.exp(lp)

        h, _ = integrate.quad(integrand, marg.lo if comp == "theta" else 0.0, marg.hi, limit=200)
        err = abs(h - so.entropy(m))
        report.results.append(OracleResult(f"entropy_quadrature[{name}]", err <= 1e-8, err, 1e-8))

    # mutant: the (m_k - K) variant has to be rejected by the same MC oracle
    m = so.Dirichlet([2.0, 6.0, 3.0])
    est, se = mc_entropy(m, rng, mc_draws)
    z_true = z_score(so.entropy(m), est, se)
    z_mut = z_score(dirichlet_entropy_mutant(m), est, se)
    report.results.append(OracleResult(
        "entropy_mutant_rejected", bool(z_mut > Z_LIMIT and z_true <= Z_LIMIT), z_mut, Z_LIMIT,
        f"mutant z={z_mut:.1f}, correct z={z_true:.2f}",
    ))

    for spec, head in GRADIENT_CASES:
        err = max(gradient_check(spec, head, rng) for _ in range(2))
        report.results.append(OracleResult(f"gradient_fd[{spec.label}/{head}]", err <= 1e-4, err, 1e-4))

    d = adam_discrepancy(rng)
    report.results.append(OracleResult("adam_dual_implementation", d <= 1e-12, d, 1e-12))

    n = 20_000
    sup = empirical_cdf_sup_error(rng, n)
    report.results.append(OracleResult("glivenko_cantelli_dkw", sup <= dkw_epsilon(n), sup, dkw_epsilon(n)))
    return report


def main(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(prog="evidential-oracles", description="run the numerical oracles")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--json", help="also write the report as JSON to this path")
    args = parser.parse_args(argv)
    report = run_oracles(args.seed)
    print(report.to_text())
    if args.json:
        with open(args.json, "w") as f:
            f.write(report.to_json() + "\n")
    if not report.passed:
        print("failed: " + ", ".join(report.failures()), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
