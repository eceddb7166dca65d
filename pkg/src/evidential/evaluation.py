"""Faithfulness metrics: Wasserstein-1 distances and confidence bands.

W1 between an empirical sample set and a model marginal is the exact integral of
|F_emp - F_model| over the real line. Between breakpoints of the step function the
integral is evaluated in closed form from the model CDF F and the partial mean
PE(t) = E[X; X <= t] via G(t) = t F(t) - PE(t) = integral of F up to t; a bisection
for F(t*) = c is only needed where the model CDF crosses the step level.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from . import second_order as so
from .reference import ReferenceEstimate, nearest_rank
from .specfun import inverse_cdf_bisect


def wasserstein1_empirical(a, b) -> float:
    """W1 between two empirical distributions (merge of the sorted samples)."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise ValueError("empty sample set")
    pts = np.concatenate([a, b])
    pts.sort()
    fa = np.searchsorted(a, pts[:-1], side="right") / a.size
    fb = np.searchsorted(b, pts[:-1], side="right") / b.size
    return float(np.sum(np.abs(fa - fb) * np.diff(pts)))


def _w1_marginal(s: np.ndarray, marg) -> float:
    d = s.size
    F = [marg.cdf(t) for t in s]
    G = [t * f - marg.partial_mean(t) for t, f in zip(s, F)]
    total = max(G[0], 0.0)
    for i in range(d - 1):
        a, b = s[i], s[i + 1]
        if b <= a:
            continue
        c = (i + 1) / d
        fa, fb = F[i], F[i + 1]
        ga, gb = G[i], G[i + 1]
        if fb <= c:
            part = c * (b - a) - (gb - ga)
        elif fa >= c:
            part = (gb - ga) - c * (b - a)
        else:
            t = inverse_cdf_bisect(marg.cdf, c, a, b, expand=False)
            gt = t * c - marg.partial_mean(t)
            part = c * (t - a) - (gt - ga) + (gb - gt) - c * (b - t)
        total += max(part, 0.0)
    top = s[-1]
    upper = (marg.mean - marg.partial_mean(top)) - top * (1.0 - F[-1])
    return float(total + max(upper, 0.0))


def wasserstein1(samples, model, component: str = "theta") -> float:
    """W1 between reference samples and a model.

    ``model`` is a scalar :class:`SecondOrderParams` (its ``component`` marginal is
    used) or another array of samples.
    """
    s = np.sort(np.asarray(samples, dtype=float))
    if s.size < 1:
        raise ValueError("need at least one reference sample")
    if isinstance(model, (so.Dirichlet, so.NIG, so.GammaPrior)):
        return _w1_marginal(s, so.marginal(model, component))
    return wasserstein1_empirical(s, model)


def model_band(m: so.SecondOrderParams, levels=(0.025, 0.975), component: str = "theta") -> tuple[float, float]:
    return so.quantile(m, component, levels[0]), so.quantile(m, component, levels[1])


def moment_fit(samples, component: str) -> so.SecondOrderParams:
    """Parametric fit of reference samples by matching mean and variance.

    Gives the self-distance baseline: how close the model family can get to the
    reference at this sample size.
    """
    s = np.asarray(samples, dtype=float)
    mean = float(s.mean())
    var = max(float(s.var(ddof=1)), 1e-12 * max(mean * mean, 1e-12))
    if component == "theta":
        mean = min(max(mean, 1e-9), 1 - 1e-9)
        conc = max(mean * (1 - mean) / var - 1.0, 1e-6)
        return so.beta(mean * conc, (1 - mean) * conc)
    if component == "mu":
        # alpha = 2, nu = 1 so that Var(mu) = beta
        return so.NIG(mean, 1.0, 2.0, var)
    if component == "sigma2":
        a = 2.0 + mean * mean / var
        return so.NIG(0.0, 1.0, a, mean * (a - 1.0))
    raise ValueError(f"unknown component {component!r}")


def _at(pred: so.SecondOrderParams, i: int) -> so.SecondOrderParams:
    if isinstance(pred, so.Dirichlet):
        return so.Dirichlet(pred.m[i])
    if isinstance(pred, so.NIG):
        return so.NIG(*(float(np.asarray(v)[i]) for v in (pred.gamma, pred.nu, pred.alpha, pred.beta)))
    return so.GammaPrior(float(np.asarray(pred.alpha)[i]), float(np.asarray(pred.beta)[i]))


@dataclass
class EvalReport:
    grid: np.ndarray
    data_region: tuple[float, float]
    rows: list[dict] = field(default_factory=list)  # x, lambda, loss_kind, component, w1
    missing: list[tuple[str, float]] = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def w1(self, loss_kind: str, lam: float, component: str) -> np.ndarray:
        return np.array([
            r["w1"] for r in self.rows
            if r["loss_kind"] == loss_kind and r["lambda"] == lam and r["component"] == component
        ])

    def baseline(self, component: str) -> np.ndarray:
        return self.w1("reference_fit", 0.0, component)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["x", "lambda", "loss_kind", "component", "w1"])
            for r in self.rows:
                w.writerow([repr(r["x"]), repr(r["lambda"]), r["loss_kind"], r["component"], repr(r["w1"])])

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.summary, indent=2, sort_keys=True) + "\n")


def faithfulness_sweep(
    reference: ReferenceEstimate,
    predictions: Mapping[tuple[str, float], so.SecondOrderParams | None],
    data_region: tuple[float, float],
) -> EvalReport:
    """W1 per grid point for every (loss label, lambda) model and the moment-fit baseline.

    ``predictions`` maps (loss label, lambda) to array-valued second-order params
    over the reference grid; ``None`` marks a model that is missing and is
    reported rather than failing the sweep.
    """
    grid = reference.grid
    comps = reference.components
    report = EvalReport(grid, data_region)
    in_data = (grid >= data_region[0]) & (grid <= data_region[1])
    for comp in comps:
        for i, x in enumerate(grid):
            s = reference.at(i, comp)
            report.rows.append({
                "x": float(x), "lambda": 0.0, "loss_kind": "reference_fit", "component": comp,
                "w1": wasserstein1(s, moment_fit(s, comp), comp),
            })
    for (label, lam) in sorted(predictions, key=lambda k: (k[0], k[1])):
        pred = predictions[(label, lam)]
        if pred is None:
            report.missing.append((label, lam))
            continue
        for comp in comps:
            for i, x in enumerate(grid):
                report.rows.append({
                    "x": float(x), "lambda": float(lam), "loss_kind": label, "component": comp,
                    "w1": wasserstein1(reference.at(i, comp), _at(pred, i), comp),
                })
    summary = {"data_region": list(data_region), "models": [], "missing": [list(m) for m in report.missing]}
    for comp in comps:
        base = report.baseline(comp)
        summary.setdefault("baseline", {})[comp] = {
            "mean_w1_data": float(base[in_data].mean()),
            "mean_w1_extrapolation": float(base[~in_data].mean()) if np.any(~in_data) else None,
        }
        for (label, lam) in sorted(predictions, key=lambda k: (k[0], k[1])):
            if predictions[(label, lam)] is None:
                continue
            w = report.w1(label, lam, comp)
            summary["models"].append({
                "loss_kind": label, "lambda": lam, "component": comp,
                "mean_w1_data": float(w[in_data].mean()),
                "mean_w1_extrapolation": float(w[~in_data].mean()) if np.any(~in_data) else None,
                "frac_above_baseline": float(np.mean(w > base)),
            })
    report.summary = summary
    return report


def band_table(reference: ReferenceEstimate, prediction: so.SecondOrderParams | None, truth_values, component: str,
               levels=(0.025, 0.975)) -> list[dict]:
    """Rows of x, truth, reference mean/band and (optionally) model mean/band for plotting."""
    rows = []
    for i, x in enumerate(reference.grid):
        s = reference.at(i, component)
        row = {
            "x": float(x), "truth": float(truth_values[i]), "ref_mean": float(s.mean()),
            "ref_lo": nearest_rank(s, levels[0]), "ref_hi": nearest_rank(s, levels[1]),
        }
        if prediction is not None:
            m = _at(prediction, i)
            lo, hi = model_band(m, levels, component)
            row.update(model_mean=so.marginal(m, component).mean, model_lo=lo, model_hi=hi)
        rows.append(row)
    return rows
