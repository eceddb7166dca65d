import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from evidential import evaluation as ev
from evidential import second_order as so
from evidential.reference import ReferenceEstimate


def _quad_w1(samples, marg, lo, hi):
    """Independent W1: adaptive quadrature of |F_emp - F| between sample breakpoints."""
    s = np.sort(samples)
    edges = [lo, *s, hi]
    total = 0.0
    for i in range(len(edges) - 1):
        c = i / s.size
        val, _ = integrate.quad(lambda t: abs(c - marg.cdf(t)), edges[i], edges[i + 1], limit=200, epsabs=1e-12)
        total += val
    return total


@pytest.mark.parametrize(
    "model,comp,lo,hi",
    [
        (so.beta(2.0, 5.0), "theta", 0.0, 1.0),
        (so.NIG(0.3, 2.0, 3.0, 1.5), "mu", -np.inf, np.inf),
        (so.NIG(0.3, 2.0, 3.0, 1.5), "sigma2", 0.0, np.inf),
        (so.GammaPrior(2.5, 1.5), "rate", 0.0, np.inf),
    ],
)
def test_w1_against_quadrature(model, comp, lo, hi, rng):
    marg = so.marginal(model, comp)
    samples = np.array([so.inverse_cdf_bisect(marg.cdf, p, marg.lo, marg.hi) for p in rng.uniform(0.02, 0.98, 25)])
    samples += rng.normal(0, 0.05 * np.std(samples), samples.size)
    if comp != "mu":
        samples = np.abs(samples)
    if comp == "theta":
        samples = np.clip(samples, 1e-3, 1 - 1e-3)
    assert ev.wasserstein1(samples, model, comp) == pytest.approx(_quad_w1(samples, marg, lo, hi), abs=1e-7)


def test_w1_point_mass_limit():
    assert ev.wasserstein1(np.full(30, 0.5), so.beta(1e6, 1e6)) <= 1e-3


def test_w1_degenerate_translation():
    assert ev.wasserstein1([0.2], [0.7]) == pytest.approx(0.5, abs=1e-15)
    assert ev.wasserstein1_empirical([3.0, 3.0], [1.0]) == pytest.approx(2.0, abs=1e-15)


def test_w1_uniform_samples_vs_uniform_beta(rng):
    assert ev.wasserstein1(rng.random(100_000), so.beta(1.0, 1.0)) <= 0.01


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=12),
       st.lists(st.floats(-50, 50), min_size=1, max_size=12),
       st.lists(st.floats(-50, 50), min_size=1, max_size=12))
def test_w1_triangle_inequality(a, b, c):
    ab, bc, ac = ev.wasserstein1_empirical(a, b), ev.wasserstein1_empirical(b, c), ev.wasserstein1_empirical(a, c)
    assert ab + bc - ac >= -1e-10
    assert ab >= 0 and ev.wasserstein1_empirical(a, a) == 0.0


def test_w1_permutation_invariant(rng):
    s = rng.beta(2, 3, 40)
    m = so.beta(3.0, 2.0)
    assert ev.wasserstein1(s, m) == ev.wasserstein1(rng.permutation(s), m)


def test_model_band_examples():
    lo, hi = ev.model_band(so.beta(1.0, 1.0))
    assert lo == pytest.approx(0.025, abs=1e-9) and hi == pytest.approx(0.975, abs=1e-9)
    m = so.NIG(1.3, 2.0, 3.0, 4.0)
    lo, hi = ev.model_band(m, component="mu")
    assert (lo + hi) / 2 == pytest.approx(1.3, abs=1e-9)
    for comp, model in (("sigma2", m), ("rate", so.GammaPrior(2.0, 3.0)), ("theta", so.beta(2.0, 9.0))):
        lo, hi = ev.model_band(model, component=comp)
        assert so.cdf(model, comp, lo) == pytest.approx(0.025, abs=1e-9)
        assert so.cdf(model, comp, hi) == pytest.approx(0.975, abs=1e-9)


def _reference(rng, n_grid=12, d=30):
    grid = np.linspace(0, 1, n_grid)
    centers = 0.5 + 0.3 * np.sin(3 * grid)
    samples = np.sort(np.clip(centers[:, None] + rng.normal(0, 0.04, (n_grid, d)), 1e-3, 1 - 1e-3), axis=1)
    return ReferenceEstimate(grid, {"theta": samples}, 100, "cls_sine", 0)


def test_faithfulness_sweep(tmp_path, rng):
    ref = _reference(rng)
    n = ref.grid.size
    sharp = so.Dirichlet(np.stack([np.full(n, 1e4), np.full(n, 1e4)], axis=1))
    wide = so.Dirichlet(np.ones((n, 2)))
    preds = {("outer", 0.1): wide, ("outer", 0.0): sharp, ("inner", 0.0): None}
    report = ev.faithfulness_sweep(ref, preds, (0.0, 0.5))
    assert report.missing == [("inner", 0.0)]
    lams = [r["lambda"] for r in report.rows if r["loss_kind"] == "outer"]
    assert lams == sorted(lams)
    assert all(np.isfinite(r["w1"]) and r["w1"] >= 0 for r in report.rows)
    base = report.baseline("theta")
    for lam in (0.0, 0.1):
        assert np.mean(report.w1("outer", lam, "theta") > base) >= 0.8
    report.to_csv(tmp_path / "r.csv")
    with open(tmp_path / "r.csv") as f:
        assert next(csv.reader(f)) == ["x", "lambda", "loss_kind", "component", "w1"]
    report.to_json(tmp_path / "r.json")
    summary = json.loads((tmp_path / "r.json").read_text())
    assert summary["missing"] == [["inner", 0.0]]
    assert {m["lambda"] for m in summary["models"]} == {0.0, 0.1}


def test_moment_fit_matches_sample_moments(rng):
    s = rng.beta(4, 7, 200)
    m = ev.moment_fit(s, "theta")
    marg = so.marginal(m, "theta")
    assert marg.mean == pytest.approx(s.mean(), rel=1e-9)
    for comp, data in (("mu", rng.normal(2, 0.5, 200)), ("sigma2", rng.gamma(5, 1, 200))):
        fit = so.marginal(ev.moment_fit(data, comp), comp)
        assert fit.mean == pytest.approx(data.mean(), rel=1e-9)


def test_band_table_rows(rng):
    ref = _reference(rng, n_grid=4, d=40)
    n = 4
    pred = so.Dirichlet(np.stack([np.full(n, 3.0), np.full(n, 5.0)], axis=1))
    rows = ev.band_table(ref, pred, np.full(4, 0.6), "theta")
    assert len(rows) == 4
    for r in rows:
        assert r["ref_lo"] <= r["ref_mean"] <= r["ref_hi"]
        assert r["model_lo"] < r["model_mean"] < r["model_hi"]
        assert r["model_mean"] == pytest.approx(5 / 8)
    assert "model_mean" not in ev.band_table(ref, None, np.zeros(4), "theta")[0]
