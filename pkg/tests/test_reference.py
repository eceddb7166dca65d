import numpy as np
import pytest

from evidential import datagen, nn, reference, train
from evidential.reference import ReferenceEstimate

SMALL = nn.MlpConfig(1, (8,), "tanh", "bernoulli")
FAST = train.TrainConfig(lr=0.05, epochs=200, record_every=200)


def _est(samples):
    s = np.sort(np.asarray(samples, dtype=float))
    return ReferenceEstimate(np.array([0.0]), {"theta": s[None, :]}, 10, "cls_sine", 0)


def test_estimate_deterministic():
    task = datagen.ClsSine()
    grid = datagen.eval_grid(task, 7)
    a = reference.estimate(task, 30, 2, grid, SMALL, FAST, master_seed=5)
    b = reference.estimate(task, 30, 2, grid, SMALL, FAST, master_seed=5)
    assert a.samples["theta"].tobytes() == b.samples["theta"].tobytes()
    assert a.seeds == b.seeds and len(set(a.seeds)) == 2
    assert np.all(np.diff(a.samples["theta"], axis=1) >= 0)


def test_parallel_matches_serial():
    task = datagen.ClsSine()
    grid = datagen.eval_grid(task, 5)
    a = reference.estimate(task, 20, 3, grid, SMALL, train.TrainConfig(lr=0.05, epochs=20, record_every=20), 1)
    b = reference.estimate(task, 20, 3, grid, SMALL, train.TrainConfig(lr=0.05, epochs=20, record_every=20), 1,
                           workers=2)
    assert a.samples["theta"].tobytes() == b.samples["theta"].tobytes()


def test_constant_task_lln():
    task = datagen.ConstBernoulli(0.7)
    cfg = nn.MlpConfig(1, (4,), "tanh", "bernoulli")
    grid = datagen.eval_grid(task, 5)
    est = reference.estimate(task, 10_000, 30, grid, cfg, train.TrainConfig(lr=0.05, epochs=150, record_every=150), 2)
    means = est.samples["theta"].mean(axis=1)
    assert np.all(np.abs(means - 0.7) <= 0.02)


def test_spread_shrinks_with_n():
    task = datagen.ClsSine()
    grid = datagen.eval_grid(task, 21)
    cfg = train.TrainConfig(lr=0.02, epochs=1000, record_every=1000)
    small = reference.estimate(task, 100, 30, grid, SMALL, cfg, 3)
    large = reference.estimate(task, 1000, 30, grid, SMALL, cfg, 3)
    in_data = grid <= task.x_hi
    narrower = large.samples["theta"].std(axis=1) < small.samples["theta"].std(axis=1)
    assert narrower[in_data].mean() >= 0.9


def test_samples_lie_in_parameter_domain():
    task = datagen.RegCubic()
    cfg = nn.MlpConfig(1, (6,), "tanh", "gaussian")
    est = reference.estimate(task, 50, 3, datagen.eval_grid(task, 9), cfg,
                             train.TrainConfig(lr=0.01, epochs=30, record_every=30, y_scale=20.0), 4)
    assert est.components == ("mu", "sigma2")
    assert np.all(est.samples["sigma2"] > 0)


def test_aggregate_permutation_invariant(rng):
    outs = [rng.normal(size=(6, 2)) for _ in range(9)]
    a = reference.aggregate(outs, "gaussian")
    b = reference.aggregate([outs[i] for i in rng.permutation(9)], "gaussian")
    for c in a:
        np.testing.assert_array_equal(a[c], b[c])


def test_empirical_cdf_examples():
    est = _est([0.1, 0.4, 0.2, 0.9, 0.5])
    assert reference.empirical_cdf(est, 0, 0.05) == 0.0
    assert reference.empirical_cdf(est, 0, 0.9) == 1.0
    assert reference.empirical_cdf(est, 0, 0.4) == 3 / 5


def test_band_examples():
    c = _est([0.3] * 30)
    assert reference.band(c, 0)[:2] == (0.3, 0.3)
    est = _est(np.arange(1, 101) / 100)
    b = reference.band(est, 0, (0.025, 0.975))
    assert (b.lo, b.hi) == (0.03, 0.98)
    assert not b.small_sample
    assert reference.band(_est([0.1, 0.2]), 0).small_sample


def test_band_monotone_in_levels(rng):
    est = _est(rng.normal(size=37))
    prev = None
    for lo in (0.45, 0.3, 0.1, 0.05, 0.01):
        b = reference.band(est, 0, (lo, 1 - lo))
        if prev is not None:
            assert b.lo <= prev.lo and b.hi >= prev.hi
        prev = b
    with pytest.raises(ValueError):
        reference.band(est, 0, (0.9, 0.1))


def test_save_load_round_trip(tmp_path):
    task = datagen.ClsSine()
    est = reference.estimate(task, 20, 3, datagen.eval_grid(task, 4), SMALL,
                             train.TrainConfig(lr=0.05, epochs=10, record_every=10), 8)
    reference.save(est, tmp_path / "ref")
    back = reference.load(tmp_path / "ref")
    assert back.samples["theta"].tobytes() == est.samples["theta"].tobytes()
    assert back.grid.tobytes() == est.grid.tobytes()
    assert (back.seeds, back.master_seed, back.n, back.task) == (est.seeds, 8, 20, "cls_sine")


def test_load_missing_names_file(tmp_path):
    with pytest.raises(FileNotFoundError, match="manifest.json"):
        reference.load(tmp_path / "nothing")


def test_estimate_argument_checks():
    task = datagen.ClsSine()
    with pytest.raises(ValueError):
        reference.estimate(task, 10, 1, [0.0], SMALL, FAST, 0)
    with pytest.raises(ValueError):
        reference.estimate(task, 10, 2, [0.0], nn.MlpConfig(1, (2,), "tanh", "beta"), FAST, 0)
    with pytest.raises(ValueError):
        reference.estimate(task, 10, 2, [0.0], SMALL, FAST, 0, mode="bootstrap")


def test_bootstrap_mode_resamples_base():
    task = datagen.ClsSine()
    base = datagen.generate(task, 40, 0)
    est = reference.estimate(task, 40, 3, [0.1], SMALL, train.TrainConfig(lr=0.05, epochs=5, record_every=5), 1,
                             mode="bootstrap", base_dataset=base)
    assert est.mode == "bootstrap" and est.d == 3
