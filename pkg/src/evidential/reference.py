"""Resampling estimate of the reference second-order distribution.

For each of ``d`` training sets of size N (fresh draws from the task generator, or
bootstrap resamples of one dataset) a first-order network is fitted, and its
prediction on the evaluation grid is recorded. Per grid point the ``d`` values are
sorted, giving an empirical distribution of the first-order risk minimiser.
Multi-parameter predictions (mu, sigma^2) are kept as per-component marginals.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np

from . import datagen, nn, train
from .errors import NumericError

log = logging.getLogger(__name__)

MAX_EXCLUDED_FRACTION = 0.10


def components_for(head: str) -> tuple[str, ...]:
    return ("theta",) if head == "bernoulli" else ("mu", "sigma2")


@dataclass
class ReferenceEstimate:
    grid: np.ndarray
    samples: dict[str, np.ndarray]  # component -> (n_grid, d), each row sorted
    n: int
    task: str
    master_seed: int
    mode: str = "fresh"
    seeds: list[tuple[int, int]] = field(default_factory=list)  # (data_seed, init_seed) per kept run
    excluded: list[int] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return next(iter(self.samples.values())).shape[1]

    @property
    def components(self) -> tuple[str, ...]:
        return tuple(self.samples)

    def at(self, x_index: int, component: str = "theta") -> np.ndarray:
        return self.samples[component][x_index]


def _fit_one(args):
    task_tag, n, k, master_seed, mlp_cfg, train_cfg, grid, mode, base = args
    task = datagen.make_task(task_tag)
    data_seed = datagen.derive_seed(master_seed, k, 0)
    init_seed = datagen.derive_seed(master_seed, k, 1)
    if mode == "fresh":
        ds = datagen.generate(task, n, data_seed)
    else:
        rng = np.random.Generator(np.random.PCG64(data_seed))
        idx = rng.integers(0, len(base.xs), size=n)
        ds = datagen.Dataset(base.xs[idx], base.ys[idx], data_seed, task_tag)
    run = train.fit(train.LossSpec("first_order"), replace(train_cfg, seed=init_seed), mlp_cfg, ds, grid)
    if run.diverged:
        return k, data_seed, init_seed, None
    out = train.predict(run.params, mlp_cfg, grid, train_cfg.y_scale)
    return k, data_seed, init_seed, out


def aggregate(outputs, head: str) -> dict[str, np.ndarray]:
    """Per-component (n_grid, d) arrays from d grid predictions, each row sorted.

    Sorting makes the result independent of the order the runs finished in.
    """
    stacked = np.stack(list(outputs), axis=-1)  # (n_grid, n_out, d)
    return {c: np.sort(stacked[:, j, :], axis=1) for j, c in enumerate(components_for(head))}


def estimate(
    task,
    n: int,
    d: int,
    grid,
    mlp_cfg: nn.MlpConfig,
    train_cfg: train.TrainConfig,
    master_seed: int,
    mode: str = "fresh",
    base_dataset: Optional[datagen.Dataset] = None,
    workers: int = 1,
) -> ReferenceEstimate:
    """Fit ``d`` first-order models on resampled data and collect their grid predictions.

    ``mode="bootstrap"`` resamples ``base_dataset`` with replacement instead of
    drawing fresh data; it is meant for data whose generator is not available.
    """
    if d < 2:
        raise ValueError("reference estimation needs d >= 2")
    if mlp_cfg.head not in nn.FIRST_ORDER_HEADS:
        raise ValueError(f"reference models need a first-order head, got {mlp_cfg.head!r}")
    if mode not in ("fresh", "bootstrap"):
        raise ValueError(f"unknown resampling mode {mode!r}")
    if mode == "bootstrap" and base_dataset is None:
        raise ValueError("bootstrap mode needs a base dataset")
    grid = np.asarray(grid, dtype=float)
    jobs = [(task.tag, n, k, master_seed, mlp_cfg, train_cfg, grid, mode, base_dataset) for k in range(d)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_fit_one, jobs))
    else:
        results = [_fit_one(j) for j in jobs]
    results.sort(key=lambda r: r[0])
    kept = [r for r in results if r[3] is not None]
    excluded = [r[0] for r in results if r[3] is None]
    if excluded:
        log.warning("reference: %d of %d refits diverged and were excluded: %s", len(excluded), d, excluded)
    if len(excluded) > MAX_EXCLUDED_FRACTION * d or len(kept) < 2:
        raise NumericError(f"reference estimate invalid: {len(excluded)} of {d} refits diverged")
    samples = aggregate([r[3] for r in kept], mlp_cfg.head)
    meta = {"mlp": asdict(mlp_cfg), "train": asdict(train_cfg)}
    return ReferenceEstimate(
        grid, samples, n, task.tag, int(master_seed), mode,
        [(r[1], r[2]) for r in kept], excluded, meta,
    )


def empirical_cdf(est: ReferenceEstimate, x_index: int, value: float, component: str = "theta") -> float:
    """Fraction of resampled minimisers <= value (right-continuous)."""
    s = est.at(x_index, component)
    return float(np.searchsorted(s, value, side="right")) / s.size


class Band(NamedTuple):
    lo: float
    hi: float
    small_sample: bool


def nearest_rank(sorted_samples: np.ndarray, p: float) -> float:
    """Smallest sample whose empirical CDF reaches p."""
    d = sorted_samples.size
    rank = max(1, math.ceil(p * d - 1e-9))
    return float(sorted_samples[min(rank, d) - 1])


def band(est: ReferenceEstimate, x_index: int, levels=(0.025, 0.975), component: str = "theta") -> Band:
    """Nearest-rank quantile band; ``small_sample`` flags d < 20."""
    lo_p, hi_p = levels
    if not 0.0 < lo_p <= hi_p < 1.0:
        raise ValueError(f"invalid level pair {levels!r}")
    s = est.at(x_index, component)
    return Band(nearest_rank(s, lo_p), nearest_rank(s, hi_p), s.size < 20)


# -- persistence -------------------------------------------------------------------


def save(est: ReferenceEstimate, directory) -> None:
    """``samples.csv`` (one row per grid point x rank) plus ``manifest.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    comps = est.components
    with open(directory / "samples.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["x_index", "x", "rank", *comps])
        for i, x in enumerate(est.grid):
            for r in range(est.d):
                w.writerow([i, repr(float(x)), r, *(repr(float(est.samples[c][i, r])) for c in comps)])
    manifest = {
        "task": est.task, "n": est.n, "d": est.d, "master_seed": est.master_seed, "mode": est.mode,
        "seeds": est.seeds, "excluded": est.excluded, "components": list(comps), **est.meta,
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load(directory) -> ReferenceEstimate:
    directory = Path(directory)
    for name in ("manifest.json", "samples.csv"):
        if not (directory / name).exists():
            raise FileNotFoundError(f"reference file missing: {directory / name}")
    manifest = json.loads((directory / "manifest.json").read_text())
    comps = manifest["components"]
    d = manifest["d"]
    with open(directory / "samples.csv", newline="") as f:
        rows = list(csv.DictReader(f))
    n_grid = len(rows) // d
    grid = np.array([float(rows[i * d]["x"]) for i in range(n_grid)])
    samples = {c: np.array([float(r[c]) for r in rows]).reshape(n_grid, d) for c in comps}
    meta = {k: manifest[k] for k in ("mlp", "train") if k in manifest}
    return ReferenceEstimate(
        grid, samples, manifest["n"], manifest["task"], manifest["master_seed"], manifest["mode"],
        [tuple(s) for s in manifest["seeds"]], manifest["excluded"], meta,
    )
