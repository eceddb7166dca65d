"""Synthetic tasks with known ground truth.

Randomness comes from numpy's PCG64 (64-bit state) seeded through ``SeedSequence``;
:func:`derive_seed` gives independent, reproducible per-run substreams. Gaussian
noise is produced with Box-Muller from the generator's uniforms so the bit stream
depends only on PCG64 itself.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .family import Bernoulli, Gaussian


@dataclass(frozen=True)
class ClsSine:
    """x ~ U[0, 0.5], y ~ Bernoulli(0.5 + 0.4 sin 2 pi x)."""

    tag = "cls_sine"
    x_lo: float = 0.0
    x_hi: float = 0.5
    grid_lo: float = 0.0
    grid_hi: float = 1.0

    def theta(self, x):
        return 0.5 + 0.4 * np.sin(2.0 * np.pi * np.asarray(x, dtype=float))


@dataclass(frozen=True)
class RegCubic:
    """x ~ U[-4, 4], y = x^3 + eps with eps ~ N(0, noise_var)."""

    tag = "reg_cubic"
    noise_var: float = 9.0
    x_lo: float = -4.0
    x_hi: float = 4.0
    grid_lo: float = -6.0
    grid_hi: float = 6.0


@dataclass(frozen=True)
class ConstBernoulli:
    """Feature carries no information: x ~ U[0, 1], y ~ Bernoulli(p)."""

    tag = "const_bernoulli"
    p: float = 0.7
    x_lo: float = 0.0
    x_hi: float = 1.0
    grid_lo: float = 0.0
    grid_hi: float = 1.0


TASKS = {"cls_sine": ClsSine, "reg_cubic": RegCubic, "const_bernoulli": ConstBernoulli}


def make_task(tag: str):
    try:
        return TASKS[tag]()
    except KeyError:
        raise ValueError(f"unknown task {tag!r}; expected one of {sorted(TASKS)}") from None


def is_regression(task) -> bool:
    return isinstance(task, RegCubic)


@dataclass
class Dataset:
    xs: np.ndarray
    ys: np.ndarray
    seed: int
    task: str

    def __post_init__(self):
        if len(self.xs) != len(self.ys):
            raise ValueError("xs and ys must have equal length")

    def __len__(self) -> int:
        return len(self.xs)


def derive_seed(master: int, *keys: int) -> int:
    """Deterministic 64-bit seed for the substream identified by ``keys``."""
    ss = np.random.SeedSequence(entropy=int(master), spawn_key=tuple(int(k) for k in keys))
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)


def truth(task, x):
    """Ground-truth first-order parameters at x."""
    if isinstance(task, ClsSine):
        return Bernoulli(task.theta(x))
    if isinstance(task, RegCubic):
        x = np.asarray(x, dtype=float)
        return Gaussian(x**3, np.full_like(x, task.noise_var) if x.ndim else task.noise_var)
    if isinstance(task, ConstBernoulli):
        x = np.asarray(x, dtype=float)
        return Bernoulli(np.full_like(x, task.p) if x.ndim else task.p)
    raise TypeError(f"unknown task {task!r}")


def box_muller(rng: np.random.Generator, n: int) -> np.ndarray:
    """n standard normal draws from pairs of uniforms."""
    k = (n + 1) // 2
    u1 = 1.0 - rng.random(k)  # (0, 1], keeps the log finite
    u2 = rng.random(k)
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.concatenate([r * np.cos(2.0 * np.pi * u2), r * np.sin(2.0 * np.pi * u2)])
    return z[:n]


def generate(task, n: int, seed: int) -> Dataset:
    if n < 1:
        raise ValueError("N must be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    xs = task.x_lo + (task.x_hi - task.x_lo) * rng.random(n)
    return Dataset(xs, sample_outcomes(task, xs, rng), int(seed), task.tag)


def sample_outcomes(task, xs, rng: np.random.Generator) -> np.ndarray:
    """One outcome per input from the task's true conditional law."""
    xs = np.asarray(xs, dtype=float)
    if isinstance(task, RegCubic):
        return xs**3 + math.sqrt(task.noise_var) * box_muller(rng, xs.size)
    return (rng.random(xs.size) < truth(task, xs).theta).astype(int)


def eval_grid(task, n_points: int = 100) -> np.ndarray:
    if n_points < 2:
        raise ValueError("grid needs at least 2 points")
    return np.linspace(task.grid_lo, task.grid_hi, n_points)


def save_dataset(ds: Dataset, path) -> None:
    """CSV with a leading manifest comment line; floats written with repr for exact round trips."""
    lines = [f"# task={ds.task} seed={ds.seed} n={len(ds)}", "x,y"]
    lines += [f"{float(x)!r},{y!r}" for x, y in zip(ds.xs, ds.ys.tolist())]
    Path(path).write_text("\n".join(lines) + "\n")


def load_dataset(path) -> Dataset:
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("#"):
        raise ValueError(f"{path}: missing manifest line")
    meta = dict(kv.split("=", 1) for kv in text[0][1:].split())
    if text[1] != "x,y":
        raise ValueError(f"{path}: expected header 'x,y'")
    rows = [line.split(",") for line in text[2:] if line]
    xs = np.array([float(r[0]) for r in rows])
    if meta["task"] == "reg_cubic":
        ys = np.array([float(r[1]) for r in rows])
    else:
        ys = np.array([int(r[1]) for r in rows])
    return Dataset(xs, ys, int(meta["seed"]), meta["task"])
