"""Dense feed-forward network with hand-written reverse-mode gradients.

Parameters live in one flat float64 vector; :class:`Layout` maps it to per-layer
weight matrices (fan_in x fan_out, row-major) followed by bias vectors. Inputs are
batched as an (N, input_dim) array.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import NamedTuple


import numpy as np

from . import second_order as so
from .errors import NumericError
from .family import Bernoulli, Gaussian

HEAD_OUTPUTS = {"bernoulli": 1, "gaussian": 2, "beta": 2, "nig": 4, "gamma": 2}
FIRST_ORDER_HEADS = ("bernoulli", "gaussian")
SECOND_ORDER_HEADS = ("beta", "nig", "gamma")
HEAD_PARAM_NAMES = {
    "bernoulli": ("theta",),
    "gaussian": ("mu", "var"),
    # class-indexed concentration: m[0] pairs with y=0, m[1] with y=1
    "beta": ("beta", "alpha"),
    "nig": ("gamma", "nu", "alpha", "beta"),
    "gamma": ("alpha", "beta"),
}


@dataclass(frozen=True)
class MlpConfig:
    input_dim: int = 1
    hidden: tuple[int, ...] = (32, 32)
    activation: str = "tanh"
    head: str = "beta"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.input_dim < 1 or any(h < 1 for h in self.hidden):
            raise ValueError(f"layer widths must be >= 1: {self.input_dim}, {self.hidden}")
        if self.activation not in ("tanh", "relu"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.head not in HEAD_OUTPUTS:
            raise ValueError(f"unknown head {self.head!r}; expected one of {sorted(HEAD_OUTPUTS)}")

    @property
    def n_out(self) -> int:
        return HEAD_OUTPUTS[self.head]

    @property
    def shapes(self) -> list[tuple[int, int]]:
        widths = [self.input_dim, *self.hidden, self.n_out]
        return list(zip(widths[:-1], widths[1:]))

    @property
    def n_params(self) -> int:
        return sum((fi + 1) * fo for fi, fo in self.shapes)


def unpack(params: np.ndarray, config: MlpConfig) -> list[tuple[np.ndarray, np.ndarray]]:
    """Views (W, b) per layer into the flat vector."""
    if params.shape != (config.n_params,):
        raise ValueError(f"expected {config.n_params} parameters, got shape {params.shape}")
    layers, i = [], 0
    for fi, fo in config.shapes:
        w = params[i : i + fi * fo].reshape(fi, fo)
        i += fi * fo
        b = params[i : i + fo]
        i += fo
        layers.append((w, b))
    return layers


def init(config: MlpConfig, seed) -> np.ndarray:
    """Weights ~ U[-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero."""
    rng = np.random.default_rng(seed)
    params = np.zeros(config.n_params)
    for w, _ in unpack(params, config):
        bound = 1.0 / np.sqrt(w.shape[0])
        w[...] = rng.uniform(-bound, bound, size=w.shape)
    return params


_EPS = np.finfo(float).eps


def _softplus(z):
    return np.logaddexp(0.0, z)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _head_forward(head: str, z: np.ndarray) -> np.ndarray:
    if head == "bernoulli":
        # keep theta strictly inside (0, 1) where the sigmoid rounds to an endpoint
        return np.clip(_sigmoid(z), _EPS, 1.0 - _EPS)
    if head == "gaussian":
        sd = _softplus(z[:, 1])
        return np.stack([z[:, 0], sd * sd], axis=1)
    if head in ("beta", "gamma"):
        return np.exp(z)
    # nig: gamma linear, nu and beta exp, alpha = 1 + softplus floored so that alpha > 1 in floating point
    return np.stack([z[:, 0], np.exp(z[:, 1]), 1.0 + np.maximum(_softplus(z[:, 2]), _EPS), np.exp(z[:, 3])], axis=1)


def _head_backward(head: str, z: np.ndarray, out: np.ndarray, g_out: np.ndarray) -> np.ndarray:
    if head == "bernoulli":
        return g_out * out * (1.0 - out)
    if head == "gaussian":
        sd = np.sqrt(out[:, 1])
        return np.stack([g_out[:, 0], g_out[:, 1] * 2.0 * sd * _sigmoid(z[:, 1])], axis=1)
    if head in ("beta", "gamma"):
        return g_out * out
    return np.stack(
        [g_out[:, 0], g_out[:, 1] * out[:, 1], g_out[:, 2] * _sigmoid(z[:, 2]), g_out[:, 3] * out[:, 3]],
        axis=1,
    )


@dataclass
class Cache:
    inputs: list = field(default_factory=list)
    pre: list = field(default_factory=list)
    out: np.ndarray | None = None


def forward_raw(params: np.ndarray, config: MlpConfig, x, cache: Cache | None = None) -> np.ndarray:
    """Head outputs as an (N, n_out) array of natural parameters."""
    h = np.asarray(x, dtype=float)
    if h.ndim == 1:
        h = h[:, None] if config.input_dim == 1 else h[None, :]
    if h.shape[1] != config.input_dim:
        raise ValueError(f"input has {h.shape[1]} features, network expects {config.input_dim}")
    layers = unpack(params, config)
    for i, (w, b) in enumerate(layers):
        if cache is not None:
            cache.inputs.append(h)
        z = h @ w + b
        if cache is not None:
            cache.pre.append(z)
        if i < len(layers) - 1:
            h = np.tanh(z) if config.activation == "tanh" else np.maximum(z, 0.0)
        else:
            with np.errstate(over="ignore"):
                h = _head_forward(config.head, z)
    if not np.all(np.isfinite(h)):
        bad = np.argwhere(~np.isfinite(h))
        raise NumericError(
            f"non-finite head output for {len(bad)} entries (first at row {bad[0][0]}); "
            f"max |param| = {np.max(np.abs(params)):.3g}"
        )
    if cache is not None:
        cache.out = h
    return h


def to_dist(head: str, out: np.ndarray):
    """Wrap a raw head array as first- or second-order params (array-valued)."""
    if head == "bernoulli":
        return Bernoulli(out[:, 0])
    if head == "gaussian":
        return Gaussian(out[:, 0], out[:, 1])
    if head == "beta":
        return so.Dirichlet(out)
    if head == "nig":
        return so.NIG(out[:, 0], out[:, 1], out[:, 2], out[:, 3])
    return so.GammaPrior(out[:, 0], out[:, 1])


def forward(params: np.ndarray, config: MlpConfig, x):
    """Network prediction as a distribution-parameter object."""
    return to_dist(config.head, forward_raw(params, config, x))


def backward(params: np.ndarray, config: MlpConfig, cache: Cache, upstream: np.ndarray) -> np.ndarray:
    """Gradient of a scalar loss w.r.t. the flat parameters.

    ``upstream`` is dLoss/d(head outputs), shape (N, n_out), for the forward pass
    recorded in ``cache``.
    """
    layers = unpack(params, config)
    grad = np.zeros_like(params)
    glayers = unpack(grad, config)
    g = _head_backward(config.head, cache.pre[-1], cache.out, np.asarray(upstream, dtype=float))
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        gw, gb = glayers[i]
        gw[...] = cache.inputs[i].T @ g
        gb[...] = g.sum(axis=0)
        if i > 0:
            g = g @ w.T
            z = cache.pre[i - 1]
            if config.activation == "tanh":
                t = np.tanh(z)
                g = g * (1.0 - t * t)
            else:
                g = g * (z > 0)
    return grad


# -- checkpoints ----------------------------------------------------------------

_MAGIC = b"EVCKPT1\n"


class Checkpoint(NamedTuple):
    params: np.ndarray
    config: MlpConfig
    seed: int
    epoch: int
    meta: dict


def save_checkpoint(path, params: np.ndarray, config: MlpConfig, seed: int, epoch: int, meta=None) -> None:
    """JSON header line, then the flat parameters as little-endian float64."""
    header = {
        "config": asdict(config), "seed": int(seed), "epoch": int(epoch),
        "n_params": int(params.size), "meta": dict(meta or {}),
    }
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        f.write(np.asarray(params, dtype="<f8").tobytes())


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as f:
        if f.readline() != _MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        header = json.loads(f.readline().decode("utf-8"))
        raw = f.read()
    cfg = MlpConfig(**header["config"])
    params = np.frombuffer(raw, dtype="<f8").astype(float)
    if params.size != header["n_params"] or params.size != cfg.n_params:
        raise ValueError(f"{path}: expected {header['n_params']} parameters, found {params.size}")
    return Checkpoint(params, cfg, header["seed"], header["epoch"], header.get("meta", {}))
