"""Loss assembly, Adam, and the full-batch training loop.

Per-sample loss kernels return values and their derivatives w.r.t. the head's
natural parameters (Dirichlet m, NIG (gamma, nu, alpha, beta), Gamma (alpha, beta),
Bernoulli theta, Gaussian (mu, var)); :func:`nn.backward` chains them through the
network. Derivatives of digamma terms use trigamma.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy import special as _sp

from . import nn
from . import second_order as so
from .errors import NumericError, VariantError
from .family import LOG_2PI
from .specfun import digamma, trigamma

log = logging.getLogger(__name__)

LOSS_KINDS = ("first_order", "inner", "outer")
REGULARIZERS = ("none", "neg_entropy", "kl")
DIVERGENCE_LIMIT = 1e12


@dataclass(frozen=True)
class LossSpec:
    kind: str = "outer"
    regularizer: str = "none"
    lam: float = 0.0
    m0: Optional[so.SecondOrderParams] = None

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.regularizer not in REGULARIZERS:
            raise ValueError(f"unknown regularizer {self.regularizer!r}")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.regularizer == "kl" and self.m0 is None:
            raise ValueError("KL regularizer needs a reference m0")
        if self.kind == "first_order" and self.regularizer != "none":
            raise ValueError("regularizers apply to second-order losses only")

    @property
    def label(self) -> str:
        if self.regularizer == "none" or self.lam == 0:
            return self.kind
        return f"{self.kind}+{self.regularizer}"


# -- per-sample kernels --------------------------------------------------------


def _onehot(y, k):
    y = np.asarray(y).astype(int)
    out = np.zeros((y.size, k))
    out[np.arange(y.size), y] = 1.0
    return out


def data_terms(kind: str, head: str, out: np.ndarray, y: np.ndarray):
    """Per-sample loss values (N,) and d/d(head outputs) (N, n_out)."""
    if kind == "first_order":
        if head == "bernoulli":
            t = out[:, 0]
            yy = np.asarray(y, dtype=float)
            val = -(yy * np.log(t) + (1 - yy) * np.log1p(-t))
            g = (-yy / t + (1 - yy) / (1 - t))[:, None]
            return val, g
        if head == "gaussian":
            mu, var = out[:, 0], out[:, 1]
            r = np.asarray(y, dtype=float) - mu
            val = 0.5 * (LOG_2PI + np.log(var)) + r * r / (2 * var)
            g = np.stack([-r / var, 0.5 / var - r * r / (2 * var * var)], axis=1)
            return val, g
    elif head == "beta":
        m = out
        m0 = m.sum(axis=1)
        oh = _onehot(y, m.shape[1])
        my = np.sum(m * oh, axis=1)
        if kind == "inner":
            val = np.log(m0) - np.log(my)
            g = (1.0 / m0)[:, None] - oh / my[:, None]
        else:
            val = digamma(m0) - digamma(my)
            g = trigamma(m0)[:, None] - oh * trigamma(my)[:, None]
        return val, g
    elif head == "nig":
        gam, nu, a, b = out.T
        r = np.asarray(y, dtype=float) - gam
        e = r * r
        if kind == "inner":
            omega = 2.0 * b * (1.0 + nu)
            d = nu * e + omega
            val = (
                0.5 * np.log(np.pi / nu) - a * np.log(omega) + (a + 0.5) * np.log(d)
                + _sp.gammaln(a) - _sp.gammaln(a + 0.5)
            )
            g = np.stack(
                [
                    -(a + 0.5) * 2.0 * nu * r / d,
                    -0.5 / nu - a * 2.0 * b / omega + (a + 0.5) * (e + 2.0 * b) / d,
                    np.log(d) - np.log(omega) + digamma(a) - digamma(a + 0.5),
                    -a / b + (a + 0.5) * 2.0 * (1.0 + nu) / d,
                ],
                axis=1,
            )
        else:
            val = 0.5 * ((a / b) * e + 1.0 / nu - digamma(a) + np.log(b) + LOG_2PI)
            g = np.stack(
                [-(a / b) * r, -0.5 / (nu * nu), 0.5 * (e / b - trigamma(a)), 0.5 * (1.0 / b - a * e / (b * b))],
                axis=1,
            )
        return val, g
    elif head == "gamma":
        a, b = out.T
        k = np.asarray(y, dtype=float)
        if kind == "inner":
            val = -(
                _sp.gammaln(k + a) - _sp.gammaln(k + 1.0) - _sp.gammaln(a)
                + a * (np.log(b) - np.log1p(b)) - k * np.log1p(b)
            )
            g = np.stack(
                [-digamma(k + a) + digamma(a) - (np.log(b) - np.log1p(b)), -a / (b * (b + 1.0)) + k / (b + 1.0)],
                axis=1,
            )
        else:
            val = -((digamma(a) - np.log(b)) * k - a / b - _sp.gammaln(k + 1.0))
            g = np.stack([-trigamma(a) * k + 1.0 / b, k / b - a / (b * b)], axis=1)
        return val, g
    raise VariantError(f"loss kind {kind!r} is incompatible with head {head!r}")


def regularizer_terms(spec: LossSpec, head: str, out: np.ndarray):
    """Per-sample regularizer R(x_i) (N,) and its head-output gradient."""
    n = out.shape[0]
    if spec.regularizer == "none":
        return np.zeros(n), np.zeros_like(out)
    if spec.regularizer == "neg_entropy":
        if head == "beta":
            m = out
            k = m.shape[1]
            m0 = m.sum(axis=1)
            h = so.entropy(so.Dirichlet(m))
            dh = ((m0 - k) * trigamma(m0))[:, None] - (m - 1.0) * trigamma(m)
            return -np.asarray(h), -dh
        if head == "nig":
            gam, nu, a, b = out.T
            h = so.entropy(so.NIG(gam, nu, a, b))
            dh = np.stack([np.zeros(n), -0.5 / nu, 1.0 - (a + 1.5) * trigamma(a), 1.5 / b], axis=1)
            return -np.asarray(h), -dh
        if head == "gamma":
            a, b = out.T
            h = so.entropy(so.GammaPrior(a, b))
            dh = np.stack([1.0 + (1.0 - a) * trigamma(a), -1.0 / b], axis=1)
            return -np.asarray(h), -dh
    else:
        ref = spec.m0
        if head == "beta" and isinstance(ref, so.Dirichlet):
            m = out
            if ref.k != m.shape[1]:
                raise VariantError("KL reference has the wrong number of classes")
            r = np.broadcast_to(ref.m, m.shape)
            val = so.kl(so.Dirichlet(m), so.Dirichlet(r))
            m0, r0 = m.sum(axis=1), r.sum(axis=1)
            g = (m - r) * trigamma(m) - ((m0 - r0) * trigamma(m0))[:, None]
            return np.asarray(val), g
        if head == "nig" and isinstance(ref, so.NIG):
            gam, nu, a, b = out.T
            g2, n2, a2, b2 = (float(v) for v in (ref.gamma, ref.nu, ref.alpha, ref.beta))
            d = gam - g2
            val = so._gamma_kl(a, b, a2, b2) + 0.5 * (n2 / nu - 1.0 + np.log(nu / n2) + n2 * d * d * a / b)
            g = np.stack(
                [
                    n2 * d * a / b,
                    0.5 * (1.0 / nu - n2 / (nu * nu)),
                    (a - a2) * trigamma(a) + b2 / b - 1.0 + 0.5 * n2 * d * d / b,
                    a2 / b - a * b2 / (b * b) - 0.5 * n2 * d * d * a / (b * b),
                ],
                axis=1,
            )
            return np.asarray(val), g
        if head == "gamma" and isinstance(ref, so.GammaPrior):
            a, b = out.T
            a2, b2 = float(ref.alpha), float(ref.beta)
            val = so._gamma_kl(a, b, a2, b2)
            g = np.stack([(a - a2) * trigamma(a) + b2 / b - 1.0, a2 / b - a * b2 / (b * b)], axis=1)
            return np.asarray(val), g
    raise VariantError(f"regularizer {spec.regularizer!r} is incompatible with head {head!r}")


def check_compatible(spec: LossSpec, head: str) -> None:
    if spec.kind == "first_order" and head not in nn.FIRST_ORDER_HEADS:
        raise VariantError(f"first-order loss needs a first-order head, got {head!r}")
    if spec.kind != "first_order" and head not in nn.SECOND_ORDER_HEADS:
        raise VariantError(f"{spec.kind} loss needs a second-order head, got {head!r}")


class LossEval(NamedTuple):
    value: float
    data: float
    reg: float
    grad: np.ndarray
    out: np.ndarray


def batch_loss(spec: LossSpec, params: np.ndarray, config: nn.MlpConfig, xs, ys) -> LossEval:
    """sum_i loss(y_i, m(x_i)) + lam * sum_i R(x_i), with its parameter gradient."""
    check_compatible(spec, config.head)
    if len(xs) == 0:
        raise ValueError("empty dataset")
    cache = nn.Cache()
    out = nn.forward_raw(params, config, xs, cache)
    val, g = data_terms(spec.kind, config.head, out, ys)
    data = float(np.sum(val))
    reg = 0.0
    if spec.regularizer != "none" and spec.lam > 0:
        rv, rg = regularizer_terms(spec, config.head, out)
        reg = float(np.sum(rv))
        g = g + spec.lam * rg
    grad = nn.backward(params, config, cache, g)
    return LossEval(data + spec.lam * reg, data, reg, grad, out)


# -- Adam ---------------------------------------------------------------------


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(state: AdamState, params, grad, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update. Returns (new_params, new_state)."""
    if state.m.shape != params.shape or grad.shape != params.shape:
        raise ValueError("Adam state, params and grad must have matching shapes")
    if not np.all(np.isfinite(grad)):
        raise NumericError("non-finite gradient passed to Adam")
    t = state.t + 1
    m = beta1 * state.m + (1.0 - beta1) * grad
    v = beta2 * state.v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    new = params - lr * m_hat / (np.sqrt(v_hat) + eps)
    return new, AdamState(m, v, t)


# -- training loop --------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 5e-4
    epochs: int = 5000
    seed: int = 0
    record_every: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    # regression targets are divided by this before fitting; outputs are mapped back
    y_scale: float = 1.0

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("learning rate must be > 0")
        if not self.y_scale > 0:
            raise ValueError("y_scale must be > 0")
        if self.epochs < 0 or self.record_every < 1:
            raise ValueError("epochs must be >= 0 and record_every >= 1")


@dataclass
class TrainRun:
    params: np.ndarray
    init_params: np.ndarray
    loss: LossSpec
    mlp: nn.MlpConfig
    train: TrainConfig
    epochs_run: int = 0
    diverged: bool = False
    message: str = ""
    records: list[dict] = field(default_factory=list)

    @property
    def param_names(self) -> tuple[str, ...]:
        names = nn.HEAD_PARAM_NAMES[self.mlp.head]
        return names

    def predict(self, x) -> np.ndarray:
        """Head outputs at ``x`` in the original units of y."""
        return predict(self.params, self.mlp, x, self.train.y_scale)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.records])

    def to_csv(self, path) -> None:
        cols = ["epoch", "loss", "reg", *("mean_" + n for n in self.param_names)]
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(cols)
            for r in self.records:
                w.writerow([r["epoch"], repr(r["loss"]), repr(r["reg"]), *(repr(r["mean_" + n]) for n in self.param_names)])


SCALABLE_HEADS = ("gaussian", "nig")


def unscale_outputs(head: str, out: np.ndarray, y_scale: float) -> np.ndarray:
    """Map head outputs fitted on y / y_scale back to the original units of y."""
    if y_scale == 1.0:
        return out
    if head not in SCALABLE_HEADS:
        raise ValueError(f"target scaling is only defined for regression heads, not {head!r}")
    out = np.array(out, dtype=float)
    if head == "gaussian":
        out[:, 0] *= y_scale
        out[:, 1] *= y_scale**2
    else:
        out[:, 0] *= y_scale
        out[:, 3] *= y_scale**2
    return out


def predict(params: np.ndarray, config: nn.MlpConfig, x, y_scale: float = 1.0) -> np.ndarray:
    """Head outputs in the original units of y."""
    return unscale_outputs(config.head, nn.forward_raw(params, config, x), y_scale)


def _diverged(ev: LossEval) -> Optional[str]:
    if not math.isfinite(ev.value) or abs(ev.value) > DIVERGENCE_LIMIT:
        return f"loss {ev.value:.3g} exceeded the divergence limit"
    if not np.all(np.isfinite(ev.out)) or np.max(np.abs(ev.out)) > DIVERGENCE_LIMIT:
        return f"head parameter {np.max(np.abs(ev.out)):.3g} exceeded the divergence limit"
    return None


def fit(
    spec: LossSpec,
    train_cfg: TrainConfig,
    mlp_cfg: nn.MlpConfig,
    dataset,
    eval_grid,
    init_params: Optional[np.ndarray] = None,
) -> TrainRun:
    """Full-batch Adam on ``dataset`` (anything with ``xs`` and ``ys``).

    Recorded means are in the original units of y, also when ``y_scale`` is set.
    Every ``record_every`` epochs the mean head parameters over ``eval_grid``, the
    loss and the (unweighted) regularizer sum are recorded. On divergence the run
    stops and keeps the last finite parameters.
    """
    check_compatible(spec, mlp_cfg.head)
    if train_cfg.y_scale != 1.0 and mlp_cfg.head not in SCALABLE_HEADS:
        raise ValueError(f"target scaling is only defined for regression heads, not {mlp_cfg.head!r}")
    params = nn.init(mlp_cfg, train_cfg.seed) if init_params is None else np.array(init_params, dtype=float)
    run = TrainRun(params, params.copy(), spec, mlp_cfg, train_cfg)
    xs, ys = np.asarray(dataset.xs, dtype=float), np.asarray(dataset.ys)
    if train_cfg.y_scale != 1.0:
        ys = ys / train_cfg.y_scale
    grid = np.asarray(eval_grid, dtype=float)
    names = run.param_names
    state = AdamState.zeros(params.size)
    for epoch in range(1, train_cfg.epochs + 1):
        try:
            # non-finite values are caught by the divergence guard below
            with np.errstate(all="ignore"):
                ev = batch_loss(spec, params, mlp_cfg, xs, ys)
            reason = _diverged(ev)
            if reason is None:
                new, new_state = adam_step(
                    state, params, ev.grad, train_cfg.lr, train_cfg.beta1, train_cfg.beta2, train_cfg.eps
                )
                if not np.all(np.isfinite(new)):
                    reason = "non-finite parameters after update"
        except NumericError as exc:
            reason = str(exc)
        if reason is not None:
            run.diverged, run.message = True, f"epoch {epoch}: {reason}"
            log.warning("training aborted at %s", run.message)
            break
        params, state = new, new_state
        run.epochs_run = epoch
        if epoch % train_cfg.record_every == 0:
            try:
                grid_out = predict(params, mlp_cfg, grid, train_cfg.y_scale)
            except NumericError as exc:
                run.diverged, run.message = True, f"epoch {epoch}: {exc}"
                break
            rec = {"epoch": epoch, "loss": ev.value, "reg": ev.reg}
            for j, name in enumerate(names):
                rec["mean_" + name] = float(np.mean(grid_out[:, j]))
            run.records.append(rec)
    run.params = params
    return run
