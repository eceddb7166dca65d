"""Experiment configuration, presets and runners for the figure reproductions.

Artifacts are written under ``out`` in a fixed tree::

    datasets/     training sets as CSV
    checkpoints/  trained weights plus their recorded trajectories
    reference/    resampled first-order minimisers
    reports/      CSV tables and JSON summaries
    plots/        SVG figures

Finished runs are skipped when their checkpoint already exists with a matching
configuration, so an interrupted reproduction resumes where it stopped.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import platform
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np
import scipy

from . import __version__, datagen, evaluation, nn, plots, reference, train

log = logging.getLogger(__name__)

# derive_seed keys for the independent substreams of one experiment
_DATA, _REFERENCE, _MODEL = 0, 1, 2

# targets of the cubic task are divided by their marginal standard deviation at desk scale
CUBIC_Y_SCALE = math.sqrt(4.0**6 / 7.0 + 9.0)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    task: str = "cls_sine"
    n: tuple[int, ...] = (500,)
    d: int = 30
    grid: int = 100
    hidden: tuple[int, ...] = (32, 32)
    activation: str = "tanh"
    head: str = "beta"
    loss: tuple[str, ...] = ("outer", "inner")
    lambdas: tuple[float, ...] = (0.0, 0.01, 0.1)
    regularizer: str = "neg_entropy"
    lr: float = 5e-4
    epochs: int = 3000
    seed: int = 0
    out: str = "runs"
    runs: int = 1
    record_every: int = 100
    y_scale: float = 1.0
    workers: int = 1

    def __post_init__(self):
        if self.task not in datagen.TASKS:
            raise ConfigError(f"unknown task {self.task!r}; expected one of {sorted(datagen.TASKS)}")
        if not self.n or any(v < 1 for v in self.n):
            raise ConfigError(f"n must be a list of positive sizes, got {self.n}")
        if self.d < 2 or self.grid < 2 or self.runs < 1 or self.workers < 1:
            raise ConfigError("d and grid must be >= 2; runs and workers >= 1")
        if self.regularizer not in ("neg_entropy", "kl"):
            raise ConfigError(f"unknown regularizer {self.regularizer!r}")
        if any(lam < 0 for lam in self.lambdas):
            raise ConfigError("lambda values must be >= 0")
        for kind in self.loss:
            if kind not in ("outer", "inner"):
                raise ConfigError(f"unknown loss {kind!r}; expected outer or inner")
        try:
            self.mlp_config()
            self.train_config()
            for spec in self.loss_specs():
                train.check_compatible(spec, self.head)
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc
        if datagen.is_regression(datagen.make_task(self.task)) != (self.head in ("nig", "gaussian")):
            raise ConfigError(f"head {self.head!r} does not match task {self.task!r}")

    def mlp_config(self, head: Optional[str] = None) -> nn.MlpConfig:
        return nn.MlpConfig(1, self.hidden, self.activation, head or self.head)

    def train_config(self, seed: int = 0) -> train.TrainConfig:
        return train.TrainConfig(
            lr=self.lr, epochs=self.epochs, seed=seed, record_every=self.record_every, y_scale=self.y_scale
        )

    def loss_specs(self) -> list[train.LossSpec]:
        specs = []
        for kind in self.loss:
            for lam in self.lambdas:
                reg = "none" if lam == 0 else self.regularizer
                specs.append(train.LossSpec(kind, reg, lam))
        return specs

    @property
    def first_order_head(self) -> str:
        return "gaussian" if self.head == "nig" else "bernoulli"


# -- flat key=value configuration ----------------------------------------------

_KEY_ALIASES = {"lambda": "lambdas"}


def _parse_value(name: str, raw: str):
    kind = {f.name: f.type for f in fields(ExperimentConfig)}[name]
    items = [s.strip() for s in raw.split(",") if s.strip()]
    try:
        if kind.startswith("tuple[int"):
            return tuple(int(s) for s in items)
        if kind.startswith("tuple[float"):
            return tuple(float(s) for s in items)
        if kind.startswith("tuple[str"):
            return tuple(items)
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc
    return raw.strip()


def parse_config(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment; lists are comma separated."""
    out = {}
    known = {f.name for f in fields(ExperimentConfig)}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        key = _KEY_ALIASES.get(key, key)
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}; known keys: {', '.join(sorted(known))}")
        out[key] = _parse_value(key, raw)
    return out


def format_config(cfg: ExperimentConfig) -> str:
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        text = ",".join(repr(x) if isinstance(x, float) else str(x) for x in v) if isinstance(v, tuple) else (
            repr(v) if isinstance(v, float) else str(v)
        )
        lines.append(f"{'lambda' if f.name == 'lambdas' else f.name} = {text}")
    return "\n".join(lines) + "\n"


def make_config(base: dict | None = None, **overrides) -> ExperimentConfig:
    values = dict(base or {})
    values.update(overrides)
    try:
        return ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


# -- presets ------------------------------------------------------------------------

FIGURES = ("fig2", "fig3", "fig4", "fig5", "fig6")

_CLS = dict(task="cls_sine", head="beta", hidden=(32, 32))
_REG = dict(task="reg_cubic", head="nig", hidden=(32,))

PRESETS = {
    "fig2": {
        "full": dict(_CLS, n=(100, 500, 1000), d=100, lr=5e-4, epochs=5000, loss=("outer", "inner"), lambdas=(0.0, 0.01)),
        "desk": dict(_CLS, n=(100, 500, 1000), d=30, lr=2.5e-3, epochs=3000, loss=("outer", "inner"), lambdas=(0.0, 0.01)),
    },
    "fig3": {
        "full": dict(_CLS, n=(1000,), d=100, lr=5e-4, epochs=5000, loss=("outer", "inner"),
                     lambdas=(0.0, 0.001, 0.01, 0.05, 0.1, 0.5)),
        "desk": dict(_CLS, n=(500,), d=30, lr=2.5e-3, epochs=3000, loss=("outer", "inner"), lambdas=(0.0, 0.01, 0.1)),
    },
    "fig4": {
        "full": dict(_CLS, n=(1000,), runs=40, lr=5e-4, epochs=15000, loss=("outer", "inner"), lambdas=(0.0, 0.01)),
        "desk": dict(_CLS, n=(500,), runs=10, lr=2.5e-3, epochs=3000, loss=("outer", "inner"), lambdas=(0.0, 0.01)),
    },
    "fig5": {
        "full": dict(_REG, n=(100, 500, 1000), d=100, lr=1e-4, epochs=5000, loss=("outer", "inner"), lambdas=(0.0, 0.01)),
        "desk": dict(_REG, n=(100, 500, 1000), d=30, lr=1e-3, epochs=3000, loss=("outer", "inner"), lambdas=(0.0, 0.01),
                     y_scale=CUBIC_Y_SCALE),
    },
    "fig6": {
        "full": dict(_REG, n=(1000,), runs=40, lr=1e-4, epochs=10000, loss=("outer", "inner"), lambdas=(0.0, 0.01)),
        "desk": dict(_REG, n=(1000,), runs=10, lr=1e-3, epochs=3000, loss=("outer", "inner"), lambdas=(0.0, 0.01),
                     y_scale=CUBIC_Y_SCALE),
    },
}


def preset(figure: str, desk_scale: bool = True, **overrides) -> ExperimentConfig:
    if figure not in PRESETS:
        raise ConfigError(f"unknown figure {figure!r}; expected one of {', '.join(FIGURES)}")
    return make_config(PRESETS[figure]["desk" if desk_scale else "full"], **overrides)


# -- artifact tree -------------------------------------------------------------------


class Artifacts:
    SUBDIRS = ("datasets", "checkpoints", "reference", "reports", "plots")

    def __init__(self, root):
        self.root = Path(root)
        try:
            for sub in self.SUBDIRS:
                (self.root / sub).mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"output directory {self.root} is not writable: {exc}") from exc

    def __getattr__(self, name):
        if name in self.SUBDIRS:
            return self.root / name
        raise AttributeError(name)

    def write_manifest(self, name: str, cfg: ExperimentConfig, started: float, extra: dict | None = None) -> Path:
        manifest = {
            "command": name,
            "config": asdict(cfg),
            "versions": {
                "evidential": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                "python": platform.python_version(),
            },
            "wall_time_s": round(time.time() - started, 3),
        }
        manifest.update(extra or {})
        path = self.root / f"manifest_{name}.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return path


def _json_norm(obj):
    return json.loads(json.dumps(obj))


def _lam_tag(lam: float) -> str:
    return repr(float(lam)).replace(".", "p")


def dataset_for(cfg: ExperimentConfig, art: Artifacts, n: int) -> datagen.Dataset:
    task = datagen.make_task(cfg.task)
    seed = datagen.derive_seed(cfg.seed, _DATA, n)
    path = art.datasets / f"{cfg.task}_n{n}_seed{cfg.seed}.csv"
    if path.exists():
        ds = datagen.load_dataset(path)
        if ds.seed == seed and len(ds.xs) == n:
            return ds
    ds = datagen.generate(task, n, seed)
    datagen.save_dataset(ds, path)
    return ds


def reference_dir(cfg: ExperimentConfig, art: Artifacts, n: int) -> Path:
    return art.reference / f"{cfg.task}_n{n}_d{cfg.d}"


def reference_for(cfg: ExperimentConfig, art: Artifacts, n: int) -> reference.ReferenceEstimate:
    """Load the matching reference estimate, or compute and save it."""
    task = datagen.make_task(cfg.task)
    grid = datagen.eval_grid(task, cfg.grid)
    master = datagen.derive_seed(cfg.seed, _REFERENCE, n)
    directory = reference_dir(cfg, art, n)
    mlp = cfg.mlp_config(cfg.first_order_head)
    tcfg = cfg.train_config()
    if (directory / "manifest.json").exists():
        est = reference.load(directory)
        wanted = _json_norm({"mlp": asdict(mlp), "train": asdict(tcfg)})
        if est.master_seed == master and _json_norm(est.meta) == wanted and np.array_equal(est.grid, grid):
            return est
    est = reference.estimate(task, n, cfg.d, grid, mlp, tcfg, master, workers=cfg.workers)
    reference.save(est, directory)
    return est


def _model_paths(cfg: ExperimentConfig, art: Artifacts, spec: train.LossSpec, n: int, run: int):
    stem = f"{cfg.task}_n{n}_{spec.label}_lam{_lam_tag(spec.lam)}_run{run}"
    return art.checkpoints / f"{stem}.ckpt", art.checkpoints / f"{stem}.csv"


def load_model(cfg: ExperimentConfig, art: Artifacts, spec: train.LossSpec, n: int,
               run: int = 0) -> Optional[train.TrainRun]:
    """The finished run for this configuration, or None when no matching checkpoint exists."""
    ckpt, traj = _model_paths(cfg, art, spec, n, run)
    if not (ckpt.exists() and traj.exists()):
        return None
    seed = datagen.derive_seed(cfg.seed, _MODEL, n, run)
    mlp, tcfg = cfg.mlp_config(), cfg.train_config(seed)
    saved = nn.load_checkpoint(ckpt)
    wanted = _json_norm({"loss": asdict(spec), "train": asdict(tcfg)})
    if saved.config != mlp or any(saved.meta.get(k) != wanted[k] for k in ("loss", "train")):
        return None
    result = train.TrainRun(saved.params, nn.init(mlp, seed), spec, mlp, tcfg, saved.epoch)
    result.diverged = bool(saved.meta.get("diverged", False))
    result.message = saved.meta.get("message", "")
    result.records = _read_records(traj)
    return result


def train_model(cfg: ExperimentConfig, art: Artifacts, spec: train.LossSpec, n: int, run: int = 0,
                ds: Optional[datagen.Dataset] = None) -> train.TrainRun:
    """Train one second-order model, or load it when a finished checkpoint exists."""
    done = load_model(cfg, art, spec, n, run)
    if done is not None:
        return done
    task = datagen.make_task(cfg.task)
    ds = ds if ds is not None else dataset_for(cfg, art, n)
    seed = datagen.derive_seed(cfg.seed, _MODEL, n, run)
    mlp, tcfg = cfg.mlp_config(), cfg.train_config(seed)
    ckpt, traj = _model_paths(cfg, art, spec, n, run)
    result = train.fit(spec, tcfg, mlp, ds, datagen.eval_grid(task, cfg.grid))
    result.to_csv(traj)
    meta = {"loss": asdict(spec), "train": asdict(tcfg), "diverged": result.diverged, "message": result.message}
    nn.save_checkpoint(ckpt, result.params, mlp, seed, result.epochs_run, meta)
    return result


def _read_records(path) -> list[dict]:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return [{k: (int(v) if k == "epoch" else float(v)) for k, v in r.items()} for r in rows]


# -- figure runners -------------------------------------------------------------------


@dataclass
class FigureResult:
    figure: str
    reports: list[Path] = field(default_factory=list)
    plots: list[Path] = field(default_factory=list)
    summary: dict = field(default_factory=dict)


def _data_region(cfg: ExperimentConfig) -> tuple[float, float]:
    task = datagen.make_task(cfg.task)
    return (task.x_lo, task.x_hi)


def _components(cfg: ExperimentConfig) -> tuple[str, ...]:
    return ("theta",) if cfg.head == "beta" else ("mu", "sigma2")


def _write_rows(path: Path, rows: list[dict], columns: list[str]) -> Path:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(r.get(c, "")) for c in columns])
    return path


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def run_bands(cfg: ExperimentConfig, art: Artifacts, figure: str) -> FigureResult:
    """Reference band against every model band, one table and plot per (N, component, loss)."""
    res = FigureResult(figure)
    task = datagen.make_task(cfg.task)
    for n in cfg.n:
        ds = dataset_for(cfg, art, n)
        ref = reference_for(cfg, art, n)
        truth_dist = datagen.truth(task, ref.grid)
        for spec in cfg.loss_specs():
            trained = train_model(cfg, art, spec, n, ds=ds)
            pred = None if trained.diverged else nn.to_dist(cfg.head, trained.predict(ref.grid))
            for comp in _components(cfg):
                truth_vals = {"theta": getattr(truth_dist, "theta", None),
                              "mu": getattr(truth_dist, "mu", None), "sigma2": getattr(truth_dist, "var", None)}[comp]
                rows = evaluation.band_table(ref, pred, truth_vals, comp)
                stem = f"{figure}_n{n}_{spec.label}_lam{_lam_tag(spec.lam)}_{comp}"
                path = _write_rows(art.reports / f"{stem}.csv", rows, list(plots.BAND_COLUMNS))
                res.reports.append(path)
                res.plots.append(plots.plot_file(path, "bands", art.plots / f"{stem}.svg",
                                                 title=f"N={n} {spec.label} lambda={spec.lam:g} ({comp})",
                                                 data=(ds.xs, ds.ys) if comp != "sigma2" else None))
                widths = [r["model_hi"] - r["model_lo"] for r in rows if "model_hi" in r]
                res.summary[stem] = {
                    "median_model_width_data": _region_median(rows, widths, _data_region(cfg)),
                    "median_ref_width_data": _region_median(rows, [r["ref_hi"] - r["ref_lo"] for r in rows],
                                                            _data_region(cfg)),
                    "diverged": trained.diverged,
                }
    return res


def _region_median(rows, values, region) -> Optional[float]:
    sel = [v for r, v in zip(rows, values) if region[0] <= r["x"] <= region[1]]
    return float(np.median(sel)) if sel else None


def evaluate(cfg: ExperimentConfig, art: Artifacts, n: int, ref: reference.ReferenceEstimate,
             train_missing: bool, ds: Optional[datagen.Dataset] = None) -> evaluation.EvalReport:
    """Faithfulness sweep of every configured model against ``ref``.

    With ``train_missing`` false, models without a checkpoint are reported as missing.
    """
    preds = {}
    for spec in cfg.loss_specs():
        if train_missing:
            trained = train_model(cfg, art, spec, n, ds=ds)
        else:
            trained = load_model(cfg, art, spec, n)
        ok = trained is not None and not trained.diverged
        preds[(spec.kind, spec.lam)] = nn.to_dist(cfg.head, trained.predict(ref.grid)) if ok else None
    return evaluation.faithfulness_sweep(ref, preds, _data_region(cfg))


def write_eval(report: evaluation.EvalReport, art: Artifacts, stem: str) -> Path:
    csv_path = art.reports / f"{stem}.csv"
    report.to_csv(csv_path)
    report.to_json(art.reports / f"{stem}.json")
    return csv_path


def run_faithfulness(cfg: ExperimentConfig, art: Artifacts, figure: str = "fig3") -> FigureResult:
    res = FigureResult(figure)
    for n in cfg.n:
        ds = dataset_for(cfg, art, n)
        ref = reference_for(cfg, art, n)
        report = evaluate(cfg, art, n, ref, train_missing=True, ds=ds)
        stem = f"{figure}_n{n}"
        csv_path = write_eval(report, art, stem)
        res.reports.append(csv_path)
        res.plots.append(plots.plot_file(csv_path, "w1", art.plots / f"{stem}.svg", title=f"W1 to reference, N={n}"))
        res.summary[stem] = report.summary
    return res


def run_trajectories(cfg: ExperimentConfig, art: Artifacts, figure: str) -> FigureResult:
    """Grid-mean head parameters over epochs for ``runs`` initialisations on one dataset."""
    res = FigureResult(figure)
    names = nn.HEAD_PARAM_NAMES[cfg.head]
    for n in cfg.n:
        ds = dataset_for(cfg, art, n)
        for spec in cfg.loss_specs():
            runs = [train_model(cfg, art, spec, n, run=r, ds=ds) for r in range(cfg.runs)]
            stem = f"{figure}_n{n}_{spec.label}_lam{_lam_tag(spec.lam)}"
            rows = []
            for r, tr in enumerate(runs):
                for rec in tr.records:
                    rows.append({"run": r, "epoch": rec["epoch"], **{p: rec["mean_" + p] for p in names}})
            path = _write_rows(art.reports / f"{stem}.csv", rows, ["run", "epoch", *names])
            res.reports.append(path)
            for p in names:
                res.plots.append(plots.plot_file(path, "runs", art.plots / f"{stem}_{p}.svg",
                                                 title=f"{spec.label} lambda={spec.lam:g}: mean {p}", value=p))
            res.summary[stem] = {
                "diverged_runs": [r for r, tr in enumerate(runs) if tr.diverged],
                "final_cv": {p: _cv([tr.records[-1]["mean_" + p] for tr in runs if tr.records]) for p in names},
            }
    return res


def _cv(values) -> Optional[float]:
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return None
    return float(v.std(ddof=1) / abs(v.mean()))


def reproduce(figure: str, cfg: ExperimentConfig) -> FigureResult:
    started = time.time()
    art = Artifacts(cfg.out)
    if figure in ("fig2", "fig5"):
        res = run_bands(cfg, art, figure)
    elif figure == "fig3":
        res = run_faithfulness(cfg, art, figure)
    elif figure in ("fig4", "fig6"):
        res = run_trajectories(cfg, art, figure)
    else:
        raise ConfigError(f"unknown figure {figure!r}; expected one of {', '.join(FIGURES)}")
    (art.reports / f"{figure}_summary.json").write_text(json.dumps(res.summary, indent=2, sort_keys=True) + "\n")
    art.write_manifest(f"reproduce_{figure}", cfg, started, {
        "reports": [str(p.relative_to(art.root)) for p in res.reports],
        "plots": [str(p.relative_to(art.root)) for p in res.plots],
    })
    return res
