"""Experiment protocols: single runs, parameter sweeps, method comparisons.

Configs are flat dataclasses with a lossless JSON round-trip; every run is
fully determined by (config, seed) and writes the versioned CSV logs. Sweeps
execute one run per worker with isolated state; results are ordered by grid
index and seed so the output does not depend on the worker count.
"""

import dataclasses
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import data as datamod
from .model import NetworkConfig, NetworkParams
from .optimizer import DivergenceError, TrainSchedule, train
from .regularizer import GscRegularizer
from .runlog import (COMPARE_SCHEMA, SWEEP_SCHEMA, read_csv, write_rows_csv)

MU_RANGE = (1e-3, 10.0)
TAU_RANGE = (1e-8, 1.0)
FULL_GRID_POINTS = 41
DESK_GRID_POINTS = 9
DESK_SEEDS = (0, 1, 2)

SWEEP_COLUMNS = ["param", "value", "n_seeds", "n_failed",
                 "train_loss_mean", "test_loss_mean", "nnz_mean", "recommended"]


@dataclass
class ExperimentConfig:
    dataset: dict = field(default_factory=lambda: {
        "kind": "teacher_student", "n0": 20, "n_star": 5,
        "m_train": 200, "m_test": 100, "activation": "silu", "seed": 0,
    })
    n: int = 100
    activation: str = "silu"
    kappa: float | None = None        # None -> 1/sqrt(n)
    method: str = "ggn-score"
    tau: float = 1e-4
    mu: float | None = None           # None -> 1/kappa
    v_block_only: bool = False
    alpha_bar: float = 0.95
    gd_lr: float = 1.0
    gd_include_reg: bool = False
    batch_size: int | None = None
    steps: int | None = 200
    epochs: int | None = None
    gd_steps: int = 800               # used by the GD side of compare runs
    seeds: list = field(default_factory=lambda: [0])
    diag_every: int = 1
    eval_every: int | None = None
    out_dir: str = "runs"
    scale_free: bool = False
    init_scale: float = 1.0
    step_form: str = "woodbury"
    ti_probe_max: int | None = None

    def to_json(self):
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text):
        payload = json.loads(text)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(payload) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**payload)

    @classmethod
    def load(cls, path):
        return cls.from_json(Path(path).read_text())

    def save(self, path):
        Path(path).write_text(self.to_json())


def build_dataset(spec):
    kind = spec["kind"]
    if kind == "teacher_student":
        rng = np.random.default_rng(spec.get("seed", 0))
        teacher = datamod.make_teacher(
            spec.get("n_star", 5), spec["n0"], spec.get("activation", "silu"), rng)
        return datamod.gen_teacher_student(
            teacher, spec["m_train"], spec.get("m_test", 0), rng)
    if kind == "mnist":
        ds = datamod.load_mnist(spec.get("path"))
        subset = spec.get("subset_train")
        if subset:
            ds = datamod.Dataset(
                X_train=ds.X_train[:subset], y_train=ds.y_train[:subset],
                X_test=ds.X_test, y_test=ds.y_test, name=ds.name,
                n_classes=ds.n_classes,
                metadata={**ds.metadata, "subset_train": subset,
                          "labels_train": ds.metadata["labels_train"][:subset]})
        return ds
    if kind == "mnist_ts":
        mnist = datamod.load_mnist(spec.get("path"))
        ds, _ = datamod.mnist_teacher_student(
            mnist, n_star=spec.get("n_star", 16), seed=spec.get("seed", 0),
            teacher_steps=spec.get("teacher_steps", 2000),
            teacher_lr=spec.get("teacher_lr", 1.0))
        return ds
    if kind == "uci":
        return datamod.load_uci_csv(spec["path"], spec["name"],
                                    standardize=spec.get("standardize", True))
    raise ValueError(f"unknown dataset kind {kind!r}")


def prepare(config, seed, dataset=None):
    """Materialize (network config, init params, regularizer, schedule, data)."""
    ds = dataset if dataset is not None else build_dataset(config.dataset)
    n0 = ds.X_train.shape[1]
    n_out = ds.n_classes if ds.n_classes is not None else 1
    kappa = config.kappa if config.kappa is not None else 1.0 / math.sqrt(config.n)
    cfg = NetworkConfig(n0=n0, n=config.n, kappa=kappa,
                        activation=config.activation, n_out=n_out)
    mu = config.mu if config.mu is not None else 1.0 / kappa
    reg = None
    if config.method.lower() != "gd" or config.gd_include_reg:
        reg = GscRegularizer(tau=config.tau, mu=mu, p=cfg.p,
                             v_block_only=config.v_block_only,
                             v_block_start=cfg.n * cfg.n0)
    params = NetworkParams.init_gaussian(cfg, np.random.default_rng(seed),
                                         scale=config.init_scale)
    schedule = TrainSchedule(
        batch_size=config.batch_size, steps=config.steps, epochs=config.epochs,
        alpha_bar=config.alpha_bar, gd_lr=config.gd_lr,
        gd_include_reg=config.gd_include_reg, scale_free=config.scale_free,
        step_form=config.step_form, diag_every=config.diag_every,
        eval_every=config.eval_every, ti_probe_max=config.ti_probe_max)
    return cfg, params, reg, schedule, ds


def run(config, seed=None, out_dir=None, dataset=None, write=True):
    """Execute one training run and write runlog/summary CSVs."""
    seed = config.seeds[0] if seed is None else seed
    cfg, params, reg, schedule, ds = prepare(config, seed, dataset=dataset)
    log = train(cfg, params, ds, reg, config.method, schedule, seed)
    if write:
        root = Path(out_dir if out_dir is not None else config.out_dir)
        root.mkdir(parents=True, exist_ok=True)
        log.to_csv(root / f"runlog_s{seed}.csv")
        log.summary_to_csv(root / f"summary_s{seed}.csv")
    return log


def mu_grid(full=False, log=None):
    lo, hi = MU_RANGE
    if full:
        return np.linspace(lo, hi, FULL_GRID_POINTS) if not log else \
            np.logspace(math.log10(lo), math.log10(hi), FULL_GRID_POINTS)
    # the desk grid defaults to log spacing so the decades are all visited
    if log is None or log:
        return np.logspace(math.log10(lo), math.log10(hi), DESK_GRID_POINTS)
    return np.linspace(lo, hi, DESK_GRID_POINTS)


def tau_grid(full=False, log=None):
    lo, hi = TAU_RANGE
    if full:
        return np.linspace(lo, hi, FULL_GRID_POINTS) if not log else \
            np.logspace(math.log10(lo), math.log10(hi), FULL_GRID_POINTS)
    if log is None or log:
        return np.logspace(math.log10(lo), math.log10(hi), DESK_GRID_POINTS)
    return np.linspace(lo, hi, DESK_GRID_POINTS)


def _sweep_task(config_json, param, value, seed):
    """One sweep cell; module-level so worker processes can import it."""
    config = ExperimentConfig.from_json(config_json)
    setattr(config, param, float(value))
    try:
        log = run(config, seed=seed, write=False)
    except (DivergenceError, RuntimeError, ValueError) as err:
        return {"ok": False, "error": str(err)}
    s = log.summary
    return {"ok": True, "train_loss": s["final_train_loss"],
            "test_loss": s["final_test_loss"], "nnz": s["nnz"]}


def _run_sweep(config, param, grid, out_path, workers=1, recommended_value=None):
    config_json = config.to_json()
    cells = [(gi, value, seed) for gi, value in enumerate(grid) for seed in config.seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_sweep_task, config_json, param, value, seed)
                       for _, value, seed in cells]
            results = [f.result() for f in futures]
    else:
        results = [_sweep_task(config_json, param, value, seed)
                   for _, value, seed in cells]
    rows = []
    rec_idx = None
    if recommended_value is not None:
        rec_idx = int(np.argmin(np.abs(np.asarray(grid) - recommended_value)))
    for gi, value in enumerate(grid):
        cell_results = [r for (i, _, _), r in zip(cells, results) if i == gi]
        good = [r for r in cell_results if r["ok"]]
        def mean(key):
            vals = [r[key] for r in good if r[key] is not None]
            return float(np.mean(vals)) if vals else None
        rows.append([param, float(value), len(good), len(cell_results) - len(good),
                     mean("train_loss"), mean("test_loss"), mean("nnz"),
                     gi == rec_idx])
    write_rows_csv(out_path, SWEEP_SCHEMA, SWEEP_COLUMNS, rows)
    return rows


def sweep_mu(config, out_dir=None, full_grid=False, log_grid=None, workers=1):
    """Grid over the smoothing parameter; the row closest to 1/kappa(n) is
    flagged as the recommended setting."""
    root = Path(out_dir if out_dir is not None else config.out_dir)
    root.mkdir(parents=True, exist_ok=True)
    grid = mu_grid(full_grid, log_grid)
    recommended = math.sqrt(config.n) if config.kappa is None else 1.0 / config.kappa
    return _run_sweep(config, "mu", grid, root / "sweep_mu.csv",
                      workers=workers, recommended_value=recommended)


def sweep_tau(config, out_dir=None, full_grid=False, log_grid=None, workers=1):
    """Grid over the regularization strength, logging the zero count per tau."""
    root = Path(out_dir if out_dir is not None else config.out_dir)
    root.mkdir(parents=True, exist_ok=True)
    grid = tau_grid(full_grid, log_grid)
    return _run_sweep(config, "tau", grid, root / "sweep_tau.csv", workers=workers)


COMPARE_COLUMNS = ["iter", "ggn_elapsed_s", "ggn_train_loss", "ggn_test_loss",
                   "gd_elapsed_s", "gd_train_loss", "gd_test_loss"]


def compare_gd(config, out_dir=None, seed=None):
    """Run both methods from identical data and initial parameters.

    Writes the two run logs plus a merged CSV keyed by iteration, carrying
    each method's elapsed seconds so time-axis comparisons read off the same
    file.
    """
    seed = config.seeds[0] if seed is None else seed
    root = Path(out_dir if out_dir is not None else config.out_dir)
    root.mkdir(parents=True, exist_ok=True)
    ds = build_dataset(config.dataset)

    ggn_cfg = dataclasses.replace(config, method="ggn-score")
    gd_cfg = dataclasses.replace(config, method="gd", steps=config.gd_steps)
    log_ggn = run(ggn_cfg, seed=seed, dataset=ds, write=False)
    log_gd = run(gd_cfg, seed=seed, dataset=ds, write=False)
    log_ggn.to_csv(root / "runlog_ggn.csv")
    log_gd.to_csv(root / "runlog_gd.csv")

    rows = []
    for it in range(max(len(log_ggn.rows), len(log_gd.rows))):
        a = log_ggn.rows[it] if it < len(log_ggn.rows) else None
        b = log_gd.rows[it] if it < len(log_gd.rows) else None
        rows.append([
            it,
            a.elapsed_s if a else None, a.train_loss if a else None,
            a.test_loss if a else None,
            b.elapsed_s if b else None, b.train_loss if b else None,
            b.test_loss if b else None,
        ])
    write_rows_csv(root / "compare.csv", COMPARE_SCHEMA, COMPARE_COLUMNS, rows)
    return log_ggn, log_gd


def desk_sweep_config(**overrides):
    """Sweep template: 500/1000 teacher-student samples at desk budget.

    The teacher is deliberately harder than the comparison experiment's
    (wider, higher input dimension) so the generalization floor is set by
    the sample size rather than by vanishing regularization; that is what
    makes the sub-1e-4 strength rows run into the same plateau. The student
    width is sized for a single-core half-hour sweep.
    """
    base = dict(
        dataset={"kind": "teacher_student", "n0": 60, "n_star": 15,
                 "m_train": 500, "m_test": 1000, "activation": "silu", "seed": 0},
        n=250, steps=120, diag_every=0, eval_every=0,
        seeds=list(DESK_SEEDS), out_dir="runs/sweep",
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def desk_compare_config(**overrides):
    """GD-vs-GGN comparison sized for a single-core desk budget."""
    base = dict(
        dataset={"kind": "teacher_student", "n0": 20, "n_star": 5,
                 "m_train": 400, "m_test": 800, "activation": "silu", "seed": 0},
        n=300, steps=150, gd_steps=800, diag_every=0, eval_every=25,
        out_dir="runs/compare",
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def mnist_config(**overrides):
    base = dict(
        dataset={"kind": "mnist", "subset_train": 5000},
        n=512, activation="relu", batch_size=16, epochs=1, steps=None,
        diag_every=50, eval_every=50, out_dir="runs/mnist",
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def mnist_ts_config(**overrides):
    base = dict(
        dataset={"kind": "mnist_ts", "n_star": 16, "seed": 0},
        n=1024, activation="silu", batch_size=16, epochs=1, steps=None,
        diag_every=100, eval_every=100, out_dir="runs/mnist_ts",
    )
    base.update(overrides)
    return ExperimentConfig(**base)


# batch size and smoothing factor (times 1/kappa) per the published protocol
UCI_SETTINGS = {
    "pendigits": {"batch_size": 8, "mu_factor": 0.001},
    "letter": {"batch_size": 64, "mu_factor": 10.0},
    "avila": {"batch_size": 64, "mu_factor": 10.0},
}


def uci_config(name, path, **overrides):
    settings = UCI_SETTINGS[name]
    n = overrides.pop("n", 128)
    base = dict(
        dataset={"kind": "uci", "name": name, "path": str(path)},
        n=n, activation="silu", batch_size=settings["batch_size"],
        epochs=1, steps=None, mu=settings["mu_factor"] * math.sqrt(n),
        diag_every=100, eval_every=100, out_dir=f"runs/uci_{name}",
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def load_sweep_csv(path):
    schema, header, rows = read_csv(path)
    if schema != SWEEP_SCHEMA:
        raise ValueError(f"{path}: schema {schema!r}, expected {SWEEP_SCHEMA!r}")
    return header, rows
