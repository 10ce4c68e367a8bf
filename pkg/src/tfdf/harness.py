"""Config-driven experiment runner: single tasks, ablations and parameter sweeps.

Every output file is written atomically. ``result.json`` is a pure function
of the inputs; wall-clock data goes to ``metadata.json``.
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .data_io import (
    DEFAULT_SCHEME,
    SCHEMES,
    atomic_write,
    format_float,
    load_task,
)
from .errors import ConfigError, LabelOutOfRange, LengthMismatch, UnknownParameter
from .objective import ObjectiveParams
from .solver import (
    Problem,
    SolverConfig,
    accuracy,
    nearest_neighbor_labels,
    predict,
    solve_tfdf,
    solve_tfdf_v,
)

log = logging.getLogger(__name__)

LOG_GRID = (0.001, 0.005, 0.01, 0.05, 0.1, 0.5, 1, 5, 10)
DEFAULT_GRIDS = {
    "p": (5, 10, 15, 20, 30),
    "rho": LOG_GRID,
    "lambda": LOG_GRID,
    "eta": LOG_GRID,
    "delta": LOG_GRID,
    "xi": LOG_GRID,
}
SWEEPABLE = ("p", "rho", "lambda", "eta", "xi", "delta", "alpha")

# Ablation rows: (name, da, ld, gd); SRM is always on.
ABLATION_ROWS = (
    ("srm", False, False, False),
    ("srm+da", True, False, False),
    ("srm+ld", False, True, False),
    ("srm+da+ld", True, True, False),
    ("srm+da+ld+gd", True, True, True),
)

_SOLVER_KEYS = {
    "eta": "eta", "lambda": "lam", "rho": "rho", "xi": "xi", "delta": "delta",
}
_SOLVER_FIELDS = (
    "iterations", "iterations_v", "alpha", "theta1", "theta2", "epsilon",
    "neighbors", "kernel", "bandwidth", "base_classifier",
)


def _reject_unknown(section, data, allowed):
    extra = sorted(set(data) - set(allowed))
    if extra:
        raise ConfigError(f"unknown key(s) in {section}: {', '.join(extra)}")


@dataclass(frozen=True)
class TaskSpec:
    source_features: str
    source_labels: str
    target_features: str
    target_labels: str | None = None
    format: str = "csv"
    num_classes: int | None = None


@dataclass(frozen=True)
class Ablation:
    srm: bool = True
    da: bool = True
    ld: bool = True
    gd: bool = True

    def __post_init__(self):
        if not self.srm:
            raise ConfigError("the srm component cannot be switched off")


@dataclass(frozen=True)
class ExperimentConfig:
    task: TaskSpec
    preprocessing: str = DEFAULT_SCHEME
    method: str = "tfdf"
    solver: SolverConfig = field(default_factory=SolverConfig)
    ablation: Ablation = field(default_factory=Ablation)
    sweeps: dict = field(default_factory=dict)
    output_dir: str | None = None
    jobs: int = 1

    def __post_init__(self):
        if self.preprocessing not in SCHEMES:
            raise ConfigError(f"unknown preprocessing {self.preprocessing!r}")
        if self.method not in ("tfdf", "tfdf_v"):
            raise ConfigError(f"unknown method {self.method!r}")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        for name in self.sweeps:
            if name not in SWEEPABLE:
                raise UnknownParameter(f"cannot sweep {name!r}; choose from {SWEEPABLE}")

    @classmethod
    def from_dict(cls, data, base_dir=None):
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        _reject_unknown("config", data, [f.name for f in fields(cls)])
        if "task" not in data:
            raise ConfigError("config needs a 'task' section")
        task_data = dict(data["task"])
        _reject_unknown("task", task_data, [f.name for f in fields(TaskSpec)])
        base = Path(base_dir) if base_dir else None
        for key in ("source_features", "source_labels", "target_features", "target_labels"):
            value = task_data.get(key)
            if value is not None and base is not None and not Path(value).is_absolute():
                task_data[key] = str(base / value)
        try:
            task = TaskSpec(**task_data)
        except TypeError as exc:
            raise ConfigError(f"task section: {exc}") from None

        solver_data = dict(data.get("solver", {}))
        _reject_unknown("solver", solver_data, [*_SOLVER_KEYS, *_SOLVER_FIELDS])
        try:
            params = ObjectiveParams(
                **{_SOLVER_KEYS[k]: float(v) for k, v in solver_data.items() if k in _SOLVER_KEYS}
            )
            solver = SolverConfig(
                params=params, **{k: v for k, v in solver_data.items() if k in _SOLVER_FIELDS}
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"solver section: {exc}") from None

        ablation_data = data.get("ablation", {})
        _reject_unknown("ablation", ablation_data, ["srm", "da", "ld", "gd"])
        output_dir = data.get("output_dir")
        if output_dir is not None and base is not None and not Path(output_dir).is_absolute():
            output_dir = str(base / output_dir)
        return cls(
            task=task,
            preprocessing=data.get("preprocessing", DEFAULT_SCHEME),
            method=data.get("method", "tfdf"),
            solver=solver,
            ablation=Ablation(**ablation_data),
            sweeps={k: list(v) for k, v in data.get("sweeps", {}).items()},
            output_dir=output_dir,
            jobs=int(data.get("jobs", 1)),
        )

    @classmethod
    def from_file(cls, path):
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(data, base_dir=path.parent)

    def effective_solver(self):
        """Solver config with switched-off components zeroed."""
        changes = {}
        if not self.ablation.da:
            changes["lam"] = 0.0
        if not self.ablation.ld:
            changes["rho"] = 0.0
        if not self.ablation.gd:
            changes["xi"] = 0.0
        return self.solver.with_params(**changes) if changes else self.solver

    def solver_dict(self):
        s = self.effective_solver()
        out = {k: getattr(s.params, attr) for k, attr in _SOLVER_KEYS.items()}
        out.update({k: getattr(s, k) for k in _SOLVER_FIELDS})
        return out


@dataclass
class TaskResult:
    accuracy: float | None
    confusion: np.ndarray | None
    history: list
    seconds: float
    mu: float
    predictions: np.ndarray
    scores: np.ndarray
    source_only_accuracy: float | None = None
    n_source: int = 0
    num_classes: int = 0
    target_truth: np.ndarray | None = field(default=None, repr=False)
    source_y: np.ndarray | None = field(default=None, repr=False)

    def to_json(self, config=None):
        out = {
            "accuracy": self.accuracy,
            "source_only_1nn_accuracy": self.source_only_accuracy,
            "final_mu": self.mu,
            "num_classes": self.num_classes,
            "n_source": self.n_source,
            "n_target": int(len(self.predictions)),
            "iterations_recorded": len(self.history),
            "confusion": None if self.confusion is None else self.confusion.tolist(),
            "predictions": (self.predictions + 1).tolist(),
        }
        if config is not None:
            out["config"] = {
                "preprocessing": config.preprocessing,
                "method": config.method,
                "ablation": {k: getattr(config.ablation, k) for k in ("srm", "da", "ld", "gd")},
                "solver": config.solver_dict(),
            }
        return out


def confusion_matrix(pred, truth, num_classes):
    """Counts with rows = true class, columns = predicted class (0-based input)."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise LengthMismatch(f"{len(pred)} predictions for {len(truth)} labels")
    for arr in (pred, truth):
        if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
            raise LabelOutOfRange(f"labels must lie in 1..{num_classes}")
    M = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(M, (truth, pred), 1)
    return M


def load_config_task(config):
    spec = config.task
    return load_task(
        spec.source_features, spec.source_labels, spec.target_features,
        spec.target_labels, spec.format, spec.num_classes,
    )


def run_task(config, task=None, write=True):
    """Preprocess, build kernels, solve, predict and score one task.

    ``task`` overrides loading from ``config.task`` (used by ablations and
    sweeps to load data once).
    """
    if task is None:
        task = load_config_task(config)
    start = time.perf_counter()
    prepared = task.preprocessed(config.preprocessing)
    solver = config.effective_solver()
    problem = Problem(prepared, solver)
    solve = solve_tfdf if config.method == "tfdf" else solve_tfdf_v
    result = solve(prepared, solver, problem)
    scores, _ = predict(result.beta, problem.K)
    pred = np.argmax(scores[:, problem.target_cols], axis=0)
    truth = prepared.target_y

    baseline = None
    acc = conf = None
    if truth is not None:
        acc = accuracy(pred, truth)
        conf = confusion_matrix(pred, truth, prepared.num_classes)
        nn = nearest_neighbor_labels(prepared.source_X, prepared.source_y, prepared.target_X)
        baseline = accuracy(nn, truth)
    seconds = time.perf_counter() - start
    out = TaskResult(
        accuracy=acc,
        confusion=conf,
        history=result.history,
        seconds=seconds,
        mu=result.mu,
        predictions=pred,
        scores=scores,
        source_only_accuracy=baseline,
        n_source=prepared.n_source,
        num_classes=prepared.num_classes,
        target_truth=truth,
        source_y=prepared.source_y,
    )
    if write and config.output_dir:
        write_task_outputs(out, config, config.output_dir)
    return out


def _csv(rows, header):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_cell(v) for v in row))
    return "\n".join(lines) + "\n"


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format_float(v)
    return str(v)


def diagnostics_rows(history):
    for h in history:
        o = h.objective
        yield (
            h.iteration, h.mmd_distance, h.mmcd_distance, h.target_accuracy, h.mu,
            o.srm, o.ridge, o.distribution, o.manifold, o.confusion, o.constraint_penalty, o.total,
        )


DIAGNOSTIC_COLUMNS = (
    "iteration", "mmd", "mmcd", "accuracy", "mu",
    "srm", "ridge", "distribution", "manifold", "confusion", "constraint_penalty", "total",
)


def export_diagnostics(history, path):
    if not history:
        raise ValueError("no diagnostics to export")
    atomic_write(path, _csv(diagnostics_rows(history), DIAGNOSTIC_COLUMNS))


def export_embeddings(result, path):
    """Per-sample prediction scores (columns of ``beta^T K``) for external plotting."""
    n_s = result.n_source
    C = result.scores.shape[0]
    rows = []
    for i in range(result.scores.shape[1]):
        if i < n_s:
            domain, label = "source", int(result.source_y[i]) + 1
            truth = label
        else:
            j = i - n_s
            domain, label = "target", int(result.predictions[j]) + 1
            truth = None if result.target_truth is None else int(result.target_truth[j]) + 1
        rows.append((i, domain, label, truth, *result.scores[:, i]))
    header = ("index", "domain", "label", "truth", *(f"score_{c + 1}" for c in range(C)))
    atomic_write(path, _csv(rows, header))


def _json(data):
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def write_task_outputs(result, config, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write(out / "result.json", _json(result.to_json(config)))
    atomic_write(
        out / "metadata.json",
        _json({
            "wall_clock_seconds": result.seconds,
            "finished_at": datetime.now(timezone.utc).isoformat(),
        }),
    )
    if result.confusion is not None:
        C = result.confusion.shape[0]
        rows = [(c + 1, *result.confusion[c]) for c in range(C)]
        atomic_write(
            out / "confusion.csv",
            _csv(rows, ("truth", *(f"pred_{c + 1}" for c in range(C)))),
        )
    if result.history:
        export_diagnostics(result.history, out / "diagnostics.csv")
    export_embeddings(result, out / "embeddings.csv")


def _run_cells(config, cells, task):
    """Run ``(name, cell_config)`` pairs, up to ``config.jobs`` at a time."""
    def one(cell):
        name, cfg = cell
        log.info("running %s", name)
        return run_task(cfg, task=task)

    if config.jobs == 1:
        return [one(c) for c in cells]
    with ThreadPoolExecutor(max_workers=config.jobs) as pool:
        return list(pool.map(one, cells))


def _subdir(config, *parts):
    if not config.output_dir:
        return None
    return str(Path(config.output_dir, *parts))


def run_ablation(config, task=None):
    """The five component combinations; returns ``[(row_name, flags, TaskResult)]``."""
    if task is None:
        task = load_config_task(config)
    cells = []
    for name, da, ld, gd in ABLATION_ROWS:
        cfg = replace(
            config,
            ablation=Ablation(True, da, ld, gd),
            output_dir=_subdir(config, "ablation", name.replace("+", "_")),
        )
        cells.append((name, cfg))
    results = _run_cells(config, cells, task)
    table = [(name, (True, da, ld, gd), r) for (name, da, ld, gd), r in zip(ABLATION_ROWS, results)]
    if config.output_dir:
        Path(config.output_dir).mkdir(parents=True, exist_ok=True)
        rows = [(name, *flags, r.accuracy) for name, flags, r in table]
        atomic_write(
            Path(config.output_dir) / "ablation.csv",
            _csv(rows, ("row", "srm", "da", "ld", "gd", "accuracy")),
        )
    return table


def with_parameter(config, parameter, value):
    """Copy of ``config`` with one sweepable parameter replaced."""
    s = config.solver
    if parameter == "p":
        return replace(config, solver=replace(s, neighbors=int(value)))
    if parameter == "alpha":
        return replace(config, solver=replace(s, alpha=float(value)))
    if parameter in _SOLVER_KEYS:
        return replace(config, solver=s.with_params(**{_SOLVER_KEYS[parameter]: float(value)}))
    raise UnknownParameter(f"cannot sweep {parameter!r}; choose from {SWEEPABLE}")


def run_sweep(config, parameter, grid=None, task=None):
    """One run per grid value with everything else fixed; returns ``[(value, TaskResult)]``."""
    if parameter not in SWEEPABLE:
        raise UnknownParameter(f"cannot sweep {parameter!r}; choose from {SWEEPABLE}")
    if grid is None:
        grid = config.sweeps.get(parameter, DEFAULT_GRIDS.get(parameter))
    if not grid:
        raise ConfigError(f"no grid given for {parameter!r}")
    if task is None:
        task = load_config_task(config)
    cells = [
        (f"{parameter}={v}",
         replace(with_parameter(config, parameter, v),
                 output_dir=_subdir(config, "sweep", parameter, f"{v}")))
        for v in grid
    ]
    results = _run_cells(config, cells, task)
    pairs = list(zip(grid, results))
    if config.output_dir:
        Path(config.output_dir).mkdir(parents=True, exist_ok=True)
        atomic_write(
            Path(config.output_dir) / "sweep.csv",
            _csv([(parameter, v, r.accuracy) for v, r in pairs], ("parameter", "value", "accuracy")),
        )
    return pairs
