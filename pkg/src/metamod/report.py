"""Evaluation across methods and suites, sharing matrices, module recovery,
and report file emission."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .metalearn import TrainConfig, metatest_solve, rng_stream
from .pool import module_forward
from .structures import TASK_ERROR_SCALE, Structure
from .tasks import BASIS_NAMES, TaskSuite, basis_function

METHOD_NAMES = ("Pooled", "MAML", "BounceGrad", "MOMA")

_NS_EVAL = 1


@dataclass(frozen=True)
class MethodArtifact:
    """A trained method ready for meta-testing."""

    pool: object
    scheme: object
    config: TrainConfig
    digest: str = ""


@dataclass(frozen=True)
class ResultRow:
    suite: str
    method: str
    mean_loss: float
    std_error: float
    n_tasks: int
    seed: int
    config_digest: str


@dataclass
class ResultTable:
    rows: list
    per_task: dict = field(default_factory=dict)  # method -> per-task losses
    structures: dict = field(default_factory=dict)  # method -> solved structures


@dataclass
class SharingMatrix:
    labels: list
    matrix: np.ndarray  # mean pairwise sharing fraction, symmetric, in [0, 1]
    counts: np.ndarray  # task pairs averaged per entry


def _prediction_loss(predict, dataset):
    y_hat = np.atleast_2d(predict(dataset.x))
    diff = y_hat - dataset.y
    return TASK_ERROR_SCALE * float(np.mean(diff * diff))


def evaluate_methods(artifacts: dict, metatest_suite: TaskSuite, suite_name: str,
                     seed: int) -> ResultTable:
    """Solve every meta-test task per method and aggregate mean +/- standard
    error of the scaled loss on the task's test split. Solving reads the
    trained pools only; nothing is mutated."""
    rows = []
    per_task = {}
    structures = {}
    for method_idx, (method, art) in enumerate(sorted(artifacts.items())):
        if method not in METHOD_NAMES:
            raise ConfigError(f"unknown method {method!r} (expected one of {METHOD_NAMES})",
                              field="methods")
        losses = []
        solved = []
        for j, task in enumerate(metatest_suite.tasks):
            rng = rng_stream(seed, _NS_EVAL, method_idx, j)
            structure, _, predict = metatest_solve(task.train, art.scheme, art.pool,
                                                   art.config, rng=rng)
            losses.append(_prediction_loss(predict, task.test))
            solved.append(structure)
        losses = np.asarray(losses)
        n = len(losses)
        se = float(losses.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        rows.append(ResultRow(suite=suite_name, method=method,
                              mean_loss=float(losses.mean()), std_error=se,
                              n_tasks=n, seed=seed, config_digest=art.digest))
        per_task[method] = losses.tolist()
        structures[method] = solved
    return ResultTable(rows, per_task, structures)


def sharing_fraction(a: Structure, b: Structure) -> float:
    """Multiset overlap of module ids, relative to the structure size."""
    ids_a, ids_b = a.module_ids(), b.module_ids()
    remaining = list(ids_b)
    shared = 0
    for mid in ids_a:
        if mid in remaining:
            remaining.remove(mid)
            shared += 1
    return shared / max(len(ids_a), len(ids_b))


def sharing_matrix(structures, group_labels) -> SharingMatrix:
    """Mean pairwise sharing fraction between (and within) task groups.

    Diagonal entries average over distinct task pairs of the same group;
    entries with no pairs hold NaN with count 0.
    """
    if len(structures) != len(group_labels):
        raise ConfigError("one group label per structure required", field="grouping")
    labels = sorted(set(group_labels))
    index = {g: i for i, g in enumerate(labels)}
    k = len(labels)
    total = np.zeros((k, k))
    counts = np.zeros((k, k), dtype=np.int64)
    for a in range(len(structures)):
        for b in range(a + 1, len(structures)):
            i, j = index[group_labels[a]], index[group_labels[b]]
            frac = sharing_fraction(structures[a], structures[b])
            total[i, j] += frac
            counts[i, j] += 1
            if i != j:
                total[j, i] += frac
                counts[j, i] += 1
    with np.errstate(invalid="ignore"):
        matrix = np.where(counts > 0, total / np.maximum(counts, 1), np.nan)
    return SharingMatrix(labels=labels, matrix=matrix, counts=counts)


def match_modules_to_basis(pool, basis_names=BASIS_NAMES, grid=None, stats=None):
    """Closest module (mean absolute deviation on the grid) per basis function.

    Basis targets are pushed through the suite's standardization transform
    with the pooled mean split evenly between the two summands of a pair
    task: (f(x) - mean/2) / std. Without stats the raw basis values are used.
    """
    if grid is None:
        grid = np.linspace(-1.0, 1.0, 201)
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size == 0:
        raise ConfigError("empty evaluation grid", field="grid")
    X = np.ascontiguousarray(grid.reshape(-1, 1))
    preds = {}
    for mid in pool.module_ids:
        arch = pool.arch_of(mid)
        if arch.in_dim != 1 or arch.out_dim != 1:
            raise ConfigError(f"module {mid} is not scalar-to-scalar", field="pool")
        preds[mid] = module_forward(pool, mid, X)[:, 0]
    if stats is None:
        mean, std = 0.0, 1.0
    else:
        mean = float(np.asarray(stats[0]).ravel()[0])
        std = float(np.asarray(stats[1]).ravel()[0])
    matches = []
    for name in basis_names:
        target = (basis_function(name, grid) - 0.5 * mean) / std
        best_mid, best_mad = None, np.inf
        for mid, yhat in preds.items():
            mad = float(np.mean(np.abs(yhat - target)))
            if mad < best_mad:
                best_mid, best_mad = mid, mad
        matches.append((name, best_mid, best_mad))
    return matches


# ---------------------------------------------------------------------------
# file emission


def _float_str(v):
    if v is None or (isinstance(v, float) and np.isnan(v)):
        return "nan"
    return repr(float(v))


def emit_report(obj, out_dir, config_digest="", seed=None, name=None) -> list:
    """Write CSV file(s) plus a JSON sidecar; returns the written paths.

    Content is deterministic given inputs; only the sidecar timestamp varies.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if isinstance(obj, ResultTable):
        path = out / f"{name or 'results'}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["suite", "method", "mean_loss", "std_error", "n_tasks",
                        "seed", "config_digest"])
            for r in obj.rows:
                w.writerow([r.suite, r.method, _float_str(r.mean_loss),
                            _float_str(r.std_error), r.n_tasks, r.seed, r.config_digest])
        written.append(str(path))
    elif isinstance(obj, SharingMatrix):
        base = name or "sharing"
        path = out / f"{base}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["group", *obj.labels])
            for i, g in enumerate(obj.labels):
                w.writerow([g] + [_float_str(v) for v in obj.matrix[i]])
        written.append(str(path))
        cpath = out / f"{base}_counts.csv"
        with open(cpath, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["group", *obj.labels])
            for i, g in enumerate(obj.labels):
                w.writerow([g] + [int(v) for v in obj.counts[i]])
        written.append(str(cpath))
    else:
        raise ConfigError(f"cannot emit object of type {type(obj).__name__}", field="report")
    sidecar = {
        "written": [Path(p).name for p in written],
        "config_digest": config_digest,
        "seed": seed,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    spath = out / f"{(name or 'report')}_sidecar.json"
    with open(spath, "w") as fh:
        json.dump(sidecar, fh, indent=1)
    written.append(str(spath))
    return written
