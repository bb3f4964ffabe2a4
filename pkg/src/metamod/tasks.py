"""Task-suite generation and ingestion.

Two synthetic families (sums of pairs of 16 fixed nonlinear basis functions;
parametrized sines) plus a manifest+CSV format for external regression
suites. Targets across a suite are standardized with one affine transform
fitted on the pooled meta-training targets, so the x100 loss scale is
comparable across tasks; meta-test suites reuse the meta-training stats.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, DegenerateDataError, IngestionError

SUITE_SCHEMA = 1


class Dataset(NamedTuple):
    x: np.ndarray  # (n, d_in)
    y: np.ndarray  # (n, d_out)

    def __len__(self):
        return self.x.shape[0]


@dataclass
class TaskData:
    train: Dataset
    test: Dataset
    label: dict
    mean: np.ndarray | None = None  # per-output standardization stats
    std: np.ndarray | None = None


@dataclass
class TaskSuite:
    tasks: list[TaskData]
    meta: dict

    def __len__(self):
        return len(self.tasks)

    @property
    def stats(self):
        std = self.meta.get("standardization")
        if std is None:
            return None
        return np.asarray(std["mean"], dtype=np.float64), np.asarray(std["std"], dtype=np.float64)


# ---------------------------------------------------------------------------
# basis functions (each scaled so outputs stay within [-1, 1] on [-1, 1])

_FOUR_PI = 4.0 * np.pi


def _sinc4pi(x):
    # sin(4*pi*x) / (4*pi*x), = 1 at x = 0
    return np.sinc(4.0 * x)


BASIS_FUNCTIONS = {
    "abs": np.abs,
    "arcsinh": lambda x: np.arcsinh(4.0 * x) / np.arcsinh(4.0),
    "arctan": lambda x: np.arctan(4.0 * x) / np.arctan(4.0),
    "cbrt": np.cbrt,
    "ceil": np.ceil,
    "cos": lambda x: np.cos(_FOUR_PI * x),
    "cosh": lambda x: np.cosh(4.0 * x) / np.cosh(4.0),
    "exp2": lambda x: np.exp2(4.0 * x) / np.exp2(4.0),
    "floor": np.floor,
    "rint": np.rint,
    "sign": np.sign,
    "sin": lambda x: np.sin(_FOUR_PI * x),
    "sinc": _sinc4pi,
    "square": np.square,
    "tanh": np.tanh,
    "id": lambda x: np.asarray(x, dtype=np.float64),
}

BASIS_NAMES = tuple(BASIS_FUNCTIONS)


def basis_function(name: str, x):
    try:
        fn = BASIS_FUNCTIONS[name]
    except KeyError:
        raise ConfigError(f"unknown basis function {name!r}", field="basis") from None
    return fn(np.asarray(x, dtype=np.float64))


# ---------------------------------------------------------------------------
# standardization


def fit_standardization(suite: TaskSuite):
    """Per-output mean/std over every target in the suite (population std)."""
    pooled = np.concatenate([np.concatenate([t.train.y, t.test.y]) for t in suite.tasks])
    mean = pooled.mean(axis=0)
    std = pooled.std(axis=0)
    if np.any(std <= 0) or not np.all(np.isfinite(std)):
        raise DegenerateDataError("target variance is zero or non-finite")
    return mean, std


def standardize(raw_suite: TaskSuite, stats=None) -> TaskSuite:
    """Affine-transform all targets; fits on the suite itself unless `stats`
    (a meta-training suite's transform) is supplied."""
    mean, std = fit_standardization(raw_suite) if stats is None else stats
    mean = np.asarray(mean, dtype=np.float64)
    std = np.asarray(std, dtype=np.float64)

    def tx(ds):
        return Dataset(ds.x, np.ascontiguousarray((ds.y - mean) / std))

    tasks = [
        replace(t, train=tx(t.train), test=tx(t.test), mean=mean.copy(), std=std.copy())
        for t in raw_suite.tasks
    ]
    meta = dict(raw_suite.meta)
    meta["standardization"] = {"mean": mean.tolist(), "std": std.tolist()}
    return TaskSuite(tasks, meta)


def invert_standardization(y, mean, std):
    return y * np.asarray(std) + np.asarray(mean)


# ---------------------------------------------------------------------------
# generators


def _resolve_counts(n_train, rng):
    """n_train may be an int or an inclusive (lo, hi) range drawn per task."""
    if isinstance(n_train, (tuple, list)):
        lo, hi = int(n_train[0]), int(n_train[1])
        if not 1 <= lo <= hi:
            raise ConfigError("need 1 <= lo <= hi for an n_train range", field="n_train")
        return int(rng.integers(lo, hi + 1))
    if int(n_train) < 1:
        raise ConfigError("n_train must be >= 1", field="n_train")
    return int(n_train)


def _raw_sum_tasks(pair_indices, n_train, n_test, rng):
    tasks = []
    for idx in pair_indices:
        a, b = BASIS_NAMES[idx // 16], BASIS_NAMES[idx % 16]
        k = _resolve_counts(n_train, rng)
        xs = rng.uniform(-1.0, 1.0, size=(k + n_test, 1))
        ys = basis_function(a, xs) + basis_function(b, xs)
        tasks.append(
            TaskData(
                train=Dataset(xs[:k], ys[:k]),
                test=Dataset(xs[k:], ys[k:]),
                label={"pair": [a, b]},
            )
        )
    return tasks


def gen_sum_suite(n_tasks, n_train, n_test, seed) -> TaskSuite:
    """Sums of ordered pairs of the 16 basis functions, x ~ U[-1, 1].

    Pairs are sampled without replacement from the 16^2 ordered pairs, so at
    most 256 tasks exist.
    """
    train, _ = gen_sum_split(n_tasks, 0, n_train, n_test, seed)
    return train


def gen_sum_split(n_meta_train, n_meta_test, n_train, n_test, seed):
    """Disjoint meta-train/meta-test sum suites sharing the meta-train
    standardization transform."""
    total = n_meta_train + n_meta_test
    if total > 256:
        raise ConfigError(f"{total} tasks requested but only 256 ordered pairs exist",
                          field="n_tasks")
    if n_meta_train < 1:
        raise ConfigError("need at least one meta-training task", field="n_tasks")
    rng = np.random.default_rng(seed)
    picks = rng.choice(256, size=total, replace=False)
    meta = {
        "generator": {
            "family": "sum",
            "n_train": list(n_train) if isinstance(n_train, (tuple, list)) else int(n_train),
            "n_test": n_test,
        },
        "seed": seed,
    }
    raw_train = TaskSuite(_raw_sum_tasks(picks[:n_meta_train], n_train, n_test, rng),
                          dict(meta, n_tasks=n_meta_train, split="meta-train"))
    suite = standardize(raw_train)
    if n_meta_test == 0:
        return suite, TaskSuite([], dict(meta, n_tasks=0, split="meta-test"))
    raw_test = TaskSuite(_raw_sum_tasks(picks[n_meta_train:], n_train, n_test, rng),
                         dict(meta, n_tasks=n_meta_test, split="meta-test"))
    return suite, standardize(raw_test, stats=suite.stats)


def _raw_sine_tasks(n_tasks, n_train, n_test, rng, a_range, b_range, x_range):
    tasks = []
    for _ in range(n_tasks):
        a = rng.uniform(*a_range)
        b = rng.uniform(*b_range)
        k = _resolve_counts(n_train, rng)
        xs = rng.uniform(x_range[0], x_range[1], size=(k + n_test, 1))
        ys = np.sin(a * xs + b)
        tasks.append(
            TaskData(
                train=Dataset(xs[:k], ys[:k]),
                test=Dataset(xs[k:], ys[k:]),
                label={"a": float(a), "b": float(b)},
            )
        )
    return tasks


def gen_sine_suite(n_tasks, n_train, n_test, seed, a_range=(0.1, 5.0),
                   b_range=(0.0, np.pi), x_range=(-5.0, 5.0)) -> TaskSuite:
    """Tasks y = sin(a x + b) with a ~ U[0.1, 5], b ~ U[0, pi], x ~ U[-5, 5]."""
    train, _ = gen_sine_split(n_tasks, 0, n_train, n_test, seed,
                              a_range=a_range, b_range=b_range, x_range=x_range)
    return train


def gen_sine_split(n_meta_train, n_meta_test, n_train, n_test, seed,
                   a_range=(0.1, 5.0), b_range=(0.0, np.pi), x_range=(-5.0, 5.0)):
    if n_meta_train < 1:
        raise ConfigError("need at least one meta-training task", field="n_tasks")
    rng = np.random.default_rng(seed)
    meta = {
        "generator": {"family": "sine", "n_train": n_train, "n_test": n_test,
                      "a_range": list(a_range), "b_range": list(b_range),
                      "x_range": list(x_range)},
        "seed": seed,
    }
    raw_train = TaskSuite(
        _raw_sine_tasks(n_meta_train, n_train, n_test, rng, a_range, b_range, x_range),
        dict(meta, n_tasks=n_meta_train, split="meta-train"))
    suite = standardize(raw_train)
    if n_meta_test == 0:
        return suite, TaskSuite([], dict(meta, n_tasks=0, split="meta-test"))
    raw_test = TaskSuite(
        _raw_sine_tasks(n_meta_test, n_train, n_test, rng, a_range, b_range, x_range),
        dict(meta, n_tasks=n_meta_test, split="meta-test"))
    return suite, standardize(raw_test, stats=suite.stats)


# ---------------------------------------------------------------------------
# manifest + CSV suites


def save_csv_suite(suite: TaskSuite, out_dir, name="suite") -> str:
    """Write manifest + per-task CSVs; returns the manifest path.

    Targets are written as standardized values when the suite carries a
    standardization block (the loader then reuses the stats verbatim).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, task in enumerate(suite.tasks):
        d_in = task.train.x.shape[1]
        d_out = task.train.y.shape[1]
        csv_name = f"{name}_task_{i:04d}.csv"
        with open(out / csv_name, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"x{k}" for k in range(d_in)] + [f"y{k}" for k in range(d_out)])
            for ds in (task.train, task.test):
                for xi, yi in zip(ds.x, ds.y):
                    writer.writerow([repr(float(v)) for v in xi] + [repr(float(v)) for v in yi])
        entries.append({
            "csv": csv_name,
            "n_train": int(len(task.train)),
            "label": task.label,
            "input_dim": d_in,
            "output_dim": d_out,
        })
    doc = {"schema_version": SUITE_SCHEMA, "meta": suite.meta, "tasks": entries}
    manifest = out / f"{name}_manifest.json"
    with open(manifest, "w") as fh:
        json.dump(doc, fh, indent=1)
    return str(manifest)


def _read_task_csv(path, entry):
    d_in, d_out = int(entry["input_dim"]), int(entry["output_dim"])
    expect = [f"x{k}" for k in range(d_in)] + [f"y{k}" for k in range(d_out)]
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise IngestionError(f"{path}: cannot open task csv: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != expect:
            raise IngestionError(
                f"{path}: header {header} does not match manifest dims "
                f"(expected columns {expect})")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != d_in + d_out:
                raise IngestionError(f"{path}:{lineno}: expected {d_in + d_out} fields")
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise IngestionError(f"{path}:{lineno}: {exc}") from exc
    if not rows:
        raise IngestionError(f"{path}: no data rows")
    arr = np.asarray(rows, dtype=np.float64)
    n_train = int(entry["n_train"])
    if n_train < 1 or n_train >= arr.shape[0]:
        raise IngestionError(
            f"{path}: n_train {n_train} leaves no train or no test rows "
            f"(file has {arr.shape[0]} rows)")
    X, Y = arr[:, :d_in], arr[:, d_in:]
    return TaskData(
        train=Dataset(np.ascontiguousarray(X[:n_train]), np.ascontiguousarray(Y[:n_train])),
        test=Dataset(np.ascontiguousarray(X[n_train:]), np.ascontiguousarray(Y[n_train:])),
        label=entry.get("label", {}),
    )


def load_csv_suite(manifest_path) -> TaskSuite:
    """Load a manifest+CSV suite.

    With a standardization block in the manifest the CSV targets are taken as
    already standardized; otherwise the pooled transform is fitted on the
    loaded tasks and applied (external raw data path).
    """
    manifest_path = Path(manifest_path)
    try:
        with open(manifest_path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise IngestionError(f"{manifest_path}: cannot read manifest: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise IngestionError(f"{manifest_path}: malformed manifest: {exc}") from exc
    if doc.get("schema_version") != SUITE_SCHEMA:
        raise IngestionError(f"{manifest_path}: unsupported schema "
                             f"{doc.get('schema_version')!r}")
    meta = doc.get("meta", {})
    tasks = []
    dims = set()
    for entry in doc.get("tasks", []):
        task = _read_task_csv(manifest_path.parent / entry["csv"], entry)
        dims.add((task.train.x.shape[1], task.train.y.shape[1]))
        tasks.append(task)
    if not tasks:
        raise IngestionError(f"{manifest_path}: manifest lists no tasks")
    if len(dims) != 1:
        raise IngestionError(f"{manifest_path}: tasks disagree on dims: {sorted(dims)}")
    suite = TaskSuite(tasks, meta)
    block = meta.get("standardization")
    if block is None:
        return standardize(suite)
    mean = np.asarray(block["mean"], dtype=np.float64)
    std = np.asarray(block["std"], dtype=np.float64)
    for task in tasks:
        task.mean, task.std = mean.copy(), std.copy()
    return suite
