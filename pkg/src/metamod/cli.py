"""Config-driven experiment runner.

Subcommands: gen-tasks | train | metatest | report | selftest. One JSON
config describes the experiment; flags only override the seed, output
directory, and thread count (METAMOD_OUT_DIR supplies a default output dir).
Every artifact directory gets a sidecar embedding the config digest and the
master seed, and re-running any subcommand with identical inputs reproduces
identical numeric content.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from .backend import active_backend
from .config import (
    build_suites,
    config_digest,
    load_config,
    method_plan,
    suite_name,
)
from .errors import MetamodError, UsageError
from .metalearn import bouncegrad_train
from .pool import checkpoint_load, checkpoint_save
from .report import (
    MethodArtifact,
    ResultRow,
    ResultTable,
    evaluate_methods,
    emit_report,
    match_modules_to_basis,
    sharing_matrix,
)
from .selftest import run_selftest
from .structures import structure_from_json, structure_to_json
from .tasks import save_csv_suite


def _sidecar(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def _out_dir(args, doc):
    out = args.out_dir or doc.get("out_dir") or os.environ.get("METAMOD_OUT_DIR")
    if not out:
        raise UsageError("no output directory: pass --out-dir, set out_dir in the "
                         "config, or export METAMOD_OUT_DIR")
    return Path(out)


def _load_experiment(args):
    if not args.config:
        raise UsageError("--config is required for this subcommand")
    doc = load_config(args.config)
    if args.seed is not None:
        doc = dict(doc, seed=args.seed)
    return doc, doc["seed"], config_digest(doc)


def cmd_gen_tasks(args):
    doc, seed, digest = _load_experiment(args)
    out = _out_dir(args, doc) / "tasks"
    train_suite, test_suite = build_suites(doc)
    for suite in (train_suite, test_suite):
        suite.meta["config_digest"] = digest
    train_manifest = save_csv_suite(train_suite, out, name="train")
    test_manifest = save_csv_suite(test_suite, out, name="metatest")
    _sidecar(out / "gen_sidecar.json",
             {"config_digest": digest, "seed": seed,
              "manifests": [Path(train_manifest).name, Path(test_manifest).name]})
    print(f"wrote {train_manifest} ({len(train_suite)} tasks)")
    print(f"wrote {test_manifest} ({len(test_suite)} tasks)")
    return 0


def cmd_train(args):
    doc, seed, digest = _load_experiment(args)
    out = _out_dir(args, doc)
    train_suite, _ = build_suites(doc)
    for method in doc["methods"]:
        plan = method_plan(doc, method, seed, threads=args.threads)
        pool, structures, log = bouncegrad_train(train_suite, plan.scheme, plan.pool_spec,
                                                 plan.train)
        mdir = out / method
        mdir.mkdir(parents=True, exist_ok=True)
        checkpoint_save(pool, mdir / "pool.json")
        with open(mdir / "train_structures.json", "w") as fh:
            json.dump({"config_digest": digest, "seed": seed,
                       "structures": [structure_to_json(s) for s in structures]}, fh)
        with open(mdir / "train_log.ndjson", "w") as fh:
            for record in log:
                fh.write(json.dumps(record) + "\n")
        _sidecar(mdir / "run.json",
                 {"method": method, "config_digest": digest, "seed": seed,
                  "backend": active_backend(), "suite": suite_name(doc),
                  "final": log[-1]})
        print(f"{method}: final mean train error "
              f"{log[-1]['mean_train_error']:.3f}, val {log[-1]['mean_val_error']:.3f} "
              f"-> {mdir}")
    return 0


def _load_artifacts(doc, out, seed, threads):
    artifacts = {}
    digest = config_digest(doc)
    for method in doc["methods"]:
        mdir = out / method
        pool_path = mdir / "pool.json"
        if not pool_path.exists():
            raise UsageError(f"no checkpoint for {method} at {pool_path}; run `train` first")
        plan = method_plan(doc, method, seed, threads=threads)
        artifacts[method] = MethodArtifact(pool=checkpoint_load(pool_path),
                                           scheme=plan.scheme, config=plan.train,
                                           digest=digest)
    return artifacts


def cmd_metatest(args):
    doc, seed, digest = _load_experiment(args)
    out = _out_dir(args, doc)
    _, test_suite = build_suites(doc)
    artifacts = _load_artifacts(doc, out, seed, args.threads)
    table = evaluate_methods(artifacts, test_suite, suite_name(doc), seed)
    for row in table.rows:
        mdir = out / row.method
        with open(mdir / "metatest_losses.ndjson", "w") as fh:
            for j, loss in enumerate(table.per_task[row.method]):
                fh.write(json.dumps({"task": j, "label": test_suite.tasks[j].label,
                                     "loss": loss}) + "\n")
        with open(mdir / "metatest_structures.json", "w") as fh:
            json.dump({"config_digest": digest, "seed": seed,
                       "structures": [structure_to_json(s)
                                      for s in table.structures[row.method]]}, fh)
        _sidecar(mdir / "metatest_sidecar.json",
                 {"method": row.method, "config_digest": digest, "seed": seed,
                  "mean_loss": row.mean_loss, "std_error": row.std_error,
                  "n_tasks": row.n_tasks})
        print(f"{row.method}: mean meta-test loss {row.mean_loss:.3f} "
              f"+/- {row.std_error:.3f} over {row.n_tasks} tasks")
    return 0


def cmd_report(args):
    doc, seed, digest = _load_experiment(args)
    out = _out_dir(args, doc)
    _, test_suite = build_suites(doc)
    rows = []
    rdir = out / "report"
    written = []
    for method in doc["methods"]:
        mdir = out / method
        losses_path = mdir / "metatest_losses.ndjson"
        if not losses_path.exists():
            raise UsageError(f"no meta-test losses for {method}; run `metatest` first")
        losses = [json.loads(line)["loss"] for line in open(losses_path)]
        arr = np.asarray(losses)
        se = float(arr.std(ddof=1) / np.sqrt(len(arr))) if len(arr) > 1 else 0.0
        rows.append(ResultRow(suite=suite_name(doc), method=method,
                              mean_loss=float(arr.mean()), std_error=se,
                              n_tasks=len(arr), seed=seed, config_digest=digest))
        with open(mdir / "metatest_structures.json") as fh:
            structures = [structure_from_json(d) for d in json.load(fh)["structures"]]
        labels = [json.dumps(t.label, sort_keys=True) for t in test_suite.tasks]
        matrix = sharing_matrix(structures, labels)
        written += emit_report(matrix, rdir, config_digest=digest, seed=seed,
                               name=f"sharing_{method}")
    table = ResultTable(rows)
    written += emit_report(table, rdir, config_digest=digest, seed=seed, name="results")

    # module recovery against the 16 basis functions (scalar-module sum suites)
    if doc["suite"].get("generator") == "sum":
        pool_path = out / "BounceGrad" / "pool.json"
        if pool_path.exists():
            pool = checkpoint_load(pool_path)
            if all(pool.arch_of(m).in_dim == 1 and pool.arch_of(m).out_dim == 1
                   for m in pool.module_ids):
                matches = match_modules_to_basis(pool, stats=test_suite.stats)
                mpath = rdir / "module_recovery.csv"
                with open(mpath, "w", newline="") as fh:
                    w = csv.writer(fh)
                    w.writerow(["basis_function", "module_id", "mad"])
                    for name, mid, mad in matches:
                        w.writerow([name, mid, repr(mad)])
                written.append(str(mpath))
    for path in written:
        print(f"wrote {path}")
    return 0


def cmd_selftest(args):
    return 0 if run_selftest() else 1


def _parser():
    parser = argparse.ArgumentParser(
        prog="metamod",
        description="Meta-learn a pool of neural modules (annealed structure search "
                    "plus shared gradient descent) and solve new tasks by recombination.")
    sub = parser.add_subparsers(dest="command", metavar="{gen-tasks,train,metatest,report,selftest}")
    for name, fn, needs_config in (
        ("gen-tasks", cmd_gen_tasks, True),
        ("train", cmd_train, True),
        ("metatest", cmd_metatest, True),
        ("report", cmd_report, True),
        ("selftest", cmd_selftest, False),
    ):
        p = sub.add_parser(name)
        p.set_defaults(fn=fn)
        if needs_config:
            p.add_argument("--config", required=False, help="experiment config JSON")
            p.add_argument("--seed", type=int, default=None,
                           help="override the config seed (echoed into every sidecar)")
            p.add_argument("--out-dir", default=None, help="output directory")
            p.add_argument("--threads", type=int, default=1,
                           help="per-task parallelism (bitwise-equal to serial)")
    return parser


def run(argv) -> int:
    """Entry point; returns the process exit status."""
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    if not getattr(args, "command", None):
        parser.print_usage(sys.stderr)
        print("error: a subcommand is required "
              "(gen-tasks | train | metatest | report | selftest)", file=sys.stderr)
        return 2
    try:
        return args.fn(args)
    except MetamodError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
