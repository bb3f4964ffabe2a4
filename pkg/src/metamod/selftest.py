"""Built-in invariant checks behind the `selftest` CLI subcommand.

Fast, self-contained versions of the library's core guarantees: kernel
parity, gradient exactness for every composition variant (checked against
central finite differences), Metropolis acceptance statistics, softmax
normalization, serialization roundtrips, proposal legality, and seeded
training determinism.
"""

from __future__ import annotations

import json
import math
import tempfile
from pathlib import Path

import numpy as np

from .backend import available_backends, get_backend
from .annealing import accept
from .nn import Arch, init_params
from .pool import PoolView, checkpoint_load, checkpoint_save, init_pool
from .structures import (
    ComposeScheme,
    ConcatHeadsScheme,
    SingleScheme,
    Structure,
    SumScheme,
    TreeScheme,
    WeightedEnsembleScheme,
    ensemble_weights,
    initial_structure,
    propose,
    slot_eligibility,
    structure_from_json,
    structure_gradient,
    structure_to_json,
    _forward_batch,
    _tree_depth,
    _tree_size,
)
from .metalearn import TrainConfig, bouncegrad_train
from .tasks import gen_sum_split, gen_sum_suite, load_csv_suite, save_csv_suite


def _scheme_fixtures(seed=0):
    """Small (scheme, pool, structure, batch) cases covering every variant,
    including a parameter-tied sum."""
    rng = np.random.default_rng(seed)
    cases = []
    generic = init_pool([("generic", Arch((1, 4, 1)), 3)], seed=seed)
    X1 = rng.uniform(-1, 1, (5, 1))

    for scheme in (SingleScheme(), SumScheme(), ComposeScheme(), TreeScheme(max_nodes=4)):
        s = initial_structure(scheme, generic, rng)
        if isinstance(scheme, TreeScheme):
            for _ in range(6):  # grow a multi-node tree
                nxt = propose(scheme, s, generic, rng)
                if nxt is not None:
                    s = nxt
        Y = rng.uniform(-1, 1, (5, 1))
        cases.append((scheme, generic, s, np.ascontiguousarray(X1), Y))
    # tied slots: the same module twice in a sum
    tied = Structure(SumScheme(), assignment=(1, 1))
    cases.append((SumScheme(), generic, tied, np.ascontiguousarray(X1),
                  rng.uniform(-1, 1, (5, 1))))

    ens_pool = init_pool([("attention", Arch((2, 4, 1)), 2),
                          ("regressor", Arch((2, 4, 2)), 2)], seed=seed + 1)
    ens = WeightedEnsembleScheme(m=2)
    X2 = np.ascontiguousarray(rng.uniform(-1, 1, (5, 2)))
    cases.append((ens, ens_pool, initial_structure(ens, ens_pool, rng), X2,
                  rng.uniform(-1, 1, (5, 2))))

    heads_pool = init_pool([("encoder", Arch((2, 6), output_activation="relu"), 1),
                            ("head-block[0]", Arch((6, 2)), 2),
                            ("head-block[1]", Arch((6, 1)), 2)], seed=seed + 2)
    heads = ConcatHeadsScheme(head_roles=("head-block[0]", "head-block[1]"))
    cases.append((heads, heads_pool, initial_structure(heads, heads_pool, rng), X2,
                  rng.uniform(-1, 1, (5, 3))))
    return cases


def fd_gradient_check(scheme, pool, structure, X, Y, step=1e-5, floor=1e-8):
    """Max relative error of structure_gradient vs central finite differences."""

    def loss(view):
        pred = _forward_batch(structure, view, X)
        return float(np.mean((pred - Y) ** 2))

    grads = structure_gradient(structure, pool, (X, Y))
    worst = 0.0
    for mid in sorted(set(structure.module_ids())):
        base = pool.params_of(mid)
        g = grads[mid]
        for i in range(base.size):
            plus, minus = base.copy(), base.copy()
            plus[i] += step
            minus[i] -= step
            fd = (loss(PoolView(pool, {mid: plus})) - loss(PoolView(pool, {mid: minus}))) / (
                2 * step)
            denom = max(abs(fd), abs(g[i]), floor)
            worst = max(worst, abs(fd - g[i]) / denom)
    return worst


def check_kernel_parity():
    if "compiled" not in available_backends():
        return True, "compiled backend not built; numpy fallback active"
    rng = np.random.default_rng(0)
    pyk, ck = get_backend("python"), get_backend("compiled")
    worst = 0.0
    for sizes in ((1, 16, 1), (1, 16, 16, 1), (7, 64, 32, 1)):
        arch = Arch(sizes)
        p = init_params(arch, rng)
        X = np.ascontiguousarray(rng.uniform(-1, 1, (8, sizes[0])))
        y1, c1 = pyk.forward_cached(sizes, 1, 0, p, X)
        y2, c2 = ck.forward_cached(sizes, 1, 0, p, X)
        dY = np.ascontiguousarray(rng.uniform(-1, 1, y1.shape))
        g1, dx1 = pyk.backward(sizes, 1, 0, p, X, c1, dY)
        g2, dx2 = ck.backward(sizes, 1, 0, p, X, c2, dY)
        worst = max(worst, np.abs(y1 - y2).max(), np.abs(g1 - g2).max(),
                    np.abs(dx1 - dx2).max())
    return worst < 1e-12, f"max backend deviation {worst:.3g}"


def check_gradients():
    worst_overall = 0.0
    for scheme, pool, structure, X, Y in _scheme_fixtures():
        worst = fd_gradient_check(scheme, pool, structure, X, Y)
        worst_overall = max(worst_overall, worst)
    return worst_overall < 1e-3, f"max FD relative error {worst_overall:.3g}"


def check_metropolis(trials=100_000):
    rng = np.random.default_rng(42)
    hits = sum(accept(1.5, 1.0, 0.5, rng) for _ in range(trials))
    rate = hits / trials
    target = math.exp(-1.0)
    return abs(rate - target) < 0.01, f"rate {rate:.4f} vs exp(-1) {target:.4f}"


def check_softmax_weights():
    rng = np.random.default_rng(1)
    pool = init_pool([("attention", Arch((2, 4, 1)), 3), ("regressor", Arch((2, 4, 2)), 3)],
                     seed=5)
    scheme = WeightedEnsembleScheme(m=3)
    worst = 0.0
    for _ in range(50):
        s = initial_structure(scheme, pool, rng)
        X = rng.uniform(-50, 50, (16, 2))
        w = ensemble_weights(s, pool, X)
        worst = max(worst, float(np.abs(w.sum(axis=1) - 1.0).max()))
        if np.any(w <= 0):
            return False, "non-positive softmax weight"
    return worst < 1e-9, f"max |sum - 1| = {worst:.3g}"


def check_roundtrips():
    rng = np.random.default_rng(3)
    with tempfile.TemporaryDirectory() as tmp:
        pool = init_pool([("generic", Arch((1, 8, 1)), 4),
                          ("generic", Arch((1, 8, 8, 1)), 4)], seed=9)
        path = Path(tmp) / "pool.json"
        checkpoint_save(pool, path)
        loaded = checkpoint_load(path)
        if not np.array_equal(loaded.theta, pool.theta):
            return False, "checkpoint parameters not bit-exact"

        scheme = SumScheme()
        s = initial_structure(scheme, pool, rng)
        if structure_from_json(json.loads(json.dumps(structure_to_json(s)))) != s:
            return False, "structure JSON roundtrip mismatch"

        suite = gen_sum_suite(4, 6, 8, seed=11)
        manifest = save_csv_suite(suite, Path(tmp) / "suite")
        again = load_csv_suite(manifest)
        for a, b in zip(suite.tasks, again.tasks):
            for da, db in ((a.train, b.train), (a.test, b.test)):
                if np.abs(da.x - db.x).max() > 1e-12 or np.abs(da.y - db.y).max() > 1e-12:
                    return False, "suite CSV roundtrip exceeded 1e-12"
            if a.label != b.label:
                return False, "suite labels lost in roundtrip"
    return True, "checkpoint, structure and suite roundtrips exact"


def check_proposals(walks=2000):
    rng = np.random.default_rng(7)
    pool = init_pool([("generic", Arch((1, 4, 1)), 4)], seed=2)
    for scheme in (SingleScheme(), SumScheme(), ComposeScheme(), TreeScheme(max_nodes=4)):
        elig = set(slot_eligibility(scheme, pool)[0])
        s = initial_structure(scheme, pool, rng)
        for _ in range(walks):
            nxt = propose(scheme, s, pool, rng)
            if nxt is None:
                return False, f"{scheme.variant}: unexpected no-move"
            if nxt == s:
                return False, f"{scheme.variant}: proposal equals input"
            if isinstance(scheme, TreeScheme):
                if _tree_size(nxt.tree) > scheme.max_nodes:
                    return False, "tree exceeded max_nodes"
                if _tree_depth(nxt.tree) > scheme.max_depth:
                    return False, "tree exceeded max_depth"
                if not set(nxt.module_ids()) <= elig:
                    return False, "tree used an ineligible module"
            else:
                diff = sum(x != y for x, y in zip(s.assignment, nxt.assignment))
                if diff != 1:
                    return False, f"{scheme.variant}: changed {diff} slots"
            s = nxt
    return True, f"{walks} walks per scheme stayed legal"


def check_determinism():
    train, _ = gen_sum_split(5, 1, 6, 8, seed=21)
    spec = [("generic", Arch((1, 6, 1)), 3)]
    cfg = TrainConfig(outer_iterations=40, seed=13, log_every=20)
    pool_a, structs_a, log_a = bouncegrad_train(train, SumScheme(), spec, cfg)
    pool_b, structs_b, log_b = bouncegrad_train(train, SumScheme(), spec, cfg)
    if not np.array_equal(pool_a.theta, pool_b.theta):
        return False, "theta differs between identical runs"
    if structs_a != structs_b or log_a != log_b:
        return False, "structures or logs differ between identical runs"
    return True, "two seeded runs bitwise identical"


CHECKS = [
    ("kernel-parity", check_kernel_parity),
    ("gradients-vs-finite-differences", check_gradients),
    ("metropolis-acceptance-rate", check_metropolis),
    ("ensemble-softmax-weights", check_softmax_weights),
    ("serialization-roundtrips", check_roundtrips),
    ("proposal-legality", check_proposals),
    ("seeded-determinism", check_determinism),
]


def run_selftest(stream_print=print) -> bool:
    all_ok = True
    for name, fn in CHECKS:
        try:
            ok, detail = fn()
        except Exception as exc:  # a check crashing is a failure, not an abort
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        all_ok &= ok
        stream_print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    return all_ok
