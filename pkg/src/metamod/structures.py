"""Compositional schemes, the structure space, and structure-level math.

A scheme fixes how module slots wire together (single module, sum,
composition, softmax-weighted ensemble, shared encoder with concatenated
heads, or a bounded function tree); a structure fills the slots with module
ids. Forward evaluation, the task error, exact gradients with parameter
tying, local proposal moves, and brute-force enumeration all live here.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .backend import kernel_backward, kernel_forward, kernel_forward_cached
from .errors import CapacityError, ConfigError, DomainError, ShapeError
from .nn import mse_output_grad
from .pool import ModulePool

# presentation scale: a mean squared error of 1 reports as loss 100
TASK_ERROR_SCALE = 100.0


# ---------------------------------------------------------------------------
# schemes


@dataclass(frozen=True)
class SingleScheme:
    role: str = "generic"
    variant = "single"


@dataclass(frozen=True)
class SumScheme:
    roles: tuple[str, str] = ("generic", "generic")
    variant = "sum"


@dataclass(frozen=True)
class ComposeScheme:
    """h(x) = f_outer(f_inner(x)); slot order (outer, inner)."""

    outer_role: str = "generic"
    inner_role: str = "generic"
    variant = "compose"


@dataclass(frozen=True)
class WeightedEnsembleScheme:
    """h(x) = sum_l softmax_l(attention outputs)(x) * regressor_l(x).

    Slots are (attention_1..attention_m, regressor_1..regressor_m).
    """

    m: int = 2
    attention_role: str = "attention"
    regressor_role: str = "regressor"
    variant = "weighted_ensemble"

    def __post_init__(self):
        if self.m < 1:
            raise ConfigError("ensemble needs m >= 1", field="scheme.m")


@dataclass(frozen=True)
class ConcatHeadsScheme:
    """Shared encoder feeding per-block heads whose outputs concatenate.

    The encoder slot is pinned to its (singleton) group and never proposed
    over; slot order is (encoder, head_0, ..., head_{B-1}).
    """

    head_roles: tuple[str, ...]
    encoder_role: str = "encoder"
    variant = "concat_heads"

    def __post_init__(self):
        if not self.head_roles:
            raise ConfigError("need at least one head block", field="scheme.head_roles")


@dataclass(frozen=True)
class TreeScheme:
    """Rooted tree; a node applies its module to the sum of its children
    (single child: plain composition; leaf: the task input)."""

    role: str = "generic"
    max_depth: int = 3
    max_nodes: int = 7
    variant = "tree"

    def __post_init__(self):
        if self.max_depth < 1 or self.max_nodes < 1:
            raise ConfigError("tree bounds must be >= 1", field="scheme.tree")


SCHEME_TYPES = (
    SingleScheme,
    SumScheme,
    ComposeScheme,
    WeightedEnsembleScheme,
    ConcatHeadsScheme,
    TreeScheme,
)


@dataclass(frozen=True)
class TreeNode:
    module_id: int
    children: tuple["TreeNode", ...] = ()


@dataclass(frozen=True)
class Structure:
    scheme: object
    assignment: tuple[int, ...] = ()
    tree: TreeNode | None = None

    def module_ids(self):
        """All module ids used, with multiplicity."""
        if self.tree is not None:
            return _tree_ids(self.tree)
        return list(self.assignment)


def _tree_ids(node):
    ids = [node.module_id]
    for child in node.children:
        ids.extend(_tree_ids(child))
    return ids


def _tree_size(node):
    return 1 + sum(_tree_size(c) for c in node.children)


def _tree_depth(node):
    return 1 + max((_tree_depth(c) for c in node.children), default=0)


def _tree_signature(node):
    return (node.module_id, tuple(_tree_signature(c) for c in node.children))


def _canonical(node):
    kids = tuple(sorted((_canonical(c) for c in node.children), key=_tree_signature))
    return TreeNode(node.module_id, kids)


def slot_eligibility(scheme, pool: ModulePool):
    """Eligible module ids per slot (tree: one entry, the node vocabulary)."""
    cache = getattr(pool, "_elig_cache", None)
    if cache is not None and scheme in cache:
        return cache[scheme]
    slots = _slot_eligibility_uncached(scheme, pool)
    if cache is not None:
        cache[scheme] = slots
    return slots


def _slot_eligibility_uncached(scheme, pool):
    if isinstance(scheme, SingleScheme):
        roles = [scheme.role]
    elif isinstance(scheme, SumScheme):
        roles = list(scheme.roles)
    elif isinstance(scheme, ComposeScheme):
        roles = [scheme.outer_role, scheme.inner_role]
    elif isinstance(scheme, WeightedEnsembleScheme):
        roles = [scheme.attention_role] * scheme.m + [scheme.regressor_role] * scheme.m
    elif isinstance(scheme, ConcatHeadsScheme):
        roles = [scheme.encoder_role, *scheme.head_roles]
    elif isinstance(scheme, TreeScheme):
        roles = [scheme.role]
    else:
        raise ConfigError(f"unknown scheme type {type(scheme).__name__}", field="scheme")
    slots = []
    for i, role in enumerate(roles):
        ids = pool.ids_for_role(role)
        if not ids:
            raise ConfigError(f"no pool modules with role {role!r}", field=f"scheme.slot[{i}]")
        slots.append(ids)
    return slots


def _slot_dims(pool, ids, where):
    dims = {(pool.arch_of(i).in_dim, pool.arch_of(i).out_dim) for i in ids}
    if len(dims) != 1:
        raise ConfigError(f"modules in {where} disagree on dimensions: {sorted(dims)}",
                          field="scheme")
    return dims.pop()


def validate_scheme(scheme, pool: ModulePool):
    """Check slot wiring against the pool; returns per-slot eligible ids."""
    slots = slot_eligibility(scheme, pool)
    dims = [_slot_dims(pool, ids, f"slot {i}") for i, ids in enumerate(slots)]
    if isinstance(scheme, SumScheme):
        if dims[0] != dims[1]:
            raise ConfigError("sum slots must share input and output dims", field="scheme")
    elif isinstance(scheme, ComposeScheme):
        if dims[1][1] != dims[0][0]:
            raise ConfigError("inner output dim must equal outer input dim", field="scheme")
    elif isinstance(scheme, WeightedEnsembleScheme):
        att, reg = dims[0], dims[scheme.m]
        if att[1] != 1:
            raise ConfigError("attention modules must have scalar output", field="scheme")
        if att[0] != reg[0]:
            raise ConfigError("attention and regressor input dims differ", field="scheme")
    elif isinstance(scheme, ConcatHeadsScheme):
        if len(slots[0]) != 1:
            raise ConfigError("encoder group must contain exactly one module", field="scheme")
        enc_out = dims[0][1]
        for d in dims[1:]:
            if d[0] != enc_out:
                raise ConfigError("head input dim must equal encoder output dim", field="scheme")
    elif isinstance(scheme, TreeScheme):
        if dims[0][0] != dims[0][1]:
            raise ConfigError("tree modules need equal input and output dims", field="scheme")
    return slots


def scheme_in_dim(scheme, pool):
    slots = slot_eligibility(scheme, pool)
    if isinstance(scheme, ComposeScheme):
        return pool.arch_of(slots[1][0]).in_dim
    return pool.arch_of(slots[0][0]).in_dim


def scheme_out_dim(scheme, pool):
    slots = slot_eligibility(scheme, pool)
    if isinstance(scheme, ComposeScheme):
        return pool.arch_of(slots[0][0]).out_dim
    if isinstance(scheme, WeightedEnsembleScheme):
        return pool.arch_of(slots[scheme.m][0]).out_dim
    if isinstance(scheme, ConcatHeadsScheme):
        return sum(pool.arch_of(ids[0]).out_dim for ids in slots[1:])
    return pool.arch_of(slots[0][0]).out_dim


# ---------------------------------------------------------------------------
# structure creation and proposal moves


def initial_structure(scheme, pool, rng) -> Structure:
    """Random simple structure: uniform slot fills; a tree starts as one node."""
    slots = validate_scheme(scheme, pool)
    if isinstance(scheme, TreeScheme):
        elig = slots[0]
        return Structure(scheme, tree=TreeNode(elig[int(rng.integers(len(elig)))]))
    assignment = tuple(ids[int(rng.integers(len(ids)))] for ids in slots)
    return Structure(scheme, assignment=assignment)


def propose(scheme, structure: Structure, pool, rng) -> Structure | None:
    """One uniform-random local modification; None when no legal move exists.

    Moves: reassign one slot to a different id from its group; trees also get
    leaf insertion and leaf deletion within their depth/node bounds. The input
    structure is never mutated.
    """
    if isinstance(scheme, TreeScheme):
        return _propose_tree(scheme, structure, pool, rng)
    slots = slot_eligibility(scheme, pool)
    if isinstance(scheme, ConcatHeadsScheme):
        movable = list(range(1, len(slots)))  # encoder slot pinned
    else:
        movable = list(range(len(slots)))
    counts = [len(slots[i]) - 1 for i in movable]
    total = sum(counts)
    if total == 0:
        return None
    r = int(rng.integers(total))
    for i, c in zip(movable, counts):
        if r < c:
            elig = slots[i]
            p = elig.index(structure.assignment[i])
            new_assignment = list(structure.assignment)
            new_assignment[i] = elig[r] if r < p else elig[r + 1]
            return Structure(scheme, assignment=tuple(new_assignment))
        r -= c
    raise AssertionError("unreachable")


def _tree_paths(node, prefix=()):
    yield prefix, node
    for i, child in enumerate(node.children):
        yield from _tree_paths(child, prefix + (i,))


def _tree_replace(node, path, repl):
    if not path:
        return repl
    kids = list(node.children)
    kids[path[0]] = _tree_replace(kids[path[0]], path[1:], repl)
    return TreeNode(node.module_id, tuple(kids))


def _tree_delete(node, path):
    parent_path, idx = path[:-1], path[-1]

    def drop(n, p):
        if not p:
            kids = list(n.children)
            del kids[idx]
            return TreeNode(n.module_id, tuple(kids))
        kids = list(n.children)
        kids[p[0]] = drop(kids[p[0]], p[1:])
        return TreeNode(n.module_id, tuple(kids))

    return drop(node, parent_path)


def _propose_tree(scheme, structure, pool, rng):
    elig = slot_eligibility(scheme, pool)[0]
    root = structure.tree
    size = _tree_size(root)
    moves = []
    for path, node in _tree_paths(root):
        for mid in elig:
            if mid != node.module_id:
                moves.append(("reassign", path, mid))
        depth = len(path) + 1
        if size < scheme.max_nodes and depth + 1 <= scheme.max_depth:
            for mid in elig:
                moves.append(("insert", path, mid))
        if not node.children and path:
            moves.append(("delete", path, -1))
    if not moves:
        return None
    kind, path, mid = moves[int(rng.integers(len(moves)))]
    if kind == "reassign":
        target = root
        for i in path:
            target = target.children[i]
        new_root = _tree_replace(root, path, TreeNode(mid, target.children))
    elif kind == "insert":
        target = root
        for i in path:
            target = target.children[i]
        new_root = _tree_replace(root, path,
                                 TreeNode(target.module_id, target.children + (TreeNode(mid),)))
    else:
        new_root = _tree_delete(root, path)
    return Structure(scheme, tree=_canonical(new_root))


# ---------------------------------------------------------------------------
# forward evaluation and gradients


def _is_clean(a):
    return (isinstance(a, np.ndarray) and a.ndim == 2 and a.dtype == np.float64
            and a.flags.c_contiguous)


def _as_xy_arrays(dataset):
    """Accept (X, Y) arrays, a dataset object with x/y, or a pair list."""
    if hasattr(dataset, "x") and hasattr(dataset, "y"):
        X, Y = dataset.x, dataset.y
        if _is_clean(X) and _is_clean(Y):  # generated suites land here; skip copies
            return X, Y
    elif isinstance(dataset, tuple) and len(dataset) == 2 and isinstance(dataset[0], np.ndarray):
        X, Y = dataset
        if _is_clean(X) and _is_clean(Y):
            return X, Y
    else:
        pairs = list(dataset)
        X = np.array([np.atleast_1d(p[0]) for p in pairs], dtype=np.float64)
        Y = np.array([np.atleast_1d(p[1]) for p in pairs], dtype=np.float64)
    X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=np.float64)))
    Y = np.ascontiguousarray(np.atleast_2d(np.asarray(Y, dtype=np.float64)))
    return X, Y


def _softmax_rows(a):
    z = a - a.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _module_fwd(pool, mid, X):
    # pool-held params are validated at construction; only the input can mismatch
    arch = pool.arch_of(mid)
    if X.shape[1] != arch.layer_sizes[0]:
        raise ShapeError(f"module {mid} expects input dim {arch.in_dim}, got {X.shape[1]}")
    h_act, o_act = arch._acts
    return kernel_forward(arch.layer_sizes, h_act, o_act, pool.params_of(mid), X)


def ensemble_weights(structure: Structure, pool, x):
    """Softmax attention weights of a weighted-ensemble structure at x."""
    scheme = structure.scheme
    if not isinstance(scheme, WeightedEnsembleScheme):
        raise ConfigError("ensemble_weights needs a weighted-ensemble structure")
    X, single = _batchify(x)
    att = structure.assignment[: scheme.m]
    a = np.concatenate([_module_fwd(pool, mid, X) for mid in att], axis=1)
    w = _softmax_rows(a)
    return w[0] if single else w


def _batchify(x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    single = x.ndim == 1
    return (x[None, :] if single else x), single


def structure_forward(structure: Structure, pool, x):
    """Prediction of the composed function at x (vector or batch)."""
    X, single = _batchify(x)
    y = _forward_batch(structure, pool, X)
    return y[0] if single else y


def _forward_batch(structure, pool, X):
    scheme = structure.scheme
    a = structure.assignment
    if isinstance(scheme, SingleScheme):
        return _module_fwd(pool, a[0], X)
    if isinstance(scheme, SumScheme):
        return _module_fwd(pool, a[0], X) + _module_fwd(pool, a[1], X)
    if isinstance(scheme, ComposeScheme):
        return _module_fwd(pool, a[0], _module_fwd(pool, a[1], X))
    if isinstance(scheme, WeightedEnsembleScheme):
        m = scheme.m
        att = np.concatenate([_module_fwd(pool, mid, X) for mid in a[:m]], axis=1)
        w = _softmax_rows(att)
        out = np.zeros((X.shape[0], pool.arch_of(a[m]).out_dim))
        for l in range(m):
            out += w[:, l : l + 1] * _module_fwd(pool, a[m + l], X)
        return out
    if isinstance(scheme, ConcatHeadsScheme):
        z = _module_fwd(pool, a[0], X)
        return np.concatenate([_module_fwd(pool, mid, z) for mid in a[1:]], axis=1)
    if isinstance(scheme, TreeScheme):
        return _tree_forward(structure.tree, pool, X)
    raise ConfigError(f"unknown scheme type {type(scheme).__name__}", field="scheme")


def _tree_forward(node, pool, X):
    if node.children:
        inp = _tree_forward(node.children[0], pool, X)
        for child in node.children[1:]:
            inp = inp + _tree_forward(child, pool, X)
    else:
        inp = X
    return _module_fwd(pool, node.module_id, inp)


def task_error(dataset, structure: Structure, pool) -> float:
    """Scaled loss of the structure on a dataset: 100 x mean squared error
    (squared error averaged over output dims, mean over examples)."""
    X, Y = _as_xy_arrays(dataset)
    if X.shape[0] == 0:
        raise DomainError("empty dataset")
    pred = _forward_batch(structure, pool, X)
    if pred.shape != Y.shape:
        raise ShapeError(f"prediction shape {pred.shape} != target shape {Y.shape}")
    diff = (pred - Y).ravel()
    return TASK_ERROR_SCALE * float(diff @ diff) / diff.size


class _Tape:
    """Per-slot forward records so the backward pass can reuse caches."""

    __slots__ = ("mid", "arch", "params", "X", "cache", "Y")

    def __init__(self, pool, mid, X):
        self.mid = mid
        arch = pool.arch_of(mid)
        self.arch = arch
        self.params = pool.params_of(mid)
        if X.shape[1] != arch.layer_sizes[0]:
            raise ShapeError(f"module {mid} expects input dim {arch.in_dim}, got {X.shape[1]}")
        self.X = X
        h_act, o_act = arch._acts
        self.Y, self.cache = kernel_forward_cached(arch.layer_sizes, h_act, o_act,
                                                   self.params, X)

    def vjp(self, dY):
        h_act, o_act = self.arch._acts
        return kernel_backward(self.arch.layer_sizes, h_act, o_act, self.params,
                               self.X, self.cache, np.ascontiguousarray(dY))


def _accumulate(grads, mid, dp):
    if mid in grads:
        grads[mid] = grads[mid] + dp
    else:
        grads[mid] = dp


def _grad_batch(structure, pool, X, Y):
    """Used-module gradients of the unscaled mean squared error."""
    scheme = structure.scheme
    a = structure.assignment
    grads = {}
    if isinstance(scheme, SingleScheme):
        t = _Tape(pool, a[0], X)
        dp, _ = t.vjp(mse_output_grad(t.Y, Y))
        _accumulate(grads, a[0], dp)
        return grads
    if isinstance(scheme, SumScheme):
        t0, t1 = _Tape(pool, a[0], X), _Tape(pool, a[1], X)
        dY = mse_output_grad(t0.Y + t1.Y, Y)
        _accumulate(grads, a[0], t0.vjp(dY)[0])
        _accumulate(grads, a[1], t1.vjp(dY)[0])
        return grads
    if isinstance(scheme, ComposeScheme):
        inner = _Tape(pool, a[1], X)
        outer = _Tape(pool, a[0], inner.Y)
        dp_outer, d_mid = outer.vjp(mse_output_grad(outer.Y, Y))
        _accumulate(grads, a[0], dp_outer)
        _accumulate(grads, a[1], inner.vjp(d_mid)[0])
        return grads
    if isinstance(scheme, WeightedEnsembleScheme):
        m = scheme.m
        att_tapes = [_Tape(pool, mid, X) for mid in a[:m]]
        reg_tapes = [_Tape(pool, mid, X) for mid in a[m:]]
        att = np.concatenate([t.Y for t in att_tapes], axis=1)
        w = _softmax_rows(att)
        pred = np.zeros_like(reg_tapes[0].Y)
        for l in range(m):
            pred += w[:, l : l + 1] * reg_tapes[l].Y
        dY = mse_output_grad(pred, Y)
        # regressor branches
        for l in range(m):
            _accumulate(grads, a[m + l], reg_tapes[l].vjp(w[:, l : l + 1] * dY)[0])
        # softmax-weighted attention branches
        dw = np.stack([np.sum(dY * t.Y, axis=1) for t in reg_tapes], axis=1)
        da = w * (dw - np.sum(w * dw, axis=1, keepdims=True))
        for l in range(m):
            _accumulate(grads, a[l], att_tapes[l].vjp(da[:, l : l + 1])[0])
        return grads
    if isinstance(scheme, ConcatHeadsScheme):
        enc = _Tape(pool, a[0], X)
        head_tapes = [_Tape(pool, mid, enc.Y) for mid in a[1:]]
        pred = np.concatenate([t.Y for t in head_tapes], axis=1)
        dY = mse_output_grad(pred, Y)
        d_enc = np.zeros_like(enc.Y)
        off = 0
        for t in head_tapes:
            width = t.Y.shape[1]
            dp, dz = t.vjp(np.ascontiguousarray(dY[:, off : off + width]))
            _accumulate(grads, t.mid, dp)
            d_enc += dz
            off += width
        _accumulate(grads, a[0], enc.vjp(d_enc)[0])
        return grads
    if isinstance(scheme, TreeScheme):
        pred, tapes = _tree_forward_tape(structure.tree, pool, X)
        _tree_backward(tapes, mse_output_grad(pred, Y), grads)
        return grads
    raise ConfigError(f"unknown scheme type {type(scheme).__name__}", field="scheme")


def _tree_forward_tape(node, pool, X):
    child_tapes = []
    if node.children:
        inp = None
        for child in node.children:
            y, t = _tree_forward_tape(child, pool, X)
            child_tapes.append(t)
            inp = y if inp is None else inp + y
    else:
        inp = X
    tape = _Tape(pool, node.module_id, inp)
    return tape.Y, (tape, child_tapes)


def _tree_backward(tapes, dY, grads):
    tape, child_tapes = tapes
    dp, dX = tape.vjp(dY)
    _accumulate(grads, tape.mid, dp)
    for child in child_tapes:
        _tree_backward(child, dX, grads)


def structure_gradient(structure: Structure, pool, batch) -> dict:
    """Gradient of the unscaled mean squared error w.r.t. every module's
    params; tied slots sum, unused modules map to zero blocks."""
    X, Y = _as_xy_arrays(batch)
    if X.shape[0] == 0:
        raise DomainError("empty batch")
    grads = _grad_batch(structure, pool, X, Y)
    for mid in pool.module_ids:
        if mid not in grads:
            grads[mid] = np.zeros(pool.params_of(mid).size)
    return grads


def _structure_gradient_sparse(structure, pool, X, Y):
    """Hot-path variant: used modules only, no zero blocks."""
    return _grad_batch(structure, pool, X, Y)


# ---------------------------------------------------------------------------
# enumeration


def enumerate_structures(scheme, pool, cap: int) -> list[Structure]:
    """Exhaustive, duplicate-free structure space; CapacityError above cap."""
    slots = validate_scheme(scheme, pool)
    if isinstance(scheme, TreeScheme):
        return _enumerate_trees(scheme, slots[0], cap)
    count = 1
    for ids in slots:
        count *= len(ids)
    if count > cap:
        raise CapacityError(f"structure space {count} exceeds cap {cap}")
    return [Structure(scheme, assignment=assign) for assign in product(*slots)]


def _enumerate_trees(scheme, elig, cap):
    # closure of the single-node trees under leaf insertion, canonical dedup
    seen = {TreeNode(mid) for mid in elig}
    frontier = list(seen)
    while frontier:
        nxt = []
        for tree in frontier:
            if _tree_size(tree) >= scheme.max_nodes:
                continue
            for path, node in _tree_paths(tree):
                if len(path) + 2 > scheme.max_depth:
                    continue
                for mid in elig:
                    grown = _canonical(
                        _tree_replace(tree, path,
                                      TreeNode(node.module_id, node.children + (TreeNode(mid),)))
                    )
                    if grown not in seen:
                        seen.add(grown)
                        if len(seen) > cap:
                            raise CapacityError(f"tree space exceeds cap {cap}")
                        nxt.append(grown)
        frontier = nxt
    trees = sorted(seen, key=_tree_signature)
    return [Structure(scheme, tree=t) for t in trees]


# ---------------------------------------------------------------------------
# JSON serialization


def scheme_to_spec(scheme) -> dict:
    if isinstance(scheme, SingleScheme):
        return {"variant": "single", "role": scheme.role}
    if isinstance(scheme, SumScheme):
        return {"variant": "sum", "roles": list(scheme.roles)}
    if isinstance(scheme, ComposeScheme):
        return {"variant": "compose", "outer_role": scheme.outer_role,
                "inner_role": scheme.inner_role}
    if isinstance(scheme, WeightedEnsembleScheme):
        return {"variant": "weighted_ensemble", "m": scheme.m,
                "attention_role": scheme.attention_role,
                "regressor_role": scheme.regressor_role}
    if isinstance(scheme, ConcatHeadsScheme):
        return {"variant": "concat_heads", "encoder_role": scheme.encoder_role,
                "head_roles": list(scheme.head_roles)}
    if isinstance(scheme, TreeScheme):
        return {"variant": "tree", "role": scheme.role,
                "max_depth": scheme.max_depth, "max_nodes": scheme.max_nodes}
    raise ConfigError(f"unknown scheme type {type(scheme).__name__}", field="scheme")


def scheme_from_spec(spec: dict):
    if not isinstance(spec, dict) or "variant" not in spec:
        raise ConfigError("scheme spec must be an object with a 'variant'", field="scheme")
    variant = spec["variant"]
    try:
        if variant == "single":
            return SingleScheme(role=spec.get("role", "generic"))
        if variant == "sum":
            roles = spec.get("roles", ["generic", "generic"])
            if len(roles) != 2:
                raise ConfigError("sum needs exactly 2 roles", field="scheme.roles")
            return SumScheme(roles=tuple(roles))
        if variant == "compose":
            return ComposeScheme(outer_role=spec.get("outer_role", "generic"),
                                 inner_role=spec.get("inner_role", "generic"))
        if variant == "weighted_ensemble":
            return WeightedEnsembleScheme(m=int(spec.get("m", 2)),
                                          attention_role=spec.get("attention_role", "attention"),
                                          regressor_role=spec.get("regressor_role", "regressor"))
        if variant == "concat_heads":
            return ConcatHeadsScheme(head_roles=tuple(spec["head_roles"]),
                                     encoder_role=spec.get("encoder_role", "encoder"))
        if variant == "tree":
            return TreeScheme(role=spec.get("role", "generic"),
                              max_depth=int(spec.get("max_depth", 3)),
                              max_nodes=int(spec.get("max_nodes", 7)))
    except KeyError as exc:
        raise ConfigError(f"scheme spec missing {exc}", field="scheme") from exc
    raise ConfigError(f"unknown scheme variant {variant!r}", field="scheme.variant")


def _tree_to_json(node):
    return {"module": node.module_id, "children": [_tree_to_json(c) for c in node.children]}


def _tree_from_json(doc):
    return TreeNode(int(doc["module"]),
                    tuple(_tree_from_json(c) for c in doc.get("children", [])))


def structure_to_json(structure: Structure) -> dict:
    doc = {"scheme": scheme_to_spec(structure.scheme)}
    if structure.tree is not None:
        doc["tree"] = _tree_to_json(structure.tree)
    else:
        doc["assignment"] = list(structure.assignment)
    return doc


def structure_from_json(doc: dict) -> Structure:
    scheme = scheme_from_spec(doc["scheme"])
    if isinstance(scheme, TreeScheme):
        return Structure(scheme, tree=_canonical(_tree_from_json(doc["tree"])))
    return Structure(scheme, assignment=tuple(int(i) for i in doc["assignment"]))
