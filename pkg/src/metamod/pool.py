"""The basis set of modules: typed groups, shared parameter storage, checkpoints.

All module parameters live in one flat float64 vector (`theta`); per-module
ParamVectors are views into it, so a single optimizer step can update the
whole pool. Module ids are dense integers 0..k-1 in group order, which is all
a structure needs to store.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, FormatError, UnknownModuleError, VersionError
from .nn import Arch, init_params, mlp_forward, param_count

CHECKPOINT_SCHEMA = 1

_ROLE_RE = re.compile(r"^(generic|attention|regressor|encoder|head-block\[\d+\])$")


def validate_role(role: str) -> str:
    if not _ROLE_RE.match(role):
        raise ConfigError(f"unknown role tag {role!r}", field="role")
    return role


@dataclass(frozen=True)
class ModuleGroup:
    role: str
    arch: Arch
    member_ids: tuple[int, ...]


class ModulePool:
    """Basis modules with their architectures and the joint parameter vector."""

    def __init__(self, groups, theta, seed):
        self.groups = list(groups)
        self.theta = np.ascontiguousarray(theta, dtype=np.float64)
        self.seed = seed
        self.theta_version = 0  # bumped by apply_update; lets phases assert a stable snapshot
        self._role_cache = {}
        self._elig_cache = {}  # scheme -> per-slot eligible ids (hot path for proposals)
        self._arch = {}
        self._span = {}
        offset = 0
        for group in self.groups:
            n = param_count(group.arch)
            for mid in group.member_ids:
                if mid in self._arch:
                    raise ConfigError(f"module id {mid} appears in two groups", field="groups")
                self._arch[mid] = group.arch
                self._span[mid] = (offset, offset + n)
                offset += n
        if offset != self.theta.size:
            raise ConfigError(
                f"theta length {self.theta.size} != architecture total {offset}", field="theta"
            )

    @property
    def n_modules(self):
        return len(self._arch)

    @property
    def module_ids(self):
        return sorted(self._arch)

    def arch_of(self, module_id) -> Arch:
        try:
            return self._arch[module_id]
        except KeyError:
            raise UnknownModuleError(f"no module with id {module_id}") from None

    def params_of(self, module_id) -> np.ndarray:
        """View into theta; do not write through it outside an update phase."""
        lo, hi = self.span_of(module_id)
        return self.theta[lo:hi]

    def span_of(self, module_id):
        try:
            return self._span[module_id]
        except KeyError:
            raise UnknownModuleError(f"no module with id {module_id}") from None

    def ids_for_role(self, role) -> tuple[int, ...]:
        try:
            return self._role_cache[role]
        except KeyError:
            ids = []
            for group in self.groups:
                if group.role == role:
                    ids.extend(group.member_ids)
            self._role_cache[role] = tuple(ids)
            return self._role_cache[role]

    def apply_update(self, new_theta):
        if new_theta.shape != self.theta.shape:
            raise ConfigError("theta length changed by update", field="theta")
        self.theta = np.ascontiguousarray(new_theta, dtype=np.float64)
        self.theta_version += 1

    def copy(self) -> "ModulePool":
        return ModulePool(self.groups, self.theta.copy(), self.seed)


class PoolView:
    """A pool with some modules' parameters overridden (scoped adapted copies).

    Duck-types the read surface of ModulePool, so structure evaluation and
    gradients work against adapted parameters without touching the pool.
    """

    def __init__(self, pool, overrides):
        self._pool = pool
        self.overrides = overrides

    @property
    def groups(self):
        return self._pool.groups

    @property
    def n_modules(self):
        return self._pool.n_modules

    @property
    def module_ids(self):
        return self._pool.module_ids

    def arch_of(self, module_id):
        return self._pool.arch_of(module_id)

    def params_of(self, module_id):
        if module_id in self.overrides:
            return self.overrides[module_id]
        return self._pool.params_of(module_id)

    def span_of(self, module_id):
        return self._pool.span_of(module_id)

    def ids_for_role(self, role):
        return self._pool.ids_for_role(role)

    @property
    def _elig_cache(self):
        return self._pool._elig_cache


def init_pool(pool_spec, seed) -> ModulePool:
    """Build a pool from [(role, arch, count), ...] with per-module seeded draws."""
    groups = []
    chunks = []
    next_id = 0
    root = np.random.SeedSequence(seed)
    specs = list(pool_spec)
    if not specs:
        raise ConfigError("pool spec is empty", field="pool")
    total = 0
    for _, _, count in specs:
        if int(count) < 1:
            raise ConfigError("module count must be >= 1", field="pool.count")
        total += int(count)
    streams = root.spawn(total)
    for role, arch, count in specs:
        validate_role(role)
        if not isinstance(arch, Arch):
            arch = Arch(tuple(arch))
        ids = tuple(range(next_id, next_id + int(count)))
        next_id += int(count)
        groups.append(ModuleGroup(role=role, arch=arch, member_ids=ids))
        for mid in ids:
            chunks.append(init_params(arch, np.random.default_rng(streams[mid])))
    return ModulePool(groups, np.concatenate(chunks), seed)


def module_forward(pool: ModulePool, module_id: int, x):
    return mlp_forward(pool.arch_of(module_id), pool.params_of(module_id), x)


def checkpoint_save(pool: ModulePool, path) -> None:
    doc = {
        "schema_version": CHECKPOINT_SCHEMA,
        "seed": pool.seed,
        "groups": [
            {
                "role": g.role,
                "arch": {
                    "layer_sizes": list(g.arch.layer_sizes),
                    "hidden_activation": g.arch.hidden_activation,
                    "output_activation": g.arch.output_activation,
                },
                "member_ids": list(g.member_ids),
            }
            for g in pool.groups
        ],
        # repr-based decimal floats: exact float64 round-trip
        "params": {str(mid): pool.params_of(mid).tolist() for mid in pool.module_ids},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def checkpoint_load(path) -> ModulePool:
    with open(path) as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"malformed checkpoint at char {exc.pos}: {exc.msg}") from exc
    if not isinstance(doc, dict) or "schema_version" not in doc:
        raise FormatError("checkpoint is not a pool document")
    if doc["schema_version"] != CHECKPOINT_SCHEMA:
        raise VersionError(f"unsupported checkpoint schema {doc['schema_version']!r}")
    try:
        groups = []
        for g in doc["groups"]:
            role = g["role"]
            if not _ROLE_RE.match(role):
                raise VersionError(f"unknown role tag {role!r} in checkpoint")
            arch = Arch(
                tuple(g["arch"]["layer_sizes"]),
                g["arch"]["hidden_activation"],
                g["arch"]["output_activation"],
            )
            groups.append(ModuleGroup(role=role, arch=arch, member_ids=tuple(g["member_ids"])))
        chunks = []
        for g in groups:
            want = param_count(g.arch)
            for mid in g.member_ids:
                vec = np.asarray(doc["params"][str(mid)], dtype=np.float64)
                if vec.ndim != 1 or vec.size != want:
                    raise FormatError(f"module {mid}: parameter length does not match arch")
                chunks.append(vec)
        return ModulePool(groups, np.concatenate(chunks), doc["seed"])
    except (VersionError, FormatError):
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"checkpoint missing or mistyped field: {exc}") from exc
