"""Experiment configuration: one JSON document describes a full run.

Validation is total: every reachable misconfiguration raises ConfigError with
the offending field path. Baseline methods (Pooled, plain MAML) are derived
from the same document as degenerate presets (single-module scheme over the
baseline network), never separate code paths.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, fields

from .errors import ConfigError
from .metalearn import TrainConfig
from .nn import ACTIVATION_IDS, Arch
from .report import METHOD_NAMES
from .structures import SingleScheme, scheme_from_spec
from .tasks import gen_sine_split, gen_sum_split, load_csv_suite

_TRAIN_FIELDS = {f.name for f in fields(TrainConfig)} - {"seed", "threads"}


def config_digest(doc: dict) -> str:
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _expect(cond, message, field):
    if not cond:
        raise ConfigError(message, field=field)


def _get(doc, key, types, path, required=True, default=None):
    if key not in doc:
        _expect(not required, "missing required field", f"{path}{key}")
        return default
    value = doc[key]
    _expect(isinstance(value, types) and not isinstance(value, bool) or types is bool,
            f"expected {getattr(types, '__name__', types)}", f"{path}{key}")
    return value


def _validate_train_block(block, path):
    _expect(isinstance(block, dict), "expected object", path)
    for key, value in block.items():
        _expect(key in _TRAIN_FIELDS, f"unknown training field (known: {sorted(_TRAIN_FIELDS)})",
                f"{path}.{key}")
        if key == "maml_mode":
            _expect(isinstance(value, str), "expected string", f"{path}.{key}")
        else:
            _expect(isinstance(value, (int, float)) and not isinstance(value, bool),
                    "expected number", f"{path}.{key}")


def _validate_pool_entry(entry, path):
    _expect(isinstance(entry, dict), "expected object", path)
    _get(entry, "role", str, f"{path}.")
    sizes = _get(entry, "layer_sizes", list, f"{path}.")
    _expect(len(sizes) >= 2 and all(isinstance(s, int) and s >= 1 for s in sizes),
            "layer_sizes must be >= 2 positive integers", f"{path}.layer_sizes")
    count = _get(entry, "count", int, f"{path}.")
    _expect(count >= 1, "count must be >= 1", f"{path}.count")
    for key in ("hidden_activation", "output_activation"):
        if key in entry:
            _expect(entry[key] in ACTIVATION_IDS,
                    f"unknown activation (known: {sorted(ACTIVATION_IDS)})", f"{path}.{key}")
    known = {"role", "layer_sizes", "count", "hidden_activation", "output_activation"}
    for key in entry:
        _expect(key in known, "unknown pool field", f"{path}.{key}")


def validate_config(doc: dict) -> None:
    _expect(isinstance(doc, dict), "config must be a JSON object", "config")
    _get(doc, "seed", int, "")
    methods = _get(doc, "methods", list, "")
    _expect(len(methods) >= 1, "select at least one method", "methods")
    for i, m in enumerate(methods):
        _expect(m in METHOD_NAMES, f"unknown method (known: {METHOD_NAMES})", f"methods[{i}]")

    suite = _get(doc, "suite", dict, "")
    if "manifest" in suite:
        _get(suite, "manifest", str, "suite.")
        _get(suite, "metatest_manifest", str, "suite.")
    else:
        gen = _get(suite, "generator", str, "suite.")
        _expect(gen in ("sum", "sine"), "generator must be 'sum' or 'sine'", "suite.generator")
        _expect(_get(suite, "n_meta_train", int, "suite.") >= 1,
                "need >= 1 meta-training task", "suite.n_meta_train")
        _expect(_get(suite, "n_meta_test", int, "suite.") >= 1,
                "need >= 1 meta-test task", "suite.n_meta_test")
        n_train = suite.get("n_train")
        ok = (isinstance(n_train, int) and n_train >= 1) or (
            isinstance(n_train, list) and len(n_train) == 2
            and all(isinstance(v, int) for v in n_train) and 1 <= n_train[0] <= n_train[1])
        _expect(ok, "n_train must be a positive int or [lo, hi]", "suite.n_train")
        _expect(_get(suite, "n_test", int, "suite.") >= 1, "need >= 1 test point",
                "suite.n_test")

    pool = _get(doc, "pool", list, "")
    _expect(len(pool) >= 1, "pool spec is empty", "pool")
    for i, entry in enumerate(pool):
        _validate_pool_entry(entry, f"pool[{i}]")

    scheme_from_spec(_get(doc, "scheme", dict, ""))
    _validate_train_block(_get(doc, "train", dict, ""), "train")
    _expect("outer_iterations" in doc["train"], "missing required field",
            "train.outer_iterations")

    if any(m in ("Pooled", "MAML") for m in methods):
        baseline = _get(doc, "baseline_pool", dict, "")
        _validate_pool_entry({"role": "generic", "count": 1, **baseline}, "baseline_pool")

    overrides = doc.get("method_overrides", {})
    _expect(isinstance(overrides, dict), "expected object", "method_overrides")
    for method, block in overrides.items():
        _expect(method in METHOD_NAMES, f"unknown method (known: {METHOD_NAMES})",
                f"method_overrides.{method}")
        _validate_train_block(block, f"method_overrides.{method}")

    if "out_dir" in doc:
        _get(doc, "out_dir", str, "")
    known_top = {"seed", "methods", "suite", "pool", "baseline_pool", "scheme", "train",
                 "method_overrides", "out_dir"}
    for key in doc:
        _expect(key in known_top, "unknown config field", key)


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", field=str(path)) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc}", field=str(path)) from exc
    validate_config(doc)
    return doc


# ---------------------------------------------------------------------------
# derived pieces


def pool_spec_from(doc_pool) -> list:
    spec = []
    for entry in doc_pool:
        arch = Arch(tuple(entry["layer_sizes"]),
                    entry.get("hidden_activation", "relu"),
                    entry.get("output_activation", "identity"))
        spec.append((entry["role"], arch, entry["count"]))
    return spec


def build_suites(doc: dict):
    """Meta-train and meta-test suites from the generator spec or manifests."""
    suite = doc["suite"]
    if "manifest" in suite:
        return load_csv_suite(suite["manifest"]), load_csv_suite(suite["metatest_manifest"])
    n_train = suite["n_train"]
    if isinstance(n_train, list):
        n_train = tuple(n_train)
    args = (suite["n_meta_train"], suite["n_meta_test"], n_train, suite["n_test"], doc["seed"])
    if suite["generator"] == "sum":
        return gen_sum_split(*args)
    kwargs = {}
    for key in ("a_range", "b_range", "x_range"):
        if key in suite:
            kwargs[key] = tuple(suite[key])
    return gen_sine_split(*args, **kwargs)


def suite_name(doc: dict) -> str:
    suite = doc["suite"]
    if "manifest" in suite:
        return "csv"
    n_train = suite["n_train"]
    pts = f"{n_train[0]}-{n_train[1]}pts" if isinstance(n_train, list) else f"{n_train}pts"
    return f"{suite['generator']}-{pts}"


@dataclass(frozen=True)
class MethodPlan:
    method: str
    scheme: object
    pool_spec: list
    train: TrainConfig


def _train_config(doc, method, seed, threads) -> dict:
    merged = dict(doc["train"])
    merged.update(doc.get("method_overrides", {}).get(method, {}))
    merged["seed"] = seed
    merged["threads"] = threads
    return merged


def method_plan(doc: dict, method: str, seed: int, threads: int = 1) -> MethodPlan:
    """Effective (scheme, pool, training config) for one selected method.

    BounceGrad/MOMA use the document's scheme and pool; Pooled/MAML are the
    degenerate presets: a single-module scheme over the baseline network,
    with and without inner-loop adaptation.
    """
    if method not in METHOD_NAMES:
        raise ConfigError(f"unknown method {method!r}", field="methods")
    merged = _train_config(doc, method, seed, threads)
    if method in ("Pooled", "MAML"):
        baseline = doc["baseline_pool"]
        arch = Arch(tuple(baseline["layer_sizes"]),
                    baseline.get("hidden_activation", "relu"),
                    baseline.get("output_activation", "identity"))
        pool_spec = [("generic", arch, 1)]
        scheme = SingleScheme(role="generic")
        if method == "Pooled":
            merged["maml_mode"] = "off"
            merged["inner_steps"] = 0
        else:
            if merged.get("maml_mode", "off") == "off":
                merged["maml_mode"] = "first_order"
            if merged.get("inner_steps", 0) == 0:
                merged["inner_steps"] = 5
    else:
        pool_spec = pool_spec_from(doc["pool"])
        scheme = scheme_from_spec(doc["scheme"])
        if method == "BounceGrad":
            merged["maml_mode"] = "off"
            merged["inner_steps"] = 0
        else:  # MOMA
            if merged.get("maml_mode", "off") == "off":
                merged["maml_mode"] = "first_order"
            if merged.get("inner_steps", 0) == 0:
                merged["inner_steps"] = 5
    try:
        train = TrainConfig(**merged)
    except TypeError as exc:
        raise ConfigError(f"bad training block: {exc}", field="train") from exc
    return MethodPlan(method=method, scheme=scheme, pool_spec=pool_spec, train=train)
