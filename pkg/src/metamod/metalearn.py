"""Meta-training and meta-test solving.

The outer loop alternates one annealing step per task on its structure
(scored on that task's training split) with one shared gradient step on the
module weights (scored on a random point of each task's validation split),
while the temperature cools linearly. The smoothed objective this optimizes
is realized purely by that sampling; it is never computed in closed form.

MAML-style adaptation plugs in as an inner loop: the per-task loss becomes
the error after a few gradient steps on the task's training data. The
Pooled and plain-MAML baselines are degenerate configurations of the same
loop (single scheme, one module), not separate code paths.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .annealing import bounce
from .annealing import AnnealSchedule, online_search
from .errors import ConfigError, DomainError
from .nn import OptState, optimizer_init, optimizer_step
from .pool import ModulePool, PoolView, init_pool
from .structures import (
    TASK_ERROR_SCALE,
    Structure,
    _structure_gradient_sparse,
    _as_xy_arrays,
    initial_structure,
    scheme_in_dim,
    scheme_out_dim,
    task_error,
    validate_scheme,
)
from .tasks import TaskSuite

MAML_MODES = ("off", "first_order", "full")

# rng stream namespaces under the master seed
_NS_TRAIN_TASK = 0
_NS_METATEST = 1


def rng_stream(seed: int, *key: int) -> np.random.Generator:
    """Independent, reproducible generator for (master seed, namespace key)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, key)]))


@dataclass(frozen=True)
class TrainConfig:
    outer_iterations: int
    outer_lr: float = 0.003
    t0: float = 2.0
    t_end: float = 0.01
    maml_mode: str = "off"
    inner_steps: int = 0
    inner_lr: float = 0.001
    batch_size: int = 1
    seed: int = 0
    log_every: int = 100
    threads: int = 1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    metatest_steps: int = 1000
    metatest_t0: float = 2.0
    metatest_t_end: float = 0.01

    def __post_init__(self):
        if self.outer_iterations < 1:
            raise ConfigError("outer_iterations must be >= 1", field="train.outer_iterations")
        if self.maml_mode not in MAML_MODES:
            raise ConfigError(f"maml_mode must be one of {MAML_MODES}", field="train.maml_mode")
        if (self.inner_steps == 0) != (self.maml_mode == "off"):
            raise ConfigError("inner_steps must be 0 exactly when maml_mode is 'off'",
                              field="train.inner_steps")
        if self.inner_steps < 0:
            raise ConfigError("inner_steps must be >= 0", field="train.inner_steps")
        for name in ("outer_lr", "inner_lr", "t0", "t_end"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0", field=f"train.{name}")
        if not self.t_end < self.t0:
            raise ConfigError("t_end must be < t0", field="train.t_end")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1", field="train.batch_size")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1", field="train.threads")
        if self.log_every < 1:
            raise ConfigError("log_every must be >= 1", field="train.log_every")


@dataclass
class MetaState:
    pool: ModulePool
    structures: list
    opt: OptState
    temperature: float
    iteration: int


# ---------------------------------------------------------------------------
# inner-loop adaptation


def _used_ids(structure: Structure):
    return sorted(set(structure.module_ids()))


def inner_adapt(pool, dataset, structure: Structure, step_size: float, n_steps: int) -> dict:
    """Plain gradient descent on the scaled task error, over the modules the
    structure uses only. Returns {module id: adapted params}; the pool itself
    is untouched."""
    if n_steps < 0:
        raise ConfigError("n_steps must be >= 0", field="inner_steps")
    overrides = {mid: pool.params_of(mid).copy() for mid in _used_ids(structure)}
    if n_steps == 0:
        return overrides
    X, Y = _as_xy_arrays(dataset)
    if X.shape[0] == 0:
        raise DomainError("empty adaptation set")
    view = PoolView(pool, overrides)
    for _ in range(n_steps):
        grads = _structure_gradient_sparse(structure, view, X, Y)
        for mid, g in grads.items():
            overrides[mid] = overrides[mid] - step_size * TASK_ERROR_SCALE * g
    return overrides


def maml_eval(d_adapt, d_eval, structure: Structure, pool, config: TrainConfig) -> float:
    """Task error on d_eval after adapting on d_adapt (the adapted error)."""
    if config.maml_mode == "off":
        raise ConfigError("maml_eval requires maml_mode != 'off'", field="train.maml_mode")
    overrides = inner_adapt(pool, d_adapt, structure, config.inner_lr, config.inner_steps)
    return task_error(d_eval, structure, PoolView(pool, overrides))


def _split_flat(vec, sizes_like, used):
    """Cut a flat vector back into {module id: segment} following `used` order."""
    out = {}
    off = 0
    for mid in used:
        n = sizes_like[mid].size
        out[mid] = vec[off : off + n]
        off += n
    return out


def _task_outer_grads(structure, pool, train_set, x_eval, y_eval, config):
    """Per-module outer gradient contribution for one task (unscaled MSE at
    the drawn validation point; adapted first when maml_mode is on)."""
    if config.maml_mode == "off":
        return _structure_gradient_sparse(structure, pool, x_eval, y_eval)

    used = _used_ids(structure)
    X, Y = _as_xy_arrays(train_set)
    if X.shape[0] == 0:
        raise DomainError("empty adaptation set")

    # adapt, remembering the trajectory for the full-mode adjoint
    trajectory = []
    overrides = {mid: pool.params_of(mid).copy() for mid in used}
    for _ in range(config.inner_steps):
        if config.maml_mode == "full":
            trajectory.append({mid: v.copy() for mid, v in overrides.items()})
        view = PoolView(pool, overrides)
        grads = _structure_gradient_sparse(structure, view, X, Y)
        for mid, g in grads.items():
            overrides[mid] = overrides[mid] - config.inner_lr * TASK_ERROR_SCALE * g

    adapted_view = PoolView(pool, overrides)
    outer = _structure_gradient_sparse(structure, adapted_view, x_eval, y_eval)
    if config.maml_mode == "first_order":
        return outer

    # full mode: reverse the unrolled inner steps; Hessian-vector products by
    # central finite differences of the analytic inner gradient
    lam = np.concatenate([outer[mid] for mid in used])

    def grad_at(theta_vecs):
        view = PoolView(pool, theta_vecs)
        g = _structure_gradient_sparse(structure, view, X, Y)
        return TASK_ERROR_SCALE * np.concatenate([g[mid] for mid in used])

    for theta_t in reversed(trajectory):
        flat_t = np.concatenate([theta_t[mid] for mid in used])
        norm = float(np.linalg.norm(lam))
        if norm == 0.0:
            break
        eps = np.sqrt(np.finfo(np.float64).eps) * (1.0 + float(np.linalg.norm(flat_t))) / norm
        plus = _split_flat(flat_t + eps * lam, theta_t, used)
        minus = _split_flat(flat_t - eps * lam, theta_t, used)
        hvp = (grad_at(plus) - grad_at(minus)) / (2.0 * eps)
        lam = lam - config.inner_lr * hvp
    return _split_flat(lam, {mid: pool.params_of(mid) for mid in used}, used)


def _draw_eval_point(test_set, rng, batch_size):
    X, Y = _as_xy_arrays(test_set)
    n = X.shape[0]
    if n == 0:
        raise DomainError("empty test set")
    if batch_size == 1:
        i = int(rng.integers(n))
        return X[i : i + 1], Y[i : i + 1]
    idx = rng.integers(n, size=batch_size)
    return np.ascontiguousarray(X[idx]), np.ascontiguousarray(Y[idx])


def grad_step(state: MetaState, test_sets, config: TrainConfig, rngs,
              train_sets=None, executor=None) -> MetaState:
    """One shared-weight update: per task, draw a random validation point,
    accumulate the gradient of its loss through that task's structure (sum
    over tasks, fixed task order), then apply one optimizer step."""
    pool = state.pool
    if config.maml_mode != "off" and train_sets is None:
        raise ConfigError("maml grad step needs the per-task training sets", field="train")

    def one(j):
        xb, yb = _draw_eval_point(test_sets[j], rngs[j], config.batch_size)
        train = None if train_sets is None else train_sets[j]
        return _task_outer_grads(state.structures[j], pool, train, xb, yb, config)

    indices = range(len(state.structures))
    per_task = list(executor.map(one, indices)) if executor is not None else [one(j) for j in indices]

    delta = np.zeros_like(pool.theta)
    for grads in per_task:  # fixed task order: parallel == serial bitwise
        for mid, g in grads.items():
            lo, hi = pool.span_of(mid)
            delta[lo:hi] += g
    opt, new_theta = optimizer_step(state.opt, pool.theta, delta)
    pool.apply_update(new_theta)
    return replace(state, opt=opt)


# ---------------------------------------------------------------------------
# the outer loop


def _tasks_of(suite):
    tasks = suite.tasks if isinstance(suite, TaskSuite) else list(suite)
    if not tasks:
        raise ConfigError("need at least one task", field="suite")
    return tasks


def _check_dims(scheme, pool, tasks):
    din, dout = scheme_in_dim(scheme, pool), scheme_out_dim(scheme, pool)
    tx, ty = tasks[0].train.x.shape[1], tasks[0].train.y.shape[1]
    if (din, dout) != (tx, ty):
        raise ConfigError(
            f"scheme maps dim {din}->{dout} but tasks have {tx}->{ty}", field="scheme")


def _mean_errors(structures, datasets, pool):
    return float(np.mean([task_error(d, s, pool) for s, d in zip(structures, datasets)]))


def bouncegrad_train(suite, scheme, pool_spec, config: TrainConfig, pool=None):
    """Meta-train a module pool over a task suite.

    Returns (pool, per-task structures, log records). Deterministic given the
    config seed; with threads > 1 the result is bitwise-identical to the
    serial run (per-task rng streams, ordered reduction).
    """
    tasks = _tasks_of(suite)
    m = len(tasks)
    if pool is None:
        pool = init_pool(pool_spec, config.seed)
    validate_scheme(scheme, pool)
    _check_dims(scheme, pool, tasks)
    train_sets = [t.train for t in tasks]
    test_sets = [t.test for t in tasks]

    rngs = [rng_stream(config.seed, _NS_TRAIN_TASK, j) for j in range(m)]
    structures = [initial_structure(scheme, pool, rngs[j]) for j in range(m)]
    opt = optimizer_init(pool.theta.size, config.outer_lr,
                         beta1=config.beta1, beta2=config.beta2, eps=config.eps)
    iters = config.outer_iterations
    dt = (config.t0 - config.t_end) / (iters - 1) if iters > 1 else 0.0
    state = MetaState(pool, structures, opt, config.t0, 0)

    log = [{
        "iteration": 0,
        "T": config.t0,
        "mean_train_error": _mean_errors(structures, train_sets, pool),
        "mean_val_error": _mean_errors(structures, test_sets, pool),
        "acceptance_rate": None,
    }]

    executor = ThreadPoolExecutor(max_workers=config.threads) if config.threads > 1 else None
    accepted_window = 0
    steps_window = 0
    try:
        for i in range(iters):
            temperature = config.t0 - i * dt
            version_before = pool.theta_version
            result = bounce(state.structures, train_sets, temperature, scheme, pool, rngs,
                            executor=executor)
            assert pool.theta_version == version_before, "bounce must not touch theta"
            state.structures = result.structures
            state.temperature = temperature
            accepted_window += result.accepted
            steps_window += m
            state = grad_step(state, test_sets, config, rngs,
                              train_sets=train_sets, executor=executor)
            state.iteration = i + 1
            if (i + 1) % config.log_every == 0 or i + 1 == iters:
                log.append({
                    "iteration": i + 1,
                    "T": temperature,
                    "mean_train_error": _mean_errors(state.structures, train_sets, pool),
                    "mean_val_error": _mean_errors(state.structures, test_sets, pool),
                    "acceptance_rate": accepted_window / steps_window,
                })
                accepted_window = 0
                steps_window = 0
    finally:
        if executor is not None:
            executor.shutdown()
    return pool, state.structures, log


# ---------------------------------------------------------------------------
# meta-test


def metatest_solve(train_set, scheme, pool, config: TrainConfig, rng=None):
    """Solve a new task against a trained pool.

    With maml_mode off: structure search alone (pool params untouched, second
    element None). With maml_mode on: the search scores each candidate by its
    adapted error on the training set, and the winner gets `inner_steps`
    fine-tuning gradient steps over the modules it uses; the tuned scoped
    params come back as {module id: params}. The third element is a
    prediction callable for the solved task.
    """
    X, _ = _as_xy_arrays(train_set)
    if X.shape[0] == 0:
        raise DomainError("empty meta-test training set")
    if rng is None:
        rng = rng_stream(config.seed, _NS_METATEST, 0)
    schedule = AnnealSchedule.with_steps(config.metatest_t0, config.metatest_t_end,
                                         config.metatest_steps)
    if config.maml_mode == "off":
        structure = online_search(train_set, scheme, pool, schedule, rng)
        return structure, None, lambda x: _predict(structure, pool, x)

    def adapted_score(dataset, candidate, p):
        return maml_eval(dataset, dataset, candidate, p, config)

    structure = online_search(train_set, scheme, pool, schedule, rng, score_fn=adapted_score)
    tuned = inner_adapt(pool, train_set, structure, config.inner_lr, config.inner_steps)
    view = PoolView(pool, tuned)
    return structure, tuned, lambda x: _predict(structure, view, x)


def _predict(structure, pool, x):
    from .structures import structure_forward

    return structure_forward(structure, pool, x)
