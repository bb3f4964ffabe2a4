"""Simulated-annealing machinery: Metropolis acceptance, temperature sweeps,
the meta-test structure search, and the per-task annealing step used during
meta-training."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigError, DomainError
from .structures import Structure, initial_structure, propose, task_error


@dataclass(frozen=True)
class AnnealSchedule:
    """Strictly decreasing sweep t0, t0-dt, ... while the value stays >= t_end."""

    t0: float
    dt: float
    t_end: float

    def __post_init__(self):
        if not (self.t0 > 0 and self.dt > 0):
            raise ConfigError("t0 and dt must be > 0", field="schedule")
        if not (0 <= self.t_end < self.t0):
            raise ConfigError("need 0 <= t_end < t0", field="schedule")

    def __len__(self):
        # guard absorbs accumulated float error at the boundary step
        return int(math.floor((self.t0 - self.t_end) / self.dt + 1e-9)) + 1

    def temperatures(self):
        for i in range(len(self)):
            yield self.t0 - i * self.dt

    @classmethod
    def with_steps(cls, t0: float, t_end: float, steps: int) -> "AnnealSchedule":
        """Schedule covering [t0, t_end] in exactly `steps` temperatures."""
        if steps < 2:
            raise ConfigError("need at least 2 steps", field="schedule.steps")
        return cls(t0=t0, dt=(t0 - t_end) / (steps - 1), t_end=t_end)


def accept(v_new: float, v_old: float, temperature: float, rng) -> bool:
    """Metropolis rule: improvements always pass; a worsening move passes with
    probability exp((v_old - v_new)/T). Ties pass (exp(0) = 1). The random
    draw happens only on the non-improvement branch."""
    if not temperature > 0:
        raise DomainError(f"temperature must be > 0, got {temperature}")
    if v_new < v_old:
        return True
    return float(rng.random()) < math.exp((v_old - v_new) / temperature)


@dataclass
class SearchState:
    current: Structure
    current_error: float
    best: Structure
    best_error: float


def online_search(train_set, scheme, pool, schedule: AnnealSchedule, rng,
                  score_fn=None, return_state: bool = False):
    """Anneal over structures scored on the task's training data.

    One propose/accept step per temperature. Returns the best-scoring
    structure observed (which dominates returning the final one); pass
    `return_state=True` to also get the final SearchState.
    """
    if score_fn is None:
        score_fn = task_error
    current = initial_structure(scheme, pool, rng)
    current_error = score_fn(train_set, current, pool)
    state = SearchState(current, current_error, current, current_error)
    for temperature in schedule.temperatures():
        candidate = propose(scheme, state.current, pool, rng)
        if candidate is None:
            continue  # no legal move: a rejected step
        candidate_error = score_fn(train_set, candidate, pool)
        if accept(candidate_error, state.current_error, temperature, rng):
            state.current = candidate
            state.current_error = candidate_error
            if candidate_error < state.best_error:
                state.best = candidate
                state.best_error = candidate_error
    if return_state:
        return state.best, state
    return state.best


@dataclass
class BounceResult:
    structures: list
    errors: list  # post-step training error per task (the retained structure's)
    accepted: int


def bounce(structures, train_sets, temperature, scheme, pool, rngs,
           score_fn=None, executor=None) -> BounceResult:
    """One simulated-annealing step per task, independently.

    Each task proposes once from its own rng stream and accepts per the
    Metropolis rule at the given temperature. Tasks are independent, so an
    executor may run them in parallel; results are identical either way.
    """
    if not (len(structures) == len(train_sets) == len(rngs)):
        raise ConfigError("structures, train_sets and rngs must align", field="bounce")
    if score_fn is None:
        score_fn = task_error

    def step(j):
        current = structures[j]
        rng = rngs[j]
        current_error = score_fn(train_sets[j], current, pool)
        candidate = propose(scheme, current, pool, rng)
        if candidate is None:
            return current, current_error, False
        candidate_error = score_fn(train_sets[j], candidate, pool)
        if accept(candidate_error, current_error, temperature, rng):
            return candidate, candidate_error, True
        return current, current_error, False

    if executor is None:
        outcomes = [step(j) for j in range(len(structures))]
    else:
        outcomes = list(executor.map(step, range(len(structures))))
    new_structures = [o[0] for o in outcomes]
    errors = [o[1] for o in outcomes]
    accepted = sum(1 for o in outcomes if o[2])
    return BounceResult(new_structures, errors, accepted)
