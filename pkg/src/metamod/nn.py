"""Minimal dense feedforward networks with exact backpropagation and Adam.

Parameters live in one flat float64 vector per network, laid out layer by
layer: weight matrix (out x in, row-major), then bias. All math is float64 so
the finite-difference gradient checks have headroom.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backend import kernel_backward, kernel_forward, kernel_forward_cached
from .errors import ConfigError, NumericError, ShapeError

ACTIVATION_IDS = {"identity": 0, "relu": 1, "tanh": 2}


@dataclass(frozen=True)
class Arch:
    """Layer sizes (input dim first, output dim last) plus activation names."""

    layer_sizes: tuple[int, ...]
    hidden_activation: str = "relu"
    output_activation: str = "identity"

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2:
            raise ConfigError("need at least input and output sizes", field="layer_sizes")
        if any(s < 1 for s in sizes):
            raise ConfigError("all layer sizes must be >= 1", field="layer_sizes")
        for name in (self.hidden_activation, self.output_activation):
            if name not in ACTIVATION_IDS:
                raise ConfigError(f"unknown activation {name!r}", field="activation")
        # hot-loop caches; an Arch is immutable after this point
        object.__setattr__(self, "_n_params",
                           sum(sizes[i] * sizes[i + 1] + sizes[i + 1]
                               for i in range(len(sizes) - 1)))
        object.__setattr__(self, "_acts", (ACTIVATION_IDS[self.hidden_activation],
                                           ACTIVATION_IDS[self.output_activation]))

    @property
    def in_dim(self):
        return self.layer_sizes[0]

    @property
    def out_dim(self):
        return self.layer_sizes[-1]

    def _act_ids(self):
        return self._acts


def param_count(arch: Arch) -> int:
    return arch._n_params


def init_params(arch: Arch, rng: np.random.Generator) -> np.ndarray:
    """Per-layer uniform init scaled by fan-in, weights then biases."""
    chunks = []
    sizes = arch.layer_sizes
    for i in range(len(sizes) - 1):
        bound = 1.0 / np.sqrt(sizes[i])
        chunks.append(rng.uniform(-bound, bound, size=sizes[i] * sizes[i + 1]))
        chunks.append(rng.uniform(-bound, bound, size=sizes[i + 1]))
    return np.concatenate(chunks)


def _check_params(arch, params):
    params = np.ascontiguousarray(params, dtype=np.float64)
    if params.ndim != 1 or params.shape[0] != param_count(arch):
        raise ShapeError(
            f"params length {params.size} != {param_count(arch)} for layers {arch.layer_sizes}"
        )
    return params


def _as_batch(arch, x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != arch.in_dim:
        raise ShapeError(f"input shape {x.shape} incompatible with input dim {arch.in_dim}")
    return x, single


def mlp_forward(arch: Arch, params: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Forward pass; accepts a single vector or a (batch, in_dim) array."""
    params = _check_params(arch, params)
    xb, single = _as_batch(arch, x)
    h_act, o_act = arch._act_ids()
    y = kernel_forward(arch.layer_sizes, h_act, o_act, params, xb)
    return y[0] if single else y


def mlp_forward_cached(arch, params, X):
    """Batched forward returning (Y, cache) for a later VJP call."""
    params = _check_params(arch, params)
    xb, _ = _as_batch(arch, np.atleast_2d(X))
    h_act, o_act = arch._act_ids()
    return kernel_forward_cached(arch.layer_sizes, h_act, o_act, params, xb)


def mlp_vjp(arch, params, X, cache, dY):
    """(dparams, dX) for the given upstream gradient dY, reusing the cache."""
    dY = np.ascontiguousarray(dY, dtype=np.float64)
    h_act, o_act = arch._act_ids()
    return kernel_backward(arch.layer_sizes, h_act, o_act, params, X, cache, dY)


def _as_xy(arch, batch):
    """Accept a list of (x, y) pairs or an (X, Y) array pair."""
    if (
        isinstance(batch, tuple)
        and len(batch) == 2
        and isinstance(batch[0], np.ndarray)
        and isinstance(batch[1], np.ndarray)
    ):
        X, Y = batch
    else:
        pairs = list(batch)
        X = np.array([np.atleast_1d(p[0]) for p in pairs], dtype=np.float64)
        Y = np.array([np.atleast_1d(p[1]) for p in pairs], dtype=np.float64)
    X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=np.float64)))
    Y = np.ascontiguousarray(np.atleast_2d(np.asarray(Y, dtype=np.float64)))
    if X.shape[0] != Y.shape[0]:
        raise ShapeError(f"{X.shape[0]} inputs vs {Y.shape[0]} targets")
    if X.shape[1] != arch.in_dim or Y.shape[1] != arch.out_dim:
        raise ShapeError(
            f"batch dims {X.shape[1]}->{Y.shape[1]} incompatible with arch "
            f"{arch.in_dim}->{arch.out_dim}"
        )
    return X, Y


def mse_output_grad(Y_pred, Y_true):
    """d/dY of mean-over-examples, mean-over-dims squared error."""
    n, d = Y_pred.shape
    return (2.0 / (n * d)) * (Y_pred - Y_true)


def mlp_backward(arch: Arch, params: np.ndarray, batch) -> tuple[np.ndarray, np.ndarray]:
    """Exact gradient of the batch-mean squared error.

    Returns (grad wrt params, grad wrt inputs per example). The loss is the
    mean over examples of the squared error averaged over output dims, so the
    gradient scale is batch-size invariant.
    """
    params = _check_params(arch, params)
    X, Y = _as_xy(arch, batch)
    Y_pred, cache = mlp_forward_cached(arch, params, X)
    dY = mse_output_grad(Y_pred, Y)
    return mlp_vjp(arch, params, X, cache, dY)


@dataclass(frozen=True)
class OptHyper:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not self.lr > 0:
            raise ConfigError("learning rate must be > 0", field="lr")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ConfigError("moment decays must lie in (0, 1)", field="beta")
        if not self.eps > 0:
            raise ConfigError("eps must be > 0", field="eps")


@dataclass
class OptState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int
    hyper: OptHyper


def optimizer_init(n_params: int, lr: float, beta1=0.9, beta2=0.999, eps=1e-8) -> OptState:
    hyper = OptHyper(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
    return OptState(np.zeros(n_params), np.zeros(n_params), 0, hyper)


def optimizer_step(state: OptState, params: np.ndarray, grads: np.ndarray):
    """One bias-corrected Adam update; returns (new state, new params)."""
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != params.shape or grads.shape != state.first_moment.shape:
        raise ShapeError(f"gradient shape {grads.shape} != params shape {params.shape}")
    if not np.all(np.isfinite(grads)):
        raise NumericError("non-finite gradient")
    h = state.hyper
    t = state.step_count + 1
    m = h.beta1 * state.first_moment + (1.0 - h.beta1) * grads
    v = h.beta2 * state.second_moment + (1.0 - h.beta2) * grads * grads
    m_hat = m / (1.0 - h.beta1**t)
    v_hat = v / (1.0 - h.beta2**t)
    new_params = params - h.lr * m_hat / (np.sqrt(v_hat) + h.eps)
    return OptState(m, v, t, h), new_params
