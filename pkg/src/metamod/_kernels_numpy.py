"""Pure-numpy dense MLP kernels.

Reference implementation of the kernel API; `metamod._speedups` provides the
compiled equivalent. All arrays are float64, inputs 2-D (batch, dim), params a
flat vector laid out per layer as W (out x in, row-major) then b (out,).
Caches are backend-opaque: here, the list of post-activation arrays per layer.
"""

from __future__ import annotations

import numpy as np

ACT_IDENTITY = 0
ACT_RELU = 1
ACT_TANH = 2


def _activate(z, act):
    if act == ACT_RELU:
        return np.maximum(z, 0.0)
    if act == ACT_TANH:
        return np.tanh(z)
    return z


def _activation_grad(a, act):
    # derivative expressed through the post-activation value
    if act == ACT_RELU:
        return (a > 0.0).astype(np.float64)
    if act == ACT_TANH:
        return 1.0 - a * a
    return None  # identity: skip the multiply


def forward(sizes, h_act, o_act, params, X):
    a = X
    off = 0
    last = len(sizes) - 2
    for layer in range(len(sizes) - 1):
        din, dout = sizes[layer], sizes[layer + 1]
        W = params[off : off + din * dout].reshape(dout, din)
        off += din * dout
        b = params[off : off + dout]
        off += dout
        act = o_act if layer == last else h_act
        a = _activate(a @ W.T + b, act)
    return a


def forward_cached(sizes, h_act, o_act, params, X):
    acts = []
    a = X
    off = 0
    last = len(sizes) - 2
    for layer in range(len(sizes) - 1):
        din, dout = sizes[layer], sizes[layer + 1]
        W = params[off : off + din * dout].reshape(dout, din)
        off += din * dout
        b = params[off : off + dout]
        off += dout
        act = o_act if layer == last else h_act
        a = _activate(a @ W.T + b, act)
        acts.append(a)
    return a, acts


def backward(sizes, h_act, o_act, params, X, cache, dY):
    acts = cache
    n_layers = len(sizes) - 1
    offsets = []
    off = 0
    for layer in range(n_layers):
        din, dout = sizes[layer], sizes[layer + 1]
        offsets.append(off)
        off += din * dout + dout
    dparams = np.zeros_like(params)

    g = _activation_grad(acts[-1], o_act)
    delta = dY if g is None else dY * g
    dX = None
    for layer in range(n_layers - 1, -1, -1):
        din, dout = sizes[layer], sizes[layer + 1]
        off = offsets[layer]
        W = params[off : off + din * dout].reshape(dout, din)
        a_prev = X if layer == 0 else acts[layer - 1]
        dparams[off : off + din * dout] = (delta.T @ a_prev).ravel()
        dparams[off + din * dout : off + din * dout + dout] = delta.sum(axis=0)
        da = delta @ W
        if layer == 0:
            dX = da
        else:
            g = _activation_grad(a_prev, h_act)
            delta = da if g is None else da * g
    return dparams, dX
