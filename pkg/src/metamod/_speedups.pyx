# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled dense MLP kernels; same API as metamod._kernels_numpy.

Matrix products go straight to BLAS dgemm (via scipy's cython bindings) so the
per-call overhead stays far below numpy dispatch at the tiny layer sizes this
package trains, while large layers still run at BLAS speed. The cache is one
flat float64 buffer holding the post-activation values of every layer, layer
blocks consecutive, each block row-major (batch, width).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport tanh as ctanh
from scipy.linalg.cython_blas cimport dgemm

ACT_IDENTITY = 0
ACT_RELU = 1
ACT_TANH = 2

cnp.import_array()


cdef inline void _gemm(char ta, char tb, int m, int n, int k, const double* a, int lda,
                       const double* b, int ldb, double* c, int ldc) noexcept nogil:
    cdef double one = 1.0, zero = 0.0
    dgemm(&ta, &tb, &m, &n, &k, &one, <double*> a, &lda, <double*> b, &ldb, &zero, c, &ldc)


cdef void _dense_layer(const double* a_prev, const double* w, const double* b,
                       double* a_out, Py_ssize_t n, Py_ssize_t din,
                       Py_ssize_t dout, int act) noexcept nogil:
    # a_out(n, dout) = act(a_prev(n, din) @ w(dout, din)^T + b); row-major buffers
    cdef Py_ssize_t i, j
    cdef double v
    _gemm(b'T', b'N', <int> dout, <int> n, <int> din, w, <int> din, a_prev, <int> din,
          a_out, <int> dout)
    for i in range(n):
        for j in range(dout):
            v = a_out[i * dout + j] + b[j]
            if act == 1:
                a_out[i * dout + j] = v if v > 0.0 else 0.0
            elif act == 2:
                a_out[i * dout + j] = ctanh(v)
            else:
                a_out[i * dout + j] = v


cdef void _forward_into(const Py_ssize_t* sz, Py_ssize_t n_layers, int h_act, int o_act,
                        const double* params, const double* x, double* cache,
                        Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t layer, poff = 0, coff = 0
    cdef const double* a_prev = x
    cdef int act
    for layer in range(n_layers):
        act = o_act if layer == n_layers - 1 else h_act
        _dense_layer(a_prev, params + poff, params + poff + sz[layer] * sz[layer + 1],
                     cache + coff, n, sz[layer], sz[layer + 1], act)
        a_prev = cache + coff
        poff += sz[layer] * sz[layer + 1] + sz[layer + 1]
        coff += n * sz[layer + 1]


cdef class _Dims:
    cdef Py_ssize_t sz[16]
    cdef Py_ssize_t n_layers, cache_width


cdef _Dims _dims(sizes):
    cdef _Dims d = _Dims()
    cdef Py_ssize_t i
    if len(sizes) > 16:
        raise ValueError("at most 15 layers supported by the compiled kernel")
    d.n_layers = len(sizes) - 1
    d.cache_width = 0
    for i in range(len(sizes)):
        d.sz[i] = sizes[i]
        if i > 0:
            d.cache_width += sizes[i]
    return d


def forward(sizes, int h_act, int o_act, double[::1] params, double[:, ::1] X):
    cdef _Dims d = _dims(sizes)
    cdef Py_ssize_t n = X.shape[0]
    cache = np.empty(n * d.cache_width, dtype=np.float64)
    cdef double[::1] c = cache
    with nogil:
        _forward_into(d.sz, d.n_layers, h_act, o_act, &params[0], &X[0, 0], &c[0], n)
    out_off = n * (d.cache_width - d.sz[d.n_layers])
    return cache[out_off:].reshape(n, d.sz[d.n_layers]).copy()


def forward_cached(sizes, int h_act, int o_act, double[::1] params, double[:, ::1] X):
    cdef _Dims d = _dims(sizes)
    cdef Py_ssize_t n = X.shape[0]
    cache = np.empty(n * d.cache_width, dtype=np.float64)
    cdef double[::1] c = cache
    with nogil:
        _forward_into(d.sz, d.n_layers, h_act, o_act, &params[0], &X[0, 0], &c[0], n)
    out_off = n * (d.cache_width - d.sz[d.n_layers])
    return cache[out_off:].reshape(n, d.sz[d.n_layers]).copy(), cache


def backward(sizes, int h_act, int o_act, double[::1] params, double[:, ::1] X,
             double[::1] cache, double[:, ::1] dY):
    cdef _Dims d = _dims(sizes)
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t n_layers = d.n_layers
    cdef Py_ssize_t maxw = 0, layer, i, j, k, din, dout
    for layer in range(n_layers + 1):
        if d.sz[layer] > maxw:
            maxw = d.sz[layer]

    dparams = np.zeros(params.shape[0], dtype=np.float64)
    dX = np.empty((n, sizes[0]), dtype=np.float64)
    work_a = np.empty(n * maxw, dtype=np.float64)
    work_b = np.empty(n * maxw, dtype=np.float64)
    cdef double[::1] dp = dparams
    cdef double[:, ::1] dx = dX
    cdef double[::1] wa = work_a
    cdef double[::1] wb = work_b
    cdef double *delta
    cdef double *nxt
    cdef double *tmp
    cdef double *da
    cdef const double *a_out
    cdef const double *a_prev
    cdef const double *w
    cdef double g
    cdef int act

    # parameter and cache offsets per layer
    cdef Py_ssize_t poffs[16]
    cdef Py_ssize_t coffs[16]
    cdef Py_ssize_t off = 0, coff = 0
    for layer in range(n_layers):
        poffs[layer] = off
        coffs[layer] = coff
        off += d.sz[layer] * d.sz[layer + 1] + d.sz[layer + 1]
        coff += n * d.sz[layer + 1]

    with nogil:
        delta = &wa[0]
        nxt = &wb[0]
        # output-layer delta
        dout = d.sz[n_layers]
        a_out = &cache[0] + coffs[n_layers - 1]
        act = o_act
        for i in range(n):
            for j in range(dout):
                if act == 1:
                    g = 1.0 if a_out[i * dout + j] > 0.0 else 0.0
                elif act == 2:
                    g = 1.0 - a_out[i * dout + j] * a_out[i * dout + j]
                else:
                    g = 1.0
                delta[i * dout + j] = dY[i, j] * g
        for layer in range(n_layers - 1, -1, -1):
            din = d.sz[layer]
            dout = d.sz[layer + 1]
            w = &params[0] + poffs[layer]
            if layer == 0:
                a_prev = &X[0, 0]
            else:
                a_prev = &cache[0] + coffs[layer - 1]
            # dW(dout, din) = delta(n, dout)^T @ a_prev(n, din); bias = column sums
            _gemm(b'N', b'T', <int> din, <int> dout, <int> n, a_prev, <int> din,
                  delta, <int> dout, &dp[0] + poffs[layer], <int> din)
            for i in range(n):
                for j in range(dout):
                    dp[poffs[layer] + din * dout + j] += delta[i * dout + j]
            # da(n, din) = delta(n, dout) @ w(dout, din)
            da = &dx[0, 0] if layer == 0 else nxt
            _gemm(b'N', b'N', <int> din, <int> n, <int> dout, w, <int> din,
                  delta, <int> dout, da, <int> din)
            if layer > 0:
                act = h_act
                if act != 0:
                    for i in range(n):
                        for k in range(din):
                            if act == 1:
                                g = 1.0 if a_prev[i * din + k] > 0.0 else 0.0
                            else:
                                g = 1.0 - a_prev[i * din + k] * a_prev[i * din + k]
                            nxt[i * din + k] *= g
                tmp = delta
                delta = nxt
                nxt = tmp
    return dparams, dX
