# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled implementations of the hot kernels.

Same function-by-function semantics and operation order as ``_reference``;
matrix products go through BLAS (scipy.linalg.cython_blas) and everything
else is plain C loops, which removes the per-call dispatch overhead that
dominates these small-matrix workloads.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, isfinite, log, sqrt
from scipy.linalg.cython_blas cimport dgemm

from ..errors import NonFiniteError

BACKEND = "compiled"


cdef void _mm(double* c, double* a, double* b,
              int m, int k, int n, bint ta, bint tb,
              int lda, int ldb) noexcept nogil:
    """C-order C(m,n) = op(A) @ op(B) via column-major BLAS on swapped operands.

    lda/ldb are the stored trailing dimensions of a and b.
    """
    cdef char fa = b'T' if tb else b'N'
    cdef char fb = b'T' if ta else b'N'
    cdef double one = 1.0, zero = 0.0
    dgemm(&fa, &fb, &n, &m, &k, &one, b, &ldb, a, &lda, &zero, c, &n)


cdef double _softmax_rows(double[:, ::1] scores, long long[::1] labels,
                          double[:, ::1] dscores) noexcept nogil:
    """Row softmax cross-entropy; fills dscores with (p - onehot)/R.

    Returns the mean loss over rows. dscores must not alias scores.
    """
    cdef Py_ssize_t r = scores.shape[0], n = scores.shape[1]
    cdef Py_ssize_t i, j
    cdef double m, z, loss = 0.0
    cdef double inv_r = 1.0 / r
    for i in range(r):
        m = scores[i, 0]
        for j in range(1, n):
            if scores[i, j] > m:
                m = scores[i, j]
        z = 0.0
        for j in range(n):
            dscores[i, j] = exp(scores[i, j] - m)
            z += dscores[i, j]
        loss += log(z) + m - scores[i, labels[i]]
        for j in range(n):
            dscores[i, j] = dscores[i, j] / z
        dscores[i, labels[i]] -= 1.0
        for j in range(n):
            dscores[i, j] *= inv_r
    return loss * inv_r


cdef void _linear_grad(double[:, ::1] x, long long[::1] y, double[:, ::1] w,
                       double[:, ::1] scores, double[:, ::1] dsc,
                       double[:, ::1] g) noexcept nogil:
    """Linear-kind cross-entropy gradient: g = dscores(x @ w.T).T @ x."""
    cdef Py_ssize_t r = x.shape[0], d = x.shape[1], n = w.shape[0]
    _mm(&scores[0, 0], &x[0, 0], &w[0, 0],
        <int>r, <int>d, <int>n, False, True, <int>d, <int>d)
    _softmax_rows(scores, y, dsc)
    _mm(&g[0, 0], &dsc[0, 0], &x[0, 0],
        <int>n, <int>r, <int>d, True, False, <int>n, <int>d)


def _as2d(arr):
    return np.ascontiguousarray(arr, dtype=np.float64)


def dense_forward(weight, bias, x):
    """Affine map rows of x: (R, in) -> (R, out) via x @ weight.T + bias."""
    cdef double[:, ::1] w = _as2d(weight)
    cdef double[::1] b = np.ascontiguousarray(bias, dtype=np.float64)
    cdef double[:, ::1] xv = _as2d(x)
    cdef Py_ssize_t r = xv.shape[0], din = xv.shape[1], dout = w.shape[0]
    out_arr = np.empty((r, dout))
    cdef double[:, ::1] out = out_arr
    if r and dout:
        _mm(&out[0, 0], &xv[0, 0], &w[0, 0],
            <int>r, <int>din, <int>dout, False, True, <int>din, <int>din)
    cdef Py_ssize_t i, j
    for i in range(r):
        for j in range(dout):
            out[i, j] += b[j]
    return out_arr


def dense_backward(weight, x, grad_out):
    """Reverse-mode gradients of dense_forward: (grad_weight, grad_bias, grad_x)."""
    cdef double[:, ::1] w = _as2d(weight)
    cdef double[:, ::1] xv = _as2d(x)
    cdef double[:, ::1] gy = _as2d(grad_out)
    cdef Py_ssize_t r = xv.shape[0], din = xv.shape[1], dout = w.shape[0]
    gw_arr = np.zeros((dout, din))
    gb_arr = np.zeros(dout)
    gx_arr = np.empty((r, din))
    cdef double[:, ::1] gw = gw_arr
    cdef double[::1] gb = gb_arr
    cdef double[:, ::1] gx = gx_arr
    cdef Py_ssize_t i, j
    if r:
        _mm(&gw[0, 0], &gy[0, 0], &xv[0, 0],
            <int>dout, <int>r, <int>din, True, False, <int>dout, <int>din)
        _mm(&gx[0, 0], &gy[0, 0], &w[0, 0],
            <int>r, <int>dout, <int>din, False, False, <int>dout, <int>din)
        for i in range(r):
            for j in range(dout):
                gb[j] += gy[i, j]
    return gw_arr, gb_arr, gx_arr


def rowscale(x, v):
    """Multiply every row of x element-wise by the vector v."""
    cdef double[:, ::1] xv = _as2d(x)
    cdef double[::1] vv = np.ascontiguousarray(v, dtype=np.float64)
    cdef Py_ssize_t r = xv.shape[0], d = xv.shape[1]
    out_arr = np.empty((r, d))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    for i in range(r):
        for j in range(d):
            out[i, j] = xv[i, j] * vv[j]
    return out_arr


def rowscale_backward(x, v, grad_out):
    """Gradients of rowscale w.r.t. x and v; v's gradient sums over rows."""
    cdef double[:, ::1] xv = _as2d(x)
    cdef double[::1] vv = np.ascontiguousarray(v, dtype=np.float64)
    cdef double[:, ::1] gy = _as2d(grad_out)
    cdef Py_ssize_t r = xv.shape[0], d = xv.shape[1]
    gx_arr = np.empty((r, d))
    gv_arr = np.zeros(d)
    cdef double[:, ::1] gx = gx_arr
    cdef double[::1] gv = gv_arr
    cdef Py_ssize_t i, j
    for i in range(r):
        for j in range(d):
            gx[i, j] = gy[i, j] * vv[j]
            gv[j] += gy[i, j] * xv[i, j]
    return gx_arr, gv_arr


def softmax_xent(scores, labels):
    """Mean cross-entropy over rows of scores, with its score gradient."""
    cdef double[:, ::1] s = _as2d(scores)
    cdef long long[::1] y = np.ascontiguousarray(labels, dtype=np.int64)
    dsc_arr = np.empty((s.shape[0], s.shape[1]))
    cdef double[:, ::1] dsc = dsc_arr
    cdef double loss = _softmax_rows(s, y, dsc)
    return loss, dsc_arr


def normalize_rows(x):
    """Scale each row to unit L2 norm; zero-norm rows stay zero."""
    cdef double[:, ::1] xv = _as2d(x)
    cdef Py_ssize_t r = xv.shape[0], d = xv.shape[1]
    out_arr = np.empty((r, d))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double s, inv
    for i in range(r):
        s = 0.0
        for j in range(d):
            s += xv[i, j] * xv[i, j]
        if s > 0.0:
            inv = 1.0 / sqrt(s)
            for j in range(d):
                out[i, j] = xv[i, j] * inv
        else:
            for j in range(d):
                out[i, j] = 0.0
    return out_arr


def gda_fit(x, labels, w0, kind, temperature, steps, lr, momentum):
    """Full-batch (momentum) gradient-descent fit of classifier weights.

    Semantics match the reference backend: v <- momentum * v + grad,
    w <- w - lr * v from v = 0, cosine features normalized once up front,
    an all-zero-rows cosine start stepping along the linear gradient, and
    non-finite weights aborting with NonFiniteError.
    """
    cdef bint cosine = kind == "cosine"
    cdef double[:, ::1] xv = _as2d(x)
    cdef long long[::1] y = np.ascontiguousarray(labels, dtype=np.int64)
    w_arr = np.array(w0, dtype=np.float64, copy=True, order="C")
    cdef double[:, ::1] w = w_arr
    cdef Py_ssize_t r = xv.shape[0], d = xv.shape[1], n = w.shape[0]
    cdef double temp = temperature, step_lr = lr, mom = momentum
    cdef int n_steps = steps

    xhat_arr = normalize_rows(x) if cosine else None
    cdef double[:, ::1] xhat = xhat_arr if cosine else xv

    v_arr = np.zeros((n, d))
    norms_arr = np.empty(n)
    what_arr = np.empty((n, d))
    cos_arr = np.empty((r, n))
    sc_arr = np.empty((r, n))
    dsc_arr = np.empty((r, n))
    a_arr = np.empty((n, d))
    c_arr = np.empty(n)
    g_arr = np.empty((n, d))
    cdef double[:, ::1] vbuf = v_arr
    cdef double[::1] norms = norms_arr
    cdef double[:, ::1] what = what_arr
    cdef double[:, ::1] cosb = cos_arr
    cdef double[:, ::1] sc = sc_arr
    cdef double[:, ::1] dsc = dsc_arr
    cdef double[:, ::1] a = a_arr
    cdef double[::1] cvec = c_arr
    cdef double[:, ::1] g = g_arr

    cdef Py_ssize_t i, j
    cdef int it
    cdef double s, inv
    cdef bint all_zero, any_zero, ok

    for it in range(n_steps):
        if cosine:
            all_zero = True
            any_zero = False
            for i in range(n):
                s = 0.0
                for j in range(d):
                    s += w[i, j] * w[i, j]
                norms[i] = sqrt(s)
                if norms[i] > 0.0:
                    all_zero = False
                else:
                    any_zero = True
            if all_zero:
                # Zero-initialized cosine weights: cosine scores are
                # undefined at the origin, step out along the linear
                # gradient (same convention as the reference backend).
                _linear_grad(xv, y, w, sc, dsc, g)
            elif any_zero:
                raise ValueError("zero-norm cosine weight row")
            else:
                for i in range(n):
                    inv = 1.0 / norms[i]
                    for j in range(d):
                        what[i, j] = w[i, j] * inv
                _mm(&cosb[0, 0], &xhat[0, 0], &what[0, 0],
                    <int>r, <int>d, <int>n, False, True, <int>d, <int>d)
                for i in range(r):
                    for j in range(n):
                        sc[i, j] = temp * cosb[i, j]
                _softmax_rows(sc, y, dsc)
                _mm(&a[0, 0], &dsc[0, 0], &xhat[0, 0],
                    <int>n, <int>r, <int>d, True, False, <int>n, <int>d)
                for j in range(n):
                    cvec[j] = 0.0
                for i in range(r):
                    for j in range(n):
                        cvec[j] += dsc[i, j] * cosb[i, j]
                for i in range(n):
                    inv = temp / norms[i]
                    for j in range(d):
                        g[i, j] = inv * (a[i, j] - cvec[i] * what[i, j])
        else:
            _linear_grad(xv, y, w, sc, dsc, g)
        ok = True
        for i in range(n):
            for j in range(d):
                vbuf[i, j] = mom * vbuf[i, j] + g[i, j]
                w[i, j] = w[i, j] - step_lr * vbuf[i, j]
                if not isfinite(w[i, j]):
                    ok = False
        if not ok:
            raise NonFiniteError(
                "gradient descent diverged to non-finite weights "
                "(learning rate too high?)"
            )
    return w_arr
