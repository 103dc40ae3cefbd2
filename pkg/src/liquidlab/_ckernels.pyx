# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: initializedcheck=False
"""Compiled fused sequence kernels.

Same contract as liquidlab._kernels_np: seq_forward integrates whole input
sequences for all four synaptic models, seq_backward walks the stored state
trajectory in reverse and accumulates parameter and input adjoints.  The hot
loops run per batch item over neurons and their in-edges with no Python
overhead, which is what makes training and closed-loop evaluation fast.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, tanh

from .errors import DivergenceError, UnsupportedSolverError

cnp.import_array()

cdef enum:
    KIND_ELECTRICAL = 0
    KIND_CTRNN = 1
    KIND_LTC = 2
    KIND_SLTC = 3

_KIND_IDS = {"electrical": KIND_ELECTRICAL, "ctrnn": KIND_CTRNN,
             "ltc": KIND_LTC, "sltc": KIND_SLTC}
_METHOD_IDS = {"explicit-euler": 0, "semi-implicit-euler": 1}


cdef inline double _sigmoid(double z) noexcept nogil:
    cdef double e
    if z >= 0.0:
        return 1.0 / (1.0 + exp(-z))
    e = exp(z)
    return e / (1.0 + e)


cdef inline int _isfinite(double v) noexcept nogil:
    return v == v and v < 1e300 and v > -1e300


def _ids(kind, method):
    if kind not in _KIND_IDS:
        raise ValueError(f"unknown model kind {kind!r}")
    if method not in _METHOD_IDS:
        raise UnsupportedSolverError(f"unknown method {method!r}")
    return _KIND_IDS[kind], _METHOD_IDS[method]


cdef inline void _coeffs(int kind, int m, double[::1] y,
                         long[::1] src_y, long[::1] dst_ptr,
                         double[::1] g_leak, double[::1] e_leak,
                         double[::1] cap, double[::1] syn_g,
                         double[::1] syn_a, double[::1] syn_b,
                         double[::1] syn_e, double[::1] syn_h,
                         double[::1] static_a,
                         double* a_out, double* b_out) noexcept nogil:
    """Fill A_i and B_i of dx = B - A x for every neuron from signal y."""
    cdef Py_ssize_t i, e
    cdef double acc_a, acc_b, s, w, z
    for i in range(m):
        if kind == KIND_ELECTRICAL:
            acc_b = g_leak[i] * e_leak[i]
            for e in range(dst_ptr[i], dst_ptr[i + 1]):
                acc_b += syn_g[e] * y[src_y[e]]
            a_out[i] = static_a[i]
            b_out[i] = acc_b
        elif kind == KIND_CTRNN:
            acc_b = g_leak[i]
            for e in range(dst_ptr[i], dst_ptr[i + 1]):
                acc_b += syn_g[e] / e_leak[i] * y[src_y[e]]
            a_out[i] = static_a[i]
            b_out[i] = tanh(acc_b) * e_leak[i]
        elif kind == KIND_LTC:
            acc_a = g_leak[i]
            acc_b = g_leak[i] * e_leak[i]
            for e in range(dst_ptr[i], dst_ptr[i + 1]):
                z = syn_a[e] * y[src_y[e]] + syn_b[e]
                w = syn_g[e] * _sigmoid(z)
                acc_a += w
                acc_b += w * syn_e[e]
            a_out[i] = acc_a / cap[i]
            b_out[i] = acc_b / cap[i]
        else:  # KIND_SLTC
            acc_a = g_leak[i]
            acc_b = g_leak[i]
            for e in range(dst_ptr[i], dst_ptr[i + 1]):
                z = syn_a[e] * y[src_y[e]] + syn_b[e]
                s = _sigmoid(z)
                acc_a += syn_g[e] * s
                acc_b += syn_h[e] * s
            a_out[i] = _sigmoid(acc_a) / cap[i]
            b_out[i] = tanh(acc_b) * e_leak[i] / cap[i]


def seq_forward(kind, method, edges, p, u_seq, x0, double dt, int unfold,
                check_finite=True):
    """See liquidlab._kernels_np.seq_forward; identical contract."""
    cdef int kind_id, method_id
    kind_id, method_id = _ids(kind, method)

    u = np.ascontiguousarray(u_seq, dtype=np.float64)
    x_init = np.ascontiguousarray(x0, dtype=np.float64)
    cdef long[::1] src_y = np.ascontiguousarray(edges.src_y, dtype=np.int64)
    cdef long[::1] dst_ptr = np.ascontiguousarray(edges.dst_ptr, dtype=np.int64)
    cdef double[::1] g_leak = np.ascontiguousarray(p["g_leak"], dtype=np.float64)
    cdef double[::1] e_leak = np.ascontiguousarray(p["e_leak"], dtype=np.float64)
    cdef double[::1] cap = np.ascontiguousarray(p["capacitance"], dtype=np.float64)
    cdef double[::1] syn_g = np.ascontiguousarray(p["syn_g"], dtype=np.float64)
    cdef double[::1] syn_a = np.ascontiguousarray(p["syn_a"], dtype=np.float64)
    cdef double[::1] syn_b = np.ascontiguousarray(p["syn_b"], dtype=np.float64)
    cdef double[::1] syn_e = np.ascontiguousarray(p["syn_e"], dtype=np.float64)
    cdef double[::1] syn_h = np.ascontiguousarray(p["syn_h"], dtype=np.float64)

    cdef Py_ssize_t batch = u.shape[0]
    cdef Py_ssize_t n_frames = u.shape[1]
    cdef Py_ssize_t n_in = u.shape[2]
    cdef Py_ssize_t m = g_leak.shape[0]
    cdef double dt_sub = dt / unfold
    cdef int do_check = 1 if check_finite else 0

    static_np = _static_a(kind_id, m, g_leak, syn_g, dst_ptr)
    cdef double[::1] static_a = static_np

    xs_np = np.empty((batch, n_frames * unfold + 1, m), dtype=np.float64)
    cdef double[:, :, ::1] xs = xs_np
    cdef double[:, :, ::1] uv = u
    cdef double[:, ::1] x0v = x_init

    buf_np = np.empty(m + n_in, dtype=np.float64)
    a_np = np.empty(m, dtype=np.float64)
    b_np = np.empty(m, dtype=np.float64)
    cdef double[::1] y = buf_np
    cdef double[::1] a_buf = a_np
    cdef double[::1] b_buf = b_np

    cdef Py_ssize_t b, t, sub, i, k
    cdef double xv
    cdef int ok
    cdef Py_ssize_t bad_frame = -1

    for b in range(batch):
        with nogil:
            for i in range(m):
                y[i] = x0v[b, i]
                xs[b, 0, i] = y[i]
            k = 1
            for t in range(n_frames):
                for i in range(n_in):
                    y[m + i] = uv[b, t, i]
                for sub in range(unfold):
                    _coeffs(kind_id, m, y, src_y, dst_ptr, g_leak, e_leak,
                            cap, syn_g, syn_a, syn_b, syn_e, syn_h,
                            static_a, &a_buf[0], &b_buf[0])
                    for i in range(m):
                        xv = y[i]
                        if method_id == 1:
                            xv = (xv + dt_sub * b_buf[i]) / (1.0 + dt_sub * a_buf[i])
                        else:
                            xv = xv + dt_sub * (b_buf[i] - a_buf[i] * xv)
                        y[i] = xv
                        xs[b, k, i] = xv
                    k += 1
                if do_check:
                    ok = 1
                    for i in range(m):
                        if not _isfinite(y[i]):
                            ok = 0
                            break
                    if not ok:
                        bad_frame = t
                        break
        if bad_frame >= 0:
            raise DivergenceError(f"state diverged at frame {bad_frame}",
                                  timestep=int(bad_frame))
    return xs_np


def _static_a(int kind_id, Py_ssize_t m, double[::1] g_leak,
              double[::1] syn_g, long[::1] dst_ptr):
    """A is state-independent for the electrical and ctrnn models."""
    out = np.zeros(m, dtype=np.float64)
    cdef double[::1] ov = out
    cdef Py_ssize_t i, e
    cdef double acc
    if kind_id == KIND_ELECTRICAL or kind_id == KIND_CTRNN:
        for i in range(m):
            acc = g_leak[i]
            for e in range(dst_ptr[i], dst_ptr[i + 1]):
                acc += syn_g[e]
            ov[i] = _sigmoid(acc) if kind_id == KIND_CTRNN else acc
    return out


def seq_backward(kind, method, edges, p, u_seq, xs_in, d_frames_in,
                 double dt, int unfold):
    """See liquidlab._kernels_np.seq_backward; identical contract."""
    cdef int kind_id, method_id
    kind_id, method_id = _ids(kind, method)

    u = np.ascontiguousarray(u_seq, dtype=np.float64)
    xs_arr = np.ascontiguousarray(xs_in, dtype=np.float64)
    dfr = np.ascontiguousarray(d_frames_in, dtype=np.float64)

    cdef long[::1] src_y = np.ascontiguousarray(edges.src_y, dtype=np.int64)
    cdef long[::1] dst_ptr = np.ascontiguousarray(edges.dst_ptr, dtype=np.int64)
    cdef double[::1] g_leak = np.ascontiguousarray(p["g_leak"], dtype=np.float64)
    cdef double[::1] e_leak = np.ascontiguousarray(p["e_leak"], dtype=np.float64)
    cdef double[::1] cap = np.ascontiguousarray(p["capacitance"], dtype=np.float64)
    cdef double[::1] syn_g = np.ascontiguousarray(p["syn_g"], dtype=np.float64)
    cdef double[::1] syn_a = np.ascontiguousarray(p["syn_a"], dtype=np.float64)
    cdef double[::1] syn_b = np.ascontiguousarray(p["syn_b"], dtype=np.float64)
    cdef double[::1] syn_e = np.ascontiguousarray(p["syn_e"], dtype=np.float64)
    cdef double[::1] syn_h = np.ascontiguousarray(p["syn_h"], dtype=np.float64)

    cdef Py_ssize_t batch = u.shape[0]
    cdef Py_ssize_t n_frames = u.shape[1]
    cdef Py_ssize_t n_in = u.shape[2]
    cdef Py_ssize_t m = g_leak.shape[0]
    cdef Py_ssize_t n_edges = src_y.shape[0]
    cdef double dt_sub = dt / unfold

    if n_frames and xs_arr.shape[1] != n_frames * unfold + 1:
        raise ValueError("state trajectory length inconsistent with u_seq")

    static_np = _static_a(kind_id, m, g_leak, syn_g, dst_ptr)
    cdef double[::1] static_a = static_np

    g = {f: np.zeros_like(np.asarray(p[f], dtype=np.float64))
         for f in ("g_leak", "e_leak", "capacitance", "syn_g", "syn_a",
                   "syn_b", "syn_e", "syn_h")}
    d_u_np = np.zeros_like(u)

    cdef double[::1] d_g_leak = g["g_leak"]
    cdef double[::1] d_e_leak = g["e_leak"]
    cdef double[::1] d_cap = g["capacitance"]
    cdef double[::1] d_syn_g = g["syn_g"]
    cdef double[::1] d_syn_a = g["syn_a"]
    cdef double[::1] d_syn_b = g["syn_b"]
    cdef double[::1] d_syn_e = g["syn_e"]
    cdef double[::1] d_syn_h = g["syn_h"]
    cdef double[:, :, ::1] d_u = d_u_np
    cdef double[:, :, ::1] uv = u
    cdef double[:, :, ::1] xs = xs_arr
    cdef double[:, :, ::1] dframes = dfr

    y_np = np.empty(m + n_in, dtype=np.float64)
    lam_np = np.empty(m, dtype=np.float64)
    nxt_np = np.empty(m + n_in, dtype=np.float64)
    cdef double[::1] y = y_np
    cdef double[::1] lam = lam_np
    cdef double[::1] lam_next = nxt_np  # adjoint on y = [x, u] for this substep

    cdef Py_ssize_t b, t, sub, i, e, k, s
    cdef double xb, xa, a_i, b_i, inv, d_a, d_b
    cdef double acc_a, acc_b, sig, tq, z, w, gate, d_sa, d_sb, d_q, d_f, d_w, d_z
    cdef double sf, c2

    for b in range(batch):
        with nogil:
            for i in range(m):
                lam[i] = 0.0
            for t in range(n_frames - 1, -1, -1):
                for i in range(m):
                    lam[i] = lam[i] + dframes[b, t, i]
                for i in range(n_in):
                    y[m + i] = uv[b, t, i]
                for sub in range(unfold - 1, -1, -1):
                    k = t * unfold + sub
                    for i in range(m):
                        y[i] = xs[b, k, i]
                    for i in range(m + n_in):
                        lam_next[i] = 0.0

                    for i in range(m):
                        xb = xs[b, k, i]
                        xa = xs[b, k + 1, i]

                        # Recompute A_i, B_i and the per-neuron sums.
                        if kind_id == KIND_ELECTRICAL:
                            a_i = static_a[i]
                            acc_b = g_leak[i] * e_leak[i]
                            for e in range(dst_ptr[i], dst_ptr[i + 1]):
                                acc_b += syn_g[e] * y[src_y[e]]
                            b_i = acc_b
                        elif kind_id == KIND_CTRNN:
                            a_i = static_a[i]
                            acc_b = g_leak[i]
                            for e in range(dst_ptr[i], dst_ptr[i + 1]):
                                acc_b += syn_g[e] / e_leak[i] * y[src_y[e]]
                            tq = tanh(acc_b)
                            b_i = tq * e_leak[i]
                        elif kind_id == KIND_LTC:
                            acc_a = g_leak[i]
                            acc_b = g_leak[i] * e_leak[i]
                            for e in range(dst_ptr[i], dst_ptr[i + 1]):
                                z = syn_a[e] * y[src_y[e]] + syn_b[e]
                                w = syn_g[e] * _sigmoid(z)
                                acc_a += w
                                acc_b += w * syn_e[e]
                            a_i = acc_a / cap[i]
                            b_i = acc_b / cap[i]
                        else:
                            acc_a = g_leak[i]
                            acc_b = g_leak[i]
                            for e in range(dst_ptr[i], dst_ptr[i + 1]):
                                z = syn_a[e] * y[src_y[e]] + syn_b[e]
                                sig = _sigmoid(z)
                                acc_a += syn_g[e] * sig
                                acc_b += syn_h[e] * sig
                            sf = _sigmoid(acc_a)
                            tq = tanh(acc_b)
                            a_i = sf / cap[i]
                            b_i = tq * e_leak[i] / cap[i]

                        # Chain through the update rule.
                        if method_id == 1:
                            inv = 1.0 / (1.0 + dt_sub * a_i)
                            d_a = -lam[i] * dt_sub * xa * inv
                            d_b = lam[i] * dt_sub * inv
                            lam_next[i] += lam[i] * inv
                        else:
                            d_a = -lam[i] * dt_sub * xb
                            d_b = lam[i] * dt_sub
                            lam_next[i] += lam[i] * (1.0 - dt_sub * a_i)

                        # Chain into parameters and presynaptic signals.
                        if kind_id == KIND_ELECTRICAL:
                            d_g_leak[i] += d_a + d_b * e_leak[i]
                            d_e_leak[i] += d_b * g_leak[i]
                            for e in range(dst_ptr[i], dst_ptr[i + 1]):
                                s = src_y[e]
                                d_syn_g[e] += d_a + d_b * y[s]
                                lam_next[s] += d_b * syn_g[e]
                        elif kind_id == KIND_CTRNN:
                            # a_i = sigmoid(g_l + sum g); acc_b = pre-tanh sum
                            d_sa = d_a * a_i * (1.0 - a_i)
                            d_q = d_b * e_leak[i] * (1.0 - tq * tq)
                            d_e_leak[i] += (d_b * tq
                                            - d_q * (acc_b - g_leak[i]) / e_leak[i])
                            d_g_leak[i] += d_sa + d_q
                            for e in range(dst_ptr[i], dst_ptr[i + 1]):
                                s = src_y[e]
                                d_syn_g[e] += d_sa + d_q * y[s] / e_leak[i]
                                lam_next[s] += d_q * syn_g[e] / e_leak[i]
                        elif kind_id == KIND_LTC:
                            c2 = cap[i] * cap[i]
                            d_sa = d_a / cap[i]
                            d_sb = d_b / cap[i]
                            d_cap[i] += -(d_a * (a_i * cap[i])
                                          + d_b * (b_i * cap[i])) / c2
                            d_g_leak[i] += d_sa + d_sb * e_leak[i]
                            d_e_leak[i] += d_sb * g_leak[i]
                            for e in range(dst_ptr[i], dst_ptr[i + 1]):
                                s = src_y[e]
                                z = syn_a[e] * y[s] + syn_b[e]
                                gate = _sigmoid(z)
                                w = syn_g[e] * gate
                                d_w = d_sa + d_sb * syn_e[e]
                                d_syn_e[e] += d_sb * w
                                d_syn_g[e] += d_w * gate
                                d_z = d_w * syn_g[e] * gate * (1.0 - gate)
                                d_syn_a[e] += d_z * y[s]
                                d_syn_b[e] += d_z
                                lam_next[s] += d_z * syn_a[e]
                        else:
                            c2 = cap[i] * cap[i]
                            d_f = d_a * sf * (1.0 - sf) / cap[i]
                            d_q = d_b * (1.0 - tq * tq) * e_leak[i] / cap[i]
                            d_e_leak[i] += d_b * tq / cap[i]
                            d_cap[i] += -(d_a * sf + d_b * tq * e_leak[i]) / c2
                            d_g_leak[i] += d_f + d_q
                            for e in range(dst_ptr[i], dst_ptr[i + 1]):
                                s = src_y[e]
                                z = syn_a[e] * y[s] + syn_b[e]
                                gate = _sigmoid(z)
                                d_syn_g[e] += d_f * gate
                                d_syn_h[e] += d_q * gate
                                d_z = (d_f * syn_g[e] + d_q * syn_h[e]) \
                                    * gate * (1.0 - gate)
                                d_syn_a[e] += d_z * y[s]
                                d_syn_b[e] += d_z
                                lam_next[s] += d_z * syn_a[e]

                    for i in range(m):
                        lam[i] = lam_next[i]
                    for i in range(n_in):
                        d_u[b, t, i] += lam_next[m + i]
    return g, d_u_np
