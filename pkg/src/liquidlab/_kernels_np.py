"""Vectorized numpy implementation of the fused sequence kernels.

`seq_forward` integrates a whole input sequence (all unfold substeps) and
returns the full substep state trajectory; `seq_backward` walks it in
reverse, recomputing per-edge intermediates from the stored states, and
accumulates adjoints for every parameter field and for the inputs.  The
compiled extension in ``_ckernels.pyx`` implements the same contract; one
of the two is selected at import by :mod:`liquidlab.kernels`.

Inputs are held constant across the substeps of a frame.  Methods:
"explicit-euler" steps x += dt_sub * (B - A x); "semi-implicit-euler"
steps x <- (x + dt_sub * B) / (1 + dt_sub * A), which is unconditionally
stable for the A >= 0 produced by all four models.
"""

from __future__ import annotations

import numpy as np

from . import dynamics
from .autodiff import logistic
from .errors import DivergenceError, UnsupportedSolverError
from .wiring import EdgeIndex

METHODS = ("explicit-euler", "semi-implicit-euler")


def _check_method(method):
    if method not in METHODS:
        raise UnsupportedSolverError(f"unknown method {method!r}")


def seq_forward(kind, method, edges: EdgeIndex, p, u_seq, x0, dt, unfold,
                check_finite=True):
    """Integrate ``T`` frames; returns states of shape (B, T*unfold + 1, m).

    ``u_seq`` is (B, T, n), ``x0`` is (B, m), ``p`` a dict of parameter
    arrays.  Row ``k`` of the result is the state before substep ``k``;
    frame ``t`` ends at row ``(t + 1) * unfold``.
    """
    _check_method(method)
    semi = method == "semi-implicit-euler"
    u_seq = np.asarray(u_seq, dtype=np.float64)
    batch, n_frames, _ = u_seq.shape
    m = edges.n_neurons
    dt_sub = dt / unfold
    xs = np.empty((batch, n_frames * unfold + 1, m), dtype=np.float64)
    x = np.array(x0, dtype=np.float64, copy=True)
    xs[:, 0] = x
    k = 1
    for t in range(n_frames):
        u = u_seq[:, t]
        for _ in range(unfold):
            a_coef, b_coef = dynamics.coefficients(kind, p, edges, x, u)
            if semi:
                x = (x + dt_sub * b_coef) / (1.0 + dt_sub * a_coef)
            else:
                x = x + dt_sub * (b_coef - a_coef * x)
            xs[:, k] = x
            k += 1
        if check_finite and not np.all(np.isfinite(x)):
            raise DivergenceError(
                f"state diverged at frame {t}", timestep=t)
    return xs


def seq_backward(kind, method, edges: EdgeIndex, p, u_seq, xs, d_frames,
                 dt, unfold):
    """Adjoint of :func:`seq_forward`.

    ``d_frames`` (B, T, m) holds the loss gradient w.r.t. the state at each
    frame boundary.  Returns (grads, d_u) where ``grads`` maps every
    parameter field to its gradient (zeros for fields the model does not
    use) and ``d_u`` is (B, T, n).
    """
    _check_method(method)
    semi = method == "semi-implicit-euler"
    u_seq = np.asarray(u_seq, dtype=np.float64)
    batch, n_frames, n_in = u_seq.shape
    if n_frames and xs.shape[1] != n_frames * unfold + 1:
        raise ValueError("state trajectory length inconsistent with u_seq")
    m = edges.n_neurons
    dt_sub = dt / unfold
    dst = edges.dst
    grads = {f: np.zeros_like(np.asarray(p[f], dtype=np.float64))
             for f in ("g_leak", "e_leak", "capacitance", "syn_g", "syn_a",
                       "syn_b", "syn_e", "syn_h")}
    d_u = np.zeros_like(u_seq)
    lam = np.zeros((batch, m), dtype=np.float64)

    g_leak = np.asarray(p["g_leak"], dtype=np.float64)
    e_leak = np.asarray(p["e_leak"], dtype=np.float64)
    cap = np.asarray(p["capacitance"], dtype=np.float64)
    syn_g = np.asarray(p["syn_g"], dtype=np.float64)
    syn_a = np.asarray(p["syn_a"], dtype=np.float64)
    syn_e = np.asarray(p["syn_e"], dtype=np.float64)
    syn_h = np.asarray(p["syn_h"], dtype=np.float64)

    for t in range(n_frames - 1, -1, -1):
        lam = lam + d_frames[:, t]
        u = u_seq[:, t]
        for sub in range(unfold - 1, -1, -1):
            k = t * unfold + sub
            x_before = xs[:, k]
            x_after = xs[:, k + 1]
            a_coef, b_coef, aux = dynamics.coefficients(
                kind, p, edges, x_before, u, want_aux=True)
            if semi:
                inv = 1.0 / (1.0 + dt_sub * a_coef)
                d_a = -lam * dt_sub * x_after * inv
                d_b = lam * dt_sub * inv
                lam_direct = lam * inv
            else:
                d_a = -lam * dt_sub * x_before
                d_b = lam * dt_sub
                lam_direct = lam * (1.0 - dt_sub * a_coef)
            ys = aux["ys"]

            if kind == "electrical":
                grads["g_leak"] += (d_a + d_b * e_leak).sum(axis=0)
                grads["e_leak"] += (d_b * g_leak).sum(axis=0)
                d_a_e = d_a[:, dst]
                d_b_e = d_b[:, dst]
                grads["syn_g"] += (d_a_e + d_b_e * ys).sum(axis=0)
                d_ys = d_b_e * syn_g
            elif kind == "ctrnn":
                s_a, q, h = aux["s_a"], aux["q"], aux["h"]
                sig_a = a_coef  # sigma(s_a), shape (m,)
                tq = np.tanh(q)
                d_sa = (d_a.sum(axis=0)) * sig_a * (1.0 - sig_a)
                d_q = d_b * e_leak * (1.0 - tq * tq)
                grads["e_leak"] += ((d_b * tq).sum(axis=0)
                                    - (d_q * (q - g_leak)).sum(axis=0) / e_leak)
                grads["g_leak"] += d_sa + d_q.sum(axis=0)
                d_q_e = d_q[:, dst]
                grads["syn_g"] += d_sa[dst] + (d_q_e * ys).sum(axis=0) / e_leak[dst]
                d_ys = d_q_e * h
            elif kind == "ltc":
                gate, w, s_a, s_b = aux["gate"], aux["w"], aux["s_a"], aux["s_b"]
                d_sa = d_a / cap
                d_sb = d_b / cap
                grads["capacitance"] += (-(d_a * s_a + d_b * s_b)
                                         / (cap * cap)).sum(axis=0)
                grads["g_leak"] += (d_sa + d_sb * e_leak).sum(axis=0)
                grads["e_leak"] += (d_sb * g_leak).sum(axis=0)
                d_sa_e = d_sa[:, dst]
                d_sb_e = d_sb[:, dst]
                d_w = d_sa_e + d_sb_e * syn_e
                grads["syn_e"] += (d_sb_e * w).sum(axis=0)
                grads["syn_g"] += (d_w * gate).sum(axis=0)
                d_z = d_w * syn_g * gate * (1.0 - gate)
                grads["syn_a"] += (d_z * ys).sum(axis=0)
                grads["syn_b"] += d_z.sum(axis=0)
                d_ys = d_z * syn_a
            else:  # sltc
                gate, f, q = aux["gate"], aux["f"], aux["q"]
                sf = logistic(f)
                tq = np.tanh(q)
                d_f = d_a * sf * (1.0 - sf) / cap
                d_q = d_b * (1.0 - tq * tq) * e_leak / cap
                grads["e_leak"] += (d_b * tq / cap).sum(axis=0)
                grads["capacitance"] += (-(d_a * sf + d_b * tq * e_leak)
                                         / (cap * cap)).sum(axis=0)
                grads["g_leak"] += (d_f + d_q).sum(axis=0)
                d_f_e = d_f[:, dst]
                d_q_e = d_q[:, dst]
                grads["syn_g"] += (d_f_e * gate).sum(axis=0)
                grads["syn_h"] += (d_q_e * gate).sum(axis=0)
                d_z = (d_f_e * syn_g + d_q_e * syn_h) * gate * (1.0 - gate)
                grads["syn_a"] += (d_z * ys).sum(axis=0)
                grads["syn_b"] += d_z.sum(axis=0)
                d_ys = d_z * syn_a

            # Scatter the per-edge adjoint back onto y = [x, u].
            lam_y = _scatter_src(d_ys, edges)
            lam = lam_direct + lam_y[:, :m]
            d_u[:, t] += lam_y[:, m:]
    return grads, d_u


def _scatter_src(d_ys, edges: EdgeIndex):
    """Sum per-edge adjoints (B, E) into per-signal adjoints (B, m + n)."""
    regrouped = d_ys[:, edges.src_order]
    c = np.cumsum(regrouped, axis=-1)
    c = np.concatenate([np.zeros((d_ys.shape[0], 1)), c], axis=-1)
    return c[:, edges.src_ptr[1:]] - c[:, edges.src_ptr[:-1]]
