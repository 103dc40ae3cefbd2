"""Membrane dynamics of the four synaptic models.

Every model's ODE can be collected into the linear-in-state form

    dx_i/dt = B_i(y) - A_i(y) * x_i,      y = [x, u]

with A_i >= 0, which is what the solvers integrate (explicit Euler uses the
derivative directly, the semi-implicit update is x <- (x + dt*B)/(1 + dt*A)).

The model zoo, with S the logistic sigmoid and T = tanh:

* ``electrical``   dx_i = g_li (e_li - x_i) + sum_j g_ji (y_j - x_i)
* ``ctrnn``        dx_i = -S(g_li + sum g_ji) x_i
                          + T(g_li + sum (g_ji/e_li) y_j) e_li
* ``ltc``          dx_i = [g_li (e_li - x_i)
                          + sum g_ji S(a_ji y_j + b_ji)(er_ji - x_i)] / C_i
* ``sltc``         dx_i = [-S(f_i) x_i + T(q_i) e_li] / C_i   with
                   f_i = g_li + sum g_ji S(a_ji y_j + b_ji),
                   q_i = g_li + sum h_ji S(a_ji y_j + b_ji)

All functions accept a single state vector ``(m,)`` or a batch ``(B, m)``
and work on plain arrays or on autodiff Tensors (the training path).
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import value_of
from .errors import DegenerateReversalError, StructuralError
from .params import EPS_REVERSAL, ModelParams
from .wiring import MODEL_KINDS, EdgeIndex


def _check_signals(edges: EdgeIndex, x, u):
    xs = value_of(x).shape
    us = value_of(u).shape
    if xs[-1] != edges.n_neurons:
        raise StructuralError(
            f"state has {xs[-1]} entries, wiring has {edges.n_neurons} neurons")
    if us[-1] != edges.n_inputs:
        raise StructuralError(
            f"inputs have {us[-1]} entries, wiring has {edges.n_inputs} sensory units")


def _check_reversal(e_leak):
    ev = value_of(e_leak)
    if np.any(np.abs(ev) < EPS_REVERSAL):
        worst = int(np.argmin(np.abs(ev)))
        raise DegenerateReversalError(
            f"|e_leak[{worst}]| = {abs(ev[worst]):.2e} < {EPS_REVERSAL}; "
            "the coupling h = g / e_leak is undefined")


def _fields(params):
    """Accept a ModelParams or a dict of (possibly Tensor) field arrays."""
    if isinstance(params, ModelParams):
        return {f: getattr(params, f) for f in
                ("g_leak", "e_leak", "capacitance", "syn_g", "syn_a",
                 "syn_b", "syn_e", "syn_h")}
    return params


def coefficients(kind: str, params, edges: EdgeIndex, x, u, want_aux=False):
    """The (A, B) pair of the linear-in-state form for one substep.

    ``want_aux`` additionally returns the intermediate per-edge arrays the
    hand-written backward kernels need (always plain ndarrays; only
    meaningful when the inputs are plain arrays too).
    """
    if kind not in MODEL_KINDS:
        raise StructuralError(f"unknown model kind {kind!r}")
    _check_signals(edges, x, u)
    p = _fields(params)
    y = ad.concat_last(x, u)
    ys = ad.take_last(y, edges.src_y)  # (..., E) presynaptic signal per edge
    ptr = edges.dst_ptr
    aux = {} if want_aux else None

    if kind == "electrical":
        s_a = p["g_leak"] + ad.segment_sum_last(p["syn_g"], ptr)
        s_b = p["g_leak"] * p["e_leak"] + ad.segment_sum_last(p["syn_g"] * ys, ptr)
        a_coef, b_coef = s_a, s_b
    elif kind == "ctrnn":
        _check_reversal(p["e_leak"])
        s_a = p["g_leak"] + ad.segment_sum_last(p["syn_g"], ptr)
        h = p["syn_g"] * ad.reciprocal(ad.take_last(p["e_leak"], edges.dst))
        q = p["g_leak"] + ad.segment_sum_last(h * ys, ptr)
        a_coef = ad.sigmoid(s_a)
        b_coef = ad.tanh(q) * p["e_leak"]
        if want_aux:
            aux.update(s_a=value_of(s_a), q=value_of(q), h=value_of(h))
    elif kind == "ltc":
        gate = ad.sigmoid(p["syn_a"] * ys + p["syn_b"])
        w = p["syn_g"] * gate
        s_a = p["g_leak"] + ad.segment_sum_last(w, ptr)
        s_b = (p["g_leak"] * p["e_leak"]
               + ad.segment_sum_last(w * p["syn_e"], ptr))
        inv_c = ad.reciprocal(p["capacitance"])
        a_coef = s_a * inv_c
        b_coef = s_b * inv_c
        if want_aux:
            aux.update(gate=value_of(gate), w=value_of(w),
                       s_a=value_of(s_a), s_b=value_of(s_b))
    else:  # sltc
        gate = ad.sigmoid(p["syn_a"] * ys + p["syn_b"])
        f = p["g_leak"] + ad.segment_sum_last(p["syn_g"] * gate, ptr)
        q = p["g_leak"] + ad.segment_sum_last(p["syn_h"] * gate, ptr)
        inv_c = ad.reciprocal(p["capacitance"])
        a_coef = ad.sigmoid(f) * inv_c
        b_coef = ad.tanh(q) * p["e_leak"] * inv_c
        if want_aux:
            aux.update(gate=value_of(gate), f=value_of(f), q=value_of(q))

    if want_aux:
        aux["ys"] = value_of(ys)
        return a_coef, b_coef, aux
    return a_coef, b_coef


def derivative(kind: str, state, inputs, params, edges: EdgeIndex):
    """dx/dt for any model kind (``B - A x`` of the collected form)."""
    a_coef, b_coef = coefficients(kind, params, edges, state, inputs)
    return b_coef - a_coef * state


def electrical_derivative(state, inputs, params, edges: EdgeIndex):
    """Ohmic-coupling network: leak current plus per-edge g*(y_j - x_i)."""
    return derivative("electrical", state, inputs, params, edges)


def electrical_rearranged_derivative(state, inputs, params, edges: EdgeIndex):
    """The same dynamics collected around x_i and e_li.

    Computed literally as ``-(g_l + sum g) x + (g_l + sum (g/e_l) y) e_l``,
    which requires every |e_leak| >= EPS_REVERSAL.  Algebraically identical
    to :func:`electrical_derivative`; kept as a separate code path so the
    two can be checked against each other.
    """
    _check_signals(edges, state, inputs)
    p = _fields(params)
    _check_reversal(p["e_leak"])
    y = ad.concat_last(state, inputs)
    ys = ad.take_last(y, edges.src_y)
    ptr = edges.dst_ptr
    total_g = p["g_leak"] + ad.segment_sum_last(p["syn_g"], ptr)
    h = p["syn_g"] * ad.reciprocal(ad.take_last(p["e_leak"], edges.dst))
    drive = p["g_leak"] + ad.segment_sum_last(h * ys, ptr)
    return -(total_g * state) + drive * p["e_leak"]


def ctrnn_derivative(state, inputs, params, edges: EdgeIndex):
    """Saturated electrical network (classic CT-RNN form)."""
    return derivative("ctrnn", state, inputs, params, edges)


def ltc_derivative(state, inputs, params, edges: EdgeIndex):
    """Chemical-synapse network with per-synapse reversal potentials."""
    return derivative("ltc", state, inputs, params, edges)


def sltc_gates(state, inputs, params, edges: EdgeIndex):
    """Pre-saturation gate sums (f, q) of the saturated chemical model."""
    _check_signals(edges, state, inputs)
    p = _fields(params)
    y = ad.concat_last(state, inputs)
    ys = ad.take_last(y, edges.src_y)
    gate = ad.sigmoid(p["syn_a"] * ys + p["syn_b"])
    f = p["g_leak"] + ad.segment_sum_last(p["syn_g"] * gate, edges.dst_ptr)
    q = p["g_leak"] + ad.segment_sum_last(p["syn_h"] * gate, edges.dst_ptr)
    return f, q


def sltc_derivative(state, inputs, params, edges: EdgeIndex):
    """Saturated chemical network with an input-dependent forget gate."""
    return derivative("sltc", state, inputs, params, edges)
