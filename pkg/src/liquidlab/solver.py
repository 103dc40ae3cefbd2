"""Time stepping for the membrane ODEs: single frames, whole sequences, and
the differentiable sequence op used for training."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .autodiff import Tensor, primitive, value_of
from .errors import ConfigError, UnsupportedSolverError
from .params import ModelParams
from .wiring import EdgeIndex, WiringGraph, compile_edges

EXPLICIT = "explicit-euler"
SEMI_IMPLICIT = "semi-implicit-euler"

_PARAM_FIELDS = ("g_leak", "e_leak", "capacitance", "syn_g", "syn_a",
                 "syn_b", "syn_e", "syn_h")


@dataclass(frozen=True)
class SolverConfig:
    """Fixed-step integration settings; ``unfold_steps`` substeps per frame."""

    method: str = SEMI_IMPLICIT
    dt: float = 1.0 / 30.0
    unfold_steps: int = 6

    def validate(self):
        if self.method not in (EXPLICIT, SEMI_IMPLICIT):
            raise UnsupportedSolverError(f"unknown method {self.method!r}")
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if self.unfold_steps < 1:
            raise ConfigError("unfold_steps must be >= 1")


def _edges_of(wiring) -> EdgeIndex:
    return wiring if isinstance(wiring, EdgeIndex) else compile_edges(wiring)


def _param_dict(params):
    if isinstance(params, ModelParams):
        return {f: getattr(params, f) for f in _PARAM_FIELDS}
    return params


def step(kind, state, inputs, params, wiring, solver: SolverConfig):
    """Advance one frame (all unfold substeps, inputs held constant).

    Accepts a single state ``(m,)`` or a batch ``(B, m)``; returns the same
    shape.  Delegates to the active kernel backend so that a single-frame
    rollout and a direct step are the very same code path.
    """
    solver.validate()
    edges = _edges_of(wiring)
    x = np.asarray(value_of(state), dtype=np.float64)
    u = np.asarray(value_of(inputs), dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None]
        u = u[None]
    xs = kernels.seq_forward(kind, solver.method, edges, _param_dict(params),
                             u[:, None, :], x, solver.dt, solver.unfold_steps)
    out = xs[:, -1]
    return out[0] if single else out


def rollout(kind, params, wiring, frames, solver: SolverConfig, *, edges=None):
    """Run a full input sequence from a zero initial state.

    ``frames`` is (T, n_inputs).  Returns ``(outputs, activities)``:
    ``outputs[t]`` is the potential of the first motor neuron after frame t
    (the curvature read-out) and ``activities`` is (n_neurons, T).
    """
    solver.validate()
    if isinstance(wiring, EdgeIndex):
        raise ConfigError("rollout needs the WiringGraph (motor labels)")
    edges = edges if edges is not None else compile_edges(wiring)
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2:
        raise ConfigError("frames must be (T, n_inputs)")
    x0 = np.zeros((1, edges.n_neurons))
    xs = kernels.seq_forward(kind, solver.method, edges, _param_dict(params),
                             frames[None], x0, solver.dt, solver.unfold_steps)
    states = xs[0, solver.unfold_steps::solver.unfold_steps]  # (T, m)
    motor = wiring.motor_indices[0]
    return states[:, motor].copy(), states.T.copy()


def sequence_states(kind, params, edges: EdgeIndex, u_seq, solver: SolverConfig,
                    x0=None):
    """Differentiable sequence integration for the trainer.

    ``params`` maps field names to Tensors (or arrays), ``u_seq`` is a
    Tensor or array of shape (B, T, n).  Returns the frame-boundary states
    (B, T, m) as a Tensor whose adjoint runs the fused backward kernel.
    """
    solver.validate()
    p = _param_dict(params)
    p_values = {f: value_of(p[f]) for f in _PARAM_FIELDS}
    u_values = value_of(u_seq)
    batch = u_values.shape[0]
    if x0 is None:
        x0 = np.zeros((batch, edges.n_neurons))
    xs = kernels.seq_forward(kind, solver.method, edges, p_values, u_values,
                             x0, solver.dt, solver.unfold_steps)
    frame_states = np.ascontiguousarray(
        xs[:, solver.unfold_steps::solver.unfold_steps])

    inputs = []
    for t in [u_seq] + [p[f] for f in _PARAM_FIELDS]:
        if isinstance(t, Tensor) and all(t is not s for s in inputs):
            inputs.append(t)
    if not inputs:
        return frame_states

    def backward(d_frames):
        grads, d_u = kernels.seq_backward(
            kind, solver.method, edges, p_values, u_values, xs,
            np.ascontiguousarray(d_frames), solver.dt, solver.unfold_steps)
        by_id = {}
        if isinstance(u_seq, Tensor):
            by_id[id(u_seq)] = d_u
        for f in _PARAM_FIELDS:
            if isinstance(p[f], Tensor):
                acc = by_id.get(id(p[f]))
                by_id[id(p[f])] = grads[f] if acc is None else acc + grads[f]
        return [by_id[id(t)] for t in inputs]

    return primitive(frame_states, inputs, backward)
