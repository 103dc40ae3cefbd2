"""Trainable parameters of one recurrent network, stored as flat-indexable
per-neuron and per-synapse arrays.

Parameter ranges (enforced by :func:`clamp` after every optimizer step):

* ``g_leak``       leak conductance, [0, 1]
* ``e_leak``       leak reversal potential, [-1, 1] with |e| >= EPS_REVERSAL
* ``capacitance``  membrane capacitance, > 0 (trainable for ltc/sltc,
                   fixed at 1 for electrical/ctrnn)
* ``syn_g``        synapse (maximum) conductance, [0, 1]
* ``syn_a/syn_b``  chemical gate slope / offset, unbounded
* ``syn_e``        chemical synaptic reversal potential (ltc), [-1, 1]
* ``syn_h``        saturated-chemical coupling weight (sltc), [-1, 1]

Synapse arrays follow the canonical edge order of the wiring's
:class:`~liquidlab.wiring.EdgeIndex`.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .errors import ConfigError, StructuralError
from .wiring import MODEL_KINDS, EdgeIndex

# Reversal potentials this close to zero would blow up the derived
# coupling h = g / e_leak, so clamping pushes them back out.
EPS_REVERSAL = 1e-3

CAPACITANCE_RANGE = (0.1, 10.0)

# Trainable field names per model kind, in flat-vector order.
TRAINABLE_FIELDS = {
    "electrical": ("g_leak", "e_leak", "syn_g"),
    "ctrnn": ("g_leak", "e_leak", "syn_g"),
    "ltc": ("g_leak", "e_leak", "capacitance", "syn_g", "syn_a", "syn_b", "syn_e"),
    "sltc": ("g_leak", "e_leak", "capacitance", "syn_g", "syn_a", "syn_b", "syn_h"),
}

_BOUNDS = {
    "g_leak": (0.0, 1.0),
    "e_leak": (-1.0, 1.0),
    "capacitance": CAPACITANCE_RANGE,
    "syn_g": (0.0, 1.0),
    "syn_a": None,
    "syn_b": None,
    "syn_e": (-1.0, 1.0),
    "syn_h": (-1.0, 1.0),
}


@dataclass
class ModelParams:
    """All trainable scalars of one network, by field."""

    kind: str
    g_leak: np.ndarray
    e_leak: np.ndarray
    capacitance: np.ndarray
    syn_g: np.ndarray
    syn_a: np.ndarray
    syn_b: np.ndarray
    syn_e: np.ndarray
    syn_h: np.ndarray

    @property
    def n_neurons(self) -> int:
        return len(self.g_leak)

    @property
    def n_synapses(self) -> int:
        return len(self.syn_g)

    def trainable_fields(self):
        return TRAINABLE_FIELDS[self.kind]

    def n_trainable(self) -> int:
        return sum(getattr(self, f).size for f in self.trainable_fields())

    def to_flat(self) -> np.ndarray:
        return np.concatenate([getattr(self, f) for f in self.trainable_fields()])

    def from_flat(self, flat: np.ndarray) -> "ModelParams":
        """Return a copy with trainable fields replaced from a flat vector."""
        if flat.shape != (self.n_trainable(),):
            raise StructuralError(
                f"flat vector has shape {flat.shape}, expected ({self.n_trainable()},)")
        out = self.copy()
        offset = 0
        for f in self.trainable_fields():
            size = getattr(self, f).size
            setattr(out, f, flat[offset:offset + size].copy())
            offset += size
        return out

    def copy(self) -> "ModelParams":
        kw = {f.name: (getattr(self, f.name).copy()
                       if isinstance(getattr(self, f.name), np.ndarray)
                       else getattr(self, f.name))
              for f in fields(self)}
        return ModelParams(**kw)

    def validate(self):
        m, e = self.n_neurons, self.n_synapses
        for name, size in (("e_leak", m), ("capacitance", m), ("syn_a", e),
                           ("syn_b", e), ("syn_e", e), ("syn_h", e)):
            if getattr(self, name).shape != (size,):
                raise StructuralError(f"{name} has wrong shape")
        for name in ("g_leak", "e_leak", "capacitance", "syn_g", "syn_a",
                     "syn_b", "syn_e", "syn_h"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise StructuralError(f"{name} contains non-finite values")
        bad = []
        if np.any(self.g_leak < 0) or np.any(self.g_leak > 1):
            bad.append("g_leak")
        if np.any(np.abs(self.e_leak) > 1):
            bad.append("e_leak")
        if np.any(self.capacitance <= 0):
            bad.append("capacitance")
        if np.any(self.syn_g < 0) or np.any(self.syn_g > 1):
            bad.append("syn_g")
        if np.any(np.abs(self.syn_e) > 1):
            bad.append("syn_e")
        if np.any(np.abs(self.syn_h) > 1):
            bad.append("syn_h")
        if bad:
            raise ConfigError(f"parameter invariants violated: {', '.join(bad)}")


def init_params(kind: str, edges: EdgeIndex, rng) -> ModelParams:
    """Draw initial parameters.

    Conductances start in [0.001, 1] so no synapse is born dead, chemical
    gates get slopes in [3, 8] and offsets near 0 (their responsive region),
    reversal potentials are a hard +-1 coin flip per edge, and leaks sit in a
    small band around rest.  ``h`` for the saturated chemical model is drawn
    uniformly over its full [-1, 1] range.
    """
    if kind not in MODEL_KINDS:
        raise ConfigError(f"unknown model kind {kind!r}")
    rng = np.random.default_rng(rng) if isinstance(rng, (int, np.integer)) else rng
    m, e = edges.n_neurons, edges.n_edges
    g_leak = rng.uniform(0.1, 1.0, size=m)
    e_leak = rng.uniform(-0.2, 0.2, size=m)
    if kind in ("ltc", "sltc"):
        capacitance = rng.uniform(0.4, 0.6, size=m) * 2.0
    else:
        capacitance = np.ones(m)
    syn_g = rng.uniform(0.001, 1.0, size=e)
    syn_a = rng.uniform(3.0, 8.0, size=e)
    syn_b = rng.uniform(-0.3, 0.3, size=e)
    syn_e = np.where(rng.random(size=e) < 0.5, -1.0, 1.0)
    syn_h = rng.uniform(-1.0, 1.0, size=e)
    params = ModelParams(kind=kind, g_leak=g_leak, e_leak=e_leak,
                         capacitance=capacitance, syn_g=syn_g, syn_a=syn_a,
                         syn_b=syn_b, syn_e=syn_e, syn_h=syn_h)
    clamp(params)
    return params


def clamp(params: ModelParams) -> ModelParams:
    """Project parameters back into their invariant ranges, in place.

    Values already inside their range are left untouched.  ``e_leak`` is
    additionally pushed out of the (-EPS_REVERSAL, EPS_REVERSAL) dead zone
    that would make the derived coupling h = g / e_leak degenerate.
    """
    np.clip(params.g_leak, 0.0, 1.0, out=params.g_leak)
    np.clip(params.e_leak, -1.0, 1.0, out=params.e_leak)
    dead = np.abs(params.e_leak) < EPS_REVERSAL
    if np.any(dead):
        signs = np.where(params.e_leak[dead] < 0, -1.0, 1.0)
        params.e_leak[dead] = signs * EPS_REVERSAL
    lo, hi = CAPACITANCE_RANGE
    np.clip(params.capacitance, lo, hi, out=params.capacitance)
    np.clip(params.syn_g, 0.0, 1.0, out=params.syn_g)
    np.clip(params.syn_e, -1.0, 1.0, out=params.syn_e)
    np.clip(params.syn_h, -1.0, 1.0, out=params.syn_h)
    return params
