"""Synapse graphs: sparse 4-layer NCP wirings and fully-connected wirings.

A wiring is a directed graph whose targets are always neurons and whose
sources are either sensory units (external inputs) or neurons.  Neurons are
indexed ``0 .. n_neurons-1`` in layer order: interneurons first, then command
neurons, then motor neurons.  Sensory units have their own index space.

The NCP layout restricts edges to sensory->inter, inter->command,
command->command and command->motor; fully-connected wirings are all-to-all
(including self-loops) with every sensory unit feeding every neuron.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, StructuralError

SENSORY = "sensory"
NEURON = "neuron"

LAYER_INTER = "inter"
LAYER_COMMAND = "command"
LAYER_MOTOR = "motor"

MODEL_KINDS = ("electrical", "ctrnn", "ltc", "sltc")

# Trainable scalars per synapse / per neuron for each synaptic model.
# Chemical models train (g, a, b, target) per synapse and (g_leak, e_leak,
# capacitance) per neuron; electrical models train g per synapse and
# (g_leak, e_leak) per neuron with capacitance fixed at 1.
PARAMS_PER_SYNAPSE = {"electrical": 1, "ctrnn": 1, "ltc": 4, "sltc": 4}
PARAMS_PER_NEURON = {"electrical": 2, "ctrnn": 2, "ltc": 3, "sltc": 3}


@dataclass(frozen=True)
class WiringConfig:
    """Generation parameters for a sparse NCP graph."""

    n_sensory: int
    n_inter: int
    n_command: int
    n_motor: int
    sensory_fanout: int
    inter_fanout: int
    command_recurrence: int
    motor_fanin: int
    seed: int = 0

    def validate(self):
        counts = (self.n_sensory, self.n_inter, self.n_command, self.n_motor)
        if any(c < 1 for c in counts):
            raise ConfigError(f"all layer sizes must be >= 1, got {counts}")
        if not 1 <= self.sensory_fanout <= self.n_inter:
            raise ConfigError(
                f"sensory_fanout {self.sensory_fanout} must be in [1, {self.n_inter}]")
        if not 1 <= self.inter_fanout <= self.n_command:
            raise ConfigError(
                f"inter_fanout {self.inter_fanout} must be in [1, {self.n_command}]")
        if not 0 <= self.command_recurrence <= self.n_command ** 2:
            raise ConfigError(
                f"command_recurrence {self.command_recurrence} must be in "
                f"[0, {self.n_command ** 2}]")
        if not 1 <= self.motor_fanin <= self.n_command:
            raise ConfigError(
                f"motor_fanin {self.motor_fanin} must be in [1, {self.n_command}]")


@dataclass
class WiringGraph:
    """A directed synapse graph plus the layer label of every neuron.

    ``edges`` is an ordered list of ``(src_kind, src_index, dst_neuron)``
    with ``src_kind`` in {"sensory", "neuron"}.  Edge order is the
    generation order; parameter vectors use the canonical order produced
    by :func:`compile_edges` instead.
    """

    kind: str  # "ncp" | "fully" | "custom"
    n_sensory: int
    n_inter: int
    n_command: int
    n_motor: int
    edges: list = field(default_factory=list)

    @property
    def n_neurons(self) -> int:
        return self.n_inter + self.n_command + self.n_motor

    @property
    def n_synapses(self) -> int:
        return len(self.edges)

    def layer_of(self, neuron: int) -> str:
        if neuron < 0 or neuron >= self.n_neurons:
            raise StructuralError(f"neuron index {neuron} out of range")
        if neuron < self.n_inter:
            return LAYER_INTER
        if neuron < self.n_inter + self.n_command:
            return LAYER_COMMAND
        return LAYER_MOTOR

    @property
    def motor_indices(self) -> list:
        start = self.n_inter + self.n_command
        return list(range(start, self.n_neurons))

    def validate(self):
        """Check structural invariants; NCP graphs get the layer rules too."""
        seen = set()
        in_deg = np.zeros(self.n_neurons, dtype=int)
        out_sensory = np.zeros(self.n_sensory, dtype=int) if self.n_sensory else None
        for kind, src, dst in self.edges:
            if kind not in (SENSORY, NEURON):
                raise StructuralError(f"bad source kind {kind!r}")
            limit = self.n_sensory if kind == SENSORY else self.n_neurons
            if not 0 <= src < limit:
                raise StructuralError(f"source index {src} out of range for {kind}")
            if not 0 <= dst < self.n_neurons:
                raise StructuralError(f"target index {dst} out of range")
            key = (kind, src, dst)
            if key in seen:
                raise StructuralError(f"duplicate edge {key}")
            seen.add(key)
            in_deg[dst] += 1
            if kind == SENSORY:
                out_sensory[src] += 1
            if self.kind == "ncp":
                self._check_ncp_edge(kind, src, dst)
        if np.any(in_deg == 0):
            missing = int(np.argmin(in_deg))
            raise StructuralError(f"neuron {missing} has no incoming edge")
        if out_sensory is not None and np.any(out_sensory == 0):
            missing = int(np.argmin(out_sensory))
            raise StructuralError(f"sensory unit {missing} has no outgoing edge")
        if self.kind == "ncp":
            motor_out = [e for e in self.edges
                         if e[0] == NEURON and self.layer_of(e[1]) == LAYER_MOTOR]
            if motor_out:
                raise StructuralError("motor neurons must not have outgoing edges")

    def _check_ncp_edge(self, kind, src, dst):
        dst_layer = self.layer_of(dst)
        if kind == SENSORY:
            if dst_layer != LAYER_INTER:
                raise StructuralError("sensory edges must target interneurons")
            return
        src_layer = self.layer_of(src)
        allowed = (
            (src_layer == LAYER_INTER and dst_layer == LAYER_COMMAND)
            or (src_layer == LAYER_COMMAND and dst_layer in (LAYER_COMMAND,
                                                             LAYER_MOTOR))
        )
        if not allowed:
            raise StructuralError(
                f"edge {src_layer}->{dst_layer} not allowed in an NCP graph")


def build_ncp(config: WiringConfig) -> WiringGraph:
    """Build a sparse 4-layer graph; deterministic for a given seed.

    Every sensory unit fans out to ``sensory_fanout`` distinct interneurons,
    every interneuron to ``inter_fanout`` distinct command neurons; exactly
    ``command_recurrence`` distinct command->command edges (self-loops
    allowed) are drawn, and every motor neuron receives ``motor_fanin``
    command in-edges.  Any neuron left without an in-edge afterwards is
    repaired with one extra random in-edge from the previous layer.
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    ni, nc, nm = config.n_inter, config.n_command, config.n_motor
    cmd0 = ni
    motor0 = ni + nc
    edges = []

    for s in range(config.n_sensory):
        targets = rng.choice(ni, size=config.sensory_fanout, replace=False)
        edges.extend((SENSORY, s, int(t)) for t in np.sort(targets))

    for i in range(ni):
        targets = rng.choice(nc, size=config.inter_fanout, replace=False)
        edges.extend((NEURON, i, cmd0 + int(t)) for t in np.sort(targets))

    pairs = rng.choice(nc * nc, size=config.command_recurrence, replace=False)
    for p in np.sort(pairs):
        src, dst = divmod(int(p), nc)
        edges.append((NEURON, cmd0 + src, cmd0 + dst))

    for m in range(nm):
        sources = rng.choice(nc, size=config.motor_fanin, replace=False)
        edges.extend((NEURON, cmd0 + int(s), motor0 + m) for s in np.sort(sources))

    # Repair pass: unreached neurons get one in-edge from the previous layer.
    in_deg = np.zeros(ni + nc + nm, dtype=int)
    present = set(edges)
    for _, _, dst in edges:
        in_deg[dst] += 1
    for neuron in range(ni + nc + nm):
        if in_deg[neuron] > 0:
            continue
        if neuron < ni:
            pick = lambda: (SENSORY, int(rng.integers(config.n_sensory)), neuron)
        elif neuron < motor0:
            pick = lambda: (NEURON, int(rng.integers(ni)), neuron)
        else:
            pick = lambda: (NEURON, cmd0 + int(rng.integers(nc)), neuron)
        edge = pick()
        while edge in present:
            edge = pick()
        edges.append(edge)
        present.add(edge)

    graph = WiringGraph(kind="ncp", n_sensory=config.n_sensory, n_inter=ni,
                        n_command=nc, n_motor=nm, edges=edges)
    graph.validate()
    return graph


def build_fully_connected(n_neurons: int, n_sensory: int) -> WiringGraph:
    """All-to-all wiring: every sensory->neuron and neuron->neuron pair.

    Self-loops included, so the synapse count is
    ``n_sensory * n_neurons + n_neurons**2``.  The last neuron is labelled
    motor (it is the read-out), the rest command.
    """
    if n_neurons < 1:
        raise ConfigError("need at least one neuron")
    if n_sensory < 0:
        raise ConfigError("n_sensory must be >= 0")
    edges = []
    for s in range(n_sensory):
        edges.extend((SENSORY, s, j) for j in range(n_neurons))
    for i in range(n_neurons):
        edges.extend((NEURON, i, j) for j in range(n_neurons))
    return WiringGraph(kind="fully", n_sensory=n_sensory, n_inter=0,
                       n_command=n_neurons - 1, n_motor=1, edges=edges)


def count_parameters(wiring: WiringGraph, model_kind: str) -> int:
    """Trainable scalars of the recurrent network (conv head excluded)."""
    if model_kind not in MODEL_KINDS:
        raise ConfigError(f"unknown model kind {model_kind!r}")
    return (PARAMS_PER_SYNAPSE[model_kind] * wiring.n_synapses
            + PARAMS_PER_NEURON[model_kind] * wiring.n_neurons)


def format_adjacency(wiring: WiringGraph) -> str:
    """Human-readable dump, one edge per line."""
    lines = [f"# {wiring.kind} wiring: {wiring.n_sensory} sensory, "
             f"{wiring.n_inter} inter, {wiring.n_command} command, "
             f"{wiring.n_motor} motor, {wiring.n_synapses} synapses"]
    for kind, src, dst in wiring.edges:
        src_name = f"s{src}" if kind == SENSORY else f"n{src}({wiring.layer_of(src)[0]})"
        lines.append(f"{src_name} -> n{dst}({wiring.layer_of(dst)[0]})")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class EdgeIndex:
    """Array view of a wiring used by the numeric kernels.

    Edges are held in canonical order: sorted by (target, source kind,
    source).  Parameter vectors are laid out in this order.  ``src_y``
    indexes into the concatenated signal ``y = [x, u]``: neuron sources map
    to their own index, sensory sources to ``n_neurons + sensory index``.
    ``dst_ptr`` is a CSR-style offset table over targets; ``src_order`` and
    ``src_ptr`` give the same edges regrouped by source signal, which the
    backward pass uses to scatter adjoints onto ``y``.
    """

    n_neurons: int
    n_inputs: int
    src_y: np.ndarray       # (E,) int64, index into y = [x, u]
    dst: np.ndarray         # (E,) int64
    dst_ptr: np.ndarray     # (n_neurons + 1,) int64
    src_order: np.ndarray   # (E,) int64, canonical-edge permutation sorted by src_y
    src_ptr: np.ndarray     # (n_neurons + n_inputs + 1,) int64

    @property
    def n_edges(self) -> int:
        return len(self.src_y)


def compile_edges(wiring: WiringGraph) -> EdgeIndex:
    """Freeze a wiring into the canonical array form."""
    m = wiring.n_neurons
    n = wiring.n_sensory
    raw = []
    for kind, src, dst in wiring.edges:
        sy = src if kind == NEURON else m + src
        if not 0 <= dst < m or not 0 <= sy < m + n:
            raise StructuralError(f"edge ({kind}, {src}, {dst}) out of range")
        raw.append((dst, sy))
    raw.sort()
    dst = np.array([d for d, _ in raw], dtype=np.int64)
    src_y = np.array([s for _, s in raw], dtype=np.int64)
    dst_ptr = np.zeros(m + 1, dtype=np.int64)
    np.add.at(dst_ptr, dst + 1, 1)
    dst_ptr = np.cumsum(dst_ptr)
    src_order = np.argsort(src_y, kind="stable").astype(np.int64)
    src_ptr = np.zeros(m + n + 1, dtype=np.int64)
    np.add.at(src_ptr, src_y + 1, 1)
    src_ptr = np.cumsum(src_ptr)
    return EdgeIndex(n_neurons=m, n_inputs=n, src_y=src_y, dst=dst,
                     dst_ptr=dst_ptr, src_order=src_order, src_ptr=src_ptr)
