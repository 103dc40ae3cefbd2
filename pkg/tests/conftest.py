"""Shared fixtures and helpers for the test suite."""

import numpy as np
import pytest

from liquidlab.params import init_params
from liquidlab.wiring import WiringConfig, WiringGraph, build_ncp, compile_edges

PARAM_FIELDS = ("g_leak", "e_leak", "capacitance", "syn_g", "syn_a",
                "syn_b", "syn_e", "syn_h")

ALL_KINDS = ("electrical", "ctrnn", "ltc", "sltc")


def small_ncp(seed=1, n_sensory=3, n_inter=4, n_command=3, n_motor=1):
    cfg = WiringConfig(n_sensory=n_sensory, n_inter=n_inter,
                       n_command=n_command, n_motor=n_motor,
                       sensory_fanout=2, inter_fanout=2,
                       command_recurrence=4, motor_fanin=2, seed=seed)
    return build_ncp(cfg)


def random_net(kind, seed, max_neurons=8):
    """A random small wiring + parameters + compiled edges."""
    rng = np.random.default_rng(seed)
    n_inter = int(rng.integers(2, max(3, max_neurons - 3)))
    n_command = int(rng.integers(2, 4))
    n_motor = 1
    n_sensory = int(rng.integers(1, 4))
    cfg = WiringConfig(
        n_sensory=n_sensory, n_inter=n_inter, n_command=n_command,
        n_motor=n_motor,
        sensory_fanout=int(rng.integers(1, n_inter + 1)),
        inter_fanout=int(rng.integers(1, n_command + 1)),
        command_recurrence=int(rng.integers(1, n_command ** 2 + 1)),
        motor_fanin=int(rng.integers(1, n_command + 1)),
        seed=int(rng.integers(2 ** 31)))
    graph = build_ncp(cfg)
    edges = compile_edges(graph)
    params = init_params(kind, edges, rng)
    return graph, edges, params


def params_dict(params):
    return {f: getattr(params, f) for f in PARAM_FIELDS}


def chain_graph(n_sensory=1, n_neurons=1):
    """Minimal hand-built graph: each sensory feeds every neuron."""
    edges = [("sensory", s, j) for s in range(n_sensory)
             for j in range(n_neurons)]
    return WiringGraph(kind="custom", n_sensory=n_sensory, n_inter=0,
                       n_command=max(0, n_neurons - 1), n_motor=1,
                       edges=edges)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
