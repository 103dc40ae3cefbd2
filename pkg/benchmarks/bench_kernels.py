#!/usr/bin/env python3
"""Benchmark the fused sequence kernels: compiled extension vs numpy.

Times forward and forward+backward passes of the training-shaped workload
(batch x sequence x unfold substeps) for representative wirings, on every
available backend.

    python benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import time

import numpy as np

from liquidlab import kernels
from liquidlab.params import init_params
from liquidlab.wiring import (WiringConfig, build_fully_connected, build_ncp,
                              compile_edges)

PARAM_FIELDS = ("g_leak", "e_leak", "capacitance", "syn_g", "syn_a",
                "syn_b", "syn_e", "syn_h")

CASES = [
    ("ltc ncp-19", "ltc",
     lambda: build_ncp(WiringConfig(
         n_sensory=32, n_inter=12, n_command=6, n_motor=1, sensory_fanout=11,
         inter_fanout=5, command_recurrence=26, motor_fanin=6, seed=7))),
    ("sltc ncp-19", "sltc",
     lambda: build_ncp(WiringConfig(
         n_sensory=32, n_inter=12, n_command=6, n_motor=1, sensory_fanout=11,
         inter_fanout=5, command_recurrence=26, motor_fanin=6, seed=7))),
    ("ctrnn ncp-64", "ctrnn",
     lambda: build_ncp(WiringConfig(
         n_sensory=32, n_inter=42, n_command=21, n_motor=1, sensory_fanout=32,
         inter_fanout=12, command_recurrence=160, motor_fanin=12, seed=7))),
    ("ctrnn fully-64", "ctrnn", lambda: build_fully_connected(64, 64)),
    ("ltc fully-19", "ltc", lambda: build_fully_connected(19, 64)),
]


def bench(label, kind, graph, batch=32, frames=32, unfold=6, repeat=3):
    edges = compile_edges(graph)
    params = init_params(kind, edges, 0)
    pd = {f: getattr(params, f) for f in PARAM_FIELDS}
    rng = np.random.default_rng(0)
    u_seq = rng.uniform(-1, 1, (batch, frames, edges.n_inputs))
    x0 = np.zeros((batch, edges.n_neurons))
    motor = graph.motor_indices[0]
    rows = {}
    for backend in kernels.available_backends():
        kernels.set_backend(backend)
        args = (kind, "semi-implicit-euler", edges, pd, u_seq, x0,
                1.0 / 30.0, unfold)
        xs = kernels.seq_forward(*args)  # warm up
        fwd = []
        for _ in range(repeat):
            t0 = time.perf_counter()
            xs = kernels.seq_forward(*args)
            fwd.append(time.perf_counter() - t0)
        d_frames = np.zeros((batch, frames, edges.n_neurons))
        d_frames[..., motor] = 1.0
        bwd = []
        for _ in range(repeat):
            t0 = time.perf_counter()
            kernels.seq_backward(kind, "semi-implicit-euler", edges, pd,
                                 u_seq, xs, d_frames, 1.0 / 30.0, unfold)
            bwd.append(time.perf_counter() - t0)
        rows[backend] = (min(fwd), min(bwd))
    line = f"{label:16s} E={edges.n_edges:5d}"
    for backend in sorted(rows):
        f, b = rows[backend]
        line += f" | {backend}: fwd {f * 1e3:8.2f} ms  bwd {b * 1e3:8.2f} ms"
    if len(rows) == 2:
        f_np, b_np = rows["numpy"]
        f_cy, b_cy = rows["compiled"]
        line += f" | speedup fwd {f_np / f_cy:5.1f}x bwd {b_np / b_cy:5.1f}x"
    print(line)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--batch", type=int, default=32)
    ap.add_argument("--frames", type=int, default=32)
    args = ap.parse_args()
    print(f"backends: {kernels.available_backends()}  "
          f"(batch={args.batch}, frames={args.frames}, unfold=6)")
    for label, kind, builder in CASES:
        bench(label, kind, builder(), batch=args.batch, frames=args.frames,
              repeat=args.repeat)


if __name__ == "__main__":
    main()
