"""A trained lane-keeping policy: conv head + recurrent network.

The closed-loop protocol is stateless from the policy's point of view; the
harness owns the recurrent state vector and passes it back in every step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .convhead import ConvHeadParams, ConvHeadSpec, conv_forward, standardize
from .params import ModelParams
from .solver import SolverConfig, rollout, step
from .wiring import WiringGraph, compile_edges


@dataclass
class Policy:
    model_kind: str
    wiring: WiringGraph
    rnn_params: ModelParams
    conv_spec: ConvHeadSpec
    conv_params: ConvHeadParams
    solver: SolverConfig
    label_scale: float = 1.0  # motor potential / label_scale = curvature
    conv_dtype: str = "float64"

    def __post_init__(self):
        self.edges = compile_edges(self.wiring)
        self.motor = self.wiring.motor_indices[0]

    @classmethod
    def from_checkpoint(cls, bundle):
        return cls(model_kind=bundle.model_kind, wiring=bundle.wiring,
                   rnn_params=bundle.rnn_params, conv_spec=bundle.conv_spec,
                   conv_params=bundle.conv_params,
                   solver=bundle.train_config.solver,
                   label_scale=bundle.train_config.label_scale,
                   conv_dtype=bundle.train_config.conv_dtype)

    def initial_state(self, n: int) -> np.ndarray:
        return np.zeros((n, self.wiring.n_neurons))

    def features(self, frames01):
        """Sensory drive (tanh-squashed conv features) for [0,1] frames."""
        std = standardize(np.asarray(frames01, dtype=self.conv_dtype))
        feats, _ = conv_forward(self.conv_spec, self.conv_params.as_dict(),
                                std)
        return np.tanh(np.asarray(feats, dtype=np.float64))

    def step_batch(self, frames01, x):
        """One closed-loop step for a batch of frames; returns (y, x_new)."""
        u = self.features(frames01)
        x_new = step(self.model_kind, x, u, self.rnn_params, self.edges,
                     self.solver)
        return x_new[:, self.motor] / self.label_scale, x_new

    def predict_sequence(self, frames01):
        """Open-loop (curvatures, activities) for one float frame sequence."""
        u = self.features(frames01)
        outputs, activities = rollout(self.model_kind, self.rnn_params,
                                      self.wiring, u, self.solver,
                                      edges=self.edges)
        return outputs / self.label_scale, activities
