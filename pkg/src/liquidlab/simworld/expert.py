"""Pure-pursuit expert: the demonstration source for imitation learning."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError

DEFAULT_LOOKAHEAD = 6.0  # m along the centerline
EXPERT_MAX_CURVATURE = 0.2  # 1/m, command clamp while driving


def _wrap_angle(a):
    return (a + np.pi) % (2.0 * np.pi) - np.pi


def expert_label(track, state, lookahead: float = DEFAULT_LOOKAHEAD) -> float:
    """Pure-pursuit curvature toward the centerline point ``lookahead``
    meters of arc ahead: y = 2 sin(theta) / lookahead, with theta the
    bearing of that point relative to the vehicle heading.

    Positive means a rightward turn; a vehicle offset to the left of a
    straight road therefore gets a positive, rightward-correcting label.
    """
    if lookahead <= 0:
        raise ConfigError("lookahead must be positive")
    target = track.point_at(state.s + lookahead)
    bearing = np.arctan2(target[1] - state.y, target[0] - state.x)
    theta = _wrap_angle(bearing - state.heading)
    return float(2.0 * np.sin(theta) / lookahead)


@dataclass(frozen=True)
class ExpertDriver:
    """Closed-loop expert policy (drives on world state, not on frames)."""

    lookahead: float = DEFAULT_LOOKAHEAD
    max_curvature: float = EXPERT_MAX_CURVATURE

    def command(self, track, state) -> float:
        y = expert_label(track, state, self.lookahead)
        return float(np.clip(y, -self.max_curvature, self.max_curvature))
