"""Procedural tracks: smooth random curvature profiles integrated into an
arc-length-parameterized centerline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError

MAX_CURVATURE = 0.1   # 1/m, hard clamp on track curvature
SAMPLE_DS = 0.5       # m between centerline samples
DEFAULT_HALF_WIDTH = 1.75  # m


@dataclass
class Track:
    """Sampled centerline; all arrays share length K, spacing SAMPLE_DS."""

    theme: str
    half_width: float
    s: np.ndarray          # (K,) arc length from the start
    xy: np.ndarray         # (K, 2) plan positions
    heading: np.ndarray    # (K,) unwrapped, right-turn positive curvature
    curvature: np.ndarray  # (K,) signed, 1/m

    @property
    def length(self) -> float:
        return float(self.s[-1])

    def point_at(self, s):
        s = np.clip(s, 0.0, self.length)
        x = np.interp(s, self.s, self.xy[:, 0])
        y = np.interp(s, self.s, self.xy[:, 1])
        return np.stack([x, y], axis=-1)

    def heading_at(self, s):
        return np.interp(np.clip(s, 0.0, self.length), self.s, self.heading)

    def curvature_at(self, s):
        return np.interp(np.clip(s, 0.0, self.length), self.s, self.curvature)

    def left_normal_at(self, s):
        """Unit normal pointing to the driver's left of the centerline."""
        psi = self.heading_at(s)
        return np.stack([np.sin(psi), -np.cos(psi)], axis=-1)

    def project(self, point, s_hint=None, window=25.0):
        """Nearest-centerline projection: returns (s, signed offset d).

        ``d`` is positive left of the centerline and its magnitude is the
        exact point-to-centerline distance.  ``s_hint`` restricts the search
        to a window around a known arc length (the previous vehicle state),
        which keeps the lookup O(window) instead of O(track).
        """
        point = np.asarray(point, dtype=np.float64)
        k = len(self.s)
        if s_hint is None:
            lo, hi = 0, k
        else:
            c = int(round(s_hint / SAMPLE_DS))
            r = int(np.ceil(window / SAMPLE_DS))
            lo, hi = max(0, c - r), min(k, c + r + 1)
        seg = self.xy[lo:hi]
        rel = seg - point
        i = lo + int(np.argmin(np.einsum("ij,ij->i", rel, rel)))
        best_s, best_c, best_d2 = self.s[i], self.xy[i], np.inf
        for a in (i - 1, i):
            if a < 0 or a + 1 >= k:
                continue
            pa, pb = self.xy[a], self.xy[a + 1]
            ab = pb - pa
            denom = float(ab @ ab)
            t = float(np.clip((point - pa) @ ab / denom, 0.0, 1.0))
            c = pa + t * ab
            d2 = float((point - c) @ (point - c))
            if d2 < best_d2:
                best_d2 = d2
                best_s = self.s[a] + t * SAMPLE_DS
                best_c = c
        dist = float(np.sqrt(best_d2)) if np.isfinite(best_d2) else \
            float(np.linalg.norm(point - best_c))
        n_left = self.left_normal_at(best_s)
        sign = 1.0 if float((point - best_c) @ n_left) >= 0 else -1.0
        return float(best_s), sign * dist


def generate_track(seed, length, theme="summer", *, half_width=DEFAULT_HALF_WIDTH,
                   n_components=(3, 6), amplitude=(0.004, 0.028),
                   wavelength=(60.0, 220.0)) -> Track:
    """Random track: curvature is a sum of 3..6 sinusoids in arc length,
    clamped to +-MAX_CURVATURE, then integrated twice (heading by trapezoid,
    position by trapezoid of the heading unit vectors)."""
    if length <= 0:
        raise ConfigError("track length must be positive")
    rng = np.random.default_rng(seed)
    k = int(round(length / SAMPLE_DS)) + 1
    s = np.arange(k) * SAMPLE_DS
    n_sin = int(rng.integers(n_components[0], n_components[1] + 1))
    curvature = np.zeros(k)
    for _ in range(n_sin):
        amp = rng.uniform(*amplitude)
        lam = rng.uniform(*wavelength)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        curvature += amp * np.sin(2.0 * np.pi * s / lam + phase)
    np.clip(curvature, -MAX_CURVATURE, MAX_CURVATURE, out=curvature)

    heading = np.zeros(k)
    heading[1:] = np.cumsum(0.5 * (curvature[1:] + curvature[:-1]) * SAMPLE_DS)
    xy = np.zeros((k, 2))
    cos_h, sin_h = np.cos(heading), np.sin(heading)
    xy[1:, 0] = np.cumsum(0.5 * (cos_h[1:] + cos_h[:-1]) * SAMPLE_DS)
    xy[1:, 1] = np.cumsum(0.5 * (sin_h[1:] + sin_h[:-1]) * SAMPLE_DS)
    return Track(theme=theme, half_width=half_width, s=s, xy=xy,
                 heading=heading, curvature=curvature)
