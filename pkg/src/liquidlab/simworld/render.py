"""Pinhole rendering of the lane onto a small RGB raster.

Every pixel below the horizon is ray-cast onto the ground plane; its color
is decided by the signed lateral distance of that ground point from the
track centerline (road, lane markings, surround) plus a mild along-track
stripe texture and distance fade.  Texture depends only on |d| and s, so a
mirrored vehicle offset produces a mirrored image.

Themes: "summer" is a dark road on a bright green surround with a white
center dash; "winter" is a low-contrast bright road on snow, with dark
contour bands at the road edges.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError

IMAGE_WIDTH = 48
IMAGE_HEIGHT = 32
FOCAL = 30.0          # px
HORIZON_ROW = 11.0    # px, image row of the horizon
CAMERA_HEIGHT = 1.4   # m above the road plane
MAX_DEPTH = 90.0      # m, ray cap
EDGE_BAND = 0.28      # m, width of the painted edge feature

THEMES = ("summer", "winter")

_GRID_CACHE = {}


def _pixel_grid():
    """Per-pixel (depth F, lateral X) ground coordinates for ground rows."""
    key = (IMAGE_WIDTH, IMAGE_HEIGHT, FOCAL, HORIZON_ROW, CAMERA_HEIGHT)
    if key not in _GRID_CACHE:
        rows = np.arange(IMAGE_HEIGHT) + 0.5
        below = rows - HORIZON_ROW
        ground_rows = np.where(below > FOCAL * CAMERA_HEIGHT / MAX_DEPTH)[0]
        depth = FOCAL * CAMERA_HEIGHT / below[ground_rows]          # (R,)
        cols = np.arange(IMAGE_WIDTH) + 0.5 - IMAGE_WIDTH / 2.0     # (W,)
        lateral = depth[:, None] * cols[None, :] / FOCAL            # (R, W)
        _GRID_CACHE[key] = (ground_rows, depth, lateral)
    return _GRID_CACHE[key]


def render_frame(track, state, theme=None):
    """Render the camera view for a vehicle state; (H, W, 3) floats in [0,1].

    A vehicle far off the road simply sees no road pixels (blank-road
    image); rendering never fails for finite states.
    """
    theme = theme or track.theme
    if theme not in THEMES:
        raise ConfigError(f"unknown theme {theme!r}")
    ground_rows, depth, lateral = _pixel_grid()
    n_rows = len(ground_rows)

    fwd = np.array([np.cos(state.heading), np.sin(state.heading)])
    right = np.array([-np.sin(state.heading), np.cos(state.heading)])
    pos = np.array([state.x, state.y])
    ground = (pos[None, None, :]
              + depth[:, None, None] * fwd[None, None, :]
              + lateral[:, :, None] * right[None, None, :])  # (R, W, 2)

    # Signed offset of each ground point from the centerline, via the
    # nearest sample in a window ahead of the vehicle.  The search runs on
    # a 3x-subsampled float32 centerline (the local tangent correction
    # below keeps the result accurate to centimeters, far below pixel
    # size); the chosen sample's float64 data is used for the projection.
    ds = track.s[1] - track.s[0]
    sub = getattr(track, "_render_xy32", None)
    if sub is None:
        sub = np.ascontiguousarray(track.xy[::3], dtype=np.float32)
        track._render_xy32 = sub
    k = len(sub)
    lo = max(0, int(state.s / (3.0 * ds)) - 8)
    hi = min(k, lo + 8 + int((MAX_DEPTH + 40.0) / (3.0 * ds)))
    pts = sub[lo:hi]                                       # (S, 2)
    flat = ground.reshape(-1, 2).astype(np.float32)
    # squared distances via |a|^2 + |b|^2 - 2 a.b (argmin is unaffected)
    d2 = ((flat * flat).sum(axis=1)[:, None]
          + (pts * pts).sum(axis=1)[None, :] - 2.0 * (flat @ pts.T))
    nearest = np.argmin(d2, axis=1)
    idx = (lo + nearest) * 3
    flat = ground.reshape(-1, 2)
    psi = track.heading[idx]
    tangent = np.stack([np.cos(psi), np.sin(psi)], axis=1)
    n_left = np.stack([np.sin(psi), -np.cos(psi)], axis=1)
    rel = flat - track.xy[idx]
    d_g = np.einsum("ij,ij->i", rel, n_left).reshape(n_rows, IMAGE_WIDTH)
    s_g = (track.s[idx] + np.einsum("ij,ij->i", rel, tangent)
           ).reshape(n_rows, IMAGE_WIDTH)

    img = np.empty((IMAGE_HEIGHT, IMAGE_WIDTH, 3))
    img[:] = _sky_color(theme)
    img[ground_rows] = _ground_colors(theme, d_g, s_g, depth, track.half_width)
    return np.clip(img, 0.0, 1.0)


def _sky_color(theme):
    return (np.array([0.55, 0.74, 0.94]) if theme == "summer"
            else np.array([0.82, 0.84, 0.88]))


def _ground_colors(theme, d_g, s_g, depth, half_width):
    """Colors for the ground pixels (R, W, 3)."""
    ad = np.abs(d_g)
    stripe = np.sin(2.0 * np.pi * s_g / 9.0)
    on_road = ad <= half_width
    shape = d_g.shape

    if theme == "summer":
        color = np.empty(shape + (3,))
        surround = np.array([0.42, 0.60, 0.28]) \
            + 0.05 * stripe[..., None] * np.array([0.5, 1.0, 0.4]) \
            + 0.04 * np.cos(ad * 1.3)[..., None] * np.array([0.8, 0.5, 0.2])
        road = np.array([0.24, 0.24, 0.26]) \
            + 0.015 * stripe[..., None] * np.array([1.0, 1.0, 1.0])
        color[:] = np.where(on_road[..., None], road, surround)
        edge_line = on_road & (ad >= half_width - 0.15)
        color[edge_line] = np.array([0.82, 0.82, 0.80])
        dash = on_road & (ad < 0.07) & (np.mod(s_g, 4.0) < 2.0)
        color[dash] = np.array([0.85, 0.85, 0.78])
    else:
        color = np.empty(shape + (3,))
        surround = np.array([0.91, 0.92, 0.95]) \
            + 0.02 * stripe[..., None] * np.array([1.0, 1.0, 1.0]) \
            + 0.015 * np.cos(ad * 0.9)[..., None]
        road = np.array([0.78, 0.78, 0.83]) \
            + 0.01 * stripe[..., None] * np.array([1.0, 1.0, 1.0])
        color[:] = np.where(on_road[..., None], road, surround)
        contour = (ad >= half_width - 0.18) & (ad <= half_width + EDGE_BAND)
        color[contour] = np.array([0.45, 0.43, 0.42])

    # Distance fade toward the sky color.
    fade = np.clip(depth / MAX_DEPTH, 0.0, 1.0)[:, None, None] * 0.5
    return color * (1.0 - fade) + _sky_color(theme)[None, None, :] * fade
