"""Evaluation battery: prediction error, crash likelihood, smoothness,
saliency similarity, neural-activity interpretability, trajectory
similarity.

All functions are pure; aggregation over runs happens in
:class:`MetricReport` (mean and standard deviation per metric).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import StructuralError

WMSE_EPS = 1e-6
SSIM_WINDOW = 7
SSIM_C1 = 0.01 ** 2  # dynamic range 1
SSIM_C2 = 0.03 ** 2


def mse(pred, label) -> float:
    """Mean squared error between two equal-length series."""
    pred = np.asarray(pred, dtype=np.float64)
    label = np.asarray(label, dtype=np.float64)
    if pred.shape != label.shape or pred.size == 0:
        raise StructuralError(f"mse shapes {pred.shape} vs {label.shape}")
    return float(np.mean((pred - label) ** 2))


def weighted_mse(pred, label) -> float:
    """MSE weighted by road steepness: w_t = |label_t| + eps.

    Down-weights straight-road frames so that errors in steep curves
    dominate the score.
    """
    pred = np.asarray(pred, dtype=np.float64)
    label = np.asarray(label, dtype=np.float64)
    if pred.shape != label.shape or pred.size == 0:
        raise StructuralError(f"shapes {pred.shape} vs {label.shape}")
    w = np.abs(label) + WMSE_EPS
    return float(np.sum(w * (pred - label) ** 2) / np.sum(w))


def lipschitz(outputs, frame_dt: float) -> float:
    """Maximum per-step rate of change of the prediction series."""
    outputs = np.asarray(outputs, dtype=np.float64)
    if outputs.ndim != 1 or len(outputs) < 2:
        raise StructuralError("need at least two outputs")
    return float(np.max(np.abs(np.diff(outputs))) / frame_dt)


def ssim(image_a, image_b) -> float:
    """Structural similarity of two equal-size grayscale [0, 1] images.

    Mean of local SSIM over all 7x7 uniform windows, with plain (biased)
    window moments and the usual stabilizers C1 = 0.01^2, C2 = 0.03^2 on a
    unit dynamic range.
    """
    a = np.asarray(image_a, dtype=np.float64)
    b = np.asarray(image_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise StructuralError(f"ssim needs equal 2-D images, got "
                              f"{a.shape} vs {b.shape}")
    if min(a.shape) < SSIM_WINDOW:
        raise StructuralError(f"images must be at least "
                              f"{SSIM_WINDOW}x{SSIM_WINDOW}")
    wa = sliding_window_view(a, (SSIM_WINDOW, SSIM_WINDOW))
    wb = sliding_window_view(b, (SSIM_WINDOW, SSIM_WINDOW))
    mu_a = wa.mean(axis=(2, 3))
    mu_b = wb.mean(axis=(2, 3))
    var_a = (wa * wa).mean(axis=(2, 3)) - mu_a * mu_a
    var_b = (wb * wb).mean(axis=(2, 3)) - mu_b * mu_b
    cov = (wa * wb).mean(axis=(2, 3)) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2)
    den = (mu_a ** 2 + mu_b ** 2 + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return float(np.mean(num / den))


def crash_likelihood(episodes) -> float:
    """Fraction of episodes whose crash flag is set."""
    episodes = list(episodes)
    if not episodes:
        raise StructuralError("need at least one episode")
    return float(sum(1 for e in episodes if e.crashed) / len(episodes))


def _pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xc = x - x.mean()
    yc = y - y.mean()
    vx = float(xc @ xc)
    vy = float(yc @ yc)
    if vx == 0.0 and vy == 0.0:
        return 1.0 if np.allclose(x, y) else 0.0
    if vx == 0.0 or vy == 0.0:
        return 0.0
    return float((xc @ yc) / np.sqrt(vx * vy))


def activity_correlation(activities, curvature) -> float:
    """Mean absolute Pearson correlation of each neuron's activity with the
    road curvature; zero-variance neurons contribute 0."""
    activities = np.asarray(activities, dtype=np.float64)
    curvature = np.asarray(curvature, dtype=np.float64)
    if activities.ndim != 2 or curvature.ndim != 1 \
            or activities.shape[1] != len(curvature):
        raise StructuralError(
            f"activities {activities.shape} vs curvature {curvature.shape}")
    if len(curvature) < 3:
        raise StructuralError("need at least 3 time steps")
    if np.all(curvature == curvature[0]):
        return 0.0
    total = 0.0
    for row in activities:
        if np.all(row == row[0]):
            continue  # zero-variance neuron counts as 0
        total += abs(_pearson(row, curvature))
    return float(total / len(activities))


def trajectory_similarity(episode_clean, episode_noisy) -> float:
    """Pearson correlation of the two lateral-offset series, truncated to
    the shorter run (a crash truncates).  A zero-variance pair scores 1 if
    the series are identical constants, 0 otherwise."""
    da = np.asarray(episode_clean.d, dtype=np.float64)
    db = np.asarray(episode_noisy.d, dtype=np.float64)
    n = min(len(da), len(db))
    if n == 0:
        raise StructuralError("episodes must be non-empty")
    da, db = da[:n], db[:n]
    if n == 1:
        return 1.0 if da[0] == db[0] else 0.0
    return _pearson(da, db)


@dataclass
class Stat:
    mean: float
    std: float

    @classmethod
    def of(cls, values):
        values = np.asarray(list(values), dtype=np.float64)
        if values.size == 0:
            return cls(mean=float("nan"), std=float("nan"))
        return cls(mean=float(values.mean()), std=float(values.std()))


@dataclass
class MetricReport:
    """Aggregated metrics for one (model, wiring, theme, noise) condition."""

    model: str
    wiring: str
    theme: str
    noise_variance: float
    mse: Stat = None
    weighted_mse: Stat = None
    crash_likelihood: float = None
    lipschitz: Stat = None
    mean_ssim: Stat = None
    activity_correlation: Stat = None
    trajectory_similarity: Stat = None

    CSV_HEADER = ("model,wiring,theme,noise_variance,"
                  "mse_mean,mse_std,weighted_mse_mean,weighted_mse_std,"
                  "crash_likelihood,lipschitz_mean,lipschitz_std,"
                  "ssim_mean,ssim_std,activity_corr_mean,activity_corr_std,"
                  "traj_similarity_mean,traj_similarity_std")

    def to_csv_row(self) -> str:
        def fmt(v):
            return "" if v is None else repr(float(v))

        cells = [self.model, self.wiring, self.theme,
                 repr(float(self.noise_variance))]
        for f in ("mse", "weighted_mse"):
            stat = getattr(self, f)
            cells += [fmt(stat and stat.mean), fmt(stat and stat.std)]
        cells.append(fmt(self.crash_likelihood))
        for f in ("lipschitz", "mean_ssim", "activity_correlation",
                  "trajectory_similarity"):
            stat = getattr(self, f)
            cells += [fmt(stat and stat.mean), fmt(stat and stat.std)]
        return ",".join(cells)
