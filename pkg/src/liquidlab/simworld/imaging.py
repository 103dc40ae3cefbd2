"""Pixel-space perturbations: evaluation noise and training augmentation.

Gaussian noise is drawn as a standard-normal field scaled by sqrt(variance),
so runs with the same seed but different variances see the *same* noise
pattern at different strength.  Augmentation follows the training recipe:
brightness shift U[-0.4, 0.4], per-image contrast factor U[0.6, 1.4]
multiplying every RGB channel, saturation factor U[0.6, 1.4] applied in HSV
space, clamped to [0, 1] after each stage.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError

BRIGHTNESS_RANGE = (-0.4, 0.4)
CONTRAST_RANGE = (0.6, 1.4)
SATURATION_RANGE = (0.6, 1.4)


def _as_rng(seed_or_rng):
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def _as_float(images):
    """float32 stays float32 (fast training path), all else float64."""
    images = np.asarray(images)
    if images.dtype != np.float32:
        images = images.astype(np.float64)
    return images


def gaussian_noise_field(shape, variance, seed_or_rng):
    """Standard-normal field scaled to the requested variance."""
    if variance < 0:
        raise ConfigError("noise variance must be >= 0")
    rng = _as_rng(seed_or_rng)
    return rng.standard_normal(shape) * np.sqrt(variance)


def add_gaussian_noise(image, variance, seed_or_rng):
    """Additive pixel noise on a [0, 1] image, clamped back to [0, 1].

    Variance 0 returns the image unchanged (and draws nothing, keeping the
    random stream aligned with noise-free runs).
    """
    image = np.asarray(image, dtype=np.float64)
    if variance == 0:
        return image
    noisy = image + gaussian_noise_field(image.shape, variance, seed_or_rng)
    return np.clip(noisy, 0.0, 1.0)


def draw_augment_factors(seed_or_rng):
    """(brightness shift, contrast factor, saturation factor)."""
    rng = _as_rng(seed_or_rng)
    return (rng.uniform(*BRIGHTNESS_RANGE), rng.uniform(*CONTRAST_RANGE),
            rng.uniform(*SATURATION_RANGE))


def scale_saturation(rgb, factor):
    """Multiply the HSV saturation channel by ``factor`` (clamped to [0,1])
    while keeping hue and value, expressed directly in RGB.

    With V = max(rgb) and S = (V - min)/V, every channel satisfies
    c = V * (1 - S * k_c) for a hue-dependent k_c, so scaling S to
    min(f*S, 1) is c' = V - (V - c) * min(f, 1/S).  This is algebraically
    identical to an HSV round-trip but needs no hue computation.
    """
    rgb = _as_float(rgb)
    v = rgb.max(axis=-1, keepdims=True)
    chroma = v - rgb.min(axis=-1, keepdims=True)
    gray = chroma <= 0.0
    inv_s = np.where(gray, np.inf, v / np.where(gray, 1.0, chroma))
    ratio = np.minimum(factor, inv_s)
    return v - (v - rgb) * ratio


def augment_with_factors(images, brightness, contrast, saturation):
    """Apply the three-stage augmentation to (..., H, W, 3) [0, 1] images.

    No-op stages (shift 0, factor exactly 1) are skipped, which keeps the
    identity case exact.
    """
    out = _as_float(images)
    if brightness != 0.0:
        out = np.clip(out + brightness, 0.0, 1.0)
    if contrast != 1.0:
        out = np.clip(out * contrast, 0.0, 1.0)
    if saturation != 1.0:
        out = np.clip(scale_saturation(out, saturation), 0.0, 1.0)
    return out


def augment(image, seed_or_rng):
    """Randomized brightness/contrast/saturation augmentation of one image."""
    factors = draw_augment_factors(seed_or_rng)
    return augment_with_factors(image, *factors)
