"""Dense mark-probability grids: Gaussian targets, losses, peak extraction.

The losses are pure functions over two equal-shape grids. Peak extraction
follows the forward-difference local-maximum pseudocode exactly: a pixel is a
peak iff it is a strict local maximum along x AND along y of the smoothed
grid, and its smoothed value exceeds ``tau``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidKernel, InvalidSigma, ShapeMismatch
from .geometry import Point2

__all__ = [
    "Heatmap",
    "render_gaussians",
    "dice_loss",
    "cross_entropy_loss",
    "total_loss",
    "gaussian_kernel_2d",
    "extract_peaks",
]

DICE_EPS = 1e-6
CE_CLAMP = 1e-7


@dataclass(frozen=True)
class Heatmap:
    """Row-major (height, width) float32 grid of probabilities in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ShapeMismatch("heatmap must be a 2D grid with positive dims")
        if not np.all(np.isfinite(v)) or v.min() < 0.0 or v.max() > 1.0:
            raise ValueError("heatmap values must be finite and within [0, 1]")
        object.__setattr__(self, "values", v)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


def _grid(x) -> np.ndarray:
    if isinstance(x, Heatmap):
        return x.values
    return np.asarray(x)


def render_gaussians(
    points: Sequence[Point2], sigma: float, width: int, height: int
) -> Heatmap:
    """Render unit-amplitude 2D Gaussians, aggregated with a pixelwise max.

    The value at pixel ``p`` is ``max_i exp(-||p - point_i||^2 / (2 sigma^2))``
    so a point lying exactly on the grid renders a 1.0 peak. Each Gaussian is
    evaluated only within a radius of ``ceil(8 sigma)``; beyond that the
    contribution is below 1e-13, invisible at float32.

    Raises
    ------
    InvalidSigma
        If ``sigma <= 0``.
    """
    if sigma <= 0:
        raise InvalidSigma(f"sigma must be positive, got {sigma}")
    grid = np.zeros((height, width), dtype=np.float64)
    radius = int(np.ceil(8.0 * sigma))
    inv = 1.0 / (2.0 * sigma * sigma)
    for p in points:
        px, py = float(p[0]), float(p[1])
        x0 = max(0, int(np.floor(px)) - radius)
        x1 = min(width, int(np.ceil(px)) + radius + 1)
        y0 = max(0, int(np.floor(py)) - radius)
        y1 = min(height, int(np.ceil(py)) + radius + 1)
        if x0 >= x1 or y0 >= y1:
            continue
        xs = np.arange(x0, x1, dtype=np.float64) - px
        ys = np.arange(y0, y1, dtype=np.float64) - py
        g = np.exp(-(ys[:, None] ** 2 + xs[None, :] ** 2) * inv)
        np.maximum(grid[y0:y1, x0:x1], g, out=grid[y0:y1, x0:x1])
    return Heatmap(values=grid.astype(np.float32))


def _check_shapes(x: np.ndarray, y: np.ndarray) -> None:
    if x.shape != y.shape:
        raise ShapeMismatch(f"shape mismatch: {x.shape} vs {y.shape}")


def dice_loss(x, y) -> float:
    """Soft-Dice variant with squared source and target in the denominator.

    ``1 - (sum(x*y) + eps) / (sum(x^2) + sum(y^2) + eps)`` with ``eps = 1e-6``.
    Note there is no factor 2 in the numerator, so identical nonzero inputs
    score 0.5, not 0. Two all-zero grids score 0 by the smoothing convention.
    """
    xv = _grid(x).astype(np.float64)
    yv = _grid(y).astype(np.float64)
    _check_shapes(xv, yv)
    num = float(np.sum(xv * yv)) + DICE_EPS
    den = float(np.sum(xv * xv)) + float(np.sum(yv * yv)) + DICE_EPS
    return 1.0 - num / den


def cross_entropy_loss(x, y) -> float:
    """Mean binary cross entropy with predictions clamped to [1e-7, 1-1e-7]."""
    xv = _grid(x).astype(np.float64)
    yv = _grid(y).astype(np.float64)
    _check_shapes(xv, yv)
    xc = np.clip(xv, CE_CLAMP, 1.0 - CE_CLAMP)
    return float(np.mean(-(yv * np.log(xc) + (1.0 - yv) * np.log1p(-xc))))


def total_loss(x, y, lambda_ce: float, lambda_dice: float) -> float:
    """Weighted sum ``lambda_ce * CE + lambda_dice * DICE``."""
    if lambda_ce < 0 or lambda_dice < 0:
        raise ValueError("loss weights must be non-negative")
    return lambda_ce * cross_entropy_loss(x, y) + lambda_dice * dice_loss(x, y)


def gaussian_kernel_2d(k: int, sigma: float) -> np.ndarray:
    """Unnormalized k x k Gaussian kernel (center weight exactly 1).

    Leaving the kernel unnormalized keeps the smoothed value at a rendered
    peak >= 1, so any threshold tau < 1 admits every true peak regardless of
    the rendering sigma.
    """
    if k % 2 == 0 or k < 3:
        raise InvalidKernel(f"kernel size must be odd and >= 3, got {k}")
    if sigma <= 0:
        raise InvalidKernel(f"kernel sigma must be positive, got {sigma}")
    ax = np.arange(k, dtype=np.float64) - k // 2
    return np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2.0 * sigma * sigma))


def _conv2d_same(grid: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Zero-padded same-size 2D convolution (kernel is symmetric here)."""
    k = kernel.shape[0]
    pad = k // 2
    padded = np.pad(grid, pad)
    out = np.zeros_like(grid, dtype=np.float64)
    h, w = grid.shape
    for i in range(k):
        for j in range(k):
            out += kernel[i, j] * padded[i : i + h, j : j + w]
    return out


def extract_peaks(h: Heatmap, tau: float, k: int, sigma: float) -> list[Point2]:
    """Integer-coordinate peaks of the Gaussian-smoothed heatmap.

    Smooths with the unnormalized k x k Gaussian kernel (zero padding k//2),
    then keeps pixels that are strict forward-difference maxima along both
    axes with smoothed value > ``tau``. Flat plateaus yield no peak. Returned
    points are ``Point2(x=column, y=row)`` in row-major scan order.

    Raises
    ------
    InvalidKernel
        If ``k`` is even, ``k < 3``, or ``sigma <= 0``.
    """
    kernel = gaussian_kernel_2d(k, sigma)
    grid = _grid(h).astype(np.float64)
    smoothed = _conv2d_same(grid, kernel)

    dx = np.diff(smoothed, axis=1)
    x_peaks = np.zeros(smoothed.shape, dtype=bool)
    x_peaks[:, 1:-1] = (dx[:, :-1] > 0) & (dx[:, 1:] < 0)

    dy = np.diff(smoothed, axis=0)
    y_peaks = np.zeros(smoothed.shape, dtype=bool)
    y_peaks[1:-1, :] = (dy[:-1, :] > 0) & (dy[1:, :] < 0)

    mask = x_peaks & y_peaks & (smoothed > tau)
    rows, cols = np.nonzero(mask)
    return [Point2(int(c), int(r)) for r, c in zip(rows, cols)]
