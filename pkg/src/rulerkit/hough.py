"""Hough transform over detected mark points: dominant-line selection.

The accumulator follows the standard voting recipe: theta grid over
[-90, 90) degrees, rho binned by ``searchsorted`` against edges from
``-rho_max`` to ``rho_max + delta_rho``, votes smoothed with a small kernel,
candidate bins above ``peak_fraction * max``, and candidate support counted by
re-assigning every input point with the predicate
``|rho - (x cos theta + y sin theta)| < delta_rho``.

Support ties are broken by the smallest total inlier residual (the candidate
whose bin edge sits closest to its own inliers), then by theta-bin and
rho-bin index. Quantized accumulators produce long plateaus of equal-support
bins around the true line; the residual rule picks the geometrically central
one, and the index rules only guarantee determinism on exact residual ties.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import TooFewPoints
from .geometry import HoughLine, Point2

__all__ = [
    "DEFAULT_SMOOTHING_KERNEL",
    "HoughConfig",
    "LineDetection",
    "hough_dominant_line",
    "hough_all_lines",
]

# Normalized 3x3 binomial kernel; the minimal smoothing for a padding-1 conv.
DEFAULT_SMOOTHING_KERNEL = (
    np.array([[1.0, 2.0, 1.0], [2.0, 4.0, 2.0], [1.0, 2.0, 1.0]]) / 16.0
)


@dataclass(frozen=True)
class HoughConfig:
    """Accumulator resolution and peak-selection parameters."""

    delta_theta: float = 1.0  # degrees per angle bin
    delta_rho: float = 2.0  # pixels per rho bin
    peak_fraction: float = 0.3
    smoothing_kernel: np.ndarray = field(
        default_factory=lambda: DEFAULT_SMOOTHING_KERNEL.copy()
    )

    def __post_init__(self):
        if self.delta_theta <= 0 or self.delta_rho <= 0:
            raise ValueError("delta_theta and delta_rho must be positive")
        if not 0.0 < self.peak_fraction < 1.0:
            raise ValueError("peak_fraction must lie in (0, 1)")
        k = np.asarray(self.smoothing_kernel, dtype=np.float64)
        if k.ndim != 2 or k.shape[0] % 2 == 0 or k.shape[0] != k.shape[1]:
            raise ValueError("smoothing kernel must be square with odd size")
        object.__setattr__(self, "smoothing_kernel", k)


@dataclass(frozen=True)
class LineDetection:
    """A line hypothesis with the points assigned to it."""

    line: HoughLine
    inliers: list[Point2]
    support: int


def _conv2d_same(grid: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    k = kernel.shape[0]
    pad = k // 2
    padded = np.pad(grid, pad)
    out = np.zeros_like(grid, dtype=np.float64)
    h, w = grid.shape
    for i in range(k):
        for j in range(k):
            out += kernel[i, j] * padded[i : i + h, j : j + w]
    return out


def _dominant_candidate(
    pts: np.ndarray, cfg: HoughConfig
) -> tuple[HoughLine, np.ndarray, int]:
    """Winning (line, assignment mask over pts, support) for one Hough pass."""
    x, y = pts[:, 0], pts[:, 1]
    theta = np.deg2rad(np.arange(-90.0, 90.0, cfg.delta_theta))
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    rho = x[:, None] * cos_t[None, :] + y[:, None] * sin_t[None, :]

    rho_max = float(np.ceil(np.max(np.hypot(x, y))))
    edges = np.arange(-rho_max, rho_max + cfg.delta_rho, cfg.delta_rho)
    idx = np.searchsorted(edges, rho, side="left")
    # Guard the last ulp: |rho| can exceed rho_max by rounding when the max
    # norm is an exact integer.
    np.clip(idx, 0, len(edges) - 1, out=idx)

    n_theta = len(theta)
    lin = idx * n_theta + np.arange(n_theta)[None, :]
    votes = np.bincount(lin.ravel(), minlength=len(edges) * n_theta)
    acc = votes.reshape(len(edges), n_theta).astype(np.float64)
    acc = _conv2d_same(acc, cfg.smoothing_kernel)

    mask = acc > cfg.peak_fraction * acc.max()
    cand_r, cand_t = np.nonzero(mask)
    R = edges[cand_r]
    T = theta[cand_t]

    dist = np.abs(
        R[:, None] - (x[None, :] * np.cos(T)[:, None] + y[None, :] * np.sin(T)[:, None])
    )
    assign = dist < cfg.delta_rho
    support = assign.sum(axis=1)
    residual = np.where(assign, dist, 0.0).sum(axis=1)

    # Lexicographic selection: max support, min residual, min theta bin,
    # min rho bin.
    order = np.lexsort((cand_r, cand_t, residual, -support))
    k = order[0]
    line = HoughLine(rho=float(R[k]), theta=float(T[k]))
    return line, assign[k], int(support[k])


def hough_dominant_line(points: Sequence[Point2], cfg: HoughConfig | None = None) -> LineDetection:
    """Detect the line with the largest point support.

    Raises
    ------
    TooFewPoints
        If fewer than two points are given.
    """
    if len(points) < 2:
        raise TooFewPoints(f"need >= 2 points, got {len(points)}")
    cfg = cfg or HoughConfig()
    pts = np.asarray(points, dtype=np.float64).reshape(len(points), 2)
    line, assigned, support = _dominant_candidate(pts, cfg)
    inliers = [Point2(float(p[0]), float(p[1])) for p in pts[assigned]]
    return LineDetection(line=line, inliers=inliers, support=support)


def hough_all_lines(
    points: Sequence[Point2], cfg: HoughConfig | None = None, max_lines: int = 8
) -> list[LineDetection]:
    """Greedy multi-line peeling: detect, remove inliers, repeat.

    Stops when fewer than two points remain, the next detection has fewer
    than three inliers, or ``max_lines`` detections were produced. Inlier
    sets are pairwise disjoint by construction; results are ordered by
    support descending (stable in peel order).

    Raises
    ------
    TooFewPoints
        If fewer than two points are given initially.
    """
    if len(points) < 2:
        raise TooFewPoints(f"need >= 2 points, got {len(points)}")
    cfg = cfg or HoughConfig()
    pts = np.asarray(points, dtype=np.float64).reshape(len(points), 2)
    remaining = np.arange(len(points))
    detections: list[LineDetection] = []
    while len(remaining) >= 2 and len(detections) < max_lines:
        line, assigned, support = _dominant_candidate(pts[remaining], cfg)
        if support < 3:
            break
        chosen = remaining[assigned]
        inliers = [Point2(float(pts[i, 0]), float(pts[i, 1])) for i in chosen]
        detections.append(LineDetection(line=line, inliers=inliers, support=support))
        remaining = remaining[~assigned]
    detections.sort(key=lambda d: -d.support)
    return detections
