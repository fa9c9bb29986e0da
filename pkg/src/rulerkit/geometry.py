"""Shared geometric primitives: points, normal-form lines, 2D<->1D projection.

A line is stored in Hough normal form ``x*cos(theta) + y*sin(theta) = rho``
with ``theta`` in [-pi/2, pi/2). Its unit direction vector is fixed as
``(-sin(theta), cos(theta))`` so every 1D coordinate produced by
:func:`project_to_line` is reproducible across runs and platforms.
"""

from __future__ import annotations

import math
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import DegenerateInput, EmptyInput

__all__ = [
    "Point2",
    "HoughLine",
    "line_from_points",
    "project_to_line",
    "unproject_from_line",
]


class Point2(NamedTuple):
    """Image-space point; x grows rightward, y grows downward."""

    x: float
    y: float


class HoughLine(NamedTuple):
    """Line in normal form; theta in [-pi/2, pi/2), rho may be negative."""

    rho: float
    theta: float

    def direction(self) -> tuple[float, float]:
        """Unit direction vector along the line."""
        return (-math.sin(self.theta), math.cos(self.theta))

    def distance(self, p: Point2) -> float:
        """Unsigned point-line distance |rho - (x cos theta + y sin theta)|."""
        return abs(self.rho - (p[0] * math.cos(self.theta) + p[1] * math.sin(self.theta)))


def _normalize_theta(theta: float, rho: float) -> tuple[float, float]:
    # Fold theta into [-pi/2, pi/2); each half-turn flip negates rho.
    while theta >= math.pi / 2:
        theta -= math.pi
        rho = -rho
    while theta < -math.pi / 2:
        theta += math.pi
        rho = -rho
    return theta, rho


def line_from_points(a: Point2, b: Point2) -> HoughLine:
    """Normal-form line through two distinct points.

    Raises
    ------
    DegenerateInput
        If ``a == b`` (no unique line).
    """
    ax, ay = float(a[0]), float(a[1])
    bx, by = float(b[0]), float(b[1])
    if ax == bx and ay == by:
        raise DegenerateInput("line_from_points requires two distinct points")
    # Normal is the direction rotated by -90 degrees.
    theta = math.atan2(by - ay, bx - ax) - math.pi / 2
    rho = ax * math.cos(theta) + ay * math.sin(theta)
    theta, rho = _normalize_theta(theta, rho)
    return HoughLine(rho=rho, theta=theta)


def project_to_line(points: Sequence[Point2], line: HoughLine) -> list[float]:
    """Signed 1D coordinates of the orthogonal projections onto ``line``.

    The coordinate of point ``p`` is ``p . (-sin theta, cos theta)``; input
    order is preserved. For points lying exactly on the line, differences of
    coordinates equal Euclidean distances (projection is an isometry there).

    Raises
    ------
    EmptyInput
        If ``points`` is empty.
    """
    if len(points) == 0:
        raise EmptyInput("project_to_line requires at least one point")
    pts = np.asarray(points, dtype=np.float64).reshape(len(points), 2)
    dx, dy = -math.sin(line.theta), math.cos(line.theta)
    return list(pts[:, 0] * dx + pts[:, 1] * dy)


def unproject_from_line(marks: Iterable[float], line: HoughLine) -> list[Point2]:
    """Image-space feet of the 1D coordinates: ``rho*n + t*d`` per mark."""
    nx, ny = math.cos(line.theta), math.sin(line.theta)
    dx, dy = -ny, nx
    return [
        Point2(line.rho * nx + float(t) * dx, line.rho * ny + float(t) * dy)
        for t in marks
    ]
