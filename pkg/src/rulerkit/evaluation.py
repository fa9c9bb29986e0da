"""Ground-truth protocols, the mAPE/cm@n metric, and the benchmark harness.

Ground truth comes either from annotated cm-mark points (median adjacent
spacing of the largest mark set) or from annotated ruler lines (pixel
length over physical length of the longest ruler). The headline metric is
the mean absolute pixel error per centimeter normalized to a reference
resolution ``n``; failed estimates enter as a predicted scale of zero.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import EmptyDataset, NoRulers
from .geometry import Point2

__all__ = [
    "PointAnnotation",
    "LineAnnotation",
    "EvalRecord",
    "gt_scale_from_points",
    "gt_scale_from_lines",
    "mape_per_cm_at_n",
    "run_benchmark",
]

DEFAULT_N = 768


@dataclass(frozen=True)
class PointAnnotation:
    """Per-image cm-mark annotation: (ruler id, mark points) pairs."""

    rulers: list[tuple[object, list[Point2]]]
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        for rid, marks in self.rulers:
            if len(marks) < 2:
                raise ValueError(f"ruler {rid!r} has fewer than 2 marks")


@dataclass(frozen=True)
class LineAnnotation:
    """Per-image ruler-line annotation: (id, (p0, p1), length_cm) triples."""

    rulers: list[tuple[object, tuple[Point2, Point2], float]]
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        for rid, (p0, p1), length_cm in self.rulers:
            if length_cm <= 0:
                raise ValueError(f"ruler {rid!r} has non-positive length_cm")
            if p0 == p1:
                raise ValueError(f"ruler {rid!r} endpoints coincide")


@dataclass(frozen=True)
class EvalRecord:
    """One benchmark row housing p_i, q_i, s_i of the metric."""

    image_id: object
    predicted: float  # pixels/cm; 0 encodes failure
    ground_truth: float
    size: float  # the per-image normalizer s_i (max image side)
    elapsed_ms: float = 0.0
    error: str | None = None

    def __post_init__(self):
        if self.size <= 0:
            raise ValueError("size must be positive")
        if self.predicted < 0:
            raise ValueError("predicted scale must be >= 0")

    def to_dict(self) -> dict:
        d = {
            "id": self.image_id,
            "predicted": self.predicted,
            "ground_truth": self.ground_truth,
            "size": self.size,
            "elapsed_ms": self.elapsed_ms,
        }
        if self.error is not None:
            d["error"] = self.error
        return d


def gt_scale_from_points(a: PointAnnotation) -> float:
    """Median adjacent mark spacing of the ruler with the most marks.

    Marks are ordered by projecting onto their principal (least-squares)
    line, then adjacent Euclidean distances are taken; ties on mark count
    go to the earlier ruler in annotation order.

    Raises
    ------
    NoRulers
        If the annotation lists no rulers.
    """
    if not a.rulers:
        raise NoRulers("point annotation contains no rulers")
    best_scale, best_count = None, -1
    for _, marks in a.rulers:
        pts = np.asarray([(p.x, p.y) for p in marks], dtype=np.float64)
        centered = pts - pts.mean(axis=0)
        # Principal direction of the mark cloud orders the marks 1D.
        _, _, vt = np.linalg.svd(centered, full_matrices=False)
        order = np.argsort(centered @ vt[0])
        ordered = pts[order]
        gaps = np.linalg.norm(np.diff(ordered, axis=0), axis=1)
        scale = float(np.median(gaps))
        if len(marks) > best_count:
            best_scale, best_count = scale, len(marks)
    return float(best_scale)


def gt_scale_from_lines(a: LineAnnotation) -> float:
    """Pixels/cm of the ruler with the greatest pixel length.

    Raises
    ------
    NoRulers
        If the annotation lists no rulers.
    """
    if not a.rulers:
        raise NoRulers("line annotation contains no rulers")
    best_scale, best_len = None, -1.0
    for _, (p0, p1), length_cm in a.rulers:
        px = math.hypot(p1.x - p0.x, p1.y - p0.y)
        if px > best_len:
            best_len, best_scale = px, px / length_cm
    return float(best_scale)


def mape_per_cm_at_n(records: Sequence[EvalRecord], n: float = DEFAULT_N) -> float:
    """Mean absolute pixel error per cm at reference resolution ``n``:
    (1/|Q|) sum n * |p_i - q_i| / s_i.

    Raises
    ------
    EmptyDataset
        If no records are given.
    """
    if not records:
        raise EmptyDataset("metric needs at least one record")
    total = 0.0
    for rec in records:
        total += n * abs(rec.predicted - rec.ground_truth) / rec.size
    return total / len(records)


def run_benchmark(
    dataset: Sequence[tuple[object, object, float, float]],
    estimator: Callable[[object], float],
    n: float = DEFAULT_N,
) -> dict:
    """Serial timed benchmark over (id, input, gt_scale, size) items.

    The estimator receives each item's input and returns pixels/cm, or an
    object with ``pixels_per_cm``/``status`` fields. Estimator exceptions
    and failed statuses are recorded as predicted 0. ``ms_per_sample``
    averages elapsed time after discarding the first ``ceil(0.1*N)``
    records in processing order.

    Raises
    ------
    EmptyDataset
        If the dataset is empty.
    """
    if not dataset:
        raise EmptyDataset("benchmark needs at least one sample")
    records: list[EvalRecord] = []
    for image_id, payload, gt_scale, size in dataset:
        start = time.perf_counter()
        error = None
        try:
            result = estimator(payload)
            status = getattr(result, "status", "ok")
            predicted = float(getattr(result, "pixels_per_cm", result))
            if status != "ok":
                predicted = 0.0
        except Exception as exc:  # failure convention: scale 0, keep going
            predicted = 0.0
            error = f"{type(exc).__name__}: {exc}"
        elapsed_ms = (time.perf_counter() - start) * 1e3
        records.append(
            EvalRecord(
                image_id=image_id,
                predicted=predicted,
                ground_truth=float(gt_scale),
                size=float(size),
                elapsed_ms=elapsed_ms,
                error=error,
            )
        )
    discard = math.ceil(0.1 * len(records))
    timed = records[discard:]
    ms = float(np.mean([r.elapsed_ms for r in timed])) if timed else 0.0
    return {
        "n": n,
        "mape": mape_per_cm_at_n(records, n),
        "ms_per_sample": ms,
        "records": records,
    }
