"""Geometric-progression scale recovery.

A straight ruler seen under perspective has cm marks whose 1D coordinates
form a geometric progression of gaps: ``gap_{i+1} = r * gap_i``. This module
generates such sequences, scores candidates against detected marks with a 1D
Chamfer distance, and recovers ``(m0, m1, r)`` by differential evolution
under box constraints, plus the two non-GP baseline estimators.

Spanning sequences are evaluated with the closed form
``m_i = m0 + d * (1 - r^i) / (1 - r)`` (``m0 + i*d`` when r == 1), extended
over negative and positive indices, and truncated to marks inside
``[lo, hi]`` inclusive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateSpan,
    EmptyInput,
    InvalidParams,
    TooFewMarks,
)

__all__ = [
    "R_MIN",
    "R_MAX",
    "SPACING_GUARD",
    "GPParams",
    "FitConfig",
    "ScaleEstimate",
    "gp_generate",
    "gp_generate_spanning",
    "chamfer_1d",
    "chamfer_1d_bruteforce",
    "chamfer_1d_sorted",
    "default_bounds",
    "fit_gp_de",
    "estimate_direct",
    "estimate_median_filtered",
    "scale_from_gp",
]

R_MAX = 1.5
R_MIN = 1.0 / 1.5
# Minimum gap in pixels; gaps below this would make spanning sequences
# effectively infinite.
SPACING_GUARD = 0.5
# A DE run hands over to the polish pass once its best score is within this
# fraction of the smallest mark gap: refining further by mutation alone costs
# hundreds of generations that a local simplex covers in microseconds.
BASIN_FRAC = 0.02
# Generations without a relative best-score improvement of at least 0.1%
# before a run gives up (noisy marks have a nonzero optimum, so neither the
# basin threshold nor population collapse may ever fire).
STALL_GENERATIONS = 80


@dataclass(frozen=True)
class GPParams:
    """Perspective-invariant ruler representation: first two marks + ratio."""

    m0: float
    m1: float
    r: float

    def __post_init__(self):
        if not (
            math.isfinite(self.m0) and math.isfinite(self.m1) and math.isfinite(self.r)
        ):
            raise InvalidParams("GP parameters must be finite")
        if self.m0 == self.m1:
            raise InvalidParams("m0 and m1 must differ")
        if self.r <= 0:
            raise InvalidParams(f"common ratio must be positive, got {self.r}")

    @property
    def spacing(self) -> float:
        return self.m1 - self.m0


@dataclass(frozen=True)
class FitConfig:
    """Box constraints and differential-evolution hyperparameters."""

    r_min: float = R_MIN
    r_max: float = R_MAX
    d_min: float = 1.0
    d_max: float = 1.0
    population: int = 45
    max_generations: int = 1000
    crossover_prob: float = 0.7
    # None means per-generation dithering in [0.5, 1.0].
    differential_weight: float | None = None
    seed: int = 0
    # A run stops once the population has collapsed:
    # std(scores) <= tolerance * |mean(scores)|.
    tolerance: float = 0.01
    # Independent DE runs (seeded from `seed`); the best result wins. Runs
    # after the first are skipped once the best objective drops below
    # accept_frac * the smallest positive mark gap (the dense-end resolution;
    # a mean-based threshold would bless one-mark-shifted fits when gaps
    # differ by orders of magnitude).
    restarts: int = 3
    accept_frac: float = 1e-3

    def __post_init__(self):
        if not 0 < self.r_min < self.r_max:
            raise ValueError("need 0 < r_min < r_max")
        if not 0 < self.d_min <= self.d_max:
            raise ValueError("need 0 < d_min <= d_max")
        if self.population < 8:
            raise ValueError("population must be >= 8")
        if not 0 <= self.crossover_prob <= 1:
            raise ValueError("crossover_prob must lie in [0, 1]")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.accept_frac < 0:
            raise ValueError("accept_frac must be >= 0")


@dataclass(frozen=True)
class ScaleEstimate:
    """A pixels/cm verdict; failure is encoded, never raised."""

    pixels_per_cm: float
    status: str  # "ok" or "failed"
    params: GPParams | None = None
    marks_used: int = 0

    def __post_init__(self):
        if self.status not in ("ok", "failed"):
            raise ValueError(f"status must be 'ok' or 'failed', got {self.status!r}")
        if self.status == "failed" and self.pixels_per_cm != 0.0:
            raise ValueError("failed estimates must carry pixels_per_cm == 0")


def _failed() -> ScaleEstimate:
    return ScaleEstimate(pixels_per_cm=0.0, status="failed")


def gp_generate(params: GPParams, n: int) -> list[float]:
    """First ``n`` marks of the GP via the recurrence
    ``m_i = r*(m_{i-1} - m_{i-2}) + m_{i-1}``."""
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    marks = [params.m0, params.m1]
    for _ in range(n - 2):
        marks.append(params.r * (marks[-1] - marks[-2]) + marks[-1])
    return marks


def _closed_form(m0: float, d: float, r: float, i: int) -> float:
    if r == 1.0:
        return m0 + d * i
    return m0 + d * (1.0 - r**i) / (1.0 - r)


def gp_generate_spanning(params: GPParams, lo: float, hi: float) -> list[float]:
    """GP marks extended from (m0, m1) both ways, clipped to ``[lo, hi]``.

    Extension in each index direction stops one mark past the span boundary,
    or when the local gap falls below :data:`SPACING_GUARD` (convergent
    tails for r != 1 would otherwise never terminate). The returned list is
    ascending. If fewer than two generated marks land inside the span, the
    two generated marks nearest to it are returned instead so the result is
    always usable as a Chamfer operand.

    Raises
    ------
    DegenerateSpan
        If ``lo >= hi`` or the initial spacing is below the 0.5 px guard.
    """
    if not lo < hi:
        raise DegenerateSpan(f"need lo < hi, got [{lo}, {hi}]")
    m0, d, r = params.m0, params.spacing, params.r
    if abs(d) < SPACING_GUARD:
        raise DegenerateSpan(f"initial spacing {abs(d)} px below {SPACING_GUARD} px guard")

    def extend(step: int) -> list[float]:
        # Walk indices i = step, 2*step, ... until past the boundary the walk
        # is heading toward, the gap collapses, or the values blow up.
        out: list[float] = []
        prev = m0
        i = step
        heading_up = (d > 0) == (step > 0)
        for _ in range(1_000_000):
            v = _closed_form(m0, d, r, i)
            if not math.isfinite(v):
                break
            if abs(v - prev) < SPACING_GUARD:
                break
            out.append(v)
            if heading_up and v > hi:
                break
            if not heading_up and v < lo:
                break
            prev = v
            i += step
        return out

    forward = extend(1)
    backward = extend(-1)
    seq = backward[::-1] + [m0] + forward
    if d < 0:
        seq = seq[::-1]
    inside = [v for v in seq if lo <= v <= hi]
    if len(inside) >= 2:
        return inside

    # Degenerate placement: no two marks in the span. Keep the two closest.
    def gap_to_span(v: float) -> float:
        return max(lo - v, v - hi, 0.0)

    nearest = sorted(seq, key=lambda v: (gap_to_span(v), v))[:2]
    return sorted(nearest)


def _as_1d(a: Sequence[float], name: str) -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64).ravel()
    if arr.size == 0:
        raise EmptyInput(f"{name} must be non-empty")
    return arr


def _directed_mean_sorted(src: np.ndarray, dst_sorted: np.ndarray) -> float:
    idx = np.searchsorted(dst_sorted, src)
    left = np.clip(idx - 1, 0, len(dst_sorted) - 1)
    right = np.clip(idx, 0, len(dst_sorted) - 1)
    d = np.minimum(np.abs(src - dst_sorted[left]), np.abs(src - dst_sorted[right]))
    return float(np.mean(d))


def chamfer_1d_sorted(a: Sequence[float], b: Sequence[float]) -> float:
    """O(n log n) Chamfer: sum of the two directed mean nearest distances."""
    av = _as_1d(a, "a")
    bv = _as_1d(b, "b")
    return _directed_mean_sorted(av, np.sort(bv)) + _directed_mean_sorted(
        bv, np.sort(av)
    )


def chamfer_1d_bruteforce(a: Sequence[float], b: Sequence[float]) -> float:
    """O(n^2) Chamfer used as the oracle for the sorted implementation."""
    av = _as_1d(a, "a")
    bv = _as_1d(b, "b")
    dist = np.abs(av[:, None] - bv[None, :])
    return float(np.mean(dist.min(axis=1)) + np.mean(dist.min(axis=0)))


chamfer_1d = chamfer_1d_sorted


def default_bounds(marks: Sequence[float]) -> tuple[float, float, float, float]:
    """(r_min, r_max, d_min, d_max) from adjacent distances of sorted marks.

    Zero adjacent distances (exact duplicates) are ignored; if every distance
    is zero there is nothing to fit.

    Raises
    ------
    TooFewMarks
        If fewer than two marks, or all marks are identical.
    """
    arr = np.sort(_as_1d(marks, "marks")) if len(marks) else np.empty(0)
    if arr.size < 2:
        raise TooFewMarks(f"need >= 2 marks, got {arr.size}")
    diffs = np.diff(arr)
    diffs = diffs[diffs > 0]
    if diffs.size == 0:
        raise TooFewMarks("all marks identical; no adjacent distances")
    return R_MIN, R_MAX, float(diffs.min()), float(diffs.max())


def _fit_box(marks_sorted: np.ndarray, cfg: FitConfig) -> tuple[np.ndarray, np.ndarray]:
    d_min, d_max = cfg.d_min, cfg.d_max
    if d_min == d_max:
        # A zero-volume d box stalls Latin hypercube placement; widen 10%.
        d_min, d_max = 0.9 * d_min, 1.1 * d_max
    lo = marks_sorted[0]
    box_lo = np.array([lo - cfg.d_max, d_min, cfg.r_min], dtype=np.float64)
    box_hi = np.array([lo + cfg.d_max, d_max, cfg.r_max], dtype=np.float64)
    return box_lo, box_hi


def _first_true(mask: np.ndarray, none_value: int) -> np.ndarray:
    """Column index of the first True per row, or ``none_value`` if none."""
    idx = mask.argmax(axis=1)
    return np.where(mask.any(axis=1), idx, none_value)


def _objective_batch(
    arr: np.ndarray, lo: float, hi: float, cand: np.ndarray, cap: int
) -> np.ndarray:
    """Chamfer-against-spanning objective for a block of candidates.

    ``cand`` is ``(P, 3)`` rows of ``(m0, d, r)`` with ``d > 0`` and
    ``r > 0`` (the fit box guarantees both). Per row this equals
    ``chamfer_1d(arr, gp_generate_spanning(GPParams(m0, m0 + d, r), lo, hi))``
    up to power-function and summation-order rounding (numpy's pow and
    Python's ``**`` may differ in the last ulp, and the padded reductions
    group additions differently), with two infinite short-circuits: spacing below
    the 0.5 px guard (the scalar path raises DegenerateSpan there), and
    candidates placing more than ``cap`` marks in the span or walking more
    than ``cap + 2`` steps in one direction. Short-circuited candidates are
    dense combs oversampling the span or long sub-span crawls; neither can
    beat a candidate that matches the observed mark count, so pruning them
    only speeds up the search.
    """
    pop_n = cand.shape[0]
    scores = np.full(pop_n, math.inf)
    m0 = cand[:, 0:1]
    d = cand[:, 1:2]
    r = cand[:, 2:3]
    ok = (np.abs(d[:, 0]) >= SPACING_GUARD) & (lo < hi)
    if not ok.any():
        return scores

    # Closed-form values on a shared index grid wide enough that any row not
    # stopping inside it is over the cap anyway.
    width = cap + 2
    idx_fwd = np.arange(1, width + 1, dtype=np.float64)
    none = width + 5
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        is_unit = r == 1.0
        denom = np.where(is_unit, 1.0, 1.0 - r)
        v_fwd = np.where(
            is_unit,
            m0 + d * idx_fwd,
            m0 + (d * (1.0 - np.power(r, idx_fwd))) / denom,
        )
        v_bwd = np.where(
            is_unit,
            m0 + d * -idx_fwd,
            m0 + (d * (1.0 - np.power(r, -idx_fwd))) / denom,
        )
        gap_fwd = np.abs(np.diff(v_fwd, axis=1, prepend=m0))
        gap_bwd = np.abs(np.diff(v_bwd, axis=1, prepend=m0))

    # Mirror the scalar walk: a sub-guard or non-finite value stops the walk
    # before being kept; the first value past the boundary is kept, then the
    # walk stops. d > 0 means the forward walk heads up, the backward down.
    guard_f = _first_true(~np.isfinite(v_fwd) | (gap_fwd < SPACING_GUARD), none)
    guard_b = _first_true(~np.isfinite(v_bwd) | (gap_bwd < SPACING_GUARD), none)
    over_f = _first_true(v_fwd > hi, none)
    under_b = _first_true(v_bwd < lo, none)
    keep_f = np.minimum(guard_f, over_f + 1)
    keep_b = np.minimum(guard_b, under_b + 1)
    cols = np.arange(width)
    count_in = (
        ((v_fwd >= lo) & (v_fwd <= hi) & (cols < keep_f[:, None])).sum(axis=1)
        + ((v_bwd >= lo) & (v_bwd <= hi) & (cols < keep_b[:, None])).sum(axis=1)
        + ((m0[:, 0] >= lo) & (m0[:, 0] <= hi))
    )
    ok &= (keep_f <= width) & (keep_b <= width) & (count_in <= cap)

    ok_idx = np.nonzero(ok)[0]
    if ok_idx.size == 0:
        return scores
    kb = keep_b[ok_idx]
    kf = keep_f[ok_idx]
    kb_max = int(kb.max())
    kf_max = int(kf.max())
    # Padded block of every kept mark; a min-distance reduction is order-free,
    # so the backward half stays unreversed.
    vals = np.concatenate(
        [v_bwd[ok_idx, :kb_max], m0[ok_idx], v_fwd[ok_idx, :kf_max]], axis=1
    )
    kept = np.concatenate(
        [
            np.arange(kb_max)[None, :] < kb[:, None],
            np.ones((ok_idx.size, 1), dtype=bool),
            np.arange(kf_max)[None, :] < kf[:, None],
        ],
        axis=1,
    )
    with np.errstate(invalid="ignore"):
        valid = kept & (vals >= lo) & (vals <= hi)
        counts = valid.sum(axis=1)
        # One |comb mark - detected mark| tensor serves both directions.
        dist = np.abs(vals[:, :, None] - arr[None, None, :])
        comb_to_arr = np.where(valid, dist.min(axis=2), 0.0).sum(axis=1)
        arr_to_comb = np.where(valid[:, :, None], dist, np.inf).min(axis=1)
        both = comb_to_arr / np.maximum(counts, 1) + arr_to_comb.mean(axis=1)
    full = counts >= 2
    scores[ok_idx[full]] = both[full]
    # Fewer than two marks in the span: defer to the scalar path and its
    # nearest-two fallback.
    for i in ok_idx[~full]:
        try:
            gen = gp_generate_spanning(
                GPParams(m0[i, 0], m0[i, 0] + d[i, 0], r[i, 0]), lo, hi
            )
        except (DegenerateSpan, InvalidParams):
            continue
        scores[i] = chamfer_1d_sorted(arr, gen)
    return scores


def _de_attempt(
    arr: np.ndarray,
    lo: float,
    hi: float,
    box_lo: np.ndarray,
    box_span: np.ndarray,
    cfg: FitConfig,
    seed_key: list[int],
    cap: int,
    break_at: float,
) -> tuple[np.ndarray, np.ndarray]:
    """One rand/1/bin DE run in the unit cube.

    Stops on any of: best score at or below ``break_at`` (a basin was
    reached), population collapse, a best-score stall of
    ``STALL_GENERATIONS`` generations, or the generation cap. Returns the
    final population and its batch scores; the caller re-scores the leaders
    with the exact scalar objective (batch and scalar evaluations can
    disagree at span-boundary cliffs, and DE gravitates to whichever side
    scores lower) and polishes the winner.
    """
    rng = np.random.default_rng(seed_key)
    pop_n = cfg.population
    strata = np.empty((pop_n, 3), dtype=np.float64)
    for j in range(3):
        strata[:, j] = rng.permutation(pop_n)
    pop = (strata + rng.random((pop_n, 3))) / pop_n
    scores = _objective_batch(arr, lo, hi, box_lo + pop * box_span, cap)

    rows = np.arange(pop_n)
    best_seen = float(scores.min())
    last_gain = 0
    for gen in range(cfg.max_generations):
        weight = (
            rng.uniform(0.5, 1.0)
            if cfg.differential_weight is None
            else cfg.differential_weight
        )
        # Row-wise random permutations; dropping the self index leaves three
        # distinct mates per row.
        perm = np.argsort(rng.random((pop_n, pop_n)), axis=1)
        mates = perm[perm != rows[:, None]].reshape(pop_n, pop_n - 1)
        mutant = pop[mates[:, 0]] + weight * (pop[mates[:, 1]] - pop[mates[:, 2]])
        np.clip(mutant, 0.0, 1.0, out=mutant)
        cross = rng.random((pop_n, 3)) < cfg.crossover_prob
        cross[rows, rng.integers(0, 3, pop_n)] = True
        trial = np.where(cross, mutant, pop)
        trial_scores = _objective_batch(arr, lo, hi, box_lo + trial * box_span, cap)
        improved = trial_scores <= scores
        pop[improved] = trial[improved]
        scores[improved] = trial_scores[improved]
        current = float(scores.min())
        # Basin exit: the caller's polish pass takes it from here.
        if current <= break_at:
            break
        if current < best_seen and (
            not math.isfinite(best_seen)
            or best_seen - current > 1e-3 * abs(best_seen)
        ):
            best_seen = current
            last_gain = gen
        elif gen - last_gain >= STALL_GENERATIONS:
            break
        # Population-collapse convergence: keep searching through plateaus
        # while the population is still spread out.
        if np.isfinite(scores).all() and float(np.std(scores)) <= cfg.tolerance * abs(
            float(np.mean(scores))
        ):
            break

    return scores, pop


def _scalar_objective(arr: np.ndarray, lo: float, hi: float, params: GPParams) -> float:
    try:
        gen = gp_generate_spanning(params, lo, hi)
    except (DegenerateSpan, InvalidParams):
        return math.inf
    return chamfer_1d_sorted(arr, gen)


def _polish(
    arr: np.ndarray,
    lo: float,
    hi: float,
    params: GPParams,
    box_lo: np.ndarray,
    box_span: np.ndarray,
    max_evals: int = 240,
) -> tuple[GPParams | None, float]:
    """Deterministic Nelder-Mead refinement on the exact scalar objective.

    DE runs hand over as soon as they are inside a basin; this closes the
    remaining distance in a few hundred evaluations instead of hundreds more
    generations. The objective is piecewise linear near an optimum, so a
    simplex handles the kinks a gradient method would trip on. Vertices are
    clipped to the unit cube, keeping the result inside the documented box.
    """

    def score(u: np.ndarray) -> float:
        m0, d, r = box_lo + u * box_span
        try:
            cand = GPParams(float(m0), float(m0 + d), float(r))
        except InvalidParams:
            return math.inf
        return _scalar_objective(arr, lo, hi, cand)

    u0 = np.clip(
        (np.array([params.m0, params.m1 - params.m0, params.r]) - box_lo) / box_span,
        0.0,
        1.0,
    )
    pts = [u0]
    for j in range(3):
        v = u0.copy()
        v[j] += 0.02 if v[j] + 0.02 <= 1.0 else -0.02
        pts.append(v)
    pts = np.array(pts)
    vals = np.array([score(p) for p in pts])
    evals = 4
    while evals < max_evals:
        order = np.argsort(vals, kind="stable")
        pts, vals = pts[order], vals[order]
        if float(np.max(np.abs(pts[1:] - pts[0]))) < 1e-13:
            break
        centroid = pts[:-1].mean(axis=0)
        refl = np.clip(centroid + (centroid - pts[-1]), 0.0, 1.0)
        f_refl = score(refl)
        evals += 1
        if f_refl < vals[0]:
            expd = np.clip(centroid + 2.0 * (centroid - pts[-1]), 0.0, 1.0)
            f_expd = score(expd)
            evals += 1
            if f_expd < f_refl:
                pts[-1], vals[-1] = expd, f_expd
            else:
                pts[-1], vals[-1] = refl, f_refl
        elif f_refl < vals[-2]:
            pts[-1], vals[-1] = refl, f_refl
        else:
            if f_refl < vals[-1]:
                contr = np.clip(centroid + 0.5 * (refl - centroid), 0.0, 1.0)
            else:
                contr = np.clip(centroid + 0.5 * (pts[-1] - centroid), 0.0, 1.0)
            f_contr = score(contr)
            evals += 1
            if f_contr < min(f_refl, float(vals[-1])):
                pts[-1], vals[-1] = contr, f_contr
            else:
                for k in (1, 2, 3):
                    pts[k] = np.clip(pts[0] + 0.5 * (pts[k] - pts[0]), 0.0, 1.0)
                    vals[k] = score(pts[k])
                evals += 3
    k = int(np.argmin(vals))
    m0, d, r = box_lo + pts[k] * box_span
    try:
        return GPParams(float(m0), float(m0 + d), float(r)), float(vals[k])
    except InvalidParams:
        return None, math.inf


def _mirror_candidate(
    u: np.ndarray,
    box_lo_m: np.ndarray,
    box_span_m: np.ndarray,
    lo_m: float,
    hi_m: float,
    fwd_box_lo: np.ndarray,
    fwd_box_hi: np.ndarray,
) -> GPParams | None:
    """Map a mirror-frame DE result back to an original-frame candidate.

    A GP comb negated is still a GP comb with ratio 1/r, so the mirror
    winner's spanning sequence, reflected, yields original-frame parameters
    anchored at its two lowest marks. Coordinates are clipped into the
    forward box so the candidate respects the documented bounds.
    """
    m0_m, d_m, r_m = box_lo_m + u * box_span_m
    try:
        comb = gp_generate_spanning(GPParams(m0_m, m0_m + d_m, r_m), lo_m, hi_m)
    except (DegenerateSpan, InvalidParams):
        return None
    m0, m1 = -comb[-1], -comb[-2]
    vec = np.clip(
        np.array([m0, m1 - m0, 1.0 / r_m], dtype=np.float64), fwd_box_lo, fwd_box_hi
    )
    try:
        return GPParams(float(vec[0]), float(vec[0] + vec[1]), float(vec[2]))
    except InvalidParams:
        return None


def fit_gp_de(marks: Sequence[float], cfg: FitConfig | None = None) -> GPParams:
    """Fit (m0, d, r) with restarted, dual-orientation rand/1/bin DE.

    Minimizes ``chamfer_1d(marks, gp_generate_spanning(candidate, lo, hi))``
    over the box ``m0 in [lo - d_max, lo + d_max]``, ``d in [d_min, d_max]``,
    ``r in [r_min, r_max]`` with ``m1 = m0 + d``. Each run initializes its
    population by Latin hypercube sampling and searches the unit cube
    (coordinates mapped affinely to the box) so identical seeds follow
    identical trajectories regardless of mark scale; the differential weight
    dithers in [0.5, 1.0] per generation unless pinned in the config. A run
    stops once the population collapses (score std within ``tolerance`` of
    the mean score), its best score reaches the basin threshold
    (``BASIN_FRAC`` of the smallest positive mark gap), or the best score
    stalls for ``STALL_GENERATIONS`` generations; a deterministic
    Nelder-Mead pass then polishes the best candidate on the exact scalar
    objective, which is far cheaper than mutating to convergence.

    The landscape is multimodal, and marks whose gaps shrink toward the high
    end (r < 1) are much harder to anchor than their mirror image: combs
    started at a sparse end can stop short of the far boundary, flattening
    the objective. Runs therefore alternate between the marks as given and
    their negated reflection (where r maps to 1/r), up to ``restarts`` runs
    per orientation, each seeded from ``(seed, orientation, run)``; mirror
    winners are reflected back into original-frame parameters. Every run's
    leading candidates are re-scored with the exact scalar objective (the
    vectorized evaluation can disagree with it by an ulp at span-boundary
    cliffs, which the optimizer otherwise exploits). The candidate with the
    lowest objective wins; remaining runs are skipped once it drops below
    ``accept_frac`` times the smallest positive mark gap. Deterministic
    given the seed.

    Raises
    ------
    TooFewMarks
        If fewer than three marks are given.
    """
    arr = np.sort(np.asarray(marks, dtype=np.float64).ravel())
    if arr.size < 3:
        raise TooFewMarks(f"need >= 3 marks, got {arr.size}")
    if cfg is None:
        r_min, r_max, d_min, d_max = default_bounds(arr)
        cfg = FitConfig(r_min=r_min, r_max=r_max, d_min=d_min, d_max=d_max)

    lo, hi = float(arr[0]), float(arr[-1])
    box_lo, box_hi = _fit_box(arr, cfg)
    box_span = box_hi - box_lo
    cap = max(4 * arr.size, 64)
    gaps = np.diff(arr)
    gaps = gaps[gaps > 0]
    min_gap = float(gaps.min()) if gaps.size else 0.0
    accept = cfg.accept_frac * min_gap
    # Runs stop once merely inside a basin; only the polished scalar score
    # has to clear the tight accept threshold.
    basin = max(accept, BASIN_FRAC * min_gap)

    arr_m = np.sort(-arr)
    lo_m, hi_m = float(arr_m[0]), float(arr_m[-1])
    cfg_m = FitConfig(
        r_min=1.0 / cfg.r_max,
        r_max=1.0 / cfg.r_min,
        d_min=cfg.d_min,
        d_max=cfg.d_max,
        population=cfg.population,
        max_generations=cfg.max_generations,
        crossover_prob=cfg.crossover_prob,
        differential_weight=cfg.differential_weight,
        seed=cfg.seed,
        tolerance=cfg.tolerance,
        restarts=cfg.restarts,
        accept_frac=cfg.accept_frac,
    )
    box_lo_m, box_hi_m = _fit_box(arr_m, cfg_m)
    box_span_m = box_hi_m - box_lo_m

    # Try first the frame that puts the dense end of the marks at the low
    # edge of the span.  Combs whose gaps shrink toward the high edge tend to
    # stop at the spacing guard before reaching it, flattening the objective,
    # while combs growing away from a dense low edge descend smoothly — so
    # the matching frame usually converges on the first run and the
    # early-accept exit skips the rest.  Both frames still run otherwise.
    all_gaps = np.diff(arr)
    half = all_gaps.size // 2
    if float(np.mean(all_gaps[:half])) <= float(np.mean(all_gaps[half:])):
        order = (0, 1)
    else:
        order = (1, 0)

    rescore_leaders = 6
    best_score = math.inf
    best: GPParams | None = None
    for run in range(cfg.restarts):
        for orientation in order:
            if orientation == 0:
                scores, pop = _de_attempt(
                    arr, lo, hi, box_lo, box_span, cfg, [cfg.seed, 0, run], cap,
                    basin,
                )
            else:
                scores, pop = _de_attempt(
                    arr_m, lo_m, hi_m, box_lo_m, box_span_m, cfg_m,
                    [cfg.seed, 1, run], cap, basin,
                )
            leaders: list[tuple[float, GPParams]] = []
            for idx in np.argsort(scores)[:rescore_leaders]:
                if not math.isfinite(scores[idx]):
                    break
                if orientation == 0:
                    m0, d, r = box_lo + pop[idx] * box_span
                    try:
                        params = GPParams(float(m0), float(m0 + d), float(r))
                    except InvalidParams:
                        continue
                else:
                    params = _mirror_candidate(
                        pop[idx], box_lo_m, box_span_m, lo_m, hi_m, box_lo, box_hi
                    )
                    if params is None:
                        continue
                score = _scalar_objective(arr, lo, hi, params)
                leaders.append((score, params))
                if best is None or score < best_score:
                    best_score, best = score, params
            if best_score > accept:
                # Leaders can sit in different basins (the best is sometimes
                # pinned against a span-boundary cliff), so polish the top
                # few rather than only the winner.
                leaders.sort(key=lambda e: e[0])
                for score, params in leaders[:3]:
                    if not math.isfinite(score):
                        break
                    polished, p_score = _polish(arr, lo, hi, params, box_lo, box_span)
                    if polished is not None and p_score < best_score:
                        best_score, best = p_score, polished
                    if best_score <= accept:
                        break
            if best_score <= accept:
                return best
    if best is None:  # every candidate degenerate: fall back to the box floor
        return GPParams(
            float(box_lo[0]), float(box_lo[0] + box_lo[1]), float(box_lo[2])
        )
    return best


def estimate_direct(marks: Sequence[float]) -> ScaleEstimate:
    """Mean adjacent distance of the sorted marks; fails below two marks."""
    arr = np.sort(np.asarray(marks, dtype=np.float64).ravel())
    if arr.size < 2:
        return _failed()
    return ScaleEstimate(
        pixels_per_cm=float(np.mean(np.diff(arr))),
        status="ok",
        marks_used=int(arr.size),
    )


def estimate_median_filtered(marks: Sequence[float]) -> ScaleEstimate:
    """Mean adjacent distance after median-based outlier rejection.

    Distances deviating more than 20% from the median distance are dropped
    first. Ratios between consecutive surviving distances are then compared
    against their median: a distance is dropped when every ratio it
    participates in deviates more than 10% (a single bad neighbor does not
    disqualify a distance). Fails below three marks or when nothing survives.
    """
    arr = np.sort(np.asarray(marks, dtype=np.float64).ravel())
    if arr.size < 3:
        return _failed()
    diffs = np.diff(arr)
    med_d = float(np.median(diffs))
    stage1 = diffs[np.abs(diffs - med_d) <= 0.2 * med_d]
    if stage1.size == 0:
        return _failed()
    if stage1.size >= 2:
        # Coincident marks yield zero distances; the resulting inf/nan
        # ratios simply fail the deviation predicate below.
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = stage1[1:] / stage1[:-1]
        med_q = float(np.median(ratios))
        ratio_ok = np.abs(ratios - med_q) <= 0.1 * abs(med_q)
        keep = np.zeros(stage1.size, dtype=bool)
        # ratio j relates distances j and j+1
        keep[:-1] |= ratio_ok
        keep[1:] |= ratio_ok
        survivors = stage1[keep]
    else:
        survivors = stage1
    if survivors.size == 0:
        return _failed()
    return ScaleEstimate(
        pixels_per_cm=float(np.mean(survivors)),
        status="ok",
        marks_used=int(survivors.size) + 1,
    )


def scale_from_gp(params: GPParams, span: tuple[float, float]) -> ScaleEstimate:
    """Mean gap of the spanning sequence; degenerate spans yield failure."""
    try:
        gen = gp_generate_spanning(params, span[0], span[1])
    except (DegenerateSpan, InvalidParams):
        return _failed()
    gaps = np.diff(np.asarray(gen, dtype=np.float64))
    return ScaleEstimate(
        pixels_per_cm=float(np.mean(gaps)),
        status="ok",
        params=params,
        marks_used=len(gen),
    )
