"""Procedural ruler renderer with exact centimeter-mark ground truth.

Draws a parameterized ruler (body, border, metric marks, optional inch
marks on the opposite edge, digit labels, decorative clutter) onto an RGB
canvas, applies a two-parameter perspective warp, and records the post-warp
sub-pixel cm-mark anchors together with the 3x3 homography. Everything is
deterministic given (background, spec, seed).
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import CannotFit, InvalidTilt, SpecOutOfBounds, UnsupportedGlyph
from .geometry import Point2

__all__ = [
    "RulerSpec",
    "RulerSample",
    "draw_ruler",
    "perspective_warp",
    "random_spec",
    "render_label",
    "build_prompt",
    "PROMPT_MATERIALS",
    "PROMPT_VISUAL_APPEARANCES",
    "PROMPT_MARK_APPEARANCES",
    "PROMPT_BACKGROUNDS",
]

DEFAULT_CM_TO_PX = 37.7952755906
INCH_PER_CM = 1.0 / 2.54
_ALLOWED_INCH_INTERVALS = ("1/2", "1/4", "1/8", "1/16")

RGB = tuple[int, int, int]


@dataclass(frozen=True)
class RulerSpec:
    """Full parameter set of the procedural ruler generator."""

    position: Point2
    length_cm: int
    cm_to_px: float = DEFAULT_CM_TO_PX
    ruler_height_cm: float = 3.0
    ruler_extension_fraction: float = 0.2
    orientation: str = "horizontal"

    fill_color: RGB = (255, 255, 255)
    edge_color: RGB = (0, 0, 0)
    thickness: int = 2
    alpha: float = 0.5

    mm_mark_interval: int = 1
    inch_mark_interval: str = "1/16"

    cm_font_scale: float = 0.5
    inch_font_scale: float = 0.5
    cm_font_color: RGB = (0, 0, 0)
    inch_font_color: RGB = (0, 0, 0)
    cm_font_offset_x: int = 0
    cm_font_offset_y: int = 0
    inch_font_offset_x: int = 0
    inch_font_offset_y: int = 0

    cm_mark_length: int = 20
    mm_mark_length: int = 10
    half_cm_mark_length: int = 15
    inch_mark_length: int = 20
    sub_inch_mark_length: int = 10
    half_inch_mark_length: int = 15

    cm_mark_color: RGB = (50, 50, 50)
    mm_mark_color: RGB = (50, 50, 50)
    inch_mark_color: RGB = (100, 100, 100)
    sub_inch_mark_color: RGB = (100, 100, 100)

    show_cm_numbers: bool = True
    show_inch_numbers: bool = True

    tilt_factor_horizontal: float = 0.0
    tilt_factor_vertical: float = 0.0

    num_random_lines: int = 10
    num_random_shapes: int = 10

    other_marks: str = "none"
    mark_offset: int = 0
    draw_cm_line: bool = False
    cm_line_color: RGB = (0, 255, 0)
    cm_line_thickness: int = 2

    def __post_init__(self):
        if self.length_cm < 1:
            raise ValueError("length_cm must be >= 1")
        if self.cm_to_px <= 0:
            raise ValueError("cm_to_px must be positive")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        for t in (self.tilt_factor_horizontal, self.tilt_factor_vertical):
            if not -0.4 <= t <= 0.4:
                raise ValueError("tilt factors must lie in [-0.4, 0.4]")
        if self.orientation not in ("horizontal", "vertical"):
            raise ValueError("orientation must be 'horizontal' or 'vertical'")
        if self.other_marks not in ("none", "cm", "inch"):
            raise ValueError("other_marks must be one of none/cm/inch")
        if self.inch_mark_interval not in _ALLOWED_INCH_INTERVALS:
            raise ValueError(
                f"inch_mark_interval must be one of {_ALLOWED_INCH_INTERVALS}"
            )
        if self.mm_mark_interval < 1:
            raise ValueError("mm_mark_interval must be >= 1")
        if self.thickness < 1:
            raise ValueError("thickness must be >= 1")

    @property
    def length_px(self) -> float:
        return self.length_cm * self.cm_to_px

    @property
    def height_px(self) -> float:
        return self.ruler_height_cm * self.cm_to_px

    @property
    def extension_px(self) -> float:
        # Half the extension fraction on each end of the mark area.
        return 0.5 * self.ruler_extension_fraction * self.length_px

    def to_dict(self) -> dict:
        d = asdict(self)
        d["position"] = [self.position.x, self.position.y]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RulerSpec":
        d = dict(d)
        d["position"] = Point2(*d["position"])
        for key, val in list(d.items()):
            if key.endswith("_color") and isinstance(val, list):
                d[key] = tuple(val)
        return cls(**d)


@dataclass(frozen=True)
class RulerSample:
    """Rendered ruler plus its exact post-warp cm-mark ground truth."""

    image: np.ndarray = field(repr=False)
    cm_marks: list[Point2]
    homography: np.ndarray = field(repr=False)
    spec: RulerSpec

    def __post_init__(self):
        if len(self.cm_marks) != self.spec.length_cm + 1:
            raise ValueError("cm_marks count must equal length_cm + 1")


# ---------------------------------------------------------------------------
# Digit glyphs


_GLYPH_ROWS = {
    "0": ("01110", "10001", "10011", "10101", "11001", "10001", "01110"),
    "1": ("00100", "01100", "00100", "00100", "00100", "00100", "01110"),
    "2": ("01110", "10001", "00001", "00010", "00100", "01000", "11111"),
    "3": ("11111", "00010", "00100", "00010", "00001", "10001", "01110"),
    "4": ("00010", "00110", "01010", "10010", "11111", "00010", "00010"),
    "5": ("11111", "10000", "11110", "00001", "00001", "10001", "01110"),
    "6": ("00110", "01000", "10000", "11110", "10001", "10001", "01110"),
    "7": ("11111", "00001", "00010", "00100", "01000", "01000", "01000"),
    "8": ("01110", "10001", "10001", "01110", "10001", "10001", "01110"),
    "9": ("01110", "10001", "10001", "01111", "00001", "00010", "01100"),
}
GLYPH_W, GLYPH_H = 5, 7


def render_label(
    canvas: np.ndarray,
    text: str,
    font_scale: int,
    color: RGB,
    anchor: Point2,
) -> np.ndarray:
    """Draw a digit string from the built-in 5x7 glyph table.

    ``anchor`` is the top-left corner of the text block; each glyph cell
    becomes a ``font_scale`` x ``font_scale`` pixel square and glyphs are
    separated by one scaled cell. Pixels falling outside the canvas are
    clipped. The canvas is modified in place and returned.

    Raises
    ------
    UnsupportedGlyph
        If ``text`` contains anything but digits 0-9.
    """
    if font_scale < 1 or int(font_scale) != font_scale:
        raise ValueError("font_scale must be a positive integer")
    s = int(font_scale)
    h, w = canvas.shape[:2]
    x0, y0 = int(round(anchor.x)), int(round(anchor.y))
    for gi, ch in enumerate(text):
        if ch not in _GLYPH_ROWS:
            raise UnsupportedGlyph(f"glyph {ch!r} not in 0-9 table")
        gx = x0 + gi * (GLYPH_W + 1) * s
        for ry, row in enumerate(_GLYPH_ROWS[ch]):
            for rx, bit in enumerate(row):
                if bit != "1":
                    continue
                ax0, ay0 = gx + rx * s, y0 + ry * s
                bx0, by0 = max(ax0, 0), max(ay0, 0)
                bx1, by1 = min(ax0 + s, w), min(ay0 + s, h)
                if bx0 < bx1 and by0 < by1:
                    canvas[by0:by1, bx0:bx1] = color
    return canvas


# ---------------------------------------------------------------------------
# Low-level raster helpers (uint8 RGB canvas)


def _blend_rect(img, x0, y0, x1, y1, color, alpha):
    """Fill [x0,x1) x [y0,y1) with color at the given opacity."""
    h, w = img.shape[:2]
    x0, y0 = max(int(x0), 0), max(int(y0), 0)
    x1, y1 = min(int(x1), w), min(int(y1), h)
    if x0 >= x1 or y0 >= y1:
        return
    if alpha >= 1.0:
        img[y0:y1, x0:x1] = color
    else:
        region = img[y0:y1, x0:x1].astype(np.float64)
        src = np.asarray(color, dtype=np.float64)
        img[y0:y1, x0:x1] = np.clip(
            np.rint(alpha * src + (1.0 - alpha) * region), 0, 255
        ).astype(np.uint8)


def _draw_border(img, x0, y0, x1, y1, color, t):
    _blend_rect(img, x0, y0, x1, y0 + t, color, 1.0)
    _blend_rect(img, x0, y1 - t, x1, y1, color, 1.0)
    _blend_rect(img, x0, y0, x0 + t, y1, color, 1.0)
    _blend_rect(img, x1 - t, y0, x1, y1, color, 1.0)


def _plot(img, x, y, color, coverage):
    h, w = img.shape[:2]
    if 0 <= x < w and 0 <= y < h and coverage > 0:
        c = min(coverage, 1.0)
        img[y, x] = np.clip(
            np.rint(c * np.asarray(color, dtype=np.float64) + (1 - c) * img[y, x]),
            0,
            255,
        ).astype(np.uint8)


def _draw_line_aa(img, p0, p1, color):
    """Xiaolin Wu anti-aliased line segment."""
    x0, y0 = float(p0[0]), float(p0[1])
    x1, y1 = float(p1[0]), float(p1[1])
    steep = abs(y1 - y0) > abs(x1 - x0)
    if steep:
        x0, y0, x1, y1 = y0, x0, y1, x1
    if x0 > x1:
        x0, x1, y0, y1 = x1, x0, y1, y0
    dx = x1 - x0
    gradient = (y1 - y0) / dx if dx != 0 else 1.0

    def endpoint(x, y):
        xend = round(x)
        yend = y + gradient * (xend - x)
        xgap = 1 - ((x + 0.5) - np.floor(x + 0.5))
        px, py = int(xend), int(np.floor(yend))
        frac = yend - np.floor(yend)
        if steep:
            _plot(img, py, px, color, (1 - frac) * xgap)
            _plot(img, py + 1, px, color, frac * xgap)
        else:
            _plot(img, px, py, color, (1 - frac) * xgap)
            _plot(img, px, py + 1, color, frac * xgap)
        return px, yend + gradient

    xpx0, intery = endpoint(x0, y0)
    xpx1, _ = endpoint(x1, y1)
    for x in range(xpx0 + 1, xpx1):
        frac = intery - np.floor(intery)
        base = int(np.floor(intery))
        if steep:
            _plot(img, base, x, color, 1 - frac)
            _plot(img, base + 1, x, color, frac)
        else:
            _plot(img, x, base, color, 1 - frac)
            _plot(img, x, base + 1, color, frac)
        intery += gradient


def _draw_ellipse(img, cx, cy, rx, ry, color):
    """Filled ellipse with a one-pixel soft edge."""
    h, w = img.shape[:2]
    x0, x1 = max(int(cx - rx - 2), 0), min(int(cx + rx + 3), w)
    y0, y1 = max(int(cy - ry - 2), 0), min(int(cy + ry + 3), h)
    if x0 >= x1 or y0 >= y1:
        return
    ys, xs = np.mgrid[y0:y1, x0:x1]
    rho = np.sqrt(((xs - cx) / rx) ** 2 + ((ys - cy) / ry) ** 2)
    cover = np.clip((1.0 - rho) * min(rx, ry) + 0.5, 0.0, 1.0)[..., None]
    region = img[y0:y1, x0:x1].astype(np.float64)
    src = np.asarray(color, dtype=np.float64)
    img[y0:y1, x0:x1] = np.clip(np.rint(cover * src + (1 - cover) * region), 0, 255).astype(
        np.uint8
    )


def _random_clutter(img, rng, n_lines, n_shapes):
    h, w = img.shape[:2]
    for _ in range(int(n_lines)):
        p0 = (rng.uniform(0, w - 1), rng.uniform(0, h - 1))
        p1 = (rng.uniform(0, w - 1), rng.uniform(0, h - 1))
        color = tuple(int(v) for v in rng.integers(0, 256, 3))
        _draw_line_aa(img, p0, p1, color)
    for _ in range(int(n_shapes)):
        kind = rng.integers(0, 2)
        color = tuple(int(v) for v in rng.integers(0, 256, 3))
        if kind == 0:
            x0 = rng.uniform(0, w - 2)
            y0 = rng.uniform(0, h - 2)
            _blend_rect(
                img,
                x0,
                y0,
                x0 + rng.uniform(2, max(3.0, w / 6)),
                y0 + rng.uniform(2, max(3.0, h / 6)),
                color,
                1.0,
            )
        else:
            _draw_ellipse(
                img,
                rng.uniform(0, w - 1),
                rng.uniform(0, h - 1),
                rng.uniform(2, max(3.0, w / 8)),
                rng.uniform(2, max(3.0, h / 8)),
                color,
            )


# ---------------------------------------------------------------------------
# Perspective warp


def _homography_from_corners(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Direct linear transform from 4 correspondences, h33 fixed to 1."""
    a = np.zeros((8, 8), dtype=np.float64)
    b = np.zeros(8, dtype=np.float64)
    for i, ((x, y), (u, v)) in enumerate(zip(src, dst)):
        a[2 * i] = [x, y, 1, 0, 0, 0, -u * x, -u * y]
        b[2 * i] = u
        a[2 * i + 1] = [0, 0, 0, x, y, 1, -v * x, -v * y]
        b[2 * i + 1] = v
    h = np.linalg.solve(a, b)
    return np.append(h, 1.0).reshape(3, 3)


def apply_homography(h: np.ndarray, points: Sequence[Point2]) -> list[Point2]:
    """Map points through a 3x3 projective matrix."""
    out = []
    for p in points:
        vec = h @ np.array([p[0], p[1], 1.0])
        out.append(Point2(float(vec[0] / vec[2]), float(vec[1] / vec[2])))
    return out


def perspective_warp(
    image: np.ndarray,
    points: Sequence[Point2],
    tilt_h: float,
    tilt_v: float,
) -> tuple[np.ndarray, list[Point2], np.ndarray]:
    """Warp the canvas into a tilt-controlled quadrilateral.

    A positive ``tilt_h`` insets the top corners horizontally by
    ``tilt_h * width`` (negative values inset the bottom corners); a
    positive ``tilt_v`` insets the left-edge corners vertically by
    ``tilt_v * height`` (negative values the right edge). The image is
    resampled bilinearly through the inverse map with edge clamping, and
    the points are pushed through the homography exactly.

    Raises
    ------
    InvalidTilt
        If either factor falls outside [-0.4, 0.4].
    """
    for t in (tilt_h, tilt_v):
        if not -0.4 <= t <= 0.4:
            raise InvalidTilt(f"tilt factor {t} outside [-0.4, 0.4]")
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("image must be an RGB (H, W, 3) array")
    if tilt_h == 0.0 and tilt_v == 0.0:
        return img.copy(), list(points), np.eye(3, dtype=np.float64)

    h, w = img.shape[:2]
    dx_top = max(tilt_h, 0.0) * w
    dx_bot = max(-tilt_h, 0.0) * w
    dy_left = max(tilt_v, 0.0) * h
    dy_right = max(-tilt_v, 0.0) * h
    src = np.array([[0, 0], [w - 1, 0], [w - 1, h - 1], [0, h - 1]], dtype=np.float64)
    dst = np.array(
        [
            [dx_top, dy_left],
            [w - 1 - dx_top, dy_right],
            [w - 1 - dx_bot, h - 1 - dy_right],
            [dx_bot, h - 1 - dy_left],
        ],
        dtype=np.float64,
    )
    hom = _homography_from_corners(src, dst)
    hom_inv = np.linalg.inv(hom)

    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    denom = hom_inv[2, 0] * xs + hom_inv[2, 1] * ys + hom_inv[2, 2]
    sx = (hom_inv[0, 0] * xs + hom_inv[0, 1] * ys + hom_inv[0, 2]) / denom
    sy = (hom_inv[1, 0] * xs + hom_inv[1, 1] * ys + hom_inv[1, 2]) / denom
    sx = np.clip(sx, 0.0, w - 1.0)
    sy = np.clip(sy, 0.0, h - 1.0)
    fx, fy = np.floor(sx), np.floor(sy)
    ix0 = fx.astype(np.intp)
    iy0 = fy.astype(np.intp)
    ix1 = np.minimum(ix0 + 1, w - 1)
    iy1 = np.minimum(iy0 + 1, h - 1)
    ax = (sx - fx)[..., None]
    ay = (sy - fy)[..., None]
    src_f = img.astype(np.float64)
    top = src_f[iy0, ix0] * (1 - ax) + src_f[iy0, ix1] * ax
    bot = src_f[iy1, ix0] * (1 - ax) + src_f[iy1, ix1] * ax
    warped = np.clip(np.rint(top * (1 - ay) + bot * ay), 0, 255).astype(np.uint8)
    return warped, apply_homography(hom, points), hom


# ---------------------------------------------------------------------------
# Ruler drawing


def _ruler_to_canvas(spec: RulerSpec, u: float, v: float) -> tuple[float, float]:
    # (u, v): u runs along the mark axis from position, v across from the
    # mark edge into the body.
    if spec.orientation == "horizontal":
        return spec.position.x + u, spec.position.y + v
    return spec.position.x + v, spec.position.y + u


def _mark_segment(img, spec: RulerSpec, u: float, v0: float, length: float, color):
    """A mark of the configured thickness perpendicular to the ruler axis."""
    t = spec.thickness
    lo = int(round(u)) - (t - 1) // 2
    x0, y0 = _ruler_to_canvas(spec, lo, v0)
    if spec.orientation == "horizontal":
        _blend_rect(img, x0, y0, x0 + t, y0 + length, color, 1.0)
    else:
        _blend_rect(img, x0, y0, x0 + length, y0 + t, color, 1.0)


def _metric_marks(img, spec: RulerSpec, v_edge: float, direction: float):
    """Draw mm/half-cm/cm marks growing from v_edge along +-v."""
    length_px = spec.length_px
    mm_px = spec.cm_to_px / 10.0
    n_mm = int(round(spec.length_cm * 10 / spec.mm_mark_interval))
    for i in range(n_mm + 1):
        mm = i * spec.mm_mark_interval
        u = mm * mm_px
        if u > length_px + 1e-9:
            break
        if mm % 10 == 0:
            length, color = spec.cm_mark_length, spec.cm_mark_color
        elif mm % 5 == 0:
            length, color = spec.half_cm_mark_length, spec.cm_mark_color
        else:
            length, color = spec.mm_mark_length, spec.mm_mark_color
        v0 = v_edge if direction > 0 else v_edge - length
        _mark_segment(img, spec, u, v0, length, color)


def _inch_marks(img, spec: RulerSpec, v_edge: float, direction: float):
    frac = Fraction(spec.inch_mark_interval)
    inch_px = spec.cm_to_px / INCH_PER_CM
    step = float(frac) * inch_px
    n = int(np.floor(spec.length_px / step + 1e-9))
    labels = []
    for i in range(n + 1):
        pos = i * frac
        u = i * step
        if pos.denominator == 1:
            length, color = spec.inch_mark_length, spec.inch_mark_color
            labels.append((u, int(pos)))
        elif pos.denominator == 2:
            length, color = spec.half_inch_mark_length, spec.inch_mark_color
        else:
            length, color = spec.sub_inch_mark_length, spec.sub_inch_mark_color
        v0 = v_edge if direction > 0 else v_edge - length
        _mark_segment(img, spec, u, v0, length, color)
    return labels


def draw_ruler(background: np.ndarray, spec: RulerSpec, seed: int = 0) -> RulerSample:
    """Render one ruler sample onto a copy of ``background``.

    The mark area starts at ``spec.position`` and runs ``length_cm`` cm
    along the orientation axis; the body rectangle extends past it by the
    extension fraction. The body is alpha-blended; border, marks, and
    labels are opaque. Clutter (random lines/shapes) is drawn beneath the
    ruler. The perspective warp is applied last and the returned cm marks
    are the warped sub-pixel anchor positions.

    Raises
    ------
    SpecOutOfBounds
        If the pre-warp footprint does not fit the canvas.
    """
    img = np.asarray(background)
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise ValueError("background must be a uint8 RGB (H, W, 3) array")
    img = img.copy()
    canvas_h, canvas_w = img.shape[:2]

    ext = spec.extension_px
    u0, u1 = -ext, spec.length_px + ext
    v0, v1 = 0.0, spec.height_px
    corners = [_ruler_to_canvas(spec, u, v) for u in (u0, u1) for v in (v0, v1)]
    xs = [c[0] for c in corners]
    ys = [c[1] for c in corners]
    if min(xs) < 0 or min(ys) < 0 or max(xs) > canvas_w - 1 or max(ys) > canvas_h - 1:
        raise SpecOutOfBounds(
            f"ruler footprint [{min(xs):.1f},{max(xs):.1f}]x[{min(ys):.1f},{max(ys):.1f}] "
            f"exceeds canvas {canvas_w}x{canvas_h}"
        )

    rng = np.random.default_rng(seed)
    _random_clutter(img, rng, spec.num_random_lines, spec.num_random_shapes)

    rx0, ry0 = _ruler_to_canvas(spec, u0, v0)
    rx1, ry1 = _ruler_to_canvas(spec, u1, v1)
    _blend_rect(img, rx0, ry0, rx1, ry1, spec.fill_color, spec.alpha)
    _draw_border(img, int(rx0), int(ry0), int(rx1), int(ry1), spec.edge_color, spec.thickness)

    _metric_marks(img, spec, v_edge=0.0, direction=+1.0)

    inch_labels: list[tuple[float, int]] = []
    if spec.other_marks == "cm":
        _metric_marks(img, spec, v_edge=spec.height_px - spec.mark_offset, direction=-1.0)
    elif spec.other_marks == "inch":
        inch_labels = _inch_marks(
            img, spec, v_edge=spec.height_px - spec.mark_offset, direction=-1.0
        )

    if spec.draw_cm_line:
        t = spec.cm_line_thickness
        ax0, ay0 = _ruler_to_canvas(spec, 0.0, 0.0)
        ax1, ay1 = _ruler_to_canvas(spec, spec.length_px, 0.0)
        if spec.orientation == "horizontal":
            _blend_rect(img, ax0, ay0 - t // 2, ax1 + 1, ay0 - t // 2 + t, spec.cm_line_color, 1.0)
        else:
            _blend_rect(img, ax0 - t // 2, ay0, ax0 - t // 2 + t, ay1 + 1, spec.cm_line_color, 1.0)

    cm_scale = max(1, int(round(2 * spec.cm_font_scale)))
    if spec.show_cm_numbers:
        for i in range(spec.length_cm + 1):
            text = str(i)
            tw = (len(text) * (GLYPH_W + 1) - 1) * cm_scale
            cx, cy = _ruler_to_canvas(
                spec, i * spec.cm_to_px, spec.cm_mark_length + 3
            )
            render_label(
                img,
                text,
                cm_scale,
                spec.cm_font_color,
                Point2(
                    cx - tw / 2 + spec.cm_font_offset_x,
                    cy + spec.cm_font_offset_y,
                ),
            )
    if spec.show_inch_numbers and inch_labels:
        inch_scale = max(1, int(round(2 * spec.inch_font_scale)))
        for u, value in inch_labels:
            text = str(value)
            tw = (len(text) * (GLYPH_W + 1) - 1) * inch_scale
            cx, cy = _ruler_to_canvas(
                spec,
                u,
                spec.height_px - spec.mark_offset - spec.inch_mark_length - 3 - GLYPH_H * inch_scale,
            )
            render_label(
                img,
                text,
                inch_scale,
                spec.inch_font_color,
                Point2(
                    cx - tw / 2 + spec.inch_font_offset_x,
                    cy + spec.inch_font_offset_y,
                ),
            )

    anchors = [
        Point2(*_ruler_to_canvas(spec, i * spec.cm_to_px, 0.0))
        for i in range(spec.length_cm + 1)
    ]
    warped, marks, hom = perspective_warp(
        img, anchors, spec.tilt_factor_horizontal, spec.tilt_factor_vertical
    )
    return RulerSample(image=warped, cm_marks=marks, homography=hom, spec=spec)


def random_spec(
    rng: np.random.Generator,
    canvas_size: tuple[int, int],
    constraints: dict | None = None,
) -> RulerSpec:
    """Sample a spec whose footprint fits a (width, height) canvas.

    ``constraints`` may pin ``tilt_max``, ``min_length_cm``,
    ``max_length_cm``, ``cm_to_px_range``, or ``max_clutter``. Up to 100
    rejection-sampling attempts are made.

    Raises
    ------
    CannotFit
        When no sampled spec fits within 100 tries.
    """
    cons = constraints or {}
    w, h = canvas_size
    tilt_max = float(cons.get("tilt_max", 0.4))
    min_len = int(cons.get("min_length_cm", 5))
    max_len = int(cons.get("max_length_cm", 31))
    px_lo, px_hi = cons.get("cm_to_px_range", (18.0, 45.0))
    max_clutter = int(cons.get("max_clutter", 10))

    for _ in range(100):
        length_cm = int(rng.integers(min_len, max_len + 1))
        cm_to_px = float(rng.uniform(px_lo, px_hi))
        orientation = "horizontal" if rng.random() < 0.5 else "vertical"
        height_cm = float(rng.uniform(1.5, 3.5))
        ext_frac = float(rng.uniform(0.05, 0.3))
        length_px = length_cm * cm_to_px
        ext = 0.5 * ext_frac * length_px
        height_px = height_cm * cm_to_px
        along = length_px + 2 * ext
        across = height_px
        span_x, span_y = (along, across) if orientation == "horizontal" else (across, along)
        # Mark/label overhang stays inside the body, so the footprint is the
        # extended rectangle itself.
        if span_x > w - 3 or span_y > h - 3:
            continue
        # Sample the footprint corner, then convert to the mark-area origin.
        fx = float(rng.uniform(1.0, w - 2 - span_x))
        fy = float(rng.uniform(1.0, h - 2 - span_y))
        if orientation == "horizontal":
            pos_x, pos_y = fx + ext, fy
        else:
            pos_x, pos_y = fx, fy + ext
        fill = tuple(int(v) for v in rng.integers(170, 256, 3))
        dark = tuple(int(v) for v in rng.integers(0, 90, 3))
        mark = tuple(int(v) for v in rng.integers(0, 90, 3))
        spec = RulerSpec(
            position=Point2(pos_x, pos_y),
            length_cm=length_cm,
            cm_to_px=cm_to_px,
            ruler_height_cm=height_cm,
            ruler_extension_fraction=ext_frac,
            orientation=orientation,
            fill_color=fill,
            edge_color=dark,
            thickness=int(rng.integers(1, 4)),
            alpha=float(rng.uniform(0.3, 1.0)),
            mm_mark_interval=int(rng.choice([1, 2, 5])),
            inch_mark_interval=str(rng.choice(list(_ALLOWED_INCH_INTERVALS))),
            cm_mark_color=mark,
            mm_mark_color=mark,
            show_cm_numbers=bool(rng.random() < 0.8),
            show_inch_numbers=bool(rng.random() < 0.8),
            tilt_factor_horizontal=float(rng.uniform(-tilt_max, tilt_max)),
            tilt_factor_vertical=float(rng.uniform(-tilt_max, tilt_max)),
            num_random_lines=int(rng.integers(0, max_clutter + 1)),
            num_random_shapes=int(rng.integers(0, max_clutter + 1)),
            other_marks=str(rng.choice(["none", "cm", "inch"])),
            draw_cm_line=bool(rng.random() < 0.2),
        )
        footprint_ok = True
        ext_px = spec.extension_px
        for u in (-ext_px, spec.length_px + ext_px):
            for v in (0.0, spec.height_px):
                x, y = _ruler_to_canvas(spec, u, v)
                if not (0 <= x <= w - 1 and 0 <= y <= h - 1):
                    footprint_ok = False
        if footprint_ok:
            return spec
    raise CannotFit(f"no spec fit canvas {canvas_size} within 100 attempts")


# ---------------------------------------------------------------------------
# Prompt templating


PROMPT_MATERIALS = (
    "plastic",
    "wood",
    "metal",
    "glass",
    "rubber",
    "composite materials",
    "paper",
    "cardboard",
)
PROMPT_VISUAL_APPEARANCES = (
    "reflective",
    "transparent",
    "opaque",
    "matte",
    "glossy",
    "textured",
    "smooth",
    "colored",
    "patterned",
    "gradient",
    "frosted",
    "clear",
)
PROMPT_MARK_APPEARANCES = (
    "engraved",
    "printed",
    "embossed",
    "debossed",
    "stamped",
    "laser-etched",
    "painted",
    "raised",
    "indented",
    "dotted",
    "striped",
    "highlighted",
    "faded",
    "bold",
    "thin",
    "dual-color",
    "metallic",
    "contrasted",
    "glowing",
    "reflective",
)
PROMPT_BACKGROUNDS = (
    "a wooden desk",
    "white paper",
    "a blackboard",
    "metal surface",
    "a glass table",
    "concrete floor",
    "a marble countertop",
    "fabric surface",
    "a grass field",
    "sandy surface",
    "a water surface",
    "carpet",
    "tile floor",
    "a painted wall",
    "a digital screen",
    "a chalkboard",
    "cardboard sheet",
    "a leather surface",
    "a plastic sheet",
    "the sky background",
    "a blurred background",
    "none",
)


def build_prompt(
    material: str,
    visual_appearance: str,
    mark_appearance: str,
    background: str,
) -> tuple[str, bool]:
    """Fill the image-generation prompt template.

    Template: ``a {visual_appearance} {material} rectangle with clear
    {mark_appearance} marks on {background}``. A background of "none"
    drops the trailing "on ..." clause; an empty mark appearance elides
    that slot. Returns (prompt, known) where ``known`` is False when any
    argument falls outside the documented value lists.
    """
    known = (
        material in PROMPT_MATERIALS
        and visual_appearance in PROMPT_VISUAL_APPEARANCES
        and mark_appearance in (PROMPT_MARK_APPEARANCES + ("",))
        and background in PROMPT_BACKGROUNDS
    )
    marks_part = f"clear {mark_appearance} marks" if mark_appearance else "clear marks"
    prompt = f"a {visual_appearance} {material} rectangle with {marks_part}"
    if background != "none":
        prompt += f" on {background}"
    return prompt, known
