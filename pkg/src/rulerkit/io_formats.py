"""Bit-exact file formats binding the modules together.

Heatmaps travel as grayscale PFM (little-endian float32, scale -1.0);
annotations, detections, manifests, and reports as version-1 JSON whose
floats serialize via Python's shortest round-trip representation, so every
numeric value survives a write/read cycle exactly. Unknown JSON fields are
preserved for forward compatibility. Images are PNG or binary PPM.
"""

from __future__ import annotations

import json
import math
import os
from typing import Sequence

import numpy as np
from PIL import Image

from .errors import MalformedHeader, SchemaViolation, TruncatedPayload
from .evaluation import LineAnnotation, PointAnnotation
from .geometry import Point2

__all__ = [
    "read_pfm",
    "write_pfm",
    "read_annotation",
    "write_annotation",
    "annotation_to_dict",
    "annotation_from_dict",
    "read_detections",
    "write_detections",
    "read_manifest",
    "write_manifest",
    "read_image",
    "write_image",
    "write_json",
    "read_json",
]

MANIFEST_VERSION = 1
_DETECTION_SOURCES = ("heatmap", "external", "ground-truth")


# ---------------------------------------------------------------------------
# PFM float raster


def write_pfm(path, grid: np.ndarray) -> None:
    """Write a 2D float32 array as grayscale PFM (scale -1.0, little-endian).

    Rows are stored bottom-first per the format; the payload is the raw
    float32 bytes, so a write/read cycle is bit-identical.
    """
    arr = np.asarray(grid, dtype=np.float32)
    if arr.ndim != 2:
        raise ValueError("PFM writer expects a 2D array")
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"Pf\n{w} {h}\n-1.0\n".encode("ascii"))
        fh.write(np.ascontiguousarray(arr[::-1], dtype="<f4").tobytes())


def read_pfm(path) -> np.ndarray:
    """Read a grayscale little-endian PFM written by :func:`write_pfm`.

    Raises
    ------
    MalformedHeader
        On a wrong magic, non-positive dims, or a big-endian scale.
    TruncatedPayload
        When fewer than width*height float32 values follow the header.
    """
    with open(path, "rb") as fh:
        blob = fh.read()

    def next_token(pos: int) -> tuple[bytes, int]:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise MalformedHeader("unexpected end of PFM header")
        return blob[start:pos], pos

    magic, pos = next_token(0)
    if magic == b"PF":
        raise MalformedHeader("color PFM (magic 'PF') is not supported")
    if magic != b"Pf":
        raise MalformedHeader(f"bad PFM magic {magic!r}")
    try:
        wtok, pos = next_token(pos)
        htok, pos = next_token(pos)
        stok, pos = next_token(pos)
        w, h, scale = int(wtok), int(htok), float(stok)
    except (ValueError, MalformedHeader) as exc:
        raise MalformedHeader(f"unparseable PFM header: {exc}") from None
    if w <= 0 or h <= 0:
        raise MalformedHeader(f"non-positive PFM dims {w}x{h}")
    if scale >= 0:
        raise MalformedHeader("big-endian PFM (scale >= 0) is not supported")
    pos += 1  # single whitespace byte terminates the header
    need = w * h * 4
    if len(blob) - pos < need:
        raise TruncatedPayload(
            f"PFM payload has {len(blob) - pos} bytes, needs {need}"
        )
    data = np.frombuffer(blob, dtype="<f4", count=w * h, offset=pos)
    return data.reshape(h, w)[::-1].copy()


# ---------------------------------------------------------------------------
# JSON helpers


def write_json(path, obj) -> None:
    """Write JSON with a trailing newline; floats use exact repr digits."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=False)
        fh.write("\n")


def read_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _require(d: dict, key: str, path: str):
    if key not in d:
        raise SchemaViolation(f"{path}.{key}" if path else key, "missing field")
    return d[key]


def _as_number(value, path: str) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise SchemaViolation(path, f"expected a number, got {type(value).__name__}")
    if not math.isfinite(float(value)):
        raise SchemaViolation(path, "expected a finite number")
    return float(value)


def _as_point(value, path: str) -> Point2:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise SchemaViolation(path, "expected [x, y]")
    return Point2(_as_number(value[0], f"{path}[0]"), _as_number(value[1], f"{path}[1]"))


# ---------------------------------------------------------------------------
# Annotations


def annotation_to_dict(a: PointAnnotation | LineAnnotation) -> dict:
    if isinstance(a, PointAnnotation):
        out = {
            "version": MANIFEST_VERSION,
            "type": "points",
            "rulers": [
                {"id": rid, "marks": [[p.x, p.y] for p in marks]}
                for rid, marks in a.rulers
            ],
        }
    elif isinstance(a, LineAnnotation):
        out = {
            "version": MANIFEST_VERSION,
            "type": "lines",
            "rulers": [
                {
                    "id": rid,
                    "endpoints": [[p0.x, p0.y], [p1.x, p1.y]],
                    "length_cm": length_cm,
                }
                for rid, (p0, p1), length_cm in a.rulers
            ],
        }
    else:
        raise TypeError(f"unsupported annotation type {type(a).__name__}")
    for key, value in a.extras.items():
        out.setdefault(key, value)
    return out


def annotation_from_dict(d: dict, path: str = "") -> PointAnnotation | LineAnnotation:
    """Parse a point- or line-style annotation dict.

    Raises
    ------
    SchemaViolation
        With the offending field path on any malformed content.
    """
    if not isinstance(d, dict):
        raise SchemaViolation(path or "$", "annotation must be an object")
    kind = _require(d, "type", path)
    rulers_raw = _require(d, "rulers", path)
    if not isinstance(rulers_raw, list):
        raise SchemaViolation(f"{path}.rulers" if path else "rulers", "expected a list")
    known = {"version", "type", "rulers"}
    extras = {k: v for k, v in d.items() if k not in known}
    prefix = f"{path}.rulers" if path else "rulers"
    if kind == "points":
        rulers = []
        for i, r in enumerate(rulers_raw):
            rp = f"{prefix}[{i}]"
            if not isinstance(r, dict):
                raise SchemaViolation(rp, "expected an object")
            marks_raw = _require(r, "marks", rp)
            if not isinstance(marks_raw, list) or len(marks_raw) < 2:
                raise SchemaViolation(f"{rp}.marks", "expected >= 2 [x, y] marks")
            marks = [_as_point(m, f"{rp}.marks[{j}]") for j, m in enumerate(marks_raw)]
            rulers.append((r.get("id", i), marks))
        try:
            return PointAnnotation(rulers=rulers, extras=extras)
        except ValueError as exc:
            raise SchemaViolation(prefix, str(exc)) from None
    if kind == "lines":
        rulers = []
        for i, r in enumerate(rulers_raw):
            rp = f"{prefix}[{i}]"
            if not isinstance(r, dict):
                raise SchemaViolation(rp, "expected an object")
            eps_raw = _require(r, "endpoints", rp)
            if not isinstance(eps_raw, list) or len(eps_raw) != 2:
                raise SchemaViolation(f"{rp}.endpoints", "expected two [x, y] points")
            p0 = _as_point(eps_raw[0], f"{rp}.endpoints[0]")
            p1 = _as_point(eps_raw[1], f"{rp}.endpoints[1]")
            length_cm = _as_number(_require(r, "length_cm", rp), f"{rp}.length_cm")
            rulers.append((r.get("id", i), (p0, p1), length_cm))
        try:
            return LineAnnotation(rulers=rulers, extras=extras)
        except ValueError as exc:
            raise SchemaViolation(prefix, str(exc)) from None
    raise SchemaViolation(f"{path}.type" if path else "type", f"unknown type {kind!r}")


def write_annotation(path, a: PointAnnotation | LineAnnotation) -> None:
    write_json(path, annotation_to_dict(a))


def read_annotation(path) -> PointAnnotation | LineAnnotation:
    return annotation_from_dict(read_json(path))


# ---------------------------------------------------------------------------
# Detections


def write_detections(path, image_id, points: Sequence[Point2], source: str = "external") -> None:
    if source not in _DETECTION_SOURCES:
        raise ValueError(f"source must be one of {_DETECTION_SOURCES}")
    write_json(
        path,
        {
            "version": MANIFEST_VERSION,
            "id": image_id,
            "points": [[p.x, p.y] for p in points],
            "source": source,
        },
    )


def read_detections(path) -> tuple[object, list[Point2], str]:
    """Returns (image id, points, source).

    Raises
    ------
    SchemaViolation
        On malformed structure or non-finite coordinates.
    """
    d = read_json(path)
    if not isinstance(d, dict):
        raise SchemaViolation("$", "detection file must be an object")
    points_raw = _require(d, "points", "")
    if not isinstance(points_raw, list):
        raise SchemaViolation("points", "expected a list")
    points = [_as_point(p, f"points[{i}]") for i, p in enumerate(points_raw)]
    source = d.get("source", "external")
    if source not in _DETECTION_SOURCES:
        raise SchemaViolation("source", f"must be one of {_DETECTION_SOURCES}")
    return d.get("id"), points, source


# ---------------------------------------------------------------------------
# Dataset manifest


def write_manifest(path, entries: Sequence[dict]) -> None:
    """Write a version-1 dataset manifest; entries pass through unchanged."""
    ids = [e.get("id") for e in entries]
    if len(set(ids)) != len(ids):
        raise ValueError("manifest entry ids must be unique")
    write_json(path, {"version": MANIFEST_VERSION, "entries": list(entries)})


def read_manifest(path, check_files: bool = True) -> list[dict]:
    """Read and validate a dataset manifest; returns its entry dicts.

    Each entry must provide id, image, size [w, h], and an annotation
    object; unknown fields are preserved. With ``check_files`` the
    referenced image/heatmap/detections paths must exist relative to the
    manifest directory.

    Raises
    ------
    SchemaViolation
        With the offending field path.
    """
    d = read_json(path)
    if not isinstance(d, dict):
        raise SchemaViolation("$", "manifest must be an object")
    if d.get("version") != MANIFEST_VERSION:
        raise SchemaViolation("version", f"expected {MANIFEST_VERSION}")
    entries = _require(d, "entries", "")
    if not isinstance(entries, list):
        raise SchemaViolation("entries", "expected a list")
    base = os.path.dirname(os.path.abspath(path))
    seen = set()
    for i, e in enumerate(entries):
        ep = f"entries[{i}]"
        if not isinstance(e, dict):
            raise SchemaViolation(ep, "expected an object")
        eid = _require(e, "id", ep)
        if eid in seen:
            raise SchemaViolation(f"{ep}.id", f"duplicate id {eid!r}")
        seen.add(eid)
        image = _require(e, "image", ep)
        size = _require(e, "size", ep)
        if not isinstance(size, list) or len(size) != 2:
            raise SchemaViolation(f"{ep}.size", "expected [width, height]")
        _as_number(size[0], f"{ep}.size[0]")
        _as_number(size[1], f"{ep}.size[1]")
        annotation_from_dict(_require(e, "annotation", ep), ep + ".annotation")
        if check_files:
            for key in ("image", "heatmap", "detections"):
                rel = e.get(key)
                if rel is None:
                    continue
                if not os.path.exists(os.path.join(base, rel)):
                    raise SchemaViolation(f"{ep}.{key}", f"file not found: {rel}")
    return entries


# ---------------------------------------------------------------------------
# Images


def write_image(path, image: np.ndarray) -> None:
    """Write uint8 RGB as PNG or binary PPM, chosen by extension."""
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.dtype != np.uint8:
        raise ValueError("image must be uint8 RGB (H, W, 3)")
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".ppm":
        h, w = arr.shape[:2]
        with open(path, "wb") as fh:
            fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
            fh.write(arr.tobytes())
    elif ext == ".png":
        # Pin encoder settings so identical pixels give identical bytes.
        Image.fromarray(arr, mode="RGB").save(path, format="PNG", optimize=False, compress_level=6)
    else:
        raise ValueError(f"unsupported image extension {ext!r} (use .png or .ppm)")


def read_image(path) -> np.ndarray:
    """Read a PNG or PPM file as uint8 RGB."""
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".ppm":
        with open(path, "rb") as fh:
            blob = fh.read()
        tokens = []
        pos = 0
        while len(tokens) < 4:
            while pos < len(blob) and blob[pos : pos + 1].isspace():
                pos += 1
            start = pos
            while pos < len(blob) and not blob[pos : pos + 1].isspace():
                pos += 1
            if start == pos:
                raise MalformedHeader("unexpected end of PPM header")
            tokens.append(blob[start:pos])
        if tokens[0] != b"P6":
            raise MalformedHeader(f"bad PPM magic {tokens[0]!r}")
        w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
        if w <= 0 or h <= 0 or maxval != 255:
            raise MalformedHeader("PPM must have positive dims and maxval 255")
        pos += 1
        need = w * h * 3
        if len(blob) - pos < need:
            raise TruncatedPayload(f"PPM payload has {len(blob) - pos} bytes, needs {need}")
        return np.frombuffer(blob, dtype=np.uint8, count=need, offset=pos).reshape(h, w, 3).copy()
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()
