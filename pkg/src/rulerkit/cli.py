"""Command-line interface: synth, peaks, fit, deepgp-train, eval, bench.

Configuration precedence is flags > JSON config file > built-in defaults;
the config file mirrors flag names with dashes replaced by underscores.
Runtime failures exit nonzero with a machine-readable JSON object on
stderr. The RULERKIT_LOG environment variable sets the logging level only
and never changes results.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import io_formats
from .deepgp import StreamConfig, TrainConfig, deepgp_train, save_model
from .errors import RulerkitError
from .evaluation import PointAnnotation
from .heatmap import Heatmap
from .pipeline import METHODS, PeakConfig, estimate_batch, estimate_from_points
from .synth import draw_ruler, random_spec

__all__ = ["main"]

log = logging.getLogger("rulerkit")


class _JsonArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        json.dump({"error": "UsageError", "message": message}, sys.stderr)
        sys.stderr.write("\n")
        raise SystemExit(2)


def _merged(args: argparse.Namespace, defaults: dict) -> dict:
    """Apply precedence: explicit flags > config file values > defaults."""
    cfg = {}
    if getattr(args, "config", None):
        loaded = io_formats.read_json(args.config)
        if not isinstance(loaded, dict):
            raise RulerkitError("config file must contain a JSON object")
        cfg = loaded
    out = {}
    for key, default in defaults.items():
        flag_val = getattr(args, key, None)
        if flag_val is not None:
            out[key] = flag_val
        elif key in cfg:
            out[key] = cfg[key]
        else:
            out[key] = default
    return out


# ---------------------------------------------------------------------------
# synth


def _solid_background(rng: np.random.Generator, w: int, h: int) -> np.ndarray:
    color = rng.integers(60, 220, 3)
    return np.full((h, w, 3), color, dtype=np.uint8)


def _synth_one(task) -> dict:
    (index, seed, out_dir, w, h, tilt_max, background_path) = task
    rng = np.random.default_rng([seed, index])
    if background_path is not None:
        bg = io_formats.read_image(background_path)
        if bg.shape[0] != h or bg.shape[1] != w:
            bg = np.ascontiguousarray(bg[:h, :w])
            if bg.shape[0] < h or bg.shape[1] < w:
                pad = np.zeros((h, w, 3), dtype=np.uint8)
                pad[: bg.shape[0], : bg.shape[1]] = bg
                bg = pad
    else:
        bg = _solid_background(rng, w, h)
    spec = random_spec(rng, (w, h), {"tilt_max": tilt_max})
    sample = draw_ruler(bg, spec, seed=int(rng.integers(0, 2**63 - 1)))
    name = f"sample_{index:05d}.png"
    io_formats.write_image(os.path.join(out_dir, name), sample.image)
    annotation = io_formats.annotation_to_dict(
        PointAnnotation(rulers=[(0, sample.cm_marks)])
    )
    return {
        "id": index,
        "image": name,
        "size": [w, h],
        "annotation": annotation,
        "spec": sample.spec.to_dict(),
        "homography": [[float(v) for v in row] for row in sample.homography],
        "cm_marks": [[p.x, p.y] for p in sample.cm_marks],
    }


def _cmd_synth(args) -> int:
    opts = _merged(
        args,
        {
            "count": 10,
            "out": "synth_out",
            "seed": 0,
            "backgrounds": None,
            "size": "768x768",
            "tilt_max": 0.4,
            "jobs": 1,
        },
    )
    w, h = (int(v) for v in str(opts["size"]).lower().split("x"))
    os.makedirs(opts["out"], exist_ok=True)
    bg_files = None
    if opts["backgrounds"]:
        bg_files = sorted(
            os.path.join(opts["backgrounds"], f)
            for f in os.listdir(opts["backgrounds"])
            if f.lower().endswith((".png", ".ppm"))
        )
        if not bg_files:
            raise RulerkitError(f"no PNG/PPM files under {opts['backgrounds']}")
    tasks = []
    for i in range(int(opts["count"])):
        bg_path = None
        if bg_files:
            pick = np.random.default_rng([int(opts["seed"]), i, 1]).integers(0, len(bg_files))
            bg_path = bg_files[int(pick)]
        tasks.append((i, int(opts["seed"]), opts["out"], w, h, float(opts["tilt_max"]), bg_path))
    jobs = int(opts["jobs"])
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            entries = list(pool.map(_synth_one, tasks))
    else:
        entries = [_synth_one(t) for t in tasks]
    io_formats.write_manifest(os.path.join(opts["out"], "manifest.json"), entries)
    log.info("wrote %d samples to %s", len(entries), opts["out"])
    print(json.dumps({"count": len(entries), "out": opts["out"]}))
    return 0


# ---------------------------------------------------------------------------
# peaks / fit


def _cmd_peaks(args) -> int:
    opts = _merged(
        args,
        {"heatmap": None, "tau": 0.5, "kernel": 5, "sigma": 1.0, "out": "detections.json"},
    )
    if not opts["heatmap"]:
        raise RulerkitError("--heatmap is required")
    from .heatmap import extract_peaks

    grid = io_formats.read_pfm(opts["heatmap"])
    hm = Heatmap(np.clip(grid, 0.0, 1.0))
    points = extract_peaks(hm, float(opts["tau"]), int(opts["kernel"]), float(opts["sigma"]))
    io_formats.write_detections(
        opts["out"], os.path.basename(str(opts["heatmap"])), points, source="heatmap"
    )
    print(json.dumps({"points": len(points), "out": opts["out"]}))
    return 0


def _estimate_to_dict(result) -> dict:
    est = result.estimate
    out = {
        "pixels_per_cm": est.pixels_per_cm,
        "status": est.status,
        "marks_used": est.marks_used,
    }
    if est.params is not None:
        out["params"] = {"m0": est.params.m0, "m1": est.params.m1, "r": est.params.r}
    if result.detection is not None:
        out["line"] = {
            "rho": result.detection.line.rho,
            "theta": result.detection.line.theta,
            "support": result.detection.support,
        }
    return out


def _cmd_fit(args) -> int:
    opts = _merged(
        args,
        {"points": None, "method": "gp-de", "model": None, "out": None, "seed": 0},
    )
    if not opts["points"]:
        raise RulerkitError("--points is required")
    if opts["method"] not in METHODS:
        raise RulerkitError(f"--method must be one of {METHODS}")
    _, points, _ = io_formats.read_detections(opts["points"])
    model = None
    if opts["method"] == "deepgp":
        if not opts["model"]:
            raise RulerkitError("--model is required for method deepgp")
        from .deepgp import load_model

        model = load_model(opts["model"])
    result = estimate_from_points(points, opts["method"], model=model)
    payload = _estimate_to_dict(result)
    if opts["out"]:
        io_formats.write_json(opts["out"], payload)
    print(json.dumps(payload))
    return 0


# ---------------------------------------------------------------------------
# deepgp-train


def _cmd_deepgp_train(args) -> int:
    opts = _merged(
        args,
        {
            "steps": 4096,
            "batch": 256,
            "seed": 0,
            "lr": 1e-3,
            "lr_schedule": "cosine",
            "out": "model.dgp1",
            "log": None,
        },
    )
    train_cfg = TrainConfig(
        batch=int(opts["batch"]),
        steps=int(opts["steps"]),
        learning_rate=float(opts["lr"]),
        lr_schedule=str(opts["lr_schedule"]),
        seed=int(opts["seed"]),
    )
    log_fh = open(opts["log"], "w", encoding="utf-8") if opts["log"] else None
    try:
        model = deepgp_train(StreamConfig(), train_cfg, log_stream=log_fh)
    finally:
        if log_fh:
            log_fh.close()
    save_model(model, opts["out"])
    print(json.dumps({"out": opts["out"], "steps": train_cfg.steps, "batch": train_cfg.batch}))
    return 0


# ---------------------------------------------------------------------------
# eval / bench


def _cmd_eval(args) -> int:
    opts = _merged(
        args,
        {
            "manifest": None,
            "method": "gp-de",
            "n": 768,
            "source": "auto",
            "jobs": 1,
            "model": None,
            "out": None,
            "csv": None,
            "timed": False,
            "tau": 0.5,
            "kernel": 5,
            "sigma": 1.0,
        },
    )
    if not opts["manifest"]:
        raise RulerkitError("--manifest is required")
    report = estimate_batch(
        opts["manifest"],
        opts["method"],
        source=opts["source"],
        n=float(opts["n"]),
        jobs=int(opts["jobs"]),
        peak_cfg=PeakConfig(float(opts["tau"]), int(opts["kernel"]), float(opts["sigma"])),
        model_path=opts["model"],
        timed=bool(opts["timed"]),
    )
    if opts["out"]:
        io_formats.write_json(opts["out"], report)
    if opts["csv"]:
        with open(opts["csv"], "w", encoding="utf-8") as fh:
            fh.write("id,predicted,ground_truth,size,elapsed_ms\n")
            for rec in report["records"]:
                fh.write(
                    f"{rec['id']},{rec['predicted']!r},{rec['ground_truth']!r},"
                    f"{rec['size']!r},{rec['elapsed_ms']!r}\n"
                )
    print(json.dumps({"n": report["n"], "mape": report["mape"], "ms_per_sample": report["ms_per_sample"]}))
    return 0


def _cmd_bench(args) -> int:
    opts = _merged(
        args,
        {"manifest": None, "methods": "gp-de,deepgp", "n": 768, "model": None, "out": None},
    )
    if not opts["manifest"]:
        raise RulerkitError("--manifest is required")
    table = {}
    for method in str(opts["methods"]).split(","):
        method = method.strip()
        if not method:
            continue
        if method not in METHODS:
            raise RulerkitError(f"unknown method {method!r} in --methods")
        report = estimate_batch(
            opts["manifest"],
            method,
            n=float(opts["n"]),
            model_path=opts["model"],
            timed=True,
        )
        table[method] = {"mape": report["mape"], "ms_per_sample": report["ms_per_sample"]}
    payload = {"n": float(opts["n"]), "methods": table}
    if opts["out"]:
        io_formats.write_json(opts["out"], payload)
    print(json.dumps(payload))
    return 0


# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = _JsonArgumentParser(prog="rulerkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, flags):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON config file (flags win)")
        for flag, kwargs in flags.items():
            p.add_argument(flag, **kwargs)
        p.set_defaults(func=fn)
        return p

    add(
        "synth",
        _cmd_synth,
        {
            "--count": {"type": int, "default": None},
            "--out": {"default": None},
            "--seed": {"type": int, "default": None},
            "--backgrounds": {"default": None},
            "--size": {"default": None, "help": "canvas WxH, default 768x768"},
            "--tilt-max": {"type": float, "default": None, "dest": "tilt_max"},
            "--jobs": {"type": int, "default": None},
        },
    )
    add(
        "peaks",
        _cmd_peaks,
        {
            "--heatmap": {"default": None},
            "--tau": {"type": float, "default": None},
            "--kernel": {"type": int, "default": None},
            "--sigma": {"type": float, "default": None},
            "--out": {"default": None},
        },
    )
    add(
        "fit",
        _cmd_fit,
        {
            "--points": {"default": None},
            "--method": {"default": None, "choices": METHODS},
            "--model": {"default": None},
            "--out": {"default": None},
            "--seed": {"type": int, "default": None},
        },
    )
    add(
        "deepgp-train",
        _cmd_deepgp_train,
        {
            "--steps": {"type": int, "default": None},
            "--batch": {"type": int, "default": None},
            "--seed": {"type": int, "default": None},
            "--lr": {"type": float, "default": None},
            "--lr-schedule": {"default": None, "dest": "lr_schedule", "choices": ["cosine", "constant"]},
            "--out": {"default": None},
            "--log": {"default": None},
        },
    )
    add(
        "eval",
        _cmd_eval,
        {
            "--manifest": {"default": None},
            "--method": {"default": None, "choices": METHODS},
            "--n": {"type": float, "default": None},
            "--source": {
                "default": None,
                "choices": ["auto", "detections", "heatmap", "gt-points", "gt-heatmap"],
            },
            "--jobs": {"type": int, "default": None},
            "--model": {"default": None},
            "--out": {"default": None},
            "--csv": {"default": None},
            "--timed": {"action": "store_true", "default": None},
            "--tau": {"type": float, "default": None},
            "--kernel": {"type": int, "default": None},
            "--sigma": {"type": float, "default": None},
        },
    )
    add(
        "bench",
        _cmd_bench,
        {
            "--manifest": {"default": None},
            "--methods": {"default": None},
            "--n": {"type": float, "default": None},
            "--model": {"default": None},
            "--out": {"default": None},
        },
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("RULERKIT_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except RulerkitError as exc:
        json.dump(
            {"error": type(exc).__name__, "message": str(exc)}, sys.stderr
        )
        sys.stderr.write("\n")
        return 2
    except OSError as exc:
        json.dump({"error": "OSError", "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 3


if __name__ == "__main__":
    sys.exit(main())
