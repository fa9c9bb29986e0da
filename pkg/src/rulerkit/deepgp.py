"""Learned inverse mapping from noisy 1D marks to GP parameters.

A small fully connected regressor consumes a fixed-width encoding of up to
64 min-max-normalized marks and predicts ``(m0', d', r)`` in normalized
space. Training data is generated online: random GP parameters, Gaussian
mark displacement, random drops, and random spurious marks. The network,
its backward pass, and the optimizer are implemented directly in numpy so
gradients can be verified against finite differences.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import IO, Sequence

import numpy as np

from .errors import (
    DegenerateRange,
    InvalidCount,
    MalformedHeader,
    TooManyMarks,
    TruncatedPayload,
)
from .gpfit import R_MAX, R_MIN, GPParams, gp_generate

__all__ = [
    "MAX_MARKS",
    "INPUT_WIDTH",
    "DEFAULT_DIMS",
    "NoiseConfig",
    "NoisyGPSample",
    "NormalizationRecord",
    "DeepGPModel",
    "StreamConfig",
    "TrainConfig",
    "generate_noisy_gp",
    "normalize_marks",
    "encode_input",
    "deepgp_infer",
    "deepgp_train",
    "gradient_check",
    "save_model",
    "load_model",
]

MAX_MARKS = 64
INPUT_WIDTH = 2 * MAX_MARKS  # 64 sorted marks + 64-slot presence mask
DEFAULT_DIMS = (INPUT_WIDTH, 256, 256, 256, 3)
MODEL_MAGIC = b"DGP1"


@dataclass(frozen=True)
class NoiseConfig:
    """Mark-corruption magnitudes for one sample."""

    sigma_frac: float = 0.02  # noise std as a fraction of the clean spacing
    drop_frac_max: float = 0.1
    add_max: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.sigma_frac < 0:
            raise ValueError("sigma_frac must be >= 0")
        if not 0 <= self.drop_frac_max < 1:
            raise ValueError("drop_frac_max must lie in [0, 1)")
        if self.add_max < 0:
            raise ValueError("add_max must be >= 0")


@dataclass(frozen=True)
class NoisyGPSample:
    marks: list[float]
    truth: GPParams
    n_clean: int


@dataclass(frozen=True)
class NormalizationRecord:
    """Affine map used to normalize marks: t' = (t - offset) / scale."""

    offset: float
    scale: float

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("scale must be positive")


def generate_noisy_gp(truth: GPParams, n: int, cfg: NoiseConfig) -> NoisyGPSample:
    """One corrupted GP sample: displace, drop, add, shuffle.

    Gaussian displacement uses sigma ``sigma_frac * |m1 - m0|``. A uniform
    random count up to ``floor(drop_frac_max * n)`` of marks is removed, but
    never below three retained. Up to ``add_max`` spurious marks are drawn
    uniformly over the clean span. Fully deterministic given ``cfg.seed``.

    Raises
    ------
    InvalidCount
        If ``n`` is outside [3, 64].
    """
    if not 3 <= n <= MAX_MARKS:
        raise InvalidCount(f"n must lie in [3, {MAX_MARKS}], got {n}")
    rng = np.random.default_rng(cfg.seed)
    clean = np.asarray(gp_generate(truth, n), dtype=np.float64)
    sigma = cfg.sigma_frac * abs(truth.spacing)
    marks = clean + (rng.normal(0.0, sigma, size=n) if sigma > 0 else 0.0)

    max_drop = min(int(cfg.drop_frac_max * n), n - 3)
    n_drop = int(rng.integers(0, max_drop + 1)) if max_drop > 0 else 0
    if n_drop > 0:
        keep = np.sort(rng.choice(n, size=n - n_drop, replace=False))
        marks = marks[keep]

    n_add = int(rng.integers(0, cfg.add_max + 1)) if cfg.add_max > 0 else 0
    # Spurious marks never push the sample past the 64-mark encoder cap.
    n_add = min(n_add, MAX_MARKS - len(marks))
    if n_add > 0:
        lo, hi = float(clean.min()), float(clean.max())
        marks = np.concatenate([marks, rng.uniform(lo, hi, size=n_add)])

    marks = marks[rng.permutation(len(marks))]
    return NoisyGPSample(marks=[float(v) for v in marks], truth=truth, n_clean=n)


def normalize_marks(marks: Sequence[float]) -> tuple[list[float], NormalizationRecord]:
    """Min-max map onto [-1, 1]: min -> -1, max -> +1.

    Raises
    ------
    DegenerateRange
        If all marks are equal (fewer than two distinct values).
    """
    arr = np.asarray(marks, dtype=np.float64).ravel()
    if arr.size < 2 or arr.max() == arr.min():
        raise DegenerateRange("normalization needs >= 2 distinct mark values")
    mid = (float(arr.max()) + float(arr.min())) / 2.0
    half = (float(arr.max()) - float(arr.min())) / 2.0
    return [float((v - mid) / half) for v in arr], NormalizationRecord(mid, half)


def encode_input(marks_normalized: Sequence[float]) -> np.ndarray:
    """128-wide feature vector: sorted marks zero-padded, then presence mask.

    Raises
    ------
    TooManyMarks
        If more than 64 marks are given.
    """
    arr = np.asarray(marks_normalized, dtype=np.float64).ravel()
    if arr.size > MAX_MARKS:
        raise TooManyMarks(f"at most {MAX_MARKS} marks supported, got {arr.size}")
    if arr.size < 2:
        raise ValueError("need >= 2 marks to encode")
    vec = np.zeros(INPUT_WIDTH, dtype=np.float64)
    vec[: arr.size] = np.sort(arr)
    vec[MAX_MARKS : MAX_MARKS + arr.size] = 1.0
    return vec


@dataclass
class DeepGPModel:
    """Fully connected float32 regressor; ReLU hidden, identity output."""

    dims: tuple[int, ...]
    weights: list[np.ndarray] = field(repr=False)  # (fan_in, fan_out) each
    biases: list[np.ndarray] = field(repr=False)  # (fan_out,) each

    @classmethod
    def initialize(cls, dims: Sequence[int] = DEFAULT_DIMS, seed: int = 0) -> "DeepGPModel":
        """He-normal weight init appropriate for ReLU layers."""
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            std = math.sqrt(2.0 / fan_in)
            weights.append((rng.normal(0.0, std, (fan_in, fan_out))).astype(np.float32))
            biases.append(np.zeros(fan_out, dtype=np.float32))
        return cls(dims=tuple(int(d) for d in dims), weights=weights, biases=biases)

    @property
    def parameter_count(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Batch forward pass; input (B, dims[0]), output (B, dims[-1])."""
        a = np.asarray(x, dtype=np.float32).reshape(-1, self.dims[0])
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            a = a @ w + b
            if i != last:
                np.maximum(a, 0.0, out=a)
        return a

    def _forward_cached(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        # Activations per layer (inputs included), needed by the backward pass.
        acts = [np.asarray(x, dtype=np.float32).reshape(-1, self.dims[0])]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = acts[-1] @ w + b
            if i != last:
                np.maximum(z, 0.0, out=z)
            acts.append(z)
        return acts[-1], acts

    def loss_and_gradients(
        self, x: np.ndarray, targets: np.ndarray
    ) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
        """Mean squared error over the batch and its weight/bias gradients."""
        targets = np.asarray(targets, dtype=np.float32).reshape(-1, self.dims[-1])
        pred, acts = self._forward_cached(x)
        diff = pred - targets
        loss = float(np.mean(diff.astype(np.float64) ** 2))
        # d loss / d pred for mean over batch*outputs elements
        grad = (2.0 / diff.size) * diff
        grad_w: list[np.ndarray] = [None] * len(self.weights)  # type: ignore
        grad_b: list[np.ndarray] = [None] * len(self.biases)  # type: ignore
        for i in range(len(self.weights) - 1, -1, -1):
            grad_w[i] = acts[i].T @ grad
            grad_b[i] = grad.sum(axis=0)
            if i > 0:
                grad = (grad @ self.weights[i].T) * (acts[i] > 0)
        return loss, grad_w, grad_b


def deepgp_infer(model: DeepGPModel, marks: Sequence[float]) -> GPParams:
    """Predict GP parameters for a noisy mark list.

    Marks are normalized, encoded, and passed through the network; outputs
    are denormalized with the same record. The spacing head predicts in log
    space (see :func:`deepgp_train`), so it is exponentiated — clamped to
    avoid float overflow on garbage weights — before denormalization. The
    ratio is clamped to the optimization bounds [1/1.5, 1.5].

    Raises
    ------
    DegenerateRange, TooManyMarks
        From normalization/encoding preconditions.
    """
    arr = np.asarray(marks, dtype=np.float64).ravel()
    if arr.size > MAX_MARKS:
        raise TooManyMarks(f"at most {MAX_MARKS} marks supported, got {arr.size}")
    if arr.size < 3:
        raise DegenerateRange("inference needs >= 3 marks")
    normalized, record = normalize_marks(arr)
    out = model.forward(encode_input(normalized)[None, :])[0].astype(np.float64)
    m0n, log_dn, r = float(out[0]), float(out[1]), float(out[2])
    m0 = m0n * record.scale + record.offset
    d = math.exp(min(max(log_dn, -300.0), 300.0)) * record.scale
    r = min(max(r, R_MIN), R_MAX)
    return GPParams(m0=m0, m1=m0 + d, r=r)


@dataclass(frozen=True)
class StreamConfig:
    """Parameter ranges for the online training-sample stream.

    The ratio is drawn through the total gap growth across the ruler,
    ``G = r^(n-2)``, sampled uniformly from ``[1, growth_max]`` (clamped so
    ``r`` stays inside ``r_range``) and inverted with probability one half.
    Drawing ``r`` uniformly instead makes large-``n`` samples degenerate:
    their growth explodes geometrically, min-max normalization crushes the
    dense half of the ruler below float32 resolution, and the unlearnable
    samples dominate the loss.
    """

    sigma_frac_range: tuple[float, float] = (0.0, 0.05)
    drop_frac_max: float = 0.2
    add_max: int = 3
    r_range: tuple[float, float] = (1.0 / 1.4, 1.4)
    n_range: tuple[int, int] = (5, MAX_MARKS)
    growth_max: float = 6.0


@dataclass(frozen=True)
class TrainConfig:
    batch: int = 256
    steps: int = 4096
    learning_rate: float = 1e-3
    lr_schedule: str = "cosine"  # or "constant"
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        if self.lr_schedule not in ("cosine", "constant"):
            raise ValueError("lr_schedule must be 'cosine' or 'constant'")


def _sample_batch(
    stream: StreamConfig, seed: int, step: int, batch: int
) -> tuple[np.ndarray, np.ndarray]:
    """One training batch; seeded by (seed, step) so batches are reproducible
    independently of how many were generated before."""
    rng = np.random.default_rng([seed, step])
    xs = np.empty((batch, INPUT_WIDTH), dtype=np.float64)
    ys = np.empty((batch, 3), dtype=np.float64)
    n_lo, n_hi = stream.n_range
    for i in range(batch):
        # Scale and offset cancel exactly under min-max normalization, so the
        # canonical progression (m0=0, spacing 1) spans the whole input space.
        n = int(rng.integers(n_lo, n_hi + 1))
        invert = bool(rng.random() < 0.5)
        edge = 1.0 / stream.r_range[0] if invert else stream.r_range[1]
        growth = float(rng.uniform(1.0, min(stream.growth_max, edge ** (n - 2))))
        r = growth ** (1.0 / (n - 2))
        if invert:
            r = 1.0 / r
        truth = GPParams(m0=0.0, m1=1.0, r=r)
        cfg = NoiseConfig(
            sigma_frac=float(rng.uniform(*stream.sigma_frac_range)),
            drop_frac_max=stream.drop_frac_max,
            add_max=stream.add_max,
            seed=int(rng.integers(0, 2**63 - 1)),
        )
        sample = generate_noisy_gp(truth, n, cfg)
        normalized, record = normalize_marks(sample.marks)
        xs[i] = encode_input(normalized)
        ys[i, 0] = (truth.m0 - record.offset) / record.scale
        # The spacing is regressed in log space: its normalized value shrinks
        # like 1/n, so a linear target starves dense rulers of gradient
        # signal and plateaus at several percent relative error.
        ys[i, 1] = math.log(truth.spacing / record.scale)
        ys[i, 2] = truth.r
    return xs, ys


def deepgp_train(
    stream: StreamConfig | None = None,
    train: TrainConfig | None = None,
    log_stream: IO[str] | None = None,
) -> DeepGPModel:
    """Train a fresh model on freshly generated samples with Adam + MSE.

    Targets are the normalized anchor, the *log* of the normalized spacing,
    and the ratio. Regressing the spacing linearly starves dense rulers of
    gradient signal (their normalized spacing shrinks like 1/n while the
    other targets stay O(1)) and plateaus at several percent relative
    error; the log target makes the squared loss a relative one.

    Every batch is drawn from the stream seeded by ``(seed, step)``; no
    dataset is stored. Progress is written to ``log_stream`` as one JSON
    object per line: ``{"step": ..., "loss": ...}``. Deterministic per seed.
    """
    stream = stream or StreamConfig()
    train = train or TrainConfig()
    model = DeepGPModel.initialize(DEFAULT_DIMS, seed=train.seed)

    beta1, beta2, eps = 0.9, 0.999, 1e-8
    m_w = [np.zeros_like(w) for w in model.weights]
    v_w = [np.zeros_like(w) for w in model.weights]
    m_b = [np.zeros_like(b) for b in model.biases]
    v_b = [np.zeros_like(b) for b in model.biases]

    for step in range(train.steps):
        xs, ys = _sample_batch(stream, train.seed, step, train.batch)
        loss, grad_w, grad_b = model.loss_and_gradients(xs, ys)
        if train.lr_schedule == "cosine":
            lr = train.learning_rate * 0.5 * (1.0 + math.cos(math.pi * step / train.steps))
        else:
            lr = train.learning_rate
        t = step + 1
        bc1 = 1.0 - beta1**t
        bc2 = 1.0 - beta2**t
        for group in (
            zip(model.weights, grad_w, m_w, v_w),
            zip(model.biases, grad_b, m_b, v_b),
        ):
            for param, grad, m, v in group:
                m *= beta1
                m += (1 - beta1) * grad
                v *= beta2
                v += (1 - beta2) * grad * grad
                param -= (lr / bc1) * m / (np.sqrt(v / bc2) + eps)
        if log_stream is not None:
            log_stream.write(json.dumps({"step": step, "loss": loss}) + "\n")
    return model


def gradient_check(
    model: DeepGPModel, xs: np.ndarray, ys: np.ndarray, step: float = 1e-3
) -> float:
    """Max relative error between analytic and central-difference gradients.

    The comparison runs on a float64 copy of the model so the finite
    difference is not drowned by float32 rounding; intended for small models
    (<= 1e4 parameters).
    """
    f64 = DeepGPModel(
        dims=model.dims,
        weights=[w.astype(np.float64) for w in model.weights],
        biases=[b.astype(np.float64) for b in model.biases],
    )

    def loss_at() -> float:
        a = np.asarray(xs, dtype=np.float64).reshape(-1, f64.dims[0])
        last = len(f64.weights) - 1
        for i, (w, b) in enumerate(zip(f64.weights, f64.biases)):
            a = a @ w + b
            if i != last:
                a = np.maximum(a, 0.0)
        t = np.asarray(ys, dtype=np.float64).reshape(-1, f64.dims[-1])
        return float(np.mean((a - t) ** 2))

    # Analytic gradients from the float32 code path, recomputed in float64
    # by temporarily viewing the float64 weights through the same algebra.
    _, grad_w, grad_b = _loss_and_gradients_f64(f64, xs, ys)

    worst = 0.0
    for params, grads in ((f64.weights, grad_w), (f64.biases, grad_b)):
        for p, g in zip(params, grads):
            flat = p.ravel()
            gflat = g.ravel()
            for k in range(flat.size):
                orig = flat[k]
                flat[k] = orig + step
                up = loss_at()
                flat[k] = orig - step
                down = loss_at()
                flat[k] = orig
                numeric = (up - down) / (2 * step)
                denom = max(abs(numeric) + abs(gflat[k]), 1e-8)
                worst = max(worst, abs(numeric - gflat[k]) / denom)
    return worst


def _loss_and_gradients_f64(
    model: DeepGPModel, xs: np.ndarray, ys: np.ndarray
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    acts = [np.asarray(xs, dtype=np.float64).reshape(-1, model.dims[0])]
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = acts[-1] @ w + b
        if i != last:
            z = np.maximum(z, 0.0)
        acts.append(z)
    targets = np.asarray(ys, dtype=np.float64).reshape(-1, model.dims[-1])
    diff = acts[-1] - targets
    loss = float(np.mean(diff**2))
    grad = (2.0 / diff.size) * diff
    grad_w: list[np.ndarray] = [None] * len(model.weights)  # type: ignore
    grad_b: list[np.ndarray] = [None] * len(model.biases)  # type: ignore
    for i in range(len(model.weights) - 1, -1, -1):
        grad_w[i] = acts[i].T @ grad
        grad_b[i] = grad.sum(axis=0)
        if i > 0:
            grad = (grad @ model.weights[i].T) * (acts[i] > 0)
    return loss, grad_w, grad_b


def save_model(model: DeepGPModel, path) -> None:
    """Write the "DGP1" container: magic, layer count, dims, float32 data."""
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(np.uint32(len(model.weights)).tobytes())
        fh.write(np.asarray(model.dims, dtype="<u4").tobytes())
        for w, b in zip(model.weights, model.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f4").tobytes())


def load_model(path) -> DeepGPModel:
    """Read a "DGP1" container written by :func:`save_model`.

    Raises
    ------
    MalformedHeader
        On a wrong magic or an implausible layer count.
    TruncatedPayload
        When the file ends before the promised weights.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MODEL_MAGIC:
        raise MalformedHeader(f"expected magic {MODEL_MAGIC!r}, got {blob[:4]!r}")
    off = 4
    if len(blob) < off + 4:
        raise TruncatedPayload("missing layer count")
    n_layers = int(np.frombuffer(blob, "<u4", count=1, offset=off)[0])
    off += 4
    if not 1 <= n_layers <= 64:
        raise MalformedHeader(f"implausible layer count {n_layers}")
    need = (n_layers + 1) * 4
    if len(blob) < off + need:
        raise TruncatedPayload("missing layer dims")
    dims = tuple(int(d) for d in np.frombuffer(blob, "<u4", count=n_layers + 1, offset=off))
    off += need
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        wn = fan_in * fan_out * 4
        if len(blob) < off + wn + fan_out * 4:
            raise TruncatedPayload(f"layer {len(weights)} data truncated")
        w = np.frombuffer(blob, "<f4", count=fan_in * fan_out, offset=off).reshape(
            fan_in, fan_out
        )
        off += wn
        b = np.frombuffer(blob, "<f4", count=fan_out, offset=off)
        off += fan_out * 4
        weights.append(w.copy())
        biases.append(b.copy())
    return DeepGPModel(dims=dims, weights=weights, biases=biases)
