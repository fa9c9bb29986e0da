"""rulerkit: ruler-reading scale estimation and synthetic-data tooling.

The pipeline ingests mark heatmaps or 2D points, groups collinear marks
with a Hough transform, projects them onto the dominant line, and recovers
pixels/cm by fitting a geometric progression, either with constrained
differential evolution or with a small learned regressor. A procedural
renderer produces annotated synthetic rulers, and an evaluation harness
scores estimators with the mAPE/cm@n metric.
"""

from .errors import (
    CannotFit,
    DegenerateInput,
    DegenerateRange,
    DegenerateSpan,
    EmptyDataset,
    EmptyInput,
    InvalidCount,
    InvalidKernel,
    InvalidParams,
    InvalidSigma,
    InvalidTilt,
    MalformedHeader,
    NoRulers,
    RulerkitError,
    SchemaViolation,
    ShapeMismatch,
    SpecOutOfBounds,
    TooFewMarks,
    TooFewPoints,
    TooManyMarks,
    TruncatedPayload,
    UnsupportedGlyph,
)
from .geometry import (
    HoughLine,
    Point2,
    line_from_points,
    project_to_line,
    unproject_from_line,
)
from .heatmap import (
    Heatmap,
    cross_entropy_loss,
    dice_loss,
    extract_peaks,
    gaussian_kernel_2d,
    render_gaussians,
    total_loss,
)
from .hough import HoughConfig, LineDetection, hough_all_lines, hough_dominant_line
from .gpfit import (
    FitConfig,
    GPParams,
    ScaleEstimate,
    chamfer_1d,
    chamfer_1d_bruteforce,
    chamfer_1d_sorted,
    default_bounds,
    estimate_direct,
    estimate_median_filtered,
    fit_gp_de,
    gp_generate,
    gp_generate_spanning,
    scale_from_gp,
)
from .deepgp import (
    DeepGPModel,
    NoiseConfig,
    NoisyGPSample,
    NormalizationRecord,
    StreamConfig,
    TrainConfig,
    deepgp_infer,
    deepgp_train,
    encode_input,
    generate_noisy_gp,
    gradient_check,
    load_model,
    normalize_marks,
    save_model,
)
from .synth import (
    RulerSample,
    RulerSpec,
    build_prompt,
    draw_ruler,
    perspective_warp,
    random_spec,
    render_label,
)
from .evaluation import (
    EvalRecord,
    LineAnnotation,
    PointAnnotation,
    gt_scale_from_lines,
    gt_scale_from_points,
    mape_per_cm_at_n,
    run_benchmark,
)
from .pipeline import (
    PeakConfig,
    PipelineResult,
    estimate_all_from_heatmap,
    estimate_batch,
    estimate_from_heatmap,
    estimate_from_points,
)

__version__ = "0.1.0"
