"""Typed errors raised across the library.

Every failure mode callers are expected to handle has its own class so that
tests and the CLI can match on type rather than message text.
"""


class RulerkitError(Exception):
    """Base class for all library errors."""


class DegenerateInput(RulerkitError):
    """Two coincident points were given where a line was required."""


class EmptyInput(RulerkitError):
    """An operation requiring a non-empty collection received an empty one."""


class InvalidSigma(RulerkitError):
    """A Gaussian sigma was zero or negative."""


class ShapeMismatch(RulerkitError):
    """Two grids that must share a shape do not."""


class InvalidKernel(RulerkitError):
    """Smoothing kernel size is not an odd integer >= 3, or sigma <= 0."""


class TooFewPoints(RulerkitError):
    """Hough detection needs at least two points."""


class TooFewMarks(RulerkitError):
    """GP fitting needs at least three marks (two for bounds)."""


class InvalidParams(RulerkitError):
    """GPParams violate m0 != m1 or r > 0."""


class DegenerateSpan(RulerkitError):
    """A [lo, hi] span with lo >= hi, or spacing below the 0.5 px guard."""


class InvalidCount(RulerkitError):
    """Sample mark count outside the supported 3..64 range."""


class DegenerateRange(RulerkitError):
    """Min-max normalization of an all-equal mark list."""


class TooManyMarks(RulerkitError):
    """More than 64 marks passed to the fixed-width encoder."""


class SpecOutOfBounds(RulerkitError):
    """A ruler spec whose footprint does not fit its canvas."""


class InvalidTilt(RulerkitError):
    """A perspective tilt factor outside [-0.4, 0.4]."""


class CannotFit(RulerkitError):
    """Spec sampling failed to find a canvas-fitting spec in 100 tries."""


class UnsupportedGlyph(RulerkitError):
    """A label character outside the built-in digit glyph set."""


class NoRulers(RulerkitError):
    """An annotation with no rulers where at least one is required."""


class EmptyDataset(RulerkitError):
    """A benchmark over zero records."""


class MalformedHeader(RulerkitError):
    """A PFM or model file whose header is not the supported variant."""


class TruncatedPayload(RulerkitError):
    """A binary file shorter than its header promises."""


class SchemaViolation(RulerkitError):
    """A JSON document that fails schema validation.

    ``path`` holds a dotted/indexed location such as ``rulers[0].length_cm``.
    """

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")
