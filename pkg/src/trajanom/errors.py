"""Exception types shared across the package."""


class TrajanomError(Exception):
    """Base class for every error raised by this package."""


class GeometryError(TrajanomError, ValueError):
    """Bounding box with non-finite or non-positive dimensions."""


class ParseError(TrajanomError, ValueError):
    """Malformed track, label, score, or config file.

    ``line`` is the 1-based physical line number of the offending row when
    known.
    """

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class WeightError(TrajanomError, ValueError):
    """Weight container malformed or inconsistent with the predictor config."""


class AlignmentError(TrajanomError, ValueError):
    """Prediction and window (or score series) disagree on pedestrian/frames."""


class NumericError(TrajanomError, ArithmeticError):
    """Non-finite value produced during a predictor forward pass."""


class EvalError(TrajanomError, ValueError):
    """Evaluation input unusable (single-class labels, length mismatch)."""


class ConfigError(TrajanomError, ValueError):
    """Invalid run, scene, or predictor configuration."""
