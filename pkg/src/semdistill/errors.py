"""Exception taxonomy shared across the package."""


class SemdistillError(Exception):
    """Base class for all package errors."""


class ShapeError(SemdistillError):
    """Dimension mismatch or empty input to a tensor primitive."""


class NonFiniteError(SemdistillError):
    """A primitive produced NaN or Inf; the operation is aborted."""


class DegenerateInputError(SemdistillError):
    """Statistically degenerate input (constant vector, zero norm)."""


class ContractError(SemdistillError):
    """API misuse: non-scalar backward root, non-permutation ranking,
    non-deterministic function handed to the gradient checker."""


class ConfigError(SemdistillError):
    """Invalid model or run configuration."""


class VocabError(SemdistillError):
    """Token id outside the embedding table."""


class LengthError(SemdistillError):
    """Sequence longer than the model's maximum length."""


class DataError(SemdistillError):
    """Empty or unusable dataset/corpus."""


class TaskError(SemdistillError):
    """Unknown task tag (expected 'sym' or 'asym')."""


class TrainingSignalError(SemdistillError):
    """Every anchor in a batch was degenerate; no gradient signal left."""


class StaleCacheError(SemdistillError):
    """Judgment cache does not match the teacher weights in use."""


class StaleIndexError(SemdistillError):
    """Embedding index does not match the student weights in use."""


class FormatError(SemdistillError):
    """Bad magic, unsupported version, or truncated binary artifact."""


class ParseError(SemdistillError):
    """Malformed text input (pairs file, config file); carries location."""
