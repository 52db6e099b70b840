"""Exception types shared across the package."""


class MaskgapError(Exception):
    """Base class for all package-specific errors."""


class LengthCapError(MaskgapError):
    """A prefix reached the hard length cap of a language model."""


class ConstraintViolationError(MaskgapError):
    """A token was fed to a matcher that does not allow it."""


class EnumerationLimitError(MaskgapError):
    """A language is too large to enumerate string by string."""


class StateGraphLimitError(MaskgapError):
    """The reachable prefix/state graph exceeds the configured capacity."""


class DegenerateGrammarError(MaskgapError):
    """The base model assigns (numerically) zero mass to the whole language."""


class NonDegeneracyError(MaskgapError):
    """A reachable prefix has zero base-model mass on its valid-token set."""


class EstimatorDegeneracyError(MaskgapError):
    """A future-validity estimate is zero on every valid token of a state."""


class HorizonTooShortError(MaskgapError):
    """A rollout horizon cannot reach the end of every valid completion."""


class CoverageError(MaskgapError):
    """An exact future-validity table has no entry for the requested state."""
