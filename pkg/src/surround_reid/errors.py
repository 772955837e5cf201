class ConfigError(ValueError):
    """A configuration value violates its documented range."""


class DomainError(ValueError):
    """A numeric argument lies outside the operation's domain."""


class LifecycleError(RuntimeError):
    """An operation was applied to a deleted track or identity."""


class NoGroundIntersection(ValueError):
    """The pixel's viewing ray never reaches the ground plane."""


class MissingKeypointCategory(LookupError):
    """A wheel keypoint category is absent on one side of a comparison."""


class NoCandidates(LookupError):
    """An identity has no stored embeddings to compare against."""


class RecordError(ValueError):
    """A dataset or results file is malformed."""


class SequenceMismatch(ValueError):
    """A results file does not describe the sequences of its dataset."""
