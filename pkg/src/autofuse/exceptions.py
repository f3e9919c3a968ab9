"""Exception types raised across the package.

Every operational error contract maps to one of these classes so callers
(and the search loop, which must survive failed trials) can catch
:class:`AutofuseError` without swallowing genuine bugs.
"""


class AutofuseError(Exception):
    """Base class for all expected, contract-level errors."""


class MissingFile(AutofuseError):
    """A manifest or a file referenced by a manifest does not exist."""


class SchemaError(AutofuseError):
    """A manifest, table, or embedding file violates the declared format."""


class UnknownColumn(AutofuseError):
    """A schema column is absent from the table being encoded."""


class InvalidK(AutofuseError):
    """Fold count is below 2 or exceeds the number of distinct groups."""


class DegenerateSplit(AutofuseError):
    """A train/validation carve would empty a class or all groups from train."""


class AllMissingColumn(AutofuseError):
    """An imputer strategy needs observed values but a column has none."""


class RankError(AutofuseError):
    """Requested number of PCA components exceeds what the data supports."""


class SingleClassError(AutofuseError):
    """Classifier training requires at least two classes."""


class ShapeMismatch(AutofuseError):
    """Array dimensions are inconsistent with what was fitted or declared."""


class DivergenceError(AutofuseError):
    """Training loss became non-finite."""


class InvalidProbability(AutofuseError):
    """A probability row is off the simplex beyond tolerance."""


class LengthMismatch(AutofuseError):
    """Paired sequences have different lengths."""


class UndefinedMetric(AutofuseError):
    """A metric has no defined value for the given inputs."""


class ConfigError(AutofuseError):
    """An experiment or search configuration is invalid."""
