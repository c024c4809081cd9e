"""Exception types raised by the compsnn library.

Every library error derives from :class:`CompsnnError` so callers (and the
CLI) can distinguish data/config problems from programming errors.
"""


class CompsnnError(Exception):
    """Base class for all compsnn errors."""


# trajectory ingestion / features
class TooShort(CompsnnError):
    """Trajectory has fewer than 3 valid samples."""


class NonMonotonicTime(CompsnnError):
    """Timestamps decrease and cannot be repaired by dropping duplicates."""


class LengthMismatch(CompsnnError):
    """Paired sequences have inconsistent lengths."""


class UnknownCategory(CompsnnError):
    """A demographic value is not declared in the schema."""


class MissingField(CompsnnError):
    """A demographic record lacks a schema field."""


# density map / segmentation
class EmptyInput(CompsnnError):
    """An operation received an empty trajectory set."""


class AllZero(CompsnnError):
    """Density grid has no nonzero cell."""


class SeedOutsideMask(CompsnnError):
    """A watershed seed lies on a masked-out cell."""


# graph
class OutOfBounds(CompsnnError):
    """A trajectory sample falls outside the density grid bounds."""


class IdOutOfRange(CompsnnError):
    """A node id exceeds the declared node count."""


class NotSymmetric(CompsnnError):
    """Eigendecomposition input is not symmetric."""


class NoConvergence(CompsnnError):
    """The eigensolver did not converge within the sweep budget."""


class DimensionMismatch(CompsnnError):
    """Vector length does not match the spectrum size."""


# neural network toolkit / model
class ShapeMismatch(CompsnnError):
    """Tensor shapes are inconsistent with the layer contract."""


class EvenKernel(CompsnnError):
    """1D convolution kernels must have odd width."""


class NonFiniteGradient(CompsnnError):
    """A gradient contains NaN or infinity; the optimizer step was aborted."""


class UnknownKind(CompsnnError):
    """Unrecognized model or module kind."""


class NonPositiveEpsilon(CompsnnError):
    """Loss width parameters must be strictly positive."""


# experiment
class UnreachableCheckpoint(CompsnnError):
    """The obstacle layout blocks the path to a checkpoint."""


class DivergedLoss(CompsnnError):
    """A non-finite loss was encountered during training."""


class OrderMismatch(CompsnnError):
    """Per-sample loss vectors do not share a common sample order."""


# explainability
class ChannelOutOfRange(CompsnnError):
    """Requested activation channel does not exist."""


class EmptyMap(CompsnnError):
    """Cannot render an activation map with no points."""
