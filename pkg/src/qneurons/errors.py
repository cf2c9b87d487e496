"""Exception types raised across the package."""


class QNeuronError(Exception):
    """Base class for all package-specific errors."""


class MissingDerivative(QNeuronError):
    """A fallback branch needed an analytic first derivative that was not supplied."""


class MissingPartial(QNeuronError):
    """A zero coordinate needed an analytic partial derivative that was not supplied."""


class NonFiniteResult(QNeuronError):
    """A finite-difference quotient overflowed or produced NaN."""


class DimensionMismatch(QNeuronError):
    """Vector arguments of a multivariate operator have unequal dimensions."""


class InvalidConfig(QNeuronError):
    """A configuration value violates its documented range."""


class DegenerateQ(QNeuronError):
    """q = 1 reached a 1/(1-q) quotient that the sampler should have prevented."""


class StaleState(QNeuronError):
    """A backward pass was requested before any forward pass."""


class ShapeMismatch(QNeuronError):
    """Tensor shapes are incompatible with a layer or an update."""


class BadMagic(QNeuronError):
    """A file does not start with the expected IDX magic number."""


class TruncatedFile(QNeuronError):
    """A file ends before the payload promised by its header."""


class CountMismatch(QNeuronError):
    """Image and label files disagree on the number of items."""


class NonFiniteLoss(QNeuronError):
    """Training produced a non-finite loss value."""
