"""Exception hierarchy shared by every module."""


class StreamRLError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(StreamRLError, ValueError):
    """Invalid static configuration (specs, hyperparameters, config files)."""


class UsageError(StreamRLError, ValueError):
    """A call that violates an operation's contract (shapes, stale caches, order)."""


class NumericFault(StreamRLError, ArithmeticError):
    """A non-finite value appeared where finite numbers are required.

    Attributes:
        layer: index of the network layer that produced the value, if known.
        step: global step index at which the fault surfaced, if known.
    """

    def __init__(self, message, layer=None, step=None):
        super().__init__(message)
        self.layer = layer
        self.step = step

    def __str__(self):
        parts = [super().__str__()]
        if self.layer is not None:
            parts.append(f"layer={self.layer}")
        if self.step is not None:
            parts.append(f"step={self.step}")
        return " ".join(parts)


class EnvironmentFault(StreamRLError, RuntimeError):
    """An environment (usually an external bridge process) misbehaved."""
