"""Exception types raised across the package."""


class DriwslError(Exception):
    """Base class for all package errors."""


class DimensionError(DriwslError, ValueError):
    """A vector does not match the vocabulary size of its node."""

    def __init__(self, node, expected, got):
        self.node = node
        self.expected = expected
        self.got = got
        super().__init__(f"node {node}: expected a vector of size {expected}, got {got}")


class GraphError(DriwslError, ValueError):
    """The graph structure violates the edge taxonomy or feature contract."""


class StateSpaceTooLarge(DriwslError):
    def __init__(self, size, cap):
        self.size = size
        self.cap = cap
        super().__init__(f"joint state space has {size} assignments, cap is {cap}")


class ZeroProbabilityError(DriwslError, ValueError):
    """Raised when a categorical parameter has a zero entry; floor it first."""


class StaleTapeError(DriwslError):
    """The forward tape was recorded against different parameters."""


class TrainingDiverged(DriwslError):
    pass


class ConfigError(DriwslError, ValueError):
    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")


class CheckpointError(DriwslError):
    pass
