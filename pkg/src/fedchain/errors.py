"""Exception types raised by the fedchain library."""


class FedChainError(Exception):
    """Base class for all fedchain errors."""


class InvalidTopologyError(FedChainError):
    """Topology request cannot be satisfied (e.g. fewer than two nodes)."""


class NodeNotFoundError(FedChainError):
    """A message names a node id outside the simulated node set."""


class InvalidObservationError(FedChainError):
    """Latency observation is non-positive or recorded for a self-loop."""


class TimeTravelError(FedChainError):
    """An event handler enqueued an event before the current clock."""


class InsufficientHistoryError(FedChainError):
    """A node pair has no latency observations to average."""


class TooManyPoolsError(FedChainError):
    """Requested more pool heads than there are nodes."""


class ModelTooSmallError(FedChainError):
    """Weight vector is shorter than the requested chunk count."""


class MaskShapeError(FedChainError):
    """Noise mask length does not match the owner's chunk length."""


class NonFiniteLossError(FedChainError):
    """Loss evaluation produced NaN or infinity."""


class TrainingDivergedError(FedChainError):
    """Local training drove the loss to a non-finite value."""


class UndefinedDivergenceError(FedChainError):
    """KL divergence undefined: reference histogram has a zero where the other is positive."""


class PartitionUnderflowError(FedChainError):
    """Dataset has fewer samples than requested partitions."""


class AggregationShapeError(FedChainError):
    """Weight vectors passed to aggregation disagree in shape."""


class UnsupportedSecurityError(FedChainError):
    """Requested security parameter is not one of the supported levels."""


class EmptyChallengeError(FedChainError):
    """Proof requested over an empty challenge batch."""


class InsufficientSamplesError(FedChainError):
    """Accuracy claim checked with fewer samples than the configured minimum."""


class InvalidTaskError(FedChainError):
    """Task is malformed (bad target, deadline in the past, ...)."""


class RoundFailedError(FedChainError):
    """No pool reached the accuracy target before the task deadline."""


class EmptyReportError(FedChainError):
    """Report emission requested with no run records."""
