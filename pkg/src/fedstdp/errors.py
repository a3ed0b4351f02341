"""Exception hierarchy shared across the package."""


class FedStdpError(Exception):
    """Base class for all package errors."""


class ConfigurationError(FedStdpError, ValueError):
    """Invalid configuration values (model, generator, experiment)."""


class ShapeError(FedStdpError, ValueError):
    """Dimension mismatch between two operands."""


class ArgumentError(FedStdpError, ValueError):
    """Arguments that are well-typed but unusable (empty sets, single class...)."""


class PartitionError(FedStdpError, ValueError):
    """A partition plan that cannot be satisfied by the available samples."""

    def __init__(self, message, class_id=None):
        super().__init__(message)
        self.class_id = class_id


class FormatError(FedStdpError, ValueError):
    """Malformed FSTD file or sidecar (magic, version, dtype)."""


class TruncatedError(FedStdpError, OSError):
    """Payload shorter than its header claims."""


class MergeError(FedStdpError, ValueError):
    """Weight blocks that cannot be merged (dims, row counts)."""


class OwnershipError(FedStdpError, ValueError):
    """A class without an owner, or an owner the merge does not know."""


class ProtocolError(FedStdpError):
    """Wire protocol violation."""


class PrerequisiteError(FedStdpError):
    """An analysis phase was started before the phase it depends on."""


class UndefinedEffectError(ArgumentError):
    """An effect size whose denominator is zero."""
