"""
Exception hierarchy shared by all evodag modules.

The CLI maps these onto process exit codes (see `evodag.cli`):
configuration problems exit with 1, data problems with 2 and transport
problems with 3.
"""


class EvodagError(Exception):
    """Base class of every error raised by evodag."""


class GenomeError(EvodagError):
    """A genome violates a structural invariant or an archive is malformed."""


class OperatorInapplicable(EvodagError):
    """A mutation operator has nothing to act on in the given genome."""


class CandidateRejected(EvodagError):
    """An operator produced a child that cannot exist (e.g. a feature map smaller than 1x1)."""


class DegeneratePopulationError(EvodagError):
    """No valid candidate could be generated within the retry budget."""


class DatasetError(EvodagError):
    """An IDX file is malformed or inconsistent."""


class ConfigError(EvodagError):
    """A configuration value or file is invalid."""


class SearchInterrupted(EvodagError):
    """The worker pool failed; the master state was checkpointed before raising."""


class ProtocolError(EvodagError):
    """Base class of master/worker transport errors."""


class FrameTooLarge(ProtocolError):
    pass


class TruncatedFrame(ProtocolError):
    pass


class VersionMismatch(ProtocolError):
    pass


class MalformedMessage(ProtocolError):
    pass


class HandshakeRejected(ProtocolError):
    """The master refused the worker, e.g. because the dataset fingerprints differ."""
