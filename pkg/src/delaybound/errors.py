"""Exception hierarchy shared by all delaybound modules."""


class DelayBoundError(Exception):
    """Base class for every error raised by this package."""


class DomainError(DelayBoundError, ValueError):
    """An argument lies outside the domain of the operation."""


class PreconditionError(DelayBoundError, ValueError):
    """Parameters violate the validity conditions of a closed-form result."""


class UnboundedDelayError(PreconditionError):
    """The long-run arrival rate exceeds the long-run service rate."""


class DegenerateFlowError(PreconditionError):
    """A traffic description collapses (e.g. peak rate equal to sustained rate)."""


class InfeasibleSourceError(PreconditionError):
    """A source cannot emit the requested load with its packet spacing."""


class UnsupportedOperationError(DelayBoundError):
    """The curve shapes involved are outside what the algebra supports."""


class HorizonError(DelayBoundError):
    """A result would depend on a curve beyond its exactly represented range."""


class EstimationError(DelayBoundError):
    """No service rate in the search range is consistent with the trace."""


class TraceFormatError(DelayBoundError, ValueError):
    """A trace or table file is malformed or violates a trace invariant."""


class ConfigError(DelayBoundError, ValueError):
    """A key-value configuration file is malformed or incomplete."""


class ReferenceDataError(DelayBoundError):
    """A shipped reference data file is missing or fails its checksum."""
