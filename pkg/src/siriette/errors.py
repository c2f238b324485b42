"""Exception hierarchy shared by every layer of the engine.

Errors fall in two families. ``UserError`` subclasses describe bad input
(plans, data, configuration) and map to CLI exit code 1. Everything else
under ``EngineError`` is an execution-time failure; a subset of those is
recoverable by re-running the query on the reference executor.
"""


class EngineError(Exception):
    """Base class for all engine errors."""


class UserError(EngineError):
    """Error caused by user-supplied input."""


# plan documents and typing
class PlanSyntaxError(UserError):
    """Malformed plan document."""


class UnknownRelation(EngineError):
    """A relation kind the parsing engine does not implement."""


class UnknownFunction(UserError):
    """An expression operator or aggregate function that is not recognized."""


class TypeMismatch(UserError):
    pass


class MissingTable(UserError):
    pass


class OrdinalOutOfRange(UserError):
    pass


class ParseError(UserError):
    """Bad CSV/schema input. Carries the 1-based row and column when known."""

    def __init__(self, message, row=None, column=None):
        self.row = row
        self.column = column
        where = ""
        if row is not None:
            where = f" (row {row}" + (f", column {column})" if column is not None else ")")
        super().__init__(message + where)


class ConfigError(UserError):
    pass


# columnar
class SchemaMismatch(EngineError):
    pass


class IndexOutOfRange(EngineError):
    pass


class IndexOverflow(EngineError):
    """A row index does not fit the kernel-side narrow width."""


# resources
class CacheFull(EngineError):
    pass


class ProcessingExhausted(EngineError):
    pass


class AggregateOverflow(EngineError):
    """A widened sum no longer fits its 64-bit output column."""


class UnsupportedFeature(EngineError):
    pass


class Cancelled(EngineError):
    """Raised inside tasks cancelled after a sibling failure."""


# exchange and cluster
class TransportError(EngineError):
    pass


class BackpressureTimeout(TransportError):
    pass


class SequenceGap(EngineError):
    pass


class UnknownEntry(EngineError):
    pass


class NodeLost(EngineError):
    pass


class NoAliveNodes(EngineError):
    pass


class DispatchTimeout(EngineError):
    pass


class BindError(EngineError):
    pass


class CoordinatorUnreachable(EngineError):
    pass


# errors that send a query to the reference executor
FALLBACK_TRIGGERS = (
    UnknownRelation,
    UnsupportedFeature,
    IndexOverflow,
    ProcessingExhausted,
    CacheFull,
)


class TableExists(UserError):
    pass
