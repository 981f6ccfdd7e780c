"""Exception hierarchy shared by all modules."""


class TrackGNNError(Exception):
    """Base class for every error raised by this package."""


class DomainError(TrackGNNError, ValueError):
    """An argument lies outside the domain of the operation."""


class StructuralError(TrackGNNError, ValueError):
    """Array shapes, dimensions or indices do not fit together."""


class ValidationError(TrackGNNError, ValueError):
    """A hit graph failed validation; ``report`` holds the diagnostics."""

    def __init__(self, report):
        self.report = list(report)
        lines = "; ".join(str(d) for d in self.report[:5])
        more = "" if len(self.report) <= 5 else f" (+{len(self.report) - 5} more)"
        super().__init__(f"invalid graph: {lines}{more}")


class ParseError(TrackGNNError, ValueError):
    """A graph, weight or config file could not be parsed."""

    def __init__(self, message, line=None, column=None, path=None):
        self.line = line
        self.column = column
        self.path = path
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        prefix = ":".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class DeadlockError(TrackGNNError, RuntimeError):
    """The dataflow simulation stopped making progress."""

    def __init__(self, channel, cycle, units=()):
        self.channel = channel
        self.cycle = cycle
        self.units = tuple(units)
        who = f" (stalled: {', '.join(self.units)})" if self.units else ""
        super().__init__(f"deadlock at cycle {cycle}: channel {channel!r} is full{who}")
