"""Exception types shared across the package."""


class NetFCError(Exception):
    """Base class for every error raised by netfc."""


class FormatMismatch(NetFCError, TypeError):
    """Operands or tables of different number formats were combined."""


class UnsupportedOperand(NetFCError, ValueError):
    """An operand the datapath does not accept (NaN, Infinity, zero where a
    magnitude is required)."""


class MissingEntry(NetFCError, LookupError):
    """A match-action lookup found no entry for its key."""

    def __init__(self, table, key):
        super().__init__(f"no entry in {table} for key {key}")
        self.table = table
        self.key = key


class NotNetFc(NetFCError, ValueError):
    """A datagram is not a NetFC packet (short payload or bad magic)."""


class NoData(NetFCError, LookupError):
    """A telemetry query named a destination with no stored CPB."""


class RuleFileError(NetFCError, ValueError):
    """A rule file could not be parsed."""
