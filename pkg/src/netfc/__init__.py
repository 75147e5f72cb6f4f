"""Table-lookup floating point arithmetic in logarithm space for match-action pipelines."""

__version__ = "0.1.0"

from .errors import (FormatMismatch, MissingEntry, NetFCError, NoData, NotNetFc, RuleFileError,
                     UnsupportedOperand)
from .formats import Bits16, Kind, decode, encode_nearest
from .tables import TableSet, build_table_set
from .pipeline import Corner, OpKind, PipelineResult, add, compute, compute_batch, div, mul, sub

__all__ = [
    "__version__", "Bits16", "Kind", "decode", "encode_nearest", "TableSet", "build_table_set",
    "Corner", "OpKind", "PipelineResult", "add", "sub", "mul", "div", "compute", "compute_batch",
    "NetFCError", "FormatMismatch", "UnsupportedOperand", "MissingEntry", "NotNetFc", "NoData",
    "RuleFileError",
]
