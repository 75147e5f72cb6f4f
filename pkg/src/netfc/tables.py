"""Lookup-table generation: logTable, the three miTables, expTable, decision table.

All scaled logarithms are floors of ``log2(.) * k``.  Values are computed in
x87 extended precision (64-bit significand) and every result that lands close
to an integer (or, for expTable, close to a rounding midpoint) is settled again
with exact integer arithmetic or 320-bit mpmath, so table contents do not
depend on libm accuracy.
"""

from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Iterator, NamedTuple

import mpmath
import numpy as np

from .errors import MissingEntry, RuleFileError
from .formats import F16_MAX, POSIT_MAXPOS, Kind, _grid

# Sentinels live above any 32-bit value; bit 32 is the flag the datapath tests.
SENTINEL_FLAG = 1 << 32
RESULT_ZERO = SENTINEL_FLAG | 1
OUT_OF_RANGE_LOW = SENTINEL_FLAG | 2
OUT_OF_RANGE_HIGH = SENTINEL_FLAG | 3
ABSENT = SENTINEL_FLAG | 0xFF  # pruned slot: no entry at all

SENTINEL_NAMES = {
    RESULT_ZERO: "RESULT_ZERO",
    OUT_OF_RANGE_LOW: "OUT_OF_RANGE_LOW",
    OUT_OF_RANGE_HIGH: "OUT_OF_RANGE_HIGH",
}
SENTINEL_BY_NAME = {v: k for k, v in SENTINEL_NAMES.items()}

DEFAULT_K = {Kind.FLOAT16: 1024, Kind.POSIT16: 512}
DOMINANCE_OCTAVES = {Kind.FLOAT16: 15, Kind.POSIT16: 64}

_LD = np.longdouble
_LN2 = _LD("0.693147180559945309417232121458176568")
_GUARD = 1e-9
_EXACT_PREC = 320


def is_sentinel(v: int) -> bool:
    return (v >> 32) == 1


class TableName(str, enum.Enum):
    LOG_X = "logx"
    LOG_Y = "logy"
    MI_ADD = "mi_add"
    MI_SUB_POS = "mi_sub_pos"
    MI_SUB_NEG = "mi_sub_neg"
    EXP = "exp"
    DECISION = "decision"


class MiVariant(enum.Enum):
    """The three sigma forms: log2(1+2^t), log2(1-2^t), log2(-1+2^t)."""

    ADD = "add"
    SUB_POS = "sub_pos"
    SUB_NEG = "sub_neg"

    @property
    def table_name(self) -> TableName:
        return TableName("mi_" + self.value)


DATA_TABLES = (TableName.LOG_X, TableName.LOG_Y, TableName.MI_ADD,
               TableName.MI_SUB_POS, TableName.MI_SUB_NEG, TableName.EXP)


def check_k(k: int) -> int:
    if isinstance(k, bool) or not isinstance(k, (int, np.integer)) or k < 1 or k & (k - 1):
        raise ValueError(f"scaling factor must be a positive power of two, got {k!r}")
    return int(k)


def _next_pow2(n: int) -> int:
    return 1 << max(0, (n - 1).bit_length())


def _signed_width(lo: int, hi: int) -> int:
    w = 1
    while lo < -(1 << (w - 1)) or hi > (1 << (w - 1)) - 1:
        w += 1
    return w


# -- exact fallbacks ---------------------------------------------------------------

def floor_scaled_log2(v: Fraction, k: int) -> int:
    """Exact ``floor(log2(v) * k)`` for a positive rational."""
    v = Fraction(v)
    if v <= 0:
        raise ValueError("log of a non-positive value")
    P, Q = v.numerator ** k, v.denominator ** k
    n = math.floor(k * (math.log2(v.numerator) - math.log2(v.denominator)))

    def le(m):  # 2**m <= P/Q
        return (Q << m) <= P if m >= 0 else Q <= (P << -m)

    while not le(n):
        n -= 1
    while le(n + 1):
        n += 1
    return n


def _mi_exact(variant: MiVariant, theta: int, k: int) -> int:
    with mpmath.workprec(_EXACT_PREC):
        x = mpmath.power(2, mpmath.mpf(theta) / k)
        if variant is MiVariant.ADD:
            arg = 1 + x
        elif variant is MiVariant.SUB_POS:
            arg = 1 - x
        else:
            arg = x - 1
        if arg == 0:
            return RESULT_ZERO
        val = mpmath.log(arg, 2) * k
        nearest = int(mpmath.nint(val))
        # 1+2^t = 2^s has only the trivial rational solutions, which are exact here
        if abs(val - nearest) < mpmath.mpf(2) ** -200:
            return nearest
        return int(mpmath.floor(val))


def _settle_floor(t: np.ndarray, exact) -> np.ndarray:
    """floor() of extended-precision values, re-deciding the ones too close to call.

    The guard is relative: every input here is computed with a relative error
    of a few ulps of a 64-bit significand, so tiny nonzero values are never
    mistaken for integers.
    """
    fl = np.floor(t)
    out = fl.astype(np.int64)
    guard = np.abs(t) * _LD(1e-12)
    near = np.flatnonzero((t - fl <= guard) | (fl + 1 - t <= guard))
    for i in near:
        out[i] = exact(int(i))
    return out


# -- numeric table bodies (cached, immutable) -----------------------------------------

def _positive_patterns(kind: Kind) -> np.ndarray:
    top = F16_MAX if kind is Kind.FLOAT16 else POSIT_MAXPOS
    return np.arange(1, top + 1, dtype=np.int64)


@lru_cache(maxsize=None)
def _log_body(kind: Kind, k: int) -> np.ndarray:
    fracs, floats = _grid(kind)
    pats = _positive_patterns(kind)
    t = np.log2(floats[pats].astype(_LD)) * k
    vals = _settle_floor(t, lambda i: floor_scaled_log2(fracs[int(pats[i])], k))
    out = np.full(1 << 15, OUT_OF_RANGE_HIGH, dtype=np.int64)
    out[0] = OUT_OF_RANGE_LOW
    out[pats] = vals
    out.setflags(write=False)
    return out


def scaled_range(kind: Kind, k: int) -> tuple[int, int]:
    """(lo, hi): scaled log of the smallest and largest positive finite value."""
    body = _log_body(kind, check_k(k))
    pats = _positive_patterns(kind)
    return int(body[pats[0]]), int(body[pats[-1]])


def exp_range(kind: Kind, k: int) -> tuple[int, int]:
    """Keys whose 2^(n/k) rounds to a nonzero finite pattern.

    For float16 that starts above -25k: anything over 2^-25 still rounds up to
    the smallest subnormal.  posit16 never rounds to zero, and below minpos the
    result saturates, which is what the underflow path returns anyway.
    """
    lo, hi = scaled_range(kind, k)
    if kind is Kind.FLOAT16:
        lo = -25 * k + 1
    return lo, hi


def _mi_layout(kind: Kind, k: int) -> tuple[int, int]:
    dom = DOMINANCE_OCTAVES[kind] * k
    size = _next_pow2(2 * dom + 1)
    return -(size // 2), size


@lru_cache(maxsize=None)
def _mi_body(variant: MiVariant, kind: Kind, k: int) -> np.ndarray:
    dom = DOMINANCE_OCTAVES[kind] * k
    key_min, size = _mi_layout(kind, k)
    keys = np.arange(key_min, key_min + size, dtype=np.int64)
    out = np.where(keys < -dom, OUT_OF_RANGE_LOW, OUT_OF_RANGE_HIGH).astype(np.int64)
    # Only theta < 0 is evaluated.  The positive side follows exactly from
    # log2(1+2^t) = t + log2(1+2^-t) and log2(2^t-1) = t + log2(1-2^-t),
    # because floor(theta + s) = theta + floor(s) for integer theta.
    theta = np.arange(-dom, 0, dtype=np.int64)
    t = theta.astype(_LD) / k
    if variant is MiVariant.ADD:
        s = np.log1p(np.exp2(t)) / _LN2
        base = MiVariant.ADD
    else:
        s = np.where(t < -1, np.log1p(-np.exp2(t)) / _LN2,
                     np.log2(-np.expm1(np.maximum(t, -1) * _LN2)))
        base = MiVariant.SUB_POS
    half = _settle_floor(s * k, lambda i: _mi_exact(base, int(theta[i]), k))
    zero = -key_min
    if variant is not MiVariant.SUB_NEG:
        out[theta - key_min] = half
    if variant is not MiVariant.SUB_POS:
        out[-theta - key_min] = -theta + half
    out[zero] = k if variant is MiVariant.ADD else RESULT_ZERO
    out.setflags(write=False)
    return out


def _exp_layout(kind: Kind, k: int) -> tuple[int, int]:
    """Key span of expTable: every i+m reachable from in-range logs, padded to 2^w."""
    lo, hi = scaled_range(kind, k)
    dom = min(DOMINANCE_OCTAVES[kind] * k, hi - lo)
    key_min, _ = _mi_layout(kind, k)
    pos = _mi_body(MiVariant.SUB_POS, kind, k)
    neg = _mi_body(MiVariant.SUB_NEG, kind, k)
    th_neg = np.arange(-dom, 0, dtype=np.int64)
    th_pos = np.arange(1, dom + 1, dtype=np.int64)
    reach_lo = min(lo,
                   int(np.min(lo - th_neg + pos[th_neg - key_min])),
                   int(np.min(lo + neg[th_pos - key_min])))
    reach_hi = hi + k
    return reach_lo, _next_pow2(reach_hi - reach_lo + 1)


def _round_positive_extended(v: np.ndarray, kind: Kind, exact_value) -> np.ndarray:
    """Nearest positive pattern for extended-precision positives, midpoints settled exactly."""
    fracs, floats = _grid(kind)
    top = len(floats) - 1
    idx = np.clip(np.searchsorted(floats, v, side="right") - 1, 0, top - 1)
    lo = floats[idx]
    hi = floats[idx + 1]
    mid = ((lo + hi) * 0.5).astype(_LD)
    pick = np.where(v < mid, idx, idx + 1)
    near = np.flatnonzero(np.abs(v - mid) <= mid * _LD(1e-15))
    for i in near:
        j = int(idx[i])
        m = (fracs[j] + fracs[j + 1]) / 2
        with mpmath.workprec(_EXACT_PREC):
            exact = exact_value(int(i))
            midf = mpmath.mpf(m.numerator) / m.denominator
            if exact < midf:
                pick[i] = j
            elif exact > midf:
                pick[i] = j + 1
            else:
                pick[i] = j if j % 2 == 0 else j + 1
    return pick.astype(np.int64)


@lru_cache(maxsize=None)
def _exp_body(kind: Kind, k: int) -> np.ndarray:
    lo, hi = exp_range(kind, k)
    key_min, size = _exp_layout(kind, k)
    keys = np.arange(key_min, key_min + size, dtype=np.int64)
    out = np.where(keys < lo, OUT_OF_RANGE_LOW, OUT_OF_RANGE_HIGH).astype(np.int64)
    live = np.arange(lo, hi + 1, dtype=np.int64)
    v = np.exp2(live.astype(_LD) / k)
    out[live - key_min] = _round_positive_extended(
        v, kind, lambda i: mpmath.power(2, mpmath.mpf(int(live[i])) / k))
    out.setflags(write=False)
    return out


# -- table objects -----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ExactTable:
    """Dense exact-match table over the key span [key_min, key_min + len(values))."""

    name: TableName
    key_min: int
    values: np.ndarray
    key_width: int
    signed_keys: bool
    value_width: int
    match_kind = "exact"

    @property
    def size(self) -> int:
        return len(self.values)

    @cached_property
    def _slots(self) -> list:
        return self.values.tolist()

    def lookup(self, key: int) -> int:
        idx = key - self.key_min
        if idx < 0 or idx >= len(self.values):
            raise MissingEntry(self.name.value, key)
        v = self._slots[idx]
        if v == ABSENT:
            raise MissingEntry(self.name.value, key)
        return v

    def lookup_many(self, keys: np.ndarray) -> np.ndarray:
        idx = np.asarray(keys, dtype=np.int64) - self.key_min
        bad = (idx < 0) | (idx >= len(self.values))
        if bad.any():
            raise MissingEntry(self.name.value, int(np.asarray(keys)[bad][0]))
        out = self.values[idx]
        miss = out == ABSENT
        if miss.any():
            raise MissingEntry(self.name.value, int(np.asarray(keys)[miss][0]))
        return out

    @cached_property
    def present(self) -> np.ndarray:
        return self.values != ABSENT

    @cached_property
    def entry_count(self) -> int:
        return int(np.count_nonzero(self.present))

    @property
    def memory_bytes(self) -> int:
        return self.entry_count * self.value_width // 8

    def items(self) -> Iterator[tuple[int, int]]:
        for idx in np.flatnonzero(self.present):
            yield self.key_min + int(idx), self._slots[idx]

    def key_bits(self, key: int) -> int:
        return key & ((1 << self.key_width) - 1)

    def key_from_bits(self, bits: int) -> int:
        if self.signed_keys and bits >> (self.key_width - 1):
            return bits - (1 << self.key_width)
        return bits


def _value_width(name: TableName, values: np.ndarray) -> int:
    if name is TableName.EXP:
        return 16
    live = values[(values >> 32) != 1]
    if live.size == 0 or (live.min() >= -(1 << 15) and live.max() < (1 << 15)):
        return 16
    return 32


def _make_table(name: TableName, key_min: int, values: np.ndarray, *, signed: bool,
                key_width: int | None = None) -> ExactTable:
    values = np.array(values, dtype=np.int64)
    values.setflags(write=False)
    if key_width is None:
        key_width = _signed_width(key_min, key_min + len(values) - 1)
    return ExactTable(name, key_min, values, key_width, signed, _value_width(name, values))


def build_log_table(kind: Kind, k: int, name: TableName = TableName.LOG_X) -> ExactTable:
    kind = Kind.parse(kind)
    return _make_table(name, 0, _log_body(kind, check_k(k)), signed=False, key_width=15)


def build_mi_table(variant: MiVariant, kind: Kind, k: int) -> ExactTable:
    kind = Kind.parse(kind)
    key_min, _ = _mi_layout(kind, check_k(k))
    return _make_table(variant.table_name, key_min, _mi_body(variant, kind, k), signed=True)


def build_exp_table(kind: Kind, k: int) -> ExactTable:
    kind = Kind.parse(kind)
    key_min, _ = _exp_layout(kind, check_k(k))
    return _make_table(TableName.EXP, key_min, _exp_body(kind, k), signed=True)


# -- decision table --------------------------------------------------------------------

class DecisionEntry(NamedTuple):
    variant: MiVariant
    negative: bool  # sign of the result


def decision_key(sign_x: int, sign_y: int, x_greater: int) -> int:
    return (sign_x << 2) | (sign_y << 1) | x_greater


# keyed by (x<0, y<0, |x|>|y|); row order of the published decision table
_DECISION_ROWS = {
    (0, 0, 1): DecisionEntry(MiVariant.ADD, False),
    (0, 0, 0): DecisionEntry(MiVariant.ADD, False),
    (0, 1, 1): DecisionEntry(MiVariant.SUB_POS, False),
    (0, 1, 0): DecisionEntry(MiVariant.SUB_NEG, True),
    (1, 0, 1): DecisionEntry(MiVariant.SUB_POS, True),
    (1, 0, 0): DecisionEntry(MiVariant.SUB_NEG, False),
    (1, 1, 1): DecisionEntry(MiVariant.ADD, True),
    (1, 1, 0): DecisionEntry(MiVariant.ADD, True),
}


@dataclass(frozen=True)
class DecisionTable:
    entries: dict = field(default_factory=lambda: {decision_key(*key): entry
                                                   for key, entry in _DECISION_ROWS.items()})
    name: TableName = TableName.DECISION
    match_kind = "exact"

    def lookup(self, key: int) -> DecisionEntry:
        try:
            return self.entries[key]
        except KeyError:
            raise MissingEntry(self.name.value, key) from None

    @property
    def entry_count(self) -> int:
        return len(self.entries)


DECISION_TABLE = DecisionTable()


# -- table set --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TableSet:
    kind: Kind
    k: int
    log_x: ExactTable
    log_y: ExactTable
    mi_add: ExactTable
    mi_sub_pos: ExactTable
    mi_sub_neg: ExactTable
    exp: ExactTable
    scaled_min: int
    scaled_max: int
    dominance: int
    exp_min: int
    decision: DecisionTable = DECISION_TABLE
    prune: tuple[float, float] | None = None

    def mi(self, variant: MiVariant) -> ExactTable:
        if variant is MiVariant.ADD:
            return self.mi_add
        if variant is MiVariant.SUB_POS:
            return self.mi_sub_pos
        return self.mi_sub_neg

    def tables(self) -> dict[TableName, ExactTable]:
        return {TableName.LOG_X: self.log_x, TableName.LOG_Y: self.log_y,
                TableName.MI_ADD: self.mi_add, TableName.MI_SUB_POS: self.mi_sub_pos,
                TableName.MI_SUB_NEG: self.mi_sub_neg, TableName.EXP: self.exp}

    @property
    def entry_count(self) -> int:
        return sum(t.entry_count for t in self.tables().values())

    @property
    def memory_bytes(self) -> int:
        return sum(t.memory_bytes for t in self.tables().values())

    @cached_property
    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(f"{self.kind.value}|{self.k}|{self.prune}".encode())
        for name, t in self.tables().items():
            h.update(f"|{name.value}|{t.key_min}|".encode())
            h.update(t.values.tobytes())
        return h.hexdigest()

    def summary(self) -> dict:
        return {
            "format": self.kind.value,
            "k": self.k,
            "entries": self.entry_count,
            "memory_bytes": self.memory_bytes,
            "tables": {n.value: t.entry_count for n, t in self.tables().items()},
            "decision_entries": self.decision.entry_count,
            "fingerprint": self.fingerprint,
        }


def _assemble(kind: Kind, k: int, bodies: dict[TableName, np.ndarray],
              prune: tuple[float, float] | None = None) -> TableSet:
    mi_min, _ = _mi_layout(kind, k)
    exp_min, _ = _exp_layout(kind, k)
    lo, hi = scaled_range(kind, k)
    mk = {
        TableName.LOG_X: lambda b: _make_table(TableName.LOG_X, 0, b, signed=False, key_width=15),
        TableName.LOG_Y: lambda b: _make_table(TableName.LOG_Y, 0, b, signed=False, key_width=15),
        TableName.EXP: lambda b: _make_table(TableName.EXP, exp_min, b, signed=True),
    }
    for v in MiVariant:
        mk[v.table_name] = lambda b, n=v.table_name: _make_table(n, mi_min, b, signed=True)
    t = {name: mk[name](bodies[name]) for name in DATA_TABLES}
    return TableSet(kind, k, t[TableName.LOG_X], t[TableName.LOG_Y], t[TableName.MI_ADD],
                    t[TableName.MI_SUB_POS], t[TableName.MI_SUB_NEG], t[TableName.EXP],
                    lo, hi, DOMINANCE_OCTAVES[kind] * k, exp_range(kind, k)[0], prune=prune)


@lru_cache(maxsize=32)
def build_table_set(kind: Kind, k: int | None = None) -> TableSet:
    kind = Kind.parse(kind)
    k = check_k(DEFAULT_K[kind] if k is None else k)
    log = _log_body(kind, k)
    bodies = {TableName.LOG_X: log, TableName.LOG_Y: log.copy(), TableName.EXP: _exp_body(kind, k)}
    for v in MiVariant:
        bodies[v.table_name] = _mi_body(v, kind, k)
    return _assemble(kind, k, bodies)


def prune_to_range(ts: TableSet, lo: float, hi: float) -> TableSet:
    """Drop entries that cannot be hit when both operands lie in ±[lo, hi] ∪ {0}.

    Add/sub results can still leave the range: expTable keeps one octave above
    hi (a sum of two operands) and reaches down to the deepest miSubPos value
    below lo (near-cancelling operands), so add/sub on in-range operands never
    misses.  Products and quotients outside the range do.
    """
    if not 0 < lo < hi:
        raise ValueError("prune range needs 0 < lo < hi")
    fracs, floats = _grid(ts.kind)
    vmin = fracs[1]
    vmax = fracs[F16_MAX] if ts.kind is Kind.FLOAT16 else fracs[POSIT_MAXPOS]
    if Fraction(lo) <= vmin and Fraction(hi) >= vmax:
        return ts
    k = ts.k
    L = floor_scaled_log2(Fraction(lo), k)
    H = floor_scaled_log2(Fraction(hi), k)
    mags = np.arange(1 << 15)
    mag_vals = np.where(mags < len(floats), floats[np.minimum(mags, len(floats) - 1)], np.inf)
    keep_log = (mag_vals >= lo) & (mag_vals <= hi)
    sub_pos = [ts.mi_sub_pos.lookup(-t) for t in range(1, min(H - L, ts.dominance) + 1)]
    deepest = min([v for v in sub_pos if not is_sentinel(v)], default=0)
    bodies = {}
    for name, table in ts.tables().items():
        vals = table.values.copy()
        keys = np.arange(table.key_min, table.key_min + table.size)
        if name in (TableName.LOG_X, TableName.LOG_Y):
            keep = keep_log
        elif name is TableName.EXP:
            keep = (keys >= L + deepest) & (keys <= H + k)
        else:
            keep = np.abs(keys) <= (H - L)
        vals[~keep] = ABSENT
        bodies[name] = vals
    return _assemble(ts.kind, k, bodies, prune=(float(lo), float(hi)))


# -- rule files --------------------------------------------------------------------------

HEADER_PREFIX = "# netfc-tables v1"


def _hex(v: int, width: int) -> str:
    digits = (width + 3) // 4
    return format(v & ((1 << width) - 1), f"0{digits}x")


def format_value(table: ExactTable, v: int) -> str:
    if is_sentinel(v):
        return SENTINEL_NAMES[v]
    return _hex(v, table.value_width)


def parse_value(table_name: TableName, text: str, width: int) -> int:
    if text in SENTINEL_BY_NAME:
        return SENTINEL_BY_NAME[text]
    bits = int(text, 16)
    if table_name is not TableName.EXP and bits >> (width - 1):
        bits -= 1 << width
    return bits


def header_line(kind: Kind, k: int, prune=None) -> str:
    line = f"{HEADER_PREFIX} format={kind.value} k={k}"
    if prune is not None:
        line += f" prune={prune[0]!r},{prune[1]!r}"
    return line


def parse_header(line: str) -> tuple[Kind, int, tuple[float, float] | None, dict]:
    if not line.startswith("# netfc-"):
        raise RuleFileError(f"missing rule-file header: {line[:60]!r}")
    fields = dict(tok.split("=", 1) for tok in line[1:].split() if "=" in tok)
    try:
        kind = Kind.parse(fields["format"])
        k = check_k(int(fields["k"]))
    except (KeyError, ValueError) as exc:
        raise RuleFileError(f"bad header {line!r}: {exc}") from None
    prune = None
    if "prune" in fields:
        a, b = fields["prune"].split(",")
        prune = (float(a), float(b))
    return kind, k, prune, fields


def export_entries(ts: TableSet, path) -> int:
    """Write the rule file; returns the number of entry lines."""
    lines = [header_line(ts.kind, ts.k, ts.prune)]
    for name, table in ts.tables().items():
        tag = name.value
        kw, vw = table.key_width, table.value_width
        kdig, vdig = (kw + 3) // 4, (vw + 3) // 4
        kmask, vmask = (1 << kw) - 1, (1 << vw) - 1
        keys = np.flatnonzero(table.present) + table.key_min
        vals = table.values[table.present]
        for key, v in zip(keys.tolist(), vals.tolist()):
            if (v >> 32) == 1:
                lines.append(f"{tag},{key & kmask:0{kdig}x},{SENTINEL_NAMES[v]}")
            else:
                lines.append(f"{tag},{key & kmask:0{kdig}x},{v & vmask:0{vdig}x}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return len(lines) - 1


def import_entries(path) -> TableSet:
    with open(path, encoding="utf-8") as fh:
        kind, k, prune, _ = parse_header(fh.readline().rstrip("\n"))
        template = build_table_set(kind, k)
        tables = template.tables()
        bodies = {name: np.full(t.size, ABSENT, dtype=np.int64) for name, t in tables.items()}
        widths = {}
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                tag, key_hex, value = line.split(",")
                name = TableName(tag)
                t = tables[name]
                key = t.key_from_bits(int(key_hex, 16))
                width = widths.setdefault(name, _width_from_digits(name, value, t))
                bodies[name][key - t.key_min] = parse_value(name, value, width)
            except (ValueError, KeyError, IndexError) as exc:
                raise RuleFileError(f"{path}:{lineno}: {exc}") from None
    return _assemble(kind, k, bodies, prune=prune)


def _width_from_digits(name: TableName, value: str, template: ExactTable) -> int:
    if value in SENTINEL_BY_NAME:
        return template.value_width
    return 4 * len(value)
