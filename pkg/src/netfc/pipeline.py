"""Integer-only match-action datapath for add/sub/mul/div.

Each scalar call records a :class:`StageTrace` of the primitive steps it
performed (table lookups and integer ALU ops) together with their data
dependencies; :func:`stage_count` turns that into a pipeline depth.  The
``*_batch`` functions run the same datapath over numpy arrays of raw patterns
and must agree bit-for-bit with the scalar path.

Stage model:

* parse / classification (zero tests, sign bits, the Mag15 compare) is stage 0;
* a step sits one stage after the latest step it depends on;
* independent steps share a stage (the two logTable copies are separate
  physical tables, so they are looked up side by side);
* writing the sign bit of the result is done by the action of the final
  lookup (``fused``), so it adds no stage of its own.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import FormatMismatch, UnsupportedOperand
from .formats import (F16_NAN, F16_SIGN, F16_INF, POSIT_MAXPOS, POSIT_MINPOS, POSIT_NAR,
                      Bits16, Kind)
from .tables import (DECISION_TABLE, OUT_OF_RANGE_HIGH, OUT_OF_RANGE_LOW, RESULT_ZERO,
                     MiVariant, TableSet, decision_key)


class OpKind(enum.Enum):
    ADD = "add"
    SUB = "sub"
    MUL = "mul"
    DIV = "div"

    @classmethod
    def parse(cls, name) -> "OpKind":
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).lower())
        except ValueError:
            raise ValueError(f"unknown op {name!r}; expected add, sub, mul or div") from None


class Corner(enum.IntEnum):
    NONE = 0
    ZERO_OPERAND = 1
    DOMINANT_OPERAND = 2
    CANCELLED = 3
    OVERFLOW = 4
    UNDERFLOW = 5
    INVALID_DIV = 6
    NAR_OPERAND = 7

    @property
    def label(self) -> str | None:
        if self is Corner.NONE:
            return None
        return "".join(w.capitalize() for w in self.name.split("_"))


class StepKind(enum.Enum):
    PARSE = "parse"
    EXACT_LOOKUP = "exact_lookup"
    TERNARY_LOOKUP = "ternary_lookup"
    INT_ADD = "int_add"
    INT_SUB = "int_sub"
    INT_CMP = "int_cmp"
    BIT_OP = "bit_op"


INTEGER_STEPS = frozenset(StepKind)  # every primitive the datapath knows is integer-only


@dataclass(frozen=True)
class Step:
    kind: StepKind
    label: str
    deps: tuple[int, ...] = ()
    table: str | None = None
    fused: bool = False


@dataclass
class StageTrace:
    steps: list[Step] = field(default_factory=list)

    def add(self, kind: StepKind, label: str, deps=(), table=None, fused=False) -> int:
        self.steps.append(Step(kind, label, tuple(deps), table, fused))
        return len(self.steps) - 1

    def lookup(self, table, key_dep: tuple[int, ...], label: str) -> int:
        kind = StepKind.TERNARY_LOOKUP if getattr(table, "match_kind", "exact") == "ternary" \
            else StepKind.EXACT_LOOKUP
        return self.add(kind, label, key_dep, table=table.name.value)

    def stages(self) -> list[int]:
        out: list[int] = []
        for step in self.steps:
            if step.kind is StepKind.PARSE:
                out.append(0)
                continue
            base = max((out[d] for d in step.deps), default=0)
            out.append(base if step.fused else base + 1)
        return out

    def is_integer_only(self) -> bool:
        return all(s.kind in INTEGER_STEPS for s in self.steps)

    def render(self) -> str:
        lines = []
        order = sorted(zip(self.stages(), range(len(self.steps))))
        for st, idx in order:
            step = self.steps[idx]
            where = f" [{step.table}]" if step.table else ""
            lines.append(f"stage {st}: {step.kind.value} {step.label}{where}")
        return "\n".join(lines)


def stage_count(trace: StageTrace) -> int:
    return max(trace.stages(), default=0)


@dataclass(frozen=True)
class PipelineResult:
    value: Bits16
    corner: Corner
    trace: StageTrace

    @property
    def stages(self) -> int:
        return stage_count(self.trace)


# -- format helpers -------------------------------------------------------------------

def _zero(kind: Kind, negative: bool) -> int:
    if kind is Kind.FLOAT16 and negative:
        return F16_SIGN
    return 0


def _apply_sign(kind: Kind, mag_pattern: int, negative: bool) -> int:
    if not negative:
        return mag_pattern
    if kind is Kind.FLOAT16:
        return mag_pattern | F16_SIGN
    return (-mag_pattern) & 0xFFFF


def _huge(kind: Kind, negative: bool) -> int:
    return _apply_sign(kind, F16_INF if kind is Kind.FLOAT16 else POSIT_MAXPOS, negative)


def _tiny(kind: Kind, negative: bool) -> int:
    if kind is Kind.FLOAT16:
        return _zero(kind, negative)
    return _apply_sign(kind, POSIT_MINPOS, negative)


def _invalid(kind: Kind) -> int:
    return F16_NAN if kind is Kind.FLOAT16 else POSIT_NAR


class _Operand(NamedTuple):
    raw: int
    negative: bool
    zero: bool
    nar: bool
    mag: int  # Mag15, 0 for zero/NaR


def _parse(b: Bits16, kind: Kind) -> _Operand:
    if not isinstance(b, Bits16):
        raise TypeError(f"operand must be Bits16, got {type(b).__name__}")
    if b.kind is not kind:
        raise FormatMismatch(f"operand is {b.kind.value} but tables are {kind.value}")
    raw = b.raw
    if kind is Kind.FLOAT16:
        if (raw & F16_INF) == F16_INF:
            raise UnsupportedOperand(f"{b!r} is NaN or Infinity")
        mag = raw & 0x7FFF
        return _Operand(raw, bool(raw & F16_SIGN), mag == 0, False, mag)
    if raw == POSIT_NAR:
        return _Operand(raw, True, False, True, 0)
    neg = bool(raw & 0x8000)
    mag = ((-raw) & 0xFFFF if neg else raw) & 0x7FFF
    return _Operand(raw, neg, raw == 0, False, mag)


def _result(raw: int, kind: Kind, corner: Corner, trace: StageTrace) -> PipelineResult:
    return PipelineResult(Bits16(raw, kind), corner, trace)


# -- scalar datapath --------------------------------------------------------------------

def select_decision(sign_x: int, sign_y: int, x_greater: bool):
    """One exact lookup in the pre-issued decision table."""
    return DECISION_TABLE.lookup(decision_key(int(sign_x), int(sign_y), int(bool(x_greater))))


def add(x: Bits16, y: Bits16, ts: TableSet) -> PipelineResult:
    kind = ts.kind
    tr = StageTrace()
    px, py = _parse(x, kind), _parse(y, kind)
    p = tr.add(StepKind.PARSE, "parse x, y; classify; compare Mag15")
    if px.nar or py.nar:
        tr.add(StepKind.BIT_OP, "result = NaR", (p,))
        return _result(POSIT_NAR, kind, Corner.NAR_OPERAND, tr)
    if px.zero or py.zero:
        tr.add(StepKind.BIT_OP, "result = other operand", (p,))
        if px.zero and py.zero:
            raw = px.raw if px.raw == py.raw else 0
        else:
            raw = py.raw if px.zero else px.raw
        return _result(raw, kind, Corner.ZERO_OPERAND, tr)

    li = tr.lookup(ts.log_x, (p,), "i = logX(|x|)")
    lj = tr.lookup(ts.log_y, (p,), "j = logY(|y|)")
    ld = tr.lookup(ts.decision, (p,), "decision(sign_x, sign_y, |x|>|y|)")
    i = ts.log_x.lookup(px.mag)
    j = ts.log_y.lookup(py.mag)
    entry = ts.decision.lookup(decision_key(int(px.negative), int(py.negative), int(px.mag > py.mag)))

    sn = tr.add(StepKind.INT_SUB, "n = j - i", (li, lj))
    n = j - i
    dom = tr.add(StepKind.INT_CMP, "|n| > dominance bound", (sn,))
    if n > ts.dominance:
        tr.add(StepKind.BIT_OP, "result = y", (dom,))
        return _result(py.raw, kind, Corner.DOMINANT_OPERAND, tr)
    if n < -ts.dominance:
        tr.add(StepKind.BIT_OP, "result = x", (dom,))
        return _result(px.raw, kind, Corner.DOMINANT_OPERAND, tr)

    table = ts.mi(entry.variant)
    lm = tr.lookup(table, (sn, ld), f"m = {table.name.value}(n)")
    m = table.lookup(n)
    if m == RESULT_ZERO:
        tr.add(StepKind.BIT_OP, "result = +0", (lm,))
        return _result(0, kind, Corner.CANCELLED, tr)

    se = tr.add(StepKind.INT_ADD, "e = i + m", (li, lm))
    le = tr.lookup(ts.exp, (se,), "r = exp(e)")
    tr.add(StepKind.BIT_OP, "set sign from decision", (le, ld), fused=True)
    r = ts.exp.lookup(i + m)
    return _finish(r, entry.negative, kind, tr)


def _finish(r: int, negative: bool, kind: Kind, tr: StageTrace) -> PipelineResult:
    if r == OUT_OF_RANGE_HIGH:
        return _result(_huge(kind, negative), kind, Corner.OVERFLOW, tr)
    if r == OUT_OF_RANGE_LOW:
        return _result(_tiny(kind, negative), kind, Corner.UNDERFLOW, tr)
    return _result(_apply_sign(kind, r, negative), kind, Corner.NONE, tr)


def sub(x: Bits16, y: Bits16, ts: TableSet) -> PipelineResult:
    """x - y, run as x + (-y); the negation is a sign-bit flip at parse time."""
    if isinstance(y, Bits16) and y.kind is Kind.FLOAT16:
        y = Bits16(y.raw ^ F16_SIGN, y.kind)
    elif isinstance(y, Bits16):
        y = Bits16((-y.raw) & 0xFFFF, y.kind)
    return add(x, y, ts)


def _mul_div(x: Bits16, y: Bits16, ts: TableSet, divide: bool, y_shift: int = 0) -> PipelineResult:
    kind = ts.kind
    tr = StageTrace()
    px, py = _parse(x, kind), _parse(y, kind)
    p = tr.add(StepKind.PARSE, "parse x, y; classify")
    negative = px.negative != py.negative
    if px.nar or py.nar:
        tr.add(StepKind.BIT_OP, "result = NaR", (p,))
        return _result(POSIT_NAR, kind, Corner.NAR_OPERAND, tr)
    if divide and py.zero:
        tr.add(StepKind.BIT_OP, "result = invalid", (p,))
        return _result(_invalid(kind), kind, Corner.INVALID_DIV, tr)
    if px.zero or py.zero:
        tr.add(StepKind.BIT_OP, "result = signed zero", (p,))
        return _result(_zero(kind, negative), kind, Corner.ZERO_OPERAND, tr)

    li = tr.lookup(ts.log_x, (p,), "i = logX(|x|)")
    lj = tr.lookup(ts.log_y, (p,), "j = logY(|y|)")
    i = ts.log_x.lookup(px.mag)
    j = ts.log_y.lookup(py.mag)
    if y_shift:
        lj = tr.add(StepKind.INT_ADD, f"j += {y_shift}k", (lj,))
        j += y_shift * ts.k
    if divide:
        sn = tr.add(StepKind.INT_SUB, "n = i - j", (li, lj))
        n = i - j
    else:
        sn = tr.add(StepKind.INT_ADD, "n = i + j", (li, lj))
        n = i + j
    sx = tr.add(StepKind.BIT_OP, "sign = sx ^ sy", (p,))
    rng = tr.add(StepKind.INT_CMP, "n outside format range", (sn,))
    if n > ts.scaled_max:
        tr.add(StepKind.BIT_OP, "result = signed overflow value", (rng, sx))
        return _result(_huge(kind, negative), kind, Corner.OVERFLOW, tr)
    if n < ts.exp_min:
        tr.add(StepKind.BIT_OP, "result = signed underflow value", (rng, sx))
        return _result(_tiny(kind, negative), kind, Corner.UNDERFLOW, tr)
    le = tr.lookup(ts.exp, (sn,), "r = exp(n)")
    tr.add(StepKind.BIT_OP, "set sign", (le, sx), fused=True)
    return _finish(ts.exp.lookup(n), negative, kind, tr)


def mul(x: Bits16, y: Bits16, ts: TableSet) -> PipelineResult:
    return _mul_div(x, y, ts, divide=False)


def div(x: Bits16, y: Bits16, ts: TableSet) -> PipelineResult:
    return _mul_div(x, y, ts, divide=True)


def div_shifted(x: Bits16, y: Bits16, shift: int, ts: TableSet) -> PipelineResult:
    """x / (y * 2**shift).  The power of two is a constant added to j, so a
    divisor too large for the 16-bit format can be carried as (y, shift)."""
    if shift < 0:
        raise ValueError("shift must be non-negative")
    return _mul_div(x, y, ts, divide=True, y_shift=int(shift))


_SCALAR = {OpKind.ADD: add, OpKind.SUB: sub, OpKind.MUL: mul, OpKind.DIV: div}


def compute(op, x: Bits16, y: Bits16, ts: TableSet) -> PipelineResult:
    return _SCALAR[OpKind.parse(op)](x, y, ts)


# -- batch datapath ---------------------------------------------------------------------

class BatchResult(NamedTuple):
    values: np.ndarray   # uint16 raw patterns
    corners: np.ndarray  # int8 Corner codes


def _parse_batch(raws, kind: Kind):
    r = np.asarray(raws)
    if r.dtype.kind not in "iu":
        raise TypeError("batch operands must be integer arrays of raw patterns")
    r = r.astype(np.int64)
    if r.size and (r.min() < 0 or r.max() > 0xFFFF):
        raise ValueError("raw pattern does not fit in 16 bits")
    if kind is Kind.FLOAT16:
        if np.any((r & F16_INF) == F16_INF):
            raise UnsupportedOperand("batch contains NaN or Infinity operands")
        neg = (r >> 15).astype(bool)
        mag = r & 0x7FFF
        return r, neg, mag == 0, np.zeros(r.shape, bool), mag
    nar = r == POSIT_NAR
    neg = (r >> 15).astype(bool)
    mag = np.where(neg, (-r) & 0xFFFF, r) & 0x7FFF
    return r, neg, r == 0, nar, mag


def _apply_sign_batch(kind: Kind, mag, negative):
    if kind is Kind.FLOAT16:
        return np.where(negative, mag | F16_SIGN, mag)
    return np.where(negative, (-mag) & 0xFFFF, mag)


def _gather(table, keys, active):
    out = np.zeros(keys.shape, dtype=np.int64)
    if active.any():
        out[active] = table.lookup_many(keys[active])
    return out


_DEC_VARIANT = np.zeros(8, dtype=np.int64)
_DEC_NEG = np.zeros(8, dtype=bool)
_VARIANTS = list(MiVariant)
for _key, _entry in DECISION_TABLE.entries.items():
    _DEC_VARIANT[_key] = _VARIANTS.index(_entry.variant)
    _DEC_NEG[_key] = _entry.negative


def _finish_batch(kind, r, negative, active, out, corner):
    high = active & (r == OUT_OF_RANGE_HIGH)
    low = active & (r == OUT_OF_RANGE_LOW)
    ok = active & ~high & ~low
    huge = F16_INF if kind is Kind.FLOAT16 else POSIT_MAXPOS
    tiny = 0 if kind is Kind.FLOAT16 else POSIT_MINPOS
    out[ok] = _apply_sign_batch(kind, r, negative)[ok]
    out[high] = _apply_sign_batch(kind, np.full(r.shape, huge), negative)[high]
    out[low] = _apply_sign_batch(kind, np.full(r.shape, tiny), negative)[low]
    corner[high] = Corner.OVERFLOW
    corner[low] = Corner.UNDERFLOW


def add_batch(xs, ys, ts: TableSet) -> BatchResult:
    kind = ts.kind
    rx, nx, zx, qx, mx = _parse_batch(xs, kind)
    ry, ny, zy, qy, my = _parse_batch(ys, kind)
    out = np.zeros(rx.shape, dtype=np.int64)
    corner = np.zeros(rx.shape, dtype=np.int8)

    nar = qx | qy
    out[nar] = POSIT_NAR
    corner[nar] = Corner.NAR_OPERAND
    zero = ~nar & (zx | zy)
    both = zero & zx & zy
    out[zero] = np.where(zx, ry, rx)[zero]
    out[both] = np.where(rx == ry, rx, 0)[both]
    corner[zero] = Corner.ZERO_OPERAND

    live = ~nar & ~zero
    i = _gather(ts.log_x, mx, live)
    j = _gather(ts.log_y, my, live)
    key = (nx.astype(np.int64) << 2) | (ny.astype(np.int64) << 1) | (mx > my)
    variant = _DEC_VARIANT[key]
    negative = _DEC_NEG[key]
    n = j - i
    dom_y = live & (n > ts.dominance)
    dom_x = live & (n < -ts.dominance)
    out[dom_y] = ry[dom_y]
    out[dom_x] = rx[dom_x]
    corner[dom_y | dom_x] = Corner.DOMINANT_OPERAND
    live &= ~(dom_y | dom_x)

    m = np.zeros(rx.shape, dtype=np.int64)
    for code, v in enumerate(_VARIANTS):
        sel = live & (variant == code)
        if sel.any():
            m[sel] = ts.mi(v).lookup_many(n[sel])
    cancel = live & (m == RESULT_ZERO)
    out[cancel] = 0
    corner[cancel] = Corner.CANCELLED
    live &= ~cancel

    r = _gather(ts.exp, i + m, live)
    _finish_batch(kind, r, negative, live, out, corner)
    return BatchResult(out.astype(np.uint16), corner)


def negate_batch(ys, kind: Kind) -> np.ndarray:
    r = np.asarray(ys).astype(np.int64)
    if Kind.parse(kind) is Kind.FLOAT16:
        return (r ^ F16_SIGN).astype(np.uint16)
    return ((-r) & 0xFFFF).astype(np.uint16)


def sub_batch(xs, ys, ts: TableSet) -> BatchResult:
    return add_batch(xs, negate_batch(ys, ts.kind), ts)


def _mul_div_batch(xs, ys, ts: TableSet, divide: bool) -> BatchResult:
    kind = ts.kind
    rx, nx, zx, qx, mx = _parse_batch(xs, kind)
    ry, ny, zy, qy, my = _parse_batch(ys, kind)
    out = np.zeros(rx.shape, dtype=np.int64)
    corner = np.zeros(rx.shape, dtype=np.int8)
    negative = nx != ny

    nar = qx | qy
    out[nar] = POSIT_NAR
    corner[nar] = Corner.NAR_OPERAND
    live = ~nar
    if divide:
        bad = live & zy
        out[bad] = _invalid(kind)
        corner[bad] = Corner.INVALID_DIV
        live &= ~bad
    zero = live & (zx | zy)
    out[zero] = np.where(negative, _zero(kind, True), 0)[zero]
    corner[zero] = Corner.ZERO_OPERAND
    live &= ~zero

    i = _gather(ts.log_x, mx, live)
    j = _gather(ts.log_y, my, live)
    n = i - j if divide else i + j
    over = live & (n > ts.scaled_max)
    under = live & (n < ts.exp_min)
    live &= ~(over | under)
    r = _gather(ts.exp, n, live)
    r[over] = OUT_OF_RANGE_HIGH
    r[under] = OUT_OF_RANGE_LOW
    _finish_batch(kind, r, negative, live | over | under, out, corner)
    return BatchResult(out.astype(np.uint16), corner)


def mul_batch(xs, ys, ts: TableSet) -> BatchResult:
    return _mul_div_batch(xs, ys, ts, divide=False)


def div_batch(xs, ys, ts: TableSet) -> BatchResult:
    return _mul_div_batch(xs, ys, ts, divide=True)


_BATCH = {OpKind.ADD: add_batch, OpKind.SUB: sub_batch, OpKind.MUL: mul_batch,
          OpKind.DIV: div_batch}


def compute_batch(op, xs, ys, ts: TableSet) -> BatchResult:
    return _BATCH[OpKind.parse(op)](xs, ys, ts)
