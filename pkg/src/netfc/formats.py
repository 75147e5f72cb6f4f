"""Bit-exact codecs for IEEE 754 binary16 and posit16 (es=1).

Decoding is exact: finite values come back as :class:`fractions.Fraction`,
so anything built from them at table-generation time can be checked without
worrying about binary rounding.  Both formats order their positive patterns
monotonically by value, which the rounding code below leans on: pattern ``p``
is simply index ``p`` of a sorted value table.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from numbers import Real

import numpy as np

from .errors import FormatMismatch, UnsupportedOperand

__all__ = [
    "Kind", "FpClass", "Ordering", "Bits16", "Decoded",
    "decode", "encode_nearest", "magnitude_bits", "compare_magnitude",
    "negate", "is_zero", "is_exceptional", "value_table", "decode_array",
    "round_to_format", "max_finite", "min_positive",
    "F16_INF", "F16_NAN", "F16_SIGN", "F16_MAX", "POSIT_NAR", "POSIT_MAXPOS", "POSIT_MINPOS",
]

F16_SIGN = 0x8000
F16_INF = 0x7C00
F16_NAN = 0x7E00
F16_MAX = 0x7BFF
POSIT_NAR = 0x8000
POSIT_MAXPOS = 0x7FFF
POSIT_MINPOS = 0x0001
POSIT_ES = 1


class Kind(enum.Enum):
    FLOAT16 = "float16"
    POSIT16 = "posit16"

    @classmethod
    def parse(cls, name: "str | Kind") -> "Kind":
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).lower())
        except ValueError:
            raise ValueError(f"unknown format {name!r}; expected float16 or posit16") from None

    @property
    def wire_code(self) -> int:
        return 0 if self is Kind.FLOAT16 else 1


class FpClass(enum.Enum):
    ZERO = "zero"
    SUBNORMAL = "subnormal"
    NORMAL = "normal"
    INFINITY = "infinity"
    NAN = "nan"
    NAR = "nar"


class Ordering(enum.IntEnum):
    LT = -1
    EQ = 0
    GT = 1


@dataclass(frozen=True, slots=True)
class Bits16:
    """A raw 16-bit pattern tagged with the format that interprets it."""

    raw: int
    kind: Kind

    def __post_init__(self):
        if not isinstance(self.raw, (int, np.integer)) or not 0 <= self.raw <= 0xFFFF:
            raise ValueError(f"raw pattern {self.raw!r} does not fit in 16 bits")
        object.__setattr__(self, "raw", int(self.raw))

    @property
    def negative(self) -> bool:
        return bool(self.raw & 0x8000)

    def __float__(self) -> float:
        return float(value_table(self.kind)[self.raw])

    def __repr__(self):
        return f"Bits16(0x{self.raw:04x}, {self.kind.value})"


@dataclass(frozen=True)
class Decoded:
    cls: FpClass
    negative: bool
    value: Fraction | float  # exact Fraction when finite; float inf/nan otherwise

    def __float__(self) -> float:
        return float(self.value)


def decode(b: Bits16) -> Decoded:
    if b.kind is Kind.FLOAT16:
        return _decode_f16(b.raw)
    return _decode_p16(b.raw)


def _decode_f16(raw: int) -> Decoded:
    neg = bool(raw & F16_SIGN)
    exp = (raw >> 10) & 0x1F
    frac = raw & 0x3FF
    sign = -1 if neg else 1
    if exp == 0x1F:
        if frac:
            return Decoded(FpClass.NAN, neg, float("nan"))
        return Decoded(FpClass.INFINITY, neg, sign * float("inf"))
    if exp == 0:
        if frac == 0:
            return Decoded(FpClass.ZERO, neg, Fraction(0))
        return Decoded(FpClass.SUBNORMAL, neg, sign * Fraction(frac, 1 << 24))
    return Decoded(FpClass.NORMAL, neg, sign * Fraction((1024 + frac) << exp, 1 << 25))


def _posit_scale(p: int) -> tuple[int, int, int]:
    """Split a positive posit16 pattern into (scale, fraction, fraction_bits)."""
    r0 = (p >> 14) & 1
    run = 1
    while run < 15 and ((p >> (14 - run)) & 1) == r0:
        run += 1
    regime = run - 1 if r0 else -run
    rest = max(15 - run - 1, 0)
    if rest == 0:
        return 2 * regime, 0, 0
    exp = (p >> (rest - 1)) & 1
    fbits = rest - 1
    return (2 * regime) + exp, p & ((1 << fbits) - 1), fbits


def _decode_p16(raw: int) -> Decoded:
    if raw == 0:
        return Decoded(FpClass.ZERO, False, Fraction(0))
    if raw == POSIT_NAR:
        return Decoded(FpClass.NAR, True, float("nan"))
    neg = bool(raw & 0x8000)
    p = (-raw) & 0xFFFF if neg else raw
    scale, frac, fbits = _posit_scale(p)
    mag = Fraction((1 << fbits) + frac, 1 << fbits)
    mag = mag * (Fraction(2) ** scale)
    return Decoded(FpClass.NORMAL, neg, -mag if neg else mag)


# -- rounding -----------------------------------------------------------------

@lru_cache(maxsize=None)
def _grid(kind: Kind) -> tuple[tuple[Fraction, ...], np.ndarray]:
    """Sorted non-negative grid indexed by positive pattern.

    For float16 the slot after 0x7BFF holds 2**16, standing in for infinity so
    that the usual ties-to-even rule sends [65520, inf) to 0x7C00.
    """
    if kind is Kind.FLOAT16:
        fracs = [_decode_f16(p).value for p in range(F16_MAX + 1)] + [Fraction(1 << 16)]
    else:
        fracs = [Fraction(0)] + [_decode_p16(p).value for p in range(1, POSIT_MAXPOS + 1)]
    return tuple(fracs), np.array([float(f) for f in fracs], dtype=np.float64)


def _nearest_pattern(mag: Fraction, kind: Kind) -> int:
    fracs, floats = _grid(kind)
    top = len(fracs) - 1
    if mag >= fracs[top]:
        return top
    approx = float(mag)
    idx = int(np.searchsorted(floats, approx, side="right")) - 1
    idx = min(max(idx, 0), top - 1)
    while idx > 0 and fracs[idx] > mag:
        idx -= 1
    while fracs[idx + 1] <= mag:
        idx += 1
    mid = (fracs[idx] + fracs[idx + 1]) / 2
    if mag < mid:
        pick = idx
    elif mag > mid:
        pick = idx + 1
    else:
        pick = idx if idx % 2 == 0 else idx + 1
    if kind is Kind.POSIT16 and pick == 0:
        pick = POSIT_MINPOS
    return pick


def _apply_sign(pattern: int, negative: bool, kind: Kind) -> int:
    if not negative:
        return pattern
    if kind is Kind.FLOAT16:
        return pattern | F16_SIGN
    return (-pattern) & 0xFFFF


def encode_nearest(v: Real, kind: Kind) -> Bits16:
    """Round a real to the nearest representable pattern, ties to even.

    float16 overflows to signed infinity.  posit16 saturates at maxpos and never
    rounds a nonzero value to zero; NaN and infinities become NaR.
    """
    kind = Kind.parse(kind)
    if isinstance(v, float) or isinstance(v, np.floating):
        fv = float(v)
        if fv != fv:
            return Bits16(F16_NAN if kind is Kind.FLOAT16 else POSIT_NAR, kind)
        if fv in (float("inf"), float("-inf")):
            if kind is Kind.POSIT16:
                return Bits16(POSIT_NAR, kind)
            return Bits16(F16_INF | (F16_SIGN if fv < 0 else 0), kind)
        if fv == 0.0:
            neg_zero = kind is Kind.FLOAT16 and math.copysign(1.0, fv) < 0
            return Bits16(F16_SIGN if neg_zero else 0, kind)
        v = Fraction(fv)
    else:
        v = Fraction(v)
    if v == 0:
        return Bits16(0, kind)
    neg = v < 0
    return Bits16(_apply_sign(_nearest_pattern(abs(v), kind), neg, kind), kind)


def round_to_format(values: np.ndarray, kind: Kind) -> np.ndarray:
    """Vectorised :func:`encode_nearest` for float64 inputs (exact, no double rounding)."""
    kind = Kind.parse(kind)
    v = np.asarray(values, dtype=np.float64)
    fracs, floats = _grid(kind)
    top = len(floats) - 1
    mag = np.abs(v)
    idx = np.searchsorted(floats, mag, side="right") - 1
    idx = np.clip(idx, 0, top - 1)
    lo = floats[idx]
    hi = floats[idx + 1]
    mid = (lo + hi) * 0.5
    pick = np.where(mag < mid, idx, idx + 1)
    tie = mag == mid
    pick = np.where(tie, np.where(idx % 2 == 0, idx, idx + 1), pick)
    pick = np.where(mag >= floats[top], top, pick)
    if kind is Kind.POSIT16:
        pick = np.where((pick == 0) & (mag > 0), POSIT_MINPOS, pick)
    pick = pick.astype(np.int64)
    neg = np.signbit(v)
    if kind is Kind.FLOAT16:
        out = np.where(neg, pick | F16_SIGN, pick)
        out = np.where(np.isnan(v), F16_NAN, out)
    else:
        out = np.where(neg & (pick != 0), (-pick) & 0xFFFF, pick)
        out = np.where(np.isnan(v) | np.isinf(v), POSIT_NAR, out)
    return out.astype(np.uint16)


# -- vectorised decode ----------------------------------------------------------

@lru_cache(maxsize=None)
def value_table(kind: Kind) -> np.ndarray:
    """float64 value of every one of the 2**16 patterns (exact for both formats)."""
    if kind is Kind.FLOAT16:
        return np.arange(1 << 16, dtype=np.uint16).view(np.float16).astype(np.float64)
    _, pos = _grid(kind)
    raws = np.arange(1 << 16, dtype=np.int64)
    out = np.where(raws < 0x8000, pos[raws & 0x7FFF], -pos[(-raws) & 0x7FFF])
    out[POSIT_NAR] = np.nan
    out.setflags(write=False)
    return out


def decode_array(raws: np.ndarray, kind: Kind) -> np.ndarray:
    return value_table(Kind.parse(kind))[np.asarray(raws, dtype=np.uint16)]


def max_finite(kind: Kind) -> Fraction:
    return decode(Bits16(F16_MAX if kind is Kind.FLOAT16 else POSIT_MAXPOS, kind)).value


def min_positive(kind: Kind) -> Fraction:
    return decode(Bits16(1, kind)).value


# -- classification and magnitude -----------------------------------------------

def is_zero(b: Bits16) -> bool:
    return (b.raw & 0x7FFF) == 0 if b.kind is Kind.FLOAT16 else b.raw == 0


def is_exceptional(b: Bits16) -> bool:
    """NaN/Infinity for float16, NaR for posit16."""
    if b.kind is Kind.FLOAT16:
        return (b.raw & F16_INF) == F16_INF
    return b.raw == POSIT_NAR


def magnitude_bits(b: Bits16) -> int:
    """15-bit pattern whose unsigned order matches the order of ``|value|``."""
    if is_zero(b) or is_exceptional(b):
        raise UnsupportedOperand(f"{b!r} has no finite nonzero magnitude")
    if b.kind is Kind.FLOAT16:
        return b.raw & 0x7FFF
    raw = (-b.raw) & 0xFFFF if b.raw & 0x8000 else b.raw
    return raw & 0x7FFF


def compare_magnitude(a: Bits16, b: Bits16) -> Ordering:
    if a.kind is not b.kind:
        raise FormatMismatch(f"cannot compare {a.kind.value} with {b.kind.value}")
    ma, mb = magnitude_bits(a), magnitude_bits(b)
    if ma > mb:
        return Ordering.GT
    if ma < mb:
        return Ordering.LT
    return Ordering.EQ


def negate(b: Bits16) -> Bits16:
    if b.kind is Kind.FLOAT16:
        return Bits16(b.raw ^ F16_SIGN, b.kind)
    return Bits16((-b.raw) & 0xFFFF, b.kind)
