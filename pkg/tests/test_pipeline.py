import math

import mpmath
import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from netfc.errors import FormatMismatch, UnsupportedOperand
from netfc.formats import F16_INF, F16_NAN, POSIT_NAR, Bits16, Kind, decode_array, encode_nearest
from netfc.pipeline import (Corner, OpKind, StepKind, add, add_batch, compute, compute_batch, div,
                            div_shifted, mul, select_decision, stage_count, sub)
from netfc.tables import MiVariant, build_table_set

F16, P16 = Kind.FLOAT16, Kind.POSIT16
TS = build_table_set(F16, 1024)
PS = build_table_set(P16, 512)


def f(v, kind=F16):
    return encode_nearest(v, kind)


def finite_patterns(kind):
    vals = decode_array(np.arange(1 << 16, dtype=np.uint16), kind)
    return np.flatnonzero(np.isfinite(vals)).astype(np.uint16)


F16_FINITE = finite_patterns(F16)
P16_FINITE = finite_patterns(P16)
pattern_f16 = st.sampled_from(F16_FINITE.tolist()).map(lambda r: Bits16(r, F16))
pattern_p16 = st.sampled_from(P16_FINITE.tolist()).map(lambda r: Bits16(r, P16))


def mp_add_oracle(a: float, b: float, k: int = 1024) -> float:
    """Same-sign add recomputed from scratch with floored logs in 256-bit precision."""
    mpmath.mp.prec = 256
    i = int(mpmath.floor(mpmath.log(mpmath.mpf(a), 2) * k))
    j = int(mpmath.floor(mpmath.log(mpmath.mpf(b), 2) * k))
    m = int(mpmath.floor(mpmath.log(1 + mpmath.mpf(2) ** (mpmath.mpf(j - i) / k), 2) * k))
    return float(mpmath.mpf(2) ** (mpmath.mpf(i + m) / k))


# -- worked examples ---------------------------------------------------------------------

def test_add_powers_of_two():
    r = add(f(2.0), f(2.0), TS)
    assert float(r.value) == 4.0 and r.corner is Corner.NONE


def test_add_zero_operand():
    x = f(3.25)
    r = add(x, f(0.0), TS)
    assert r.value == x and r.corner is Corner.ZERO_OPERAND
    assert add(f(0.0), x, TS).value == x


def test_add_cancellation():
    r = add(f(4.0), f(-4.0), TS)
    assert r.value.raw == 0 and r.corner is Corner.CANCELLED


def test_add_dominance():
    r = add(f(1.0), f(65504.0), TS)
    assert float(r.value) == 65504.0 and r.corner is Corner.DOMINANT_OPERAND


def test_add_nonpower():
    r = add(f(1.5), f(2.5), TS)
    assert float(r.value) == pytest.approx(4.0, rel=2e-3)
    assert float(r.value) == float(f(mp_add_oracle(1.5, 2.5)))


def test_mul_div_examples():
    r = mul(f(-8.0), f(16.0), TS)
    assert float(r.value) == -128.0 and r.stages <= 4
    r = mul(f(512.0), f(512.0), TS)
    assert r.value.raw == F16_INF and r.corner is Corner.OVERFLOW
    r = mul(f(7.0), f(0.0), TS)
    assert float(r.value) == 0 and r.corner is Corner.ZERO_OPERAND
    assert float(mul(f(3.0), f(5.0), TS).value) == pytest.approx(15.0, rel=2e-3)
    assert float(div(f(-128.0), f(16.0), TS).value) == -8.0
    r = div(f(1.0), f(0.0), TS)
    assert r.value.raw == F16_NAN and r.corner is Corner.INVALID_DIV
    assert float(div(f(1.0), f(3.0), TS).value) == pytest.approx(1 / 3, rel=2e-3)


def test_mul_top_octave_not_overflow():
    # products in [2^15, 65504] are finite
    assert float(mul(f(256.0), f(200.0), TS).value) == pytest.approx(51200, rel=2e-3)


def test_mul_underflow_and_smallest_subnormal():
    r = mul(f(2.0 ** -14), f(2.0 ** -14), TS)
    assert r.value.raw == 0 and r.corner is Corner.UNDERFLOW
    # 2^-24.5 is above the halfway point to zero, so it lands on the smallest subnormal
    r = mul(f(2.0 ** -12), f(2.0 ** -12.5), TS)
    assert r.value.raw == 0x0001 and r.corner is Corner.NONE


def test_decision_rows():
    assert select_decision(0, 0, True).variant is MiVariant.ADD
    e = select_decision(0, 1, False)
    assert e.variant is MiVariant.SUB_NEG and e.negative
    e = select_decision(1, 1, False)
    assert e.variant is MiVariant.ADD and e.negative


def test_sub_runs_as_add_of_negation():
    assert float(sub(f(5.0), f(3.0), TS).value) == pytest.approx(2.0, rel=3e-3)
    assert float(sub(f(3.0), f(5.0), TS).value) == pytest.approx(-2.0, rel=3e-3)
    assert sub(f(3.0), f(3.0), TS).corner is Corner.CANCELLED


# -- stage model -----------------------------------------------------------------------------

def test_stage_budgets():
    assert add(f(1.5), f(2.5), TS).stages == 5
    assert add(f(1.5), f(-2.5), TS).stages == 5
    assert mul(f(1.5), f(2.5), TS).stages <= 4
    assert div(f(1.5), f(2.5), TS).stages <= 4
    assert add(f(1.5), f(0.0), TS).stages <= 2
    assert mul(f(1.5), f(0.0), TS).stages <= 2


def test_trace_is_integer_only_and_uses_tables():
    r = add(f(1.5), f(2.5), TS)
    tr = r.trace
    assert tr.is_integer_only()
    assert stage_count(tr) == 5
    tables = [s.table for s in tr.steps if s.kind is StepKind.EXACT_LOOKUP]
    assert tables == ["logx", "logy", "decision", "mi_add", "exp"]
    assert "stage 5" in tr.render()


def test_div_shifted_matches_plain_div():
    for conns, nbytes in [(100, 200_000), (7, 3), (400, 16963), (5000, 1 << 22)]:
        shift = max(0, nbytes.bit_length() - 15)
        r = div_shifted(f(conns), f(nbytes / 2 ** shift), shift, TS)
        assert float(r.value) == pytest.approx(conns / nbytes, rel=3e-3)
    with pytest.raises(ValueError):
        div_shifted(f(1.0), f(1.0), -1, TS)


# -- operand validation ----------------------------------------------------------------------

def test_rejects_nan_inf_operands():
    with pytest.raises(UnsupportedOperand):
        add(Bits16(F16_NAN, F16), f(1.0), TS)
    with pytest.raises(UnsupportedOperand):
        mul(f(1.0), Bits16(F16_INF, F16), TS)
    with pytest.raises(UnsupportedOperand):
        add_batch(np.array([F16_INF]), np.array([0x3C00]), TS)


def test_format_mismatch():
    with pytest.raises(FormatMismatch):
        add(f(1.0), f(1.0, P16), TS)


def test_posit_nar_propagates():
    nar = Bits16(POSIT_NAR, P16)
    for op in OpKind:
        r = compute(op, nar, f(1.0, P16), PS)
        assert r.value.raw == POSIT_NAR and r.corner is Corner.NAR_OPERAND


def test_posit_saturates_instead_of_infinity():
    big = f(2.0 ** 20, P16)
    r = mul(big, big, PS)
    assert r.value.raw == 0x7FFF and r.corner is Corner.OVERFLOW
    tiny = f(2.0 ** -20, P16)
    r = mul(tiny, tiny, PS)
    assert r.value.raw == 0x0001 and r.corner is Corner.UNDERFLOW


# -- properties ------------------------------------------------------------------------------

@given(pattern_f16, pattern_f16)
@settings(max_examples=400)
def test_add_commutative_f16(x, y):
    assert add(x, y, TS).value == add(y, x, TS).value


@given(pattern_p16, pattern_p16)
@settings(max_examples=300)
def test_add_commutative_p16(x, y):
    assert add(x, y, PS).value == add(y, x, PS).value


@given(pattern_f16, pattern_f16)
@settings(max_examples=400)
def test_sub_is_add_of_negation(x, y):
    neg_y = Bits16(y.raw ^ 0x8000, F16)
    assert sub(x, y, TS).value == add(x, neg_y, TS).value


@given(st.integers(-24, 15), st.integers(-24, 15))
def test_power_of_two_mul_div_exact(a, b):
    x, y = f(2.0 ** a), f(2.0 ** b)
    want = 2.0 ** (a + b)
    r = mul(x, y, TS)
    assert float(r.value) == float(f(want)) if want <= 65504 else math.isinf(float(r.value))
    q = 2.0 ** (a - b)
    r = div(x, y, TS)
    assert float(r.value) == float(f(q)) if q <= 65504 else math.isinf(float(r.value))


@given(st.integers(-14, 14))
def test_power_of_two_add_exact(a):
    x = f(2.0 ** a)
    assert float(add(x, x, TS).value) == 2.0 ** (a + 1)


@given(pattern_f16, pattern_f16)
@settings(max_examples=400)
def test_same_sign_add_relative_error(x, y):
    fx, fy = float(x), float(y)
    assume(fx > 0 and fy > 0)
    r = add(x, y, TS)
    assume(r.corner is Corner.NONE)
    exact = fx + fy
    # two floored logs, one floored mi value and the final rounding
    assert abs(float(r.value) - exact) <= exact * (3 * math.log(2) / 1024 + 2 ** -10) + 2 ** -24


@given(pattern_f16, pattern_f16)
@settings(max_examples=300)
def test_mul_relative_error(x, y):
    fx, fy = float(x), float(y)
    r = mul(x, y, TS)
    assume(r.corner is Corner.NONE)
    exact = fx * fy
    assume(abs(exact) >= 2 ** -14)  # normal range: relative bound holds
    assert abs(float(r.value) - exact) <= abs(exact) * (2 * math.log(2) / 1024 + 2 ** -10)


@pytest.mark.parametrize("kind,ts,pats", [(F16, TS, F16_FINITE), (P16, PS, P16_FINITE)])
@pytest.mark.parametrize("op", list(OpKind))
def test_scalar_matches_batch(kind, ts, pats, op):
    rng = np.random.default_rng(17)
    xs = rng.choice(pats, 1500)
    ys = rng.choice(pats, 1500)
    ys[:50] = xs[:50]
    ys[50:80] = 0
    res = compute_batch(op, xs, ys, ts)
    for idx in range(len(xs)):
        r = compute(op, Bits16(int(xs[idx]), kind), Bits16(int(ys[idx]), kind), ts)
        assert r.value.raw == int(res.values[idx])
        assert int(r.corner) == int(res.corners[idx])


def test_corner_labels():
    assert Corner.NONE.label is None
    assert Corner.DOMINANT_OPERAND.label == "DominantOperand"
    assert Corner.INVALID_DIV.label == "InvalidDiv"
