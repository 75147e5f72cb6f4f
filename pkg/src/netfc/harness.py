"""Datasets, the float-to-integer baseline, accuracy metrics, heatmaps, sweeps."""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .formats import F16_INF, POSIT_NAR, Bits16, Kind, decode_array, round_to_format
from .pipeline import OpKind, compute_batch
from .tables import TableSet, build_table_set, check_k

DEFAULT_SEED = 20230601
DATASET_SIZES = {1: 10_000, 2: 10_000, 3: 50_000}
DEFAULT_SF = 10_000
E_INV = math.exp(-1.0)


def default_seed() -> int:
    env = os.environ.get("NETFC_SEED")
    if env is not None and env.strip():
        return int(env)
    return DEFAULT_SEED


# -- datasets ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Dataset:
    kind: int  # 1, 2 or 3
    fmt: Kind
    seed: int
    xs: np.ndarray  # uint16 raw patterns
    ys: np.ndarray

    def __len__(self):
        return len(self.xs)

    def pairs(self) -> Iterator[tuple[Bits16, Bits16]]:
        for x, y in zip(self.xs.tolist(), self.ys.tolist()):
            yield Bits16(x, self.fmt), Bits16(y, self.fmt)

    def values(self) -> tuple[np.ndarray, np.ndarray]:
        return decode_array(self.xs, self.fmt), decode_array(self.ys, self.fmt)


def parse_dataset_kind(kind) -> int:
    roman = {"i": 1, "ii": 2, "iii": 3}
    if isinstance(kind, str) and kind.lower() in roman:
        return roman[kind.lower()]
    k = int(kind)
    if k not in DATASET_SIZES:
        raise ValueError(f"dataset must be 1, 2 or 3 (got {kind!r})")
    return k


def _finite_patterns(fmt: Kind) -> np.ndarray:
    p = np.arange(1 << 16, dtype=np.int64)
    if fmt is Kind.FLOAT16:
        keep = (p & F16_INF) != F16_INF
    else:
        keep = p != POSIT_NAR
    return p[keep].astype(np.uint16)


def _uniform_rounded(rng, fmt, n, lo, hi, limit) -> np.ndarray:
    """n operands: uniform reals in (lo, hi), rounded, keeping |value| within limit."""
    out = np.empty(0, dtype=np.uint16)
    while len(out) < n:
        raw = round_to_format(rng.uniform(lo, hi, size=2 * (n - len(out)) + 16), fmt)
        vals = np.abs(decode_array(raw, fmt))
        out = np.concatenate([out, raw[limit(vals)]])
    return out[:n]


def gen_dataset(kind, seed: int | None = None, fmt=Kind.FLOAT16, size: int | None = None) -> Dataset:
    """I: uniform finite bit patterns.  II: uniform reals in (-1, 1).  III: uniform in [-0.01, 0.01]."""
    kind = parse_dataset_kind(kind)
    fmt = Kind.parse(fmt)
    seed = default_seed() if seed is None else int(seed)
    n = DATASET_SIZES[kind] if size is None else int(size)
    rng = np.random.Generator(np.random.PCG64(seed))
    if kind == 1:
        pool = _finite_patterns(fmt)
        xs = rng.choice(pool, n)
        ys = rng.choice(pool, n)
    elif kind == 2:
        both = _uniform_rounded(rng, fmt, 2 * n, -1.0, 1.0, lambda a: a < 1.0)
        xs, ys = both[:n], both[n:]
    else:
        both = _uniform_rounded(rng, fmt, 2 * n, -0.01, 0.01, lambda a: a <= 0.01)
        xs, ys = both[:n], both[n:]
    xs = np.ascontiguousarray(xs, dtype=np.uint16)
    ys = np.ascontiguousarray(ys, dtype=np.uint16)
    xs.setflags(write=False)
    ys.setflags(write=False)
    return Dataset(kind, fmt, seed, xs, ys)


# -- baseline ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BaselineConfig:
    sf: int = DEFAULT_SF
    lane_width: int = 16

    def __post_init__(self):
        if self.sf <= 0:
            raise ValueError("baseline scaling factor must be positive")


def _wrap(v, width: int):
    half = 1 << (width - 1)
    return ((np.asarray(v, dtype=np.int64) + half) % (1 << width)) - half


def to_fixed(v, sf: int = DEFAULT_SF, lane_width: int = 16):
    """Host-side conversion: sign * floor(|v| * sf), wrapped into the integer lane."""
    a = np.asarray(v, dtype=np.float64)
    fixed = np.sign(a) * np.floor(np.abs(a) * sf)
    out = _wrap(fixed.astype(np.int64), lane_width)
    return int(out) if out.ndim == 0 else out


def baseline_add(x, y, cfg: BaselineConfig = BaselineConfig()):
    """Float-to-integer add; x, y are Bits16 or arrays of decoded float16 values."""
    xv, yv = _baseline_operands(x, y)
    s = _wrap(to_fixed(xv, cfg.sf, cfg.lane_width) + to_fixed(yv, cfg.sf, cfg.lane_width),
              cfg.lane_width)
    return _baseline_out(s, cfg)


def baseline_sub(x, y, cfg: BaselineConfig = BaselineConfig()):
    xv, yv = _baseline_operands(x, y)
    s = _wrap(to_fixed(xv, cfg.sf, cfg.lane_width) - to_fixed(yv, cfg.sf, cfg.lane_width),
              cfg.lane_width)
    return _baseline_out(s, cfg)


def _baseline_operands(x, y):
    if isinstance(x, Bits16):
        x = float(x)
    if isinstance(y, Bits16):
        y = float(y)
    return np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)


def _baseline_out(s, cfg):
    out = np.asarray(s, dtype=np.float64) / cfg.sf
    return float(out) if out.ndim == 0 else out


# -- metrics ----------------------------------------------------------------------------

class AccuracyRecord(NamedTuple):
    expect: float
    result: float
    accuracy: float


def accuracy_array(expect, result) -> np.ndarray:
    """exp(-|e - r| / |e|), extended to e = 0 and to non-finite values.

    e = 0: 1 if r = 0 else exp(-1).  Infinite or NaN expectations score 1 only
    when the result is the same non-finite value, else 0.  A non-finite result
    for a finite expectation scores 0.
    """
    e = np.asarray(expect, dtype=np.float64)
    r = np.asarray(result, dtype=np.float64)
    out = np.zeros(np.broadcast(e, r).shape, dtype=np.float64)
    e, r = np.broadcast_arrays(e, r)
    fin = np.isfinite(e) & np.isfinite(r)
    nz = fin & (e != 0)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        rel = np.abs(e - r) / np.abs(e)
        out[nz] = np.exp(-rel[nz])
    ez = fin & (e == 0)
    out[ez] = np.where(r[ez] == 0, 1.0, E_INV)
    inf_e = np.isinf(e)
    out[inf_e] = (r[inf_e] == e[inf_e]).astype(np.float64)
    nan_e = np.isnan(e)
    out[nan_e] = np.isnan(r[nan_e]).astype(np.float64)
    return out


def accuracy(expect: float, result: float) -> float:
    return float(accuracy_array(expect, result))


def mse(expect, result=None) -> float:
    """Mean squared error.  Accepts (expect, result) arrays or a list of records.

    Pairs whose expectation is not finite are left out (both methods are
    scored on the same subset).
    """
    if result is None:
        recs = list(expect)
        if not recs:
            raise ValueError("mse of an empty record set")
        e = np.array([r.expect for r in recs], dtype=np.float64)
        r = np.array([r.result for r in recs], dtype=np.float64)
    else:
        e = np.asarray(expect, dtype=np.float64)
        r = np.asarray(result, dtype=np.float64)
    keep = np.isfinite(e)
    if not keep.any():
        raise ValueError("mse of an empty record set")
    with np.errstate(over="ignore", invalid="ignore"):
        d = e[keep] - r[keep]
        return float(np.mean(d * d))


@dataclass
class HeatmapGrid:
    """10x10 counts; cell (i, j) holds accuracies in [0.1i + 0.01j, 0.1i + 0.01(j+1))."""

    counts: np.ndarray = field(default_factory=lambda: np.zeros((10, 10), dtype=np.int64))

    @classmethod
    def from_accuracies(cls, acc) -> "HeatmapGrid":
        a = np.asarray(acc, dtype=np.float64)
        idx = np.clip(np.floor(a * 100).astype(np.int64), 0, 99)
        counts = np.bincount(idx, minlength=100).reshape(10, 10)
        return cls(counts)

    def log2_cells(self) -> list[list[float | None]]:
        """log2(count) per cell, None for an empty cell."""
        return [[math.log2(c) if c else None for c in row] for row in self.counts.tolist()]

    def flat(self) -> list[int]:
        return [int(c) for c in self.counts.ravel()]

    def total(self) -> int:
        return int(self.counts.sum())


def heatmap(acc) -> HeatmapGrid:
    return HeatmapGrid.from_accuracies(acc)


# -- evaluation -------------------------------------------------------------------------

@dataclass
class MethodSummary:
    average: float
    median: float
    minimum: float
    mse: float
    heatmap: HeatmapGrid
    results: np.ndarray
    accuracies: np.ndarray

    @classmethod
    def build(cls, expect, results) -> "MethodSummary":
        acc = accuracy_array(expect, results)
        return cls(float(np.mean(acc)), float(np.median(acc)), float(np.min(acc)),
                   mse(expect, results), heatmap(acc), np.asarray(results), acc)

    def as_dict(self) -> dict:
        return {"average": self.average, "median": self.median, "minimum": self.minimum,
                "mse": self.mse, "heatmap": self.heatmap.flat()}


@dataclass
class EvalReport:
    op: OpKind
    dataset: int
    fmt: Kind
    k: int
    seed: int
    n: int
    xs: np.ndarray
    ys: np.ndarray
    expect: np.ndarray
    netfc: MethodSummary
    result_bits: np.ndarray
    corners: np.ndarray
    baseline: MethodSummary | None = None
    baseline_sf: int | None = None

    def records(self, method: str = "netfc") -> list[AccuracyRecord]:
        m = self.netfc if method == "netfc" else self.baseline
        return [AccuracyRecord(float(e), float(r), float(a))
                for e, r, a in zip(self.expect, m.results, m.accuracies)]

    def aggregates(self) -> dict:
        out = {
            "op": self.op.value,
            "dataset": self.dataset,
            "format": self.fmt.value,
            "k": self.k,
            "seed": self.seed,
            "n": self.n,
            "netfc": self.netfc.as_dict(),
            "corners": {str(int(c)): int(v) for c, v in
                        zip(*np.unique(self.corners, return_counts=True))},
        }
        if self.baseline is not None:
            out["baseline"] = dict(self.baseline.as_dict(), sf=self.baseline_sf)
        return out


def expected_results(op, xs, ys, fmt: Kind) -> np.ndarray:
    """Receiver-side expectation: double-precision result rounded to the operand format."""
    op = OpKind.parse(op)
    x = decode_array(xs, fmt)
    y = decode_array(ys, fmt)
    with np.errstate(all="ignore"):
        if op is OpKind.ADD:
            exact = x + y
        elif op is OpKind.SUB:
            exact = x - y
        elif op is OpKind.MUL:
            exact = x * y
        else:
            exact = x / y
    return decode_array(round_to_format(exact, fmt), fmt)


def evaluate(op, ds: Dataset, ts: TableSet | None = None,
             baseline: BaselineConfig | int | None = None) -> EvalReport:
    op = OpKind.parse(op)
    if ts is None:
        ts = build_table_set(ds.fmt)
    if ts.kind is not ds.fmt:
        raise ValueError(f"dataset is {ds.fmt.value} but tables are {ts.kind.value}")
    if isinstance(baseline, int) and not isinstance(baseline, bool):
        baseline = BaselineConfig(baseline)
    if baseline is not None and op not in (OpKind.ADD, OpKind.SUB):
        raise ValueError("the float-to-integer baseline only supports add and sub")
    if baseline is not None and ds.fmt is not Kind.FLOAT16:
        raise ValueError("the float-to-integer baseline is defined for float16 operands")
    expect = expected_results(op, ds.xs, ds.ys, ds.fmt)
    out = compute_batch(op, ds.xs, ds.ys, ts)
    results = decode_array(out.values, ds.fmt)
    report = EvalReport(op, ds.kind, ds.fmt, ts.k, ds.seed, len(ds), ds.xs, ds.ys, expect,
                        MethodSummary.build(expect, results), out.values, out.corners)
    if baseline is not None:
        xv, yv = ds.values()
        fn = baseline_add if op is OpKind.ADD else baseline_sub
        report.baseline = MethodSummary.build(expect, fn(xv, yv, baseline))
        report.baseline_sf = baseline.sf
    return report


def sweep_scaling_factor(op, ds: Dataset, fmt=None, ks: Sequence[int] = (64, 128, 256, 512, 1024)) -> list[dict]:
    fmt = ds.fmt if fmt is None else Kind.parse(fmt)
    if not ks:
        raise ValueError("sweep needs at least one scaling factor")
    curve = []
    for k in ks:
        ts = build_table_set(fmt, check_k(k))
        rep = evaluate(op, ds, ts)
        curve.append({"k": int(k), "median": rep.netfc.median, "average": rep.netfc.average,
                      "entries": ts.entry_count, "memory_bytes": ts.memory_bytes})
    return curve


# -- report export ----------------------------------------------------------------------

def export_report(report, path, fmt: str = "json") -> None:
    """JSON holds aggregates (heatmap as 100 row-major counts); CSV holds one row per record."""
    path = Path(path)
    if fmt == "json":
        payload = report.aggregates() if isinstance(report, EvalReport) else report
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return
    if fmt != "csv":
        raise ValueError(f"unknown report format {fmt!r}")
    if not isinstance(report, EvalReport):
        raise TypeError("CSV export needs a per-record evaluation report")
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        head = ["x", "y", "expect", "result", "accuracy"]
        if report.baseline is not None:
            head += ["baseline_result", "baseline_accuracy"]
        w.writerow(head)
        for idx in range(report.n):
            row = [f"0x{int(report.xs[idx]):04x}", f"0x{int(report.ys[idx]):04x}",
                   repr(float(report.expect[idx])), repr(float(report.netfc.results[idx])),
                   repr(float(report.netfc.accuracies[idx]))]
            if report.baseline is not None:
                row += [repr(float(report.baseline.results[idx])),
                        repr(float(report.baseline.accuracies[idx]))]
            w.writerow(row)


def export_heatmap_csv(grid: HeatmapGrid, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        for row in grid.log2_cells():
            w.writerow(["" if c is None else repr(c) for c in row])
