"""Online Slowloris detection with an in-pipeline CPB (connections per byte) register.

The fast path answers a query straight from data-plane registers.  The slow
path models the prior-art detour: read the counters out to a controller,
divide in double precision there, write the result back, answer.  Latency is
modeled, not measured: a data-plane pass costs ``DATA_PLANE_PASS_LATENCY`` and
the detour costs the injected control-plane delay.
"""

from __future__ import annotations

import csv
import random
import threading
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, NamedTuple

from .errors import NoData
from .formats import Bits16, Kind, Ordering, compare_magnitude, encode_nearest
from .pipeline import Corner, div_shifted
from .tables import TableSet, build_table_set

DEFAULT_THRESHOLD = 1e-3  # connections per byte
DATA_PLANE_PASS_LATENCY = 50e-6  # seconds, modeled
SLOW_PATH_CROSSINGS = 2
F16_MAX_VALUE = 65504  # counters saturate here before conversion


class TraceRow(NamedTuple):
    ts: float
    src: str
    dst: str
    sport: int
    dport: int
    bytes: int


def to_float16_count(n: int) -> tuple[Bits16, int]:
    """Counter value as (float16 mantissa part, power-of-two shift) with n ≈ value * 2**shift."""
    if n < 0:
        raise ValueError("counters are non-negative")
    shift = max(0, n.bit_length() - 15)
    return encode_nearest(Fraction(n, 1 << shift), Kind.FLOAT16), shift


@dataclass
class DestRecord:
    index: int
    flows: set = field(default_factory=set)
    conn_count: int = 0
    byte_count: int = 0
    cpb: Bits16 | None = None


@dataclass(frozen=True)
class Verdict:
    cpb: Bits16
    attack: bool
    threshold: Bits16

    @property
    def cpb_value(self) -> float:
        return float(self.cpb)


@dataclass(frozen=True)
class PathResult:
    verdict: Verdict
    crossings: int  # control-plane crossings
    latency: float  # modeled seconds


class TelemetryRegisters:
    def __init__(self, ts: TableSet | None = None, threshold: float = DEFAULT_THRESHOLD):
        self.ts = ts or build_table_set(Kind.FLOAT16, 1024)
        if self.ts.kind is not Kind.FLOAT16:
            raise ValueError("CPB registers hold float16 values")
        if not threshold > 0:
            raise ValueError("threshold must be positive")
        self.threshold = encode_nearest(float(threshold), Kind.FLOAT16)
        self.records: dict[str, DestRecord] = {}
        self._by_index: list[str] = []
        self._lock = threading.Lock()
        self.controller_calls = 0

    def on_packet(self, dst_key: str, flow: tuple, payload_bytes: int) -> DestRecord:
        if payload_bytes < 0:
            raise ValueError("payload size must be non-negative")
        with self._lock:
            rec = self.records.get(dst_key)
            if rec is None:
                rec = DestRecord(len(self._by_index))
                self.records[dst_key] = rec
                self._by_index.append(dst_key)
            if flow not in rec.flows:
                rec.flows.add(flow)
                rec.conn_count += 1
            rec.byte_count += int(payload_bytes)
            if rec.byte_count > 0:
                conns = encode_nearest(min(rec.conn_count, F16_MAX_VALUE), Kind.FLOAT16)
                nbytes, shift = to_float16_count(rec.byte_count)
                res = div_shifted(conns, nbytes, shift, self.ts)
                if res.corner is not Corner.INVALID_DIV:
                    rec.cpb = res.value
            return rec

    def _verdict(self, cpb: Bits16) -> Verdict:
        attack = compare_magnitude(cpb, self.threshold) is Ordering.GT
        return Verdict(cpb, attack, self.threshold)

    def _record(self, dst_key: str) -> DestRecord:
        rec = self.records.get(dst_key)
        if rec is None or rec.cpb is None:
            raise NoData(f"no CPB stored for {dst_key!r}")
        return rec

    def query(self, dst_key: str) -> Verdict:
        """Data-plane only: stored CPB against the threshold."""
        return self._verdict(self._record(dst_key).cpb)

    def query_index(self, index: int) -> Verdict:
        if not 0 <= index < len(self._by_index):
            raise NoData(f"no destination with index {index}")
        return self.query(self._by_index[index])

    def index_of(self, dst_key: str) -> int:
        return self.records[dst_key].index

    def query_fast(self, dst_key: str) -> PathResult:
        calls = self.controller_calls
        verdict = self.query(dst_key)
        assert self.controller_calls == calls
        return PathResult(verdict, 0, DATA_PLANE_PASS_LATENCY)

    def query_slow_path(self, dst_key: str, cp_delay: float) -> PathResult:
        """Counters go out to the controller, CPB comes back; two crossings."""
        if cp_delay < 0:
            raise ValueError("control-plane delay must be non-negative")
        rec = self._record(dst_key)
        self.controller_calls += 1
        conns, nbytes = rec.conn_count, rec.byte_count  # crossing 1: read registers
        cpb = encode_nearest(conns / nbytes, Kind.FLOAT16)  # controller arithmetic
        with self._lock:
            rec.cpb = cpb  # crossing 2: write back
        return PathResult(self._verdict(cpb), SLOW_PATH_CROSSINGS, float(cp_delay))


# -- synthetic traces ---------------------------------------------------------------------

def slowloris_trace(dst: str = "10.0.0.80", n_conns: int = 400, packets_per_conn: int = 3,
                    seed: int = 0, t0: float = 0.0) -> list[TraceRow]:
    """Many connections trickling a few bytes of partial headers each."""
    rng = random.Random(seed)
    rows = []
    for c in range(n_conns):
        src = f"172.16.{c // 250}.{c % 250 + 1}"
        sport = 20000 + c
        for p in range(packets_per_conn):
            rows.append(TraceRow(t0 + c * 0.01 + p * 5.0, src, dst, sport, 80, rng.randint(4, 24)))
    rows.sort()
    return rows


def bulk_trace(dst: str = "10.0.0.21", n_conns: int = 4, packets_per_conn: int = 300,
               seed: int = 0, t0: float = 0.0) -> list[TraceRow]:
    """Few connections moving full-size segments."""
    rng = random.Random(seed)
    rows = []
    for c in range(n_conns):
        for p in range(packets_per_conn):
            rows.append(TraceRow(t0 + p * 0.001 + c * 1e-4, f"192.168.1.{c + 1}", dst,
                                 40000 + c, 443, rng.randint(1200, 1460)))
    rows.sort()
    return rows


def web_trace(dst: str = "10.0.0.43", n_conns: int = 60, seed: int = 0, t0: float = 0.0) -> list[TraceRow]:
    """Ordinary request/response traffic: tens of KB per connection."""
    rng = random.Random(seed)
    rows = []
    for c in range(n_conns):
        for p in range(rng.randint(5, 30)):
            rows.append(TraceRow(t0 + c * 0.05 + p * 0.002, f"10.1.{c // 200}.{c % 200 + 1}", dst,
                                 30000 + c, 443, rng.randint(400, 1460)))
    rows.sort()
    return rows


def mixed_trace(seed: int = 0) -> list[TraceRow]:
    rng = random.Random(seed)
    rows = []
    for d in range(6):
        kind = rng.choice(["slow", "bulk", "web"])
        dst = f"10.9.{d}.1"
        if kind == "slow":
            rows += slowloris_trace(dst, rng.randint(100, 600), rng.randint(1, 4), rng.random())
        elif kind == "bulk":
            rows += bulk_trace(dst, rng.randint(1, 8), rng.randint(50, 400), rng.random())
        else:
            rows += web_trace(dst, rng.randint(10, 120), rng.random())
    rows.sort()
    return rows


def write_trace(rows: Iterable[TraceRow], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(TraceRow._fields)
        for r in rows:
            w.writerow([repr(r.ts), r.src, r.dst, r.sport, r.dport, r.bytes])


def read_trace(path) -> list[TraceRow]:
    rows = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            rows.append(TraceRow(float(rec["ts"]), rec["src"], rec["dst"], int(rec["sport"]),
                                 int(rec["dport"]), int(rec["bytes"])))
    return rows


def replay(rows: Iterable[TraceRow], regs: TelemetryRegisters) -> TelemetryRegisters:
    for r in rows:
        regs.on_packet(r.dst, (r.src, r.dst, r.sport, r.dport), r.bytes)
    return regs


def attack_demo(rows: Iterable[TraceRow], threshold: float = DEFAULT_THRESHOLD,
                cp_delay: float = 0.043, ts: TableSet | None = None) -> dict:
    regs = replay(rows, TelemetryRegisters(ts, threshold))
    dests = []
    for dst in sorted(regs.records):
        rec = regs.records[dst]
        if rec.cpb is None:
            continue
        fast = regs.query_fast(dst)
        cpb_exact = rec.conn_count / rec.byte_count
        slow = regs.query_slow_path(dst, cp_delay)
        dests.append({
            "dst": dst,
            "conn_count": rec.conn_count,
            "byte_count": rec.byte_count,
            "cpb": fast.verdict.cpb_value,
            "cpb_bits": f"0x{fast.verdict.cpb.raw:04x}",
            "cpb_exact": cpb_exact,
            "attack_fast": fast.verdict.attack,
            "attack_slow": slow.verdict.attack,
            "fast_crossings": fast.crossings,
            "slow_crossings": slow.crossings,
            "fast_latency_s": fast.latency,
            "slow_latency_s": slow.latency,
        })
    return {
        "threshold": float(regs.threshold),
        "cp_delay_s": cp_delay,
        "destinations": dests,
        "agreement": all(d["attack_fast"] == d["attack_slow"] for d in dests),
        "latency_ratio": (cp_delay / DATA_PLANE_PASS_LATENCY),
        "controller_calls": regs.controller_calls,
    }
