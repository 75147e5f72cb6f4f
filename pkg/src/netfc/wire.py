"""NetFC-over-UDP: packet codec, switch emulator, and sender/receiver tools.

Layout (network byte order, directly after the UDP header)::

    magic:16 = 0x4FC1 | version:8 | op:8 | format:8 | flags:8 | x:16 | y:16 | result:16

Anything after those 12 bytes is carried through untouched; the sender uses
it for a sequence number.
"""

from __future__ import annotations

import logging
import socket
import struct
import threading
import time
from collections import Counter
from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np

from .errors import NetFCError, NotNetFc, NoData
from .formats import Bits16, Kind, decode_array
from .harness import MethodSummary, expected_results
from .pipeline import Corner, OpKind, compute
from .tables import TableSet, build_table_set, DEFAULT_K

log = logging.getLogger(__name__)

MAGIC = 0x4FC1
VERSION = 1
HEADER = struct.Struct("!HBBBBHHH")
HEADER_LEN = HEADER.size  # 12
DEFAULT_PORT = 9474

OP_FORWARD, OP_ADD, OP_SUB, OP_MUL, OP_DIV, OP_QUERY = range(6)
OP_CODES = {OpKind.ADD: OP_ADD, OpKind.SUB: OP_SUB, OpKind.MUL: OP_MUL, OpKind.DIV: OP_DIV}
OP_BY_CODE = {v: k for k, v in OP_CODES.items()}

FLAG_CORNER = 0x01
FLAG_ERROR = 0x02
FLAG_ATTACK = 0x04  # query replies only

FORMAT_BY_CODE = {0: Kind.FLOAT16, 1: Kind.POSIT16}


@dataclass(frozen=True)
class NetFcPacket:
    op: int
    fmt: int
    x: int
    y: int
    result: int = 0
    flags: int = 0
    version: int = VERSION
    magic: int = MAGIC
    trailer: bytes = b""

    @classmethod
    def parse(cls, data: bytes) -> "NetFcPacket":
        if len(data) < HEADER_LEN:
            raise NotNetFc(f"payload of {len(data)} bytes is shorter than {HEADER_LEN}")
        magic, version, op, fmt, flags, x, y, result = HEADER.unpack_from(data)
        if magic != MAGIC:
            raise NotNetFc(f"bad magic 0x{magic:04x}")
        return cls(op, fmt, x, y, result, flags, version, magic, bytes(data[HEADER_LEN:]))

    def serialize(self) -> bytes:
        return HEADER.pack(self.magic, self.version, self.op, self.fmt, self.flags,
                           self.x, self.y, self.result) + self.trailer

    @property
    def kind(self) -> Kind | None:
        return FORMAT_BY_CODE.get(self.fmt)

    @property
    def seq(self) -> int | None:
        if len(self.trailer) >= 4:
            return struct.unpack_from("!I", self.trailer)[0]
        return None


def parse(data: bytes) -> NetFcPacket:
    return NetFcPacket.parse(data)


def serialize(p: NetFcPacket) -> bytes:
    return p.serialize()


def make_packet(op, x: Bits16, y: Bits16, seq: int | None = None) -> NetFcPacket:
    code = op if isinstance(op, int) else OP_CODES[OpKind.parse(op)]
    trailer = struct.pack("!I", seq) if seq is not None else b""
    return NetFcPacket(code, x.kind.wire_code, x.raw, y.raw, trailer=trailer)


class SwitchEmulator:
    """Parses NetFC packets, runs the datapath, writes the result field."""

    def __init__(self, tables: dict[Kind, TableSet] | None = None, telemetry=None):
        if tables is None:
            tables = {kind: build_table_set(kind, DEFAULT_K[kind]) for kind in Kind}
        self.tables = dict(tables)
        self.telemetry = telemetry
        self._lock = threading.Lock()
        self.counters: Counter = Counter()

    def _count(self, *keys: str) -> None:
        with self._lock:
            for key in keys:
                self.counters[key] += 1

    def snapshot(self) -> dict:
        with self._lock:
            return dict(self.counters)

    def process(self, p: NetFcPacket) -> NetFcPacket:
        if p.version != VERSION or p.op == OP_FORWARD:
            self._count("packets", "forwarded")
            return p
        if p.op == OP_QUERY:
            return self._query(p)
        op = OP_BY_CODE.get(p.op)
        kind = p.kind
        ts = self.tables.get(kind) if kind is not None else None
        if op is None or ts is None:
            self._count("packets", "errors", f"op{p.op}.errors")
            return replace(p, result=0, flags=FLAG_ERROR)
        try:
            res = compute(op, Bits16(p.x, kind), Bits16(p.y, kind), ts)
        except NetFCError:
            self._count("packets", "errors", f"{op.value}.packets", f"{op.value}.errors")
            return replace(p, result=0, flags=FLAG_ERROR)
        keys = ["packets", f"{op.value}.packets"]
        flags = 0
        if res.corner is not Corner.NONE:
            flags |= FLAG_CORNER
            keys += ["corners", f"{op.value}.corners"]
        self._count(*keys)
        return replace(p, result=res.value.raw, flags=flags)

    def _query(self, p: NetFcPacket) -> NetFcPacket:
        if self.telemetry is None:
            self._count("packets", "errors", "query.errors")
            return replace(p, result=0, flags=FLAG_ERROR)
        try:
            verdict = self.telemetry.query_index(p.x)
        except NoData:
            self._count("packets", "query.packets", "errors", "query.errors")
            return replace(p, result=0, flags=FLAG_ERROR)
        self._count("packets", "query.packets")
        return replace(p, result=verdict.cpb.raw, flags=FLAG_ATTACK if verdict.attack else 0)

    def process_datagram(self, data: bytes) -> bytes:
        """Bytes in, bytes out; anything that is not NetFC passes through unchanged."""
        try:
            p = NetFcPacket.parse(data)
        except NotNetFc:
            self._count("not_netfc")
            return data
        return self.process(p).serialize()


def parse_addr(text: str, default_host: str = "127.0.0.1") -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep:
        return default_host, int(text)
    return host or default_host, int(port)


def _udp_socket(bind=None, rcvbuf: int = 1 << 22) -> socket.socket:
    s = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    try:
        s.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, rcvbuf)
    except OSError:
        pass
    if bind is not None:
        s.bind(bind)
    return s


class SwitchService:
    """UDP loop: receive, process, forward to a single static next hop."""

    def __init__(self, listen: tuple[str, int], forward: tuple[str, int],
                 emulator: SwitchEmulator | None = None):
        self.emulator = emulator or SwitchEmulator()
        self.forward = forward
        self.sock = _udp_socket(listen)  # socket errors surface here, at startup
        self.sock.settimeout(0.1)
        self.address = self.sock.getsockname()
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None

    def serve_forever(self) -> None:
        out = _udp_socket()
        try:
            while not self._stop.is_set():
                try:
                    data, _ = self.sock.recvfrom(65535)
                except socket.timeout:
                    continue
                except OSError:
                    if self._stop.is_set():
                        break
                    raise
                try:
                    reply = self.emulator.process_datagram(data)
                except Exception:  # a bad packet must never take the service down
                    log.exception("packet processing failed")
                    self.emulator._count("internal_errors")
                    reply = data
                try:
                    out.sendto(reply, self.forward)
                except OSError as exc:
                    log.warning("forward failed: %s", exc)
                    self.emulator._count("forward_errors")
        finally:
            out.close()

    def start(self) -> "SwitchService":
        self._thread = threading.Thread(target=self.serve_forever, name="netfc-switch", daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=2)
        self.sock.close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


def serve(listen, forward, tables=None) -> SwitchService:
    return SwitchService(listen, forward, SwitchEmulator(tables)).start()


def send_pairs(pairs: Iterable[tuple[Bits16, Bits16]], op, dest: tuple[str, int],
               rate: float | None = None, burst: int = 64) -> int:
    """Send one packet per pair, numbered from 0 in the trailer; rate in packets/s."""
    sock = _udp_socket()
    sent = 0
    start = time.monotonic()
    try:
        for x, y in pairs:
            sock.sendto(make_packet(op, x, y, seq=sent).serialize(), dest)
            sent += 1
            if rate:
                lag = sent / rate - (time.monotonic() - start)
                if lag > 0:
                    time.sleep(lag)
            elif sent % burst == 0:
                time.sleep(0.0005)  # keep loopback buffers from overflowing
    finally:
        sock.close()
    return sent


class Receiver:
    """Collects result packets; duplicates (same sequence number) are dropped."""

    def __init__(self, listen: tuple[str, int]):
        self.sock = _udp_socket(listen)
        self.address = self.sock.getsockname()
        self.packets: dict = {}
        self.other = 0

    def collect(self, count: int | None = None, timeout: float = 5.0, idle: float = 1.0) -> int:
        deadline = time.monotonic() + timeout
        last = time.monotonic()
        while time.monotonic() < deadline:
            if count is not None and len(self.packets) >= count:
                break
            if self.packets and time.monotonic() - last > idle:
                break
            self.sock.settimeout(0.05)
            try:
                data, _ = self.sock.recvfrom(65535)
            except socket.timeout:
                continue
            last = time.monotonic()
            try:
                p = NetFcPacket.parse(data)
            except NotNetFc:
                self.other += 1
                continue
            key = p.seq if p.seq is not None else len(self.packets)
            self.packets.setdefault(key, p)
        return len(self.packets)

    def close(self) -> None:
        self.sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def report(self) -> dict:
        return receiver_report(self.packets.values())


def receiver_report(packets: Iterable[NetFcPacket]) -> dict:
    """Accuracy aggregates per (op, format), computed the same way as the offline harness."""
    groups: dict[tuple[int, int], list[NetFcPacket]] = {}
    errors = 0
    for p in packets:
        if p.flags & FLAG_ERROR:
            errors += 1
            continue
        groups.setdefault((p.op, p.fmt), []).append(p)
    out = {"packets": sum(len(v) for v in groups.values()) + errors, "errors": errors, "groups": []}
    for (op_code, fmt_code), ps in sorted(groups.items()):
        op = OP_BY_CODE.get(op_code)
        kind = FORMAT_BY_CODE.get(fmt_code)
        if op is None or kind is None:
            continue
        xs = np.array([p.x for p in ps], dtype=np.uint16)
        ys = np.array([p.y for p in ps], dtype=np.uint16)
        rs = np.array([p.result for p in ps], dtype=np.uint16)
        expect = expected_results(op, xs, ys, kind)
        summary = MethodSummary.build(expect, decode_array(rs, kind))
        out["groups"].append(dict(summary.as_dict(), op=op.value, format=kind.value, n=len(ps),
                                  corners=sum(1 for p in ps if p.flags & FLAG_CORNER)))
    return out
