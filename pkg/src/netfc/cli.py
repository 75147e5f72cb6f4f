"""``netfc`` command line.

Exit codes: 0 ok, 2 usage, 3 I/O, 4 verification failure.  Failures print one
machine-parsable line on stderr::

    netfc: error code=3 kind=FileNotFoundError msg="..."
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import signal
import sys
import threading
import time
from fractions import Fraction
from pathlib import Path

import tomli

from . import __version__
from .errors import NetFCError, RuleFileError

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_VERIFY = 0, 2, 3, 4
REPORT_VERSION = 1  # bump when a JSON report layout changes

DEFAULTS = {
    "format": "float16",
    "k": None,  # per-format default
    "seed": None,
    "sf": 10_000,
    "threshold": 1e-3,
    "cp_delay_ms": 43.0,
    "listen": "127.0.0.1:9474",
    "forward": "127.0.0.1:9475",
    "dest": "127.0.0.1:9474",
}


class UsageError(Exception):
    pass


class VerificationError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _fail(code: int, exc: BaseException) -> int:
    msg = str(exc).replace('"', "'")
    print(f'netfc: error code={code} kind={type(exc).__name__} msg="{msg}"', file=sys.stderr)
    return code


def load_config(path) -> dict:
    if path is None:
        return {}
    with open(path, "rb") as fh:
        data = tomli.load(fh)
    unknown = set(data) - set(DEFAULTS)
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return data


class Settings:
    """flag > NETFC_SEED (seed only) > config file > built-in default."""

    def __init__(self, args, cfg: dict):
        self.args = args
        self.cfg = cfg

    def __getattr__(self, name):
        v = getattr(self.args, name, None)
        if v is not None:
            return v
        if name == "seed" and os.environ.get("NETFC_SEED", "").strip():
            return int(os.environ["NETFC_SEED"])
        if name in self.cfg:
            return self.cfg[name]
        return DEFAULTS.get(name)


def _kind(s: Settings):
    from .formats import Kind
    return Kind.parse(s.format)


def _tables(s: Settings):
    from .tables import DEFAULT_K, build_table_set
    kind = _kind(s)
    k = s.k if s.k is not None else DEFAULT_K[kind]
    return build_table_set(kind, int(k))


def _seed(s: Settings) -> int:
    from .harness import DEFAULT_SEED
    return DEFAULT_SEED if s.seed is None else int(s.seed)


def parse_operand(text: str, kind):
    """0x-prefixed hex is a raw pattern; anything else is a decimal value."""
    from .formats import Bits16, encode_nearest
    t = text.strip()
    if t.lower().startswith(("0x", "-0x")):
        if t.startswith("-"):
            raise UsageError(f"raw pattern {text!r} cannot be negative")
        return Bits16(int(t, 16), kind)
    try:
        if t.lower() in ("nan", "inf", "+inf", "-inf", "infinity", "-infinity"):
            return encode_nearest(float(t), kind)
        return encode_nearest(Fraction(t), kind)
    except (ValueError, ZeroDivisionError):
        raise UsageError(f"cannot parse operand {text!r}") from None


def _write_json(path, payload) -> None:
    payload = dict(payload, report_version=REPORT_VERSION)
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _fmt_value(v: float) -> str:
    return format(v, ".8g")


# -- subcommands ------------------------------------------------------------------------

def cmd_gen_tables(s: Settings) -> int:
    from .tables import export_entries, prune_to_range
    t0 = time.perf_counter()
    ts = _tables(s)
    if s.prune:
        try:
            lo, hi = (float(v) for v in s.prune.split(","))
        except ValueError:
            raise UsageError(f"--prune expects lo,hi (got {s.prune!r})") from None
        ts = prune_to_range(ts, lo, hi)
    if s.out:
        export_entries(ts, s.out)
    dt = time.perf_counter() - t0
    kib = ts.memory_bytes / 1024
    print(f"{ts.entry_count} entries, {kib:g} KiB")
    print(f"format={ts.kind.value} k={ts.k} bytes={ts.memory_bytes} "
          f"fingerprint={ts.fingerprint[:16]} seconds={dt:.3f}")
    for name, t in ts.tables().items():
        print(f"  {name.value:<11} {t.entry_count:>7} entries  key_width={t.key_width} "
              f"value_width={t.value_width}")
    return EXIT_OK


def cmd_compress_tables(s: Settings) -> int:
    from .compression import compress_table_set, export_ternary, verify_table_set
    from .tables import import_entries
    exact = import_entries(s.input)
    comp = compress_table_set(exact)
    report = verify_table_set(exact, comp)
    if s.out:
        export_ternary(comp, s.out)
    if s.report:
        _write_json(s.report, report)
    print(f"{report['original_entries']} -> {report['compressed_entries']} entries, "
          f"savings {report['savings']:.2%}, lossless={report['equal']}")
    if not report["equal"]:
        raise VerificationError("compressed tables differ from the source")
    return EXIT_OK


def cmd_compute(s: Settings) -> int:
    from .pipeline import compute
    ts = _tables(s)
    x = parse_operand(s.x, ts.kind)
    y = parse_operand(s.y, ts.kind)
    res = compute(s.op, x, y, ts)
    corner = res.corner.label or "-"
    print(_fmt_value(float(res.value)))
    print(f"bits=0x{res.value.raw:04x} corner={corner} stages={res.stages}")
    if s.trace:
        print(res.trace.render())
    return EXIT_OK


def cmd_eval(s: Settings) -> int:
    from .harness import BaselineConfig, evaluate, export_heatmap_csv, export_report, gen_dataset
    ts = _tables(s)
    ds = gen_dataset(s.dataset, _seed(s), ts.kind)
    baseline = BaselineConfig(int(s.baseline)) if s.baseline else None
    rep = evaluate(s.op, ds, ts, baseline)
    if s.report:
        _write_json(s.report, rep.aggregates())
    if s.csv:
        export_report(rep, s.csv, "csv")
    if s.heatmap:
        export_heatmap_csv(rep.netfc.heatmap, s.heatmap)
    lines = [("netfc", rep.netfc)] + ([("baseline", rep.baseline)] if rep.baseline else [])
    for name, m in lines:
        print(f"{name:<8} average={m.average:.6f} median={m.median:.6f} "
              f"minimum={m.minimum:.6f} mse={m.mse:.6g}")
    return EXIT_OK


def cmd_sweep(s: Settings) -> int:
    from .harness import gen_dataset, sweep_scaling_factor
    kind = _kind(s)
    try:
        ks = [int(v) for v in s.ks.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--ks expects a comma-separated list of integers (got {s.ks!r})") from None
    ds = gen_dataset(s.dataset, _seed(s), kind)
    curve = sweep_scaling_factor(s.op, ds, kind, ks)
    if s.report:
        _write_json(s.report, {"op": s.op, "dataset": ds.kind, "format": kind.value,
                               "seed": ds.seed, "curve": curve})
    for row in curve:
        print(f"k={row['k']:<5} median={row['median']:.6f} memory={row['memory_bytes']}")
    return EXIT_OK


def cmd_serve(s: Settings) -> int:
    from .tables import DEFAULT_K, build_table_set
    from .wire import SwitchEmulator, SwitchService, parse_addr
    from .formats import Kind
    kind = _kind(s)
    tables = {k: build_table_set(k, DEFAULT_K[k]) for k in Kind}
    tables[kind] = _tables(s)
    svc = SwitchService(parse_addr(s.listen), parse_addr(s.forward), SwitchEmulator(tables))
    print(f"serving on {svc.address[0]}:{svc.address[1]} -> {s.forward}", flush=True)
    stop = threading.Event()
    signal.signal(signal.SIGTERM, lambda *_: stop.set())
    svc.start()
    try:
        stop.wait(s.duration if s.duration else None)
    except KeyboardInterrupt:
        pass
    finally:
        svc.stop()
    print(json.dumps(svc.emulator.snapshot(), sort_keys=True))
    return EXIT_OK


def _read_pairs(path, kind):
    import csv
    pairs = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            try:
                pairs.append((parse_operand(row["x"], kind), parse_operand(row["y"], kind)))
            except KeyError:
                raise UsageError(f"{path} needs x and y columns") from None
    return pairs


def cmd_send(s: Settings) -> int:
    from .harness import gen_dataset
    from .wire import parse_addr, send_pairs
    kind = _kind(s)
    if s.file:
        pairs = _read_pairs(s.file, kind)
    elif s.dataset:
        pairs = list(gen_dataset(s.dataset, _seed(s), kind).pairs())
    else:
        raise UsageError("send needs --file or --dataset")
    n = send_pairs(pairs, s.op, parse_addr(s.dest), rate=s.rate)
    print(f"sent {n} packets to {s.dest}")
    return EXIT_OK


def cmd_recv(s: Settings) -> int:
    from .wire import Receiver, parse_addr
    with Receiver(parse_addr(s.listen)) as rx:
        print(f"listening on {rx.address[0]}:{rx.address[1]}", flush=True)
        rx.collect(count=s.count, timeout=s.timeout, idle=s.idle)
        report = rx.report()
    if s.report:
        _write_json(s.report, report)
    for g in report["groups"]:
        print(f"{g['op']}/{g['format']} n={g['n']} average={g['average']:.6f} "
              f"median={g['median']:.6f} minimum={g['minimum']:.6f}")
    if s.count is not None and report["packets"] < s.count:
        raise VerificationError(f"received {report['packets']} of {s.count} packets")
    return EXIT_OK


def cmd_attack_demo(s: Settings) -> int:
    from .slowloris import attack_demo, bulk_trace, mixed_trace, read_trace, slowloris_trace, web_trace
    if s.trace:
        rows = read_trace(s.trace)
    else:
        seed = _seed(s)
        rows = sorted(slowloris_trace(seed=seed) + bulk_trace(seed=seed) + web_trace(seed=seed)
                      + mixed_trace(seed))
    report = attack_demo(rows, float(s.threshold), float(s.cp_delay_ms) / 1000.0)
    if s.report:
        _write_json(s.report, report)
    for d in report["destinations"]:
        flag = "ATTACK" if d["attack_fast"] else "ok"
        print(f"{d['dst']:<15} conns={d['conn_count']:<5} bytes={d['byte_count']:<9} "
              f"cpb={d['cpb']:.4g} {flag}")
    print(f"fast crossings=0 slow crossings=2 latency ratio={report['latency_ratio']:.0f}x "
          f"agreement={report['agreement']}")
    return EXIT_OK


# -- parser -----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="netfc", description="Table-lookup floating point for match-action pipelines.")
    p.add_argument("--version", action="version", version=f"netfc {__version__}")
    p.add_argument("--config", help="TOML file with default settings (flags win)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def fmt_args(sp):
        sp.add_argument("--format", choices=["float16", "posit16"])
        sp.add_argument("--k", type=int, help="scaling factor (power of two)")

    ops = ["add", "sub", "mul", "div"]

    sp = sub.add_parser("gen-tables", help="build, size and export the lookup tables")
    fmt_args(sp)
    sp.add_argument("--prune", help="lo,hi magnitude range to keep")
    sp.add_argument("--out", help="rule file to write")
    sp.set_defaults(func=cmd_gen_tables)

    sp = sub.add_parser("compress-tables", help="prefix-compress an exported rule file")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out")
    sp.add_argument("--report")
    sp.set_defaults(func=cmd_compress_tables)

    sp = sub.add_parser("compute", help="run one operation through the datapath")
    fmt_args(sp)
    sp.add_argument("--op", choices=ops, required=True)
    sp.add_argument("--x", required=True)
    sp.add_argument("--y", required=True)
    sp.add_argument("--trace", action="store_true")
    sp.set_defaults(func=cmd_compute)

    sp = sub.add_parser("eval", help="accuracy evaluation on a synthetic dataset")
    fmt_args(sp)
    sp.add_argument("--op", choices=ops, required=True)
    sp.add_argument("--dataset", choices=["1", "2", "3"], required=True)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--baseline", type=int, metavar="SF", help="also run the float-to-integer baseline")
    sp.add_argument("--heatmap", help="CSV of log2 heatmap cells")
    sp.add_argument("--csv", help="per-record CSV")
    sp.add_argument("--report", help="JSON aggregates")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("sweep", help="median accuracy and memory across scaling factors")
    sp.add_argument("--format", choices=["float16", "posit16"])
    sp.add_argument("--op", choices=ops, default="add")
    sp.add_argument("--dataset", choices=["1", "2", "3"], default="2")
    sp.add_argument("--ks", default="64,128,256,512,1024")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--report")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("serve", help="switch emulator over UDP")
    fmt_args(sp)
    sp.add_argument("--listen")
    sp.add_argument("--forward")
    sp.add_argument("--duration", type=float, help="stop after this many seconds")
    sp.set_defaults(func=cmd_serve)

    sp = sub.add_parser("send", help="send operand pairs as NetFC packets")
    sp.add_argument("--format", choices=["float16", "posit16"])
    sp.add_argument("--file", help="CSV with x,y columns (hex patterns or decimals)")
    sp.add_argument("--dataset", choices=["1", "2", "3"])
    sp.add_argument("--seed", type=int)
    sp.add_argument("--op", choices=ops, required=True)
    sp.add_argument("--dest")
    sp.add_argument("--rate", type=float, help="packets per second")
    sp.set_defaults(func=cmd_send)

    sp = sub.add_parser("recv", help="collect result packets and score them")
    sp.add_argument("--listen")
    sp.add_argument("--report")
    sp.add_argument("--count", type=int)
    sp.add_argument("--timeout", type=float, default=30.0)
    sp.add_argument("--idle", type=float, default=2.0)
    sp.set_defaults(func=cmd_recv)

    sp = sub.add_parser("attack-demo", help="Slowloris detection via the CPB register")
    sp.add_argument("--trace", help="CSV: ts,src,dst,sport,dport,bytes (synthetic if omitted)")
    sp.add_argument("--threshold", type=float)
    sp.add_argument("--cp-delay-ms", dest="cp_delay_ms", type=float)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--report")
    sp.set_defaults(func=cmd_attack_demo)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        settings = Settings(args, load_config(args.config))
        return args.func(settings)
    except UsageError as exc:
        return _fail(EXIT_USAGE, exc)
    except VerificationError as exc:
        return _fail(EXIT_VERIFY, exc)
    except (OSError, RuleFileError, tomli.TOMLDecodeError) as exc:
        return _fail(EXIT_IO, exc)
    except (NetFCError, ValueError, TypeError) as exc:
        return _fail(EXIT_USAGE, exc)


def main() -> None:
    sys.exit(run())
