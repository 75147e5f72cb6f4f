"""Prefix-based lossless compression of exact-match tables into ternary rows.

A run of ``2**s`` keys that is aligned on a ``2**s`` boundary (in key-bit
space) and maps to one value collapses into a single row whose ``s`` low bits
are don't-care.  Only maximal blocks are emitted, so rows never overlap and
the priority order is purely a tie-breaking convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import MissingEntry, RuleFileError
from .tables import (ABSENT, SENTINEL_BY_NAME, SENTINEL_NAMES, ExactTable, TableName, TableSet,
                     _assemble, build_table_set, header_line, is_sentinel, parse_header)


class TernaryEntry(NamedTuple):
    key: int       # key bits, don't-care positions zeroed
    mask: int      # 1 = care bit
    value: int
    priority: int  # lower matches first


@dataclass(frozen=True, eq=False)
class CompressedTable:
    name: TableName
    key_min: int
    size: int
    key_width: int
    signed_keys: bool
    value_width: int
    entries: tuple[TernaryEntry, ...]
    original_count: int
    match_kind = "ternary"

    @property
    def compressed_count(self) -> int:
        return len(self.entries)

    @property
    def entry_count(self) -> int:
        return len(self.entries)

    @property
    def memory_bytes(self) -> int:
        return self.entry_count * self.value_width // 8

    @property
    def savings(self) -> float:
        if self.original_count == 0:
            return 0.0
        return 1.0 - self.compressed_count / self.original_count

    @cached_property
    def _groups(self) -> list[tuple[int, dict, np.ndarray, np.ndarray]]:
        """(mask, {key: value}, sorted keys, values) per mask, in priority order."""
        by_mask: dict[int, list[TernaryEntry]] = {}
        for e in sorted(self.entries, key=lambda e: e.priority):
            by_mask.setdefault(e.mask, []).append(e)
        order = sorted(by_mask, key=lambda m: min(e.priority for e in by_mask[m]))
        groups = []
        for mask in order:
            rows = sorted(by_mask[mask], key=lambda e: e.key)
            d = {}
            for e in rows:
                d.setdefault(e.key, e.value)
            keys = np.array(list(d), dtype=np.int64)
            vals = np.array(list(d.values()), dtype=np.int64)
            groups.append((mask, d, keys, vals))
        return groups

    def key_bits(self, key: int) -> int:
        return key & ((1 << self.key_width) - 1)

    def lookup(self, key: int) -> int:
        if self.signed_keys:
            half = 1 << (self.key_width - 1)
            in_width = -half <= key < half
        else:
            in_width = 0 <= key < (1 << self.key_width)
        if not in_width:
            raise MissingEntry(self.name.value, key)
        bits = self.key_bits(key)
        for mask, d, _, _ in self._groups:
            v = d.get(bits & mask)
            if v is not None:
                return v
        raise MissingEntry(self.name.value, key)

    def lookup_raw_many(self, keys) -> np.ndarray:
        """Vectorised lookup; keys with no matching row come back as ABSENT."""
        bits = np.asarray(keys, dtype=np.int64) & ((1 << self.key_width) - 1)
        out = np.full(bits.shape, ABSENT, dtype=np.int64)
        pending = np.ones(bits.shape, dtype=bool)
        for mask, _, gkeys, gvals in self._groups:
            if not pending.any():
                break
            probe = bits & mask
            pos = np.clip(np.searchsorted(gkeys, probe), 0, len(gkeys) - 1)
            hit = pending & (gkeys[pos] == probe)
            out[hit] = gvals[pos[hit]]
            pending &= ~hit
        return out

    def lookup_many(self, keys) -> np.ndarray:
        out = self.lookup_raw_many(keys)
        miss = out == ABSENT
        if miss.any():
            raise MissingEntry(self.name.value, int(np.asarray(keys)[miss][0]))
        return out

    @cached_property
    def values(self) -> np.ndarray:
        """Dense materialisation over the source key span (ABSENT where nothing matches)."""
        out = self.lookup_raw_many(np.arange(self.key_min, self.key_min + self.size))
        out.setflags(write=False)
        return out

    def to_exact(self) -> ExactTable:
        return ExactTable(self.name, self.key_min, self.values, self.key_width,
                          self.signed_keys, self.value_width)


def _maximal_blocks(bits_vals: np.ndarray, width: int) -> list[tuple[int, int, int]]:
    """Maximal aligned uniform blocks over a dense 2**width array (ABSENT = hole).

    Returns (start, log2 size, value) triples.
    """
    vals = bits_vals
    uniform = vals != ABSENT
    levels = [(vals, uniform)]
    for _ in range(width):
        v, u = levels[-1]
        a, b = v[0::2], v[1::2]
        nu = u[0::2] & u[1::2] & (a == b)
        levels.append((a, nu))
    blocks = []
    for s in range(width, -1, -1):
        v, u = levels[s]
        if s == width:
            emit = u
        else:
            parent = levels[s + 1][1]
            emit = u & ~np.repeat(parent, 2)
        for idx in np.flatnonzero(emit):
            blocks.append((int(idx) << s, s, int(v[idx])))
    return blocks


def compress(t: ExactTable) -> CompressedTable:
    width = t.key_width
    space = np.full(1 << width, ABSENT, dtype=np.int64)
    keys = np.arange(t.key_min, t.key_min + t.size, dtype=np.int64)
    space[keys & ((1 << width) - 1)] = t.values
    full = (1 << width) - 1
    blocks = _maximal_blocks(space, width)
    # longest mask (fewest wildcards) first, then ascending key
    blocks.sort(key=lambda b: (b[1], b[0]))
    entries = tuple(TernaryEntry(start, full ^ ((1 << s) - 1), value, prio)
                    for prio, (start, s, value) in enumerate(blocks))
    return CompressedTable(t.name, t.key_min, t.size, width, t.signed_keys, t.value_width,
                           entries, t.entry_count)


def lookup_ternary(ct: CompressedTable, key: int) -> int:
    return ct.lookup(key)


@dataclass
class LosslessReport:
    table: str
    equal: bool
    mismatches: list = field(default_factory=list)  # (key, expected, got)
    original_count: int = 0
    compressed_count: int = 0

    @property
    def savings(self) -> float:
        if not self.original_count:
            return 0.0
        return 1.0 - self.compressed_count / self.original_count

    def as_dict(self) -> dict:
        return {
            "table": self.table,
            "equal": self.equal,
            "mismatches": [[k, _show(e), _show(g)] for k, e, g in self.mismatches[:100]],
            "mismatch_count": len(self.mismatches),
            "original_count": self.original_count,
            "compressed_count": self.compressed_count,
            "savings": self.savings,
        }


def _show(v: int):
    if v == ABSENT:
        return None
    return SENTINEL_NAMES.get(v, v)


def verify_lossless(t: ExactTable, ct: CompressedTable) -> LosslessReport:
    """Exhaustive sweep of the source key span, including keys the source lacks."""
    keys = np.arange(t.key_min, t.key_min + t.size, dtype=np.int64)
    got = ct.lookup_raw_many(keys)
    bad = np.flatnonzero(got != t.values)
    mismatches = [(int(keys[i]), int(t.values[i]), int(got[i])) for i in bad]
    return LosslessReport(t.name.value, not mismatches, mismatches,
                          t.entry_count, ct.compressed_count)


def compress_table_set(ts: TableSet) -> TableSet:
    """Same TableSet with every data table replaced by its ternary form."""
    tables = {name: compress(t) if isinstance(t, ExactTable) else t
              for name, t in ts.tables().items()}
    return _with_tables(ts, tables, ts.prune)


def _with_tables(ts: TableSet, tables, prune) -> TableSet:
    return TableSet(ts.kind, ts.k, tables[TableName.LOG_X], tables[TableName.LOG_Y],
                    tables[TableName.MI_ADD], tables[TableName.MI_SUB_POS],
                    tables[TableName.MI_SUB_NEG], tables[TableName.EXP],
                    ts.scaled_min, ts.scaled_max, ts.dominance, ts.exp_min, prune=prune)


def verify_table_set(exact: TableSet, compressed: TableSet) -> dict:
    reports = [verify_lossless(exact.tables()[n], compressed.tables()[n]) for n in exact.tables()]
    orig = sum(r.original_count for r in reports)
    comp = sum(r.compressed_count for r in reports)
    return {
        "format": exact.kind.value,
        "k": exact.k,
        "equal": all(r.equal for r in reports),
        "original_entries": orig,
        "compressed_entries": comp,
        "savings": 1.0 - comp / orig if orig else 0.0,
        "original_bytes": exact.memory_bytes,
        "compressed_bytes": compressed.memory_bytes,
        "tables": [r.as_dict() for r in reports],
    }


# -- rule files --------------------------------------------------------------------------

def export_ternary(ts: TableSet, path) -> int:
    lines = [header_line(ts.kind, ts.k, ts.prune) + " compressed=1"]
    for name, ct in ts.tables().items():
        if not isinstance(ct, CompressedTable):
            raise TypeError(f"{name.value} is not compressed")
        kdig = (ct.key_width + 3) // 4
        vdig = (ct.value_width + 3) // 4
        vmask = (1 << ct.value_width) - 1
        for e in sorted(ct.entries, key=lambda e: e.priority):
            v = SENTINEL_NAMES[e.value] if is_sentinel(e.value) else f"{e.value & vmask:0{vdig}x}"
            lines.append(f"{name.value},{e.key:0{kdig}x}/{e.mask:0{kdig}x},{v},{e.priority}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return len(lines) - 1


def import_ternary(path) -> TableSet:
    with open(path, encoding="utf-8") as fh:
        kind, k, prune, fields = parse_header(fh.readline().rstrip("\n"))
        if fields.get("compressed") != "1":
            raise RuleFileError(f"{path} is not a compressed rule file")
        template = build_table_set(kind, k)
        rows: dict[TableName, list[TernaryEntry]] = {n: [] for n in template.tables()}
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                tag, km, value, prio = line.split(",")
                key_hex, mask_hex = km.split("/")
                name = TableName(tag)
                if value in SENTINEL_BY_NAME:
                    v = SENTINEL_BY_NAME[value]
                else:
                    v = int(value, 16)
                    width = 4 * len(value)
                    if name is not TableName.EXP and v >> (width - 1):
                        v -= 1 << width
                rows[name].append(TernaryEntry(int(key_hex, 16), int(mask_hex, 16), v, int(prio)))
            except (ValueError, KeyError) as exc:
                raise RuleFileError(f"{path}:{lineno}: {exc}") from None
    tables = {}
    for name, t in template.tables().items():
        entries = tuple(rows[name])
        ct = CompressedTable(name, t.key_min, t.size, t.key_width, t.signed_keys,
                             t.value_width, entries, 0)
        original = int(np.count_nonzero(ct.values != ABSENT))
        tables[name] = CompressedTable(name, t.key_min, t.size, t.key_width, t.signed_keys,
                                       t.value_width, entries, original)
    return _with_tables(template, tables, prune)


def decompress_table_set(ts: TableSet) -> TableSet:
    """Materialise a ternary TableSet back into exact tables."""
    bodies = {name: np.array(t.values) for name, t in ts.tables().items()}
    return _assemble(ts.kind, ts.k, bodies, prune=ts.prune)
