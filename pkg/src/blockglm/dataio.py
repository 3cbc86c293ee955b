"""LIBSVM parsing, pseudo-random feature partitioning and feature-major shards.

The repartition tool is a single-pass in-memory transpose; adequate at desk
scale, not a streaming pipeline. Shard files are human-inspectable text with
round-trip decimal formatting, so repartition -> load reassembles the matrix
bitwise.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DataFormatError
from .shards import FeatureShard, shard_from_columns

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix64(x: int) -> int:
    """splitmix64 finalizer; a fixed, published 64-bit mixing function."""
    x &= _MASK64
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & _MASK64
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & _MASK64
    x ^= x >> 31
    return x


def feature_hash(feature_id: int, seed: int) -> int:
    return _mix64(((feature_id + 1) * _GOLDEN + seed) & _MASK64)


@dataclass(frozen=True)
class LibsvmRecord:
    label: float
    entries: tuple[tuple[int, float], ...]  # (feature id, value), ids ascending


def parse_libsvm_line(line: str, lineno: int = 0) -> LibsvmRecord:
    """Parse "label id:value id:value ...". Zero-valued entries are dropped
    (they carry no information in a sparse row)."""
    tokens = line.split()
    if not tokens:
        raise DataFormatError(f"line {lineno}: empty record")
    try:
        label = float(tokens[0])
    except ValueError:
        raise DataFormatError(f"line {lineno}: bad label {tokens[0]!r}")
    if not math.isfinite(label):
        raise DataFormatError(f"line {lineno}: non-finite label")
    entries: list[tuple[int, float]] = []
    seen: set[int] = set()
    for tok in tokens[1:]:
        fid_s, sep, val_s = tok.partition(":")
        if not sep:
            raise DataFormatError(f"line {lineno}: malformed token {tok!r}")
        try:
            fid = int(fid_s)
            val = float(val_s)
        except ValueError:
            raise DataFormatError(f"line {lineno}: malformed token {tok!r}")
        if fid < 0:
            raise DataFormatError(f"line {lineno}: negative feature id {fid}")
        if not math.isfinite(val):
            raise DataFormatError(f"line {lineno}: non-finite value in {tok!r}")
        if fid in seen:
            raise DataFormatError(f"line {lineno}: duplicate feature id {fid}")
        seen.add(fid)
        if val != 0.0:
            entries.append((fid, val))
    entries.sort(key=lambda e: e[0])
    return LibsvmRecord(label=label, entries=tuple(entries))


def parse_libsvm(lines: Iterable[str]) -> list[LibsvmRecord]:
    records = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        records.append(parse_libsvm_line(line, lineno))
    return records


@dataclass(frozen=True)
class IdMap:
    """Dense 0-based internal ids for the observed raw feature ids.

    Raw ids following the 1-based LIBSVM convention (minimum observed id >= 1)
    and 0-based ids are both remapped the same way: observed ids sorted
    ascending become 0..p-1.
    """

    raw_ids: tuple[int, ...]  # internal id k -> raw id raw_ids[k]

    @property
    def num_features(self) -> int:
        return len(self.raw_ids)

    def to_internal(self) -> dict[int, int]:
        return {raw: k for k, raw in enumerate(self.raw_ids)}


def build_id_map(records: Sequence[LibsvmRecord]) -> IdMap:
    observed = sorted({fid for rec in records for fid, _ in rec.entries})
    return IdMap(raw_ids=tuple(observed))


@dataclass(frozen=True)
class PartitionSpec:
    """Deterministic feature id -> node id assignment by hashing."""

    M: int
    seed: int

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("M must be >= 1")

    def node_of(self, feature_id: int) -> int:
        return feature_hash(feature_id, self.seed) % self.M


def partition_features(observed_ids: Iterable[int], M: int, seed: int) -> PartitionSpec:
    spec = PartitionSpec(M=M, seed=seed)
    # Total by construction; materializing checks nothing can be unassigned.
    for fid in observed_ids:
        node = spec.node_of(fid)
        assert 0 <= node < M
    return spec


def _fmt(x: float) -> str:
    return repr(float(x))


def _shard_path(out_dir: str, m: int) -> str:
    return os.path.join(out_dir, f"shard_{m:03d}.txt")


def _labels_path(out_dir: str) -> str:
    return os.path.join(out_dir, "labels.txt")


def _idmap_path(out_dir: str) -> str:
    return os.path.join(out_dir, "idmap.txt")


def write_labels(labels: Sequence[float], path: str) -> None:
    with open(path, "w") as fh:
        for y in labels:
            fh.write(_fmt(y) + "\n")


def load_labels(path: str) -> np.ndarray:
    with open(path) as fh:
        return np.asarray([float(s) for s in fh.read().split()], dtype=np.float64)


def write_id_map(idmap: IdMap, path: str) -> None:
    with open(path, "w") as fh:
        for internal, raw in enumerate(idmap.raw_ids):
            fh.write(f"{internal} {raw}\n")


def load_id_map(path: str) -> IdMap:
    raw_ids = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if len(parts) != 2:
                raise DataFormatError(f"{path}:{lineno}: bad id map line")
            internal, raw = int(parts[0]), int(parts[1])
            if internal != len(raw_ids):
                raise DataFormatError(f"{path}:{lineno}: id map out of order")
            raw_ids.append(raw)
    return IdMap(raw_ids=tuple(raw_ids))


def columns_from_records(
    records: Sequence[LibsvmRecord], idmap: IdMap
) -> dict[int, list[tuple[int, float]]]:
    """Transpose example-major records into internal-id columns."""
    to_internal = idmap.to_internal()
    columns: dict[int, list[tuple[int, float]]] = {k: [] for k in range(idmap.num_features)}
    for i, rec in enumerate(records):
        for fid, val in rec.entries:
            columns[to_internal[fid]].append((i, val))
    return columns


def repartition(
    lines: Iterable[str], spec: PartitionSpec, out_dir: str
) -> list[str]:
    """Split an example-major LIBSVM stream into M feature-major shard files
    plus one label file and the raw-id sidecar. Returns the shard paths."""
    records = parse_libsvm(lines)
    idmap = build_id_map(records)
    columns = columns_from_records(records, idmap)
    n = len(records)
    p = idmap.num_features

    os.makedirs(out_dir, exist_ok=True)
    write_labels([rec.label for rec in records], _labels_path(out_dir))
    write_id_map(idmap, _idmap_path(out_dir))

    paths = []
    for m in range(spec.M):
        cols = [j for j in range(p) if spec.node_of(j) == m]
        path = _shard_path(out_dir, m)
        with open(path, "w") as fh:
            fh.write(f"shard {m} {spec.M} {n} {p} {spec.seed} {len(cols)}\n")
            for j in cols:
                parts = [str(j)]
                parts.extend(f"{i}:{_fmt(v)}" for i, v in columns[j])
                fh.write(" ".join(parts) + "\n")
        paths.append(path)
    return paths


def load_shard(path: str, labels_path: str | None = None) -> FeatureShard:
    """Load one shard file (labels default to labels.txt next to it)."""
    if labels_path is None:
        labels_path = _labels_path(os.path.dirname(path))
    labels = load_labels(labels_path)
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 7 or header[0] != "shard":
            raise DataFormatError(f"{path}: bad shard header")
        m, M, n, p, seed, ncols = (int(t) for t in header[1:])
        if n != len(labels):
            raise DataFormatError(f"{path}: label file has {len(labels)} labels, header says {n}")
        columns = []
        for lineno, line in enumerate(fh, start=2):
            parts = line.split()
            if not parts:
                continue
            j = int(parts[0])
            rows = np.empty(len(parts) - 1, dtype=np.int64)
            vals = np.empty(len(parts) - 1, dtype=np.float64)
            for k, tok in enumerate(parts[1:]):
                i_s, sep, v_s = tok.partition(":")
                if not sep:
                    raise DataFormatError(f"{path}:{lineno}: malformed entry {tok!r}")
                rows[k] = int(i_s)
                vals[k] = float(v_s)
            columns.append((j, rows, vals))
        if len(columns) != ncols:
            raise DataFormatError(
                f"{path}: header says {ncols} columns, found {len(columns)}"
            )
    try:
        return shard_from_columns(m, M, n, p, seed, labels, columns)
    except DataFormatError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc


def shards_in_memory(
    records: Sequence[LibsvmRecord], M: int, seed: int
) -> tuple[list[FeatureShard], IdMap]:
    """Build all M shards directly, without going through files."""
    idmap = build_id_map(records)
    spec = PartitionSpec(M=M, seed=seed)
    columns = columns_from_records(records, idmap)
    n = len(records)
    p = idmap.num_features
    labels = np.asarray([rec.label for rec in records])
    shards = []
    for m in range(M):
        cols = [
            (
                j,
                np.asarray([i for i, _ in columns[j]], dtype=np.int64),
                np.asarray([v for _, v in columns[j]], dtype=np.float64),
            )
            for j in range(p)
            if spec.node_of(j) == m
        ]
        shards.append(shard_from_columns(m, M, n, p, seed, labels, cols))
    return shards, idmap
