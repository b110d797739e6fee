"""Parsers for the LLGA sequence format plus an independent hop oracle.

File layouts (little-endian throughout):

    sequence file: "LLGA" | u32 version=1 | u8 template | u32 feature_dim
                   | u32 lap_dim | u32 seq_len | u64 sample_count | u64 seed
                   | u32 CRC-32 of all record bytes, then per record:
                   u8 k | k*u64 centers | u8 task
                   | k * (pad bitset, ceil(seq_len/8) bytes, LSB-first
                          + seq_len*(feature_dim+lap_dim) float32 rows)
    feature file:  "LGFM" | u32 version=1 | u32 rows | u32 dim
                   | rows*dim float32
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

SEQUENCE_MAGIC = b"LLGA"
FEATURE_MAGIC = b"LGFM"
SUPPORTED_VERSION = 1

_HEADER = struct.Struct("<4sIBIIIQQI")

TEMPLATE_NAMES = {0: "nd", 1: "ho", 2: "center"}


class SequenceFileError(Exception):
    """Corrupt, truncated, or unsupported input file."""


@dataclass(frozen=True)
class SequenceFileHeader:
    template_code: int
    feature_dim: int
    lap_dim: int
    seq_len: int
    sample_count: int
    seed: int
    checksum: int

    @property
    def row_width(self) -> int:
        return self.feature_dim + self.lap_dim

    @property
    def template(self) -> str:
        return TEMPLATE_NAMES.get(self.template_code, f"unknown({self.template_code})")


@dataclass(frozen=True)
class SequenceRecordView:
    """One stored sample, exactly as serialized (rows stay float32)."""

    centers: tuple[int, ...]
    task_code: int
    pad_mask: np.ndarray  # bool, (k * seq_len,)
    rows: np.ndarray  # float32, (k * seq_len, row_width)


def _need(data: bytes, count: int, offset: int, what: str, path) -> None:
    if offset + count > len(data):
        raise SequenceFileError(
            f"{path}: truncated {what} at byte {offset} (need {count}, have {len(data) - offset})"
        )


def open_sequence_file(path):
    """Validate a sequence file and return (header, lazy record iterator).

    The payload checksum is verified against the header before any record
    is yielded; per-record parsing errors carry the record index and byte
    offset.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise SequenceFileError(f"{path}: file shorter than header ({len(data)} bytes)")
    magic, version, template, fdim, ldim, seq_len, count, seed, checksum = _HEADER.unpack_from(data)
    if magic != SEQUENCE_MAGIC:
        raise SequenceFileError(f"{path}: bad magic {magic!r}")
    if version != SUPPORTED_VERSION:
        raise SequenceFileError(f"{path}: unsupported version {version}")
    header = SequenceFileHeader(template, fdim, ldim, seq_len, count, seed, checksum)

    payload = data[_HEADER.size :]
    actual = zlib.crc32(payload)
    if actual != checksum:
        raise SequenceFileError(
            f"{path}: payload checksum {actual:#010x} does not match header {checksum:#010x}"
        )

    mask_bytes = (seq_len + 7) // 8
    width = header.row_width

    def records():
        offset = _HEADER.size
        for index in range(count):
            _need(data, 1, offset, f"record {index} center count", path)
            k = data[offset]
            offset += 1
            if k < 1:
                raise SequenceFileError(f"{path}: record {index} has zero center ids")
            _need(data, 8 * k + 1, offset, f"record {index} centers", path)
            centers = struct.unpack_from(f"<{k}Q", data, offset)
            offset += 8 * k
            task_code = data[offset]
            offset += 1
            masks, rows = [], []
            for _ in range(k):
                _need(data, mask_bytes, offset, f"record {index} pad bitset", path)
                bits = np.frombuffer(data, dtype=np.uint8, count=mask_bytes, offset=offset)
                masks.append(np.unpackbits(bits, count=seq_len, bitorder="little").astype(bool))
                offset += mask_bytes
                _need(data, seq_len * width * 4, offset, f"record {index} rows", path)
                block = np.frombuffer(data, dtype="<f4", count=seq_len * width, offset=offset)
                rows.append(block.reshape(seq_len, width))
                offset += seq_len * width * 4
            yield SequenceRecordView(
                tuple(int(c) for c in centers),
                task_code,
                np.concatenate(masks),
                np.concatenate(rows, axis=0),
            )
        if offset != len(data):
            raise SequenceFileError(f"{path}: {len(data) - offset} trailing bytes after last record")

    return header, records()


def read_feature_matrix(path) -> np.ndarray:
    """LGFM feature file as a float32 (rows, dim) array."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 16:
        raise SequenceFileError(f"{path}: truncated feature header")
    magic, version, rows, dim = struct.unpack_from("<4sIII", data)
    if magic != FEATURE_MAGIC:
        raise SequenceFileError(f"{path}: bad magic {magic!r}")
    if version != SUPPORTED_VERSION:
        raise SequenceFileError(f"{path}: unsupported version {version}")
    if len(data) - 16 != rows * dim * 4:
        raise SequenceFileError(
            f"{path}: payload holds {(len(data) - 16) // 4} values, header declares {rows * dim}"
        )
    return np.frombuffer(data, dtype="<f4", offset=16).reshape(rows, dim)


def _neighbor_sets(edge_path, num_nodes: int) -> list[set[int]]:
    neighbors: list[set[int]] = [set() for _ in range(num_nodes)]
    with open(edge_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise SequenceFileError(f"{edge_path}:{lineno}: expected two node ids")
            u, v = int(parts[0]), int(parts[1])
            if not (0 <= u < num_nodes and 0 <= v < num_nodes):
                raise SequenceFileError(f"{edge_path}:{lineno}: node id out of range")
            if u == v:
                continue  # writer drops self-loops at ingestion
            neighbors[u].add(v)
            neighbors[v].add(u)
    return neighbors


def recompute_ho(edge_path, features_path, num_hops: int) -> np.ndarray:
    """Hop-overview rows recomputed from the raw inputs.

    Returns (num_nodes, num_hops, dim) in float64: row k of node v is the
    k-times iterated neighbor mean of the features (hop 0 is the feature
    row itself; nodes without neighbors get zero rows from hop 1 on).
    Serves as an independent oracle for writer-produced HO sequence files.
    """
    if num_hops < 1:
        raise ValueError("num_hops must be >= 1")
    feats = read_feature_matrix(features_path).astype(np.float64)
    num_nodes = feats.shape[0]
    neighbors = _neighbor_sets(edge_path, num_nodes)

    hops = np.zeros((num_nodes, num_hops, feats.shape[1]))
    hops[:, 0, :] = feats
    previous = feats
    for level in range(1, num_hops):
        current = np.zeros_like(previous)
        for v, nbrs in enumerate(neighbors):
            if nbrs:
                current[v] = previous[sorted(nbrs)].mean(axis=0)
        hops[:, level, :] = current
        previous = current
    return hops
