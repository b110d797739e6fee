"""Bit-exact binary serialization of encoded embedding sequences.

Layout (all little-endian):

    header:  magic "LLGA" | u32 version | u8 template | u32 feature_dim
             | u32 lap_dim | u32 seq_len | u64 sample_count | u64 seed
             | u32 CRC-32 of all record bytes
    record:  u8 k | k*u64 center ids | u8 task code
             | k * ( pad bitset (ceil(seq_len/8) bytes, LSB-first)
                     + seq_len*(feature_dim+lap_dim) float32 rows )

Link-prediction records carry k=2 center ids with their two sequences
back-to-back; all other records carry k=1.
"""

from __future__ import annotations

import queue
import struct
import threading
import zlib
from dataclasses import dataclass, replace

import numpy as np

from .errors import SequenceFormatError, ValidationError

SEQUENCE_MAGIC = b"LLGA"
SEQUENCE_VERSION = 1

TEMPLATE_CODES = {"nd": 0, "ho": 1, "center": 2}
TEMPLATE_NAMES = {v: k for k, v in TEMPLATE_CODES.items()}

TASK_CODES = {"raw": 0, "node_classification": 1, "link_prediction": 2, "node_description": 3}
TASK_NAMES = {v: k for k, v in TASK_CODES.items()}

_HEADER_STRUCT = struct.Struct("<4sIBIIIQQI")


@dataclass(frozen=True)
class SequenceHeader:
    template_code: int
    feature_dim: int
    lap_dim: int
    seq_len: int
    sample_count: int
    seed: int
    checksum: int = 0

    @property
    def row_width(self) -> int:
        return self.feature_dim + self.lap_dim

    @property
    def template(self) -> str:
        return TEMPLATE_NAMES.get(self.template_code, f"unknown({self.template_code})")

    def pack(self) -> bytes:
        return _HEADER_STRUCT.pack(
            SEQUENCE_MAGIC,
            SEQUENCE_VERSION,
            self.template_code,
            self.feature_dim,
            self.lap_dim,
            self.seq_len,
            self.sample_count,
            self.seed & 0xFFFFFFFFFFFFFFFF,
            self.checksum,
        )


@dataclass(frozen=True)
class SequenceRecord:
    """One stored sample: k center ids with k sequences stacked flat."""

    centers: tuple[int, ...]
    task_code: int
    pad_mask: np.ndarray  # bool, (k * seq_len,)
    rows: np.ndarray  # float32, (k * seq_len, row_width)

    def __post_init__(self):
        rows = np.ascontiguousarray(self.rows, dtype="<f4")
        mask = np.asarray(self.pad_mask, dtype=bool)
        if not self.centers:
            raise ValidationError("record needs at least one center id")
        if rows.ndim != 2 or mask.shape != (rows.shape[0],):
            raise ValidationError("record rows/pad_mask shapes are inconsistent")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "pad_mask", mask)
        object.__setattr__(self, "centers", tuple(int(c) for c in self.centers))


def pack_record(record: SequenceRecord, header: SequenceHeader) -> bytes:
    k = len(record.centers)
    if record.rows.shape != (k * header.seq_len, header.row_width):
        raise ValidationError(
            f"record rows {record.rows.shape} do not match header "
            f"({k} x {header.seq_len} x {header.row_width})"
        )
    out = [struct.pack(f"<B{k}QB", k, *[c & 0xFFFFFFFFFFFFFFFF for c in record.centers], record.task_code)]
    mask = record.pad_mask.reshape(k, header.seq_len)
    rows = record.rows.reshape(k, header.seq_len, header.row_width)
    for i in range(k):
        out.append(np.packbits(mask[i], bitorder="little").tobytes())
        out.append(rows[i].tobytes())
    return b"".join(out)


def write_chunks(path, header: SequenceHeader, chunks) -> SequenceHeader:
    """Stream (payload, record count) chunks to disk; the header is patched
    with the final count and CRC-32 once all chunks are written.

    Payloads may be bytes or any contiguous buffer. Checksumming and disk
    writes run on helper threads (both release the GIL), overlapping with
    payload production; chunk order, and therefore the output bytes, are
    unaffected.
    """
    crc_q: queue.Queue = queue.Queue(maxsize=4)
    write_q: queue.Queue = queue.Queue(maxsize=4)
    state = {"crc": 0, "count": 0}
    errors: list[BaseException] = []

    def crc_stage():
        while True:
            item = crc_q.get()
            if item is None:
                write_q.put(None)
                return
            if not errors:
                try:
                    payload, chunk_count = item
                    state["crc"] = zlib.crc32(payload, state["crc"])
                    state["count"] += chunk_count
                    write_q.put(payload)
                except BaseException as exc:  # keep draining; producer re-raises
                    errors.append(exc)

    with open(path, "wb") as fh:
        fh.write(header.pack())  # placeholder; patched below

        def write_stage():
            while True:
                payload = write_q.get()
                if payload is None:
                    return
                if not errors:
                    try:
                        fh.write(payload)
                    except BaseException as exc:
                        errors.append(exc)

        threads = [threading.Thread(target=crc_stage), threading.Thread(target=write_stage)]
        for t in threads:
            t.start()
        try:
            for chunk in chunks:
                if errors:
                    break
                crc_q.put(chunk)
        finally:
            crc_q.put(None)
            for t in threads:
                t.join()
        if errors:
            raise errors[0]
        final = replace(header, sample_count=state["count"], checksum=state["crc"])
        fh.seek(0)
        fh.write(final.pack())
    return final


def write_sequences(path, header: SequenceHeader, records) -> SequenceHeader:
    """Stream records to disk; the finished file round-trips bit-exactly."""
    return write_chunks(path, header, ((pack_record(r, header), 1) for r in records))


def _gf2_matrix_times(mat, vec: int) -> int:
    total = 0
    i = 0
    while vec:
        if vec & 1:
            total ^= mat[i]
        vec >>= 1
        i += 1
    return total


def _gf2_matrix_square(mat):
    return [_gf2_matrix_times(mat, mat[n]) for n in range(32)]


def crc32_combine(crc1: int, crc2: int, len2: int) -> int:
    """CRC-32 of A+B from crc32(A), crc32(B), and len(B) in bytes."""
    if len2 <= 0:
        return crc1
    odd = [0xEDB88320] + [1 << n for n in range(31)]  # reflected polynomial
    even = _gf2_matrix_square(odd)  # 2 zero bits
    odd = _gf2_matrix_square(even)  # 4 zero bits
    while True:
        even = _gf2_matrix_square(odd)  # 8, 32, ... zero bits
        if len2 & 1:
            crc1 = _gf2_matrix_times(even, crc1)
        len2 >>= 1
        if not len2:
            break
        odd = _gf2_matrix_square(even)
        if len2 & 1:
            crc1 = _gf2_matrix_times(odd, crc1)
        len2 >>= 1
        if not len2:
            break
    return crc1 ^ crc2


def _read_exact(fh, n: int, path, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise SequenceFormatError(f"{path}: truncated {what} ({len(data)}/{n} bytes)")
    return data


def read_header(fh, path) -> SequenceHeader:
    raw = _read_exact(fh, _HEADER_STRUCT.size, path, "header")
    magic, version, template, fdim, ldim, seq_len, count, seed, checksum = _HEADER_STRUCT.unpack(raw)
    if magic != SEQUENCE_MAGIC:
        raise SequenceFormatError(f"{path}: bad magic {magic!r}, expected {SEQUENCE_MAGIC!r}")
    if version != SEQUENCE_VERSION:
        raise SequenceFormatError(f"{path}: unsupported version {version}")
    return SequenceHeader(template, fdim, ldim, seq_len, count, seed, checksum)


def read_sequences(path):
    """Open a sequence file; returns (header, record iterator).

    Records stream one at a time (memory stays bounded by a single record);
    the payload CRC is verified once the final record has been yielded.
    """
    fh = open(path, "rb")
    try:
        header = read_header(fh, path)
    except Exception:
        fh.close()
        raise

    mask_bytes = (header.seq_len + 7) // 8

    def records():
        crc = 0
        try:
            for index in range(header.sample_count):
                lead = _read_exact(fh, 1, path, f"record {index}")
                k = lead[0]
                if k < 1:
                    raise SequenceFormatError(f"{path}: record {index} has zero center ids")
                body = _read_exact(
                    fh,
                    8 * k + 1 + k * (mask_bytes + header.seq_len * header.row_width * 4),
                    path,
                    f"record {index}",
                )
                crc = zlib.crc32(body, zlib.crc32(lead, crc))
                centers = struct.unpack_from(f"<{k}Q", body, 0)
                task_code = body[8 * k]
                offset = 8 * k + 1
                masks, rows = [], []
                for _ in range(k):
                    bits = np.frombuffer(body, dtype=np.uint8, count=mask_bytes, offset=offset)
                    masks.append(np.unpackbits(bits, count=header.seq_len, bitorder="little").astype(bool))
                    offset += mask_bytes
                    block = np.frombuffer(
                        body, dtype="<f4", count=header.seq_len * header.row_width, offset=offset
                    )
                    rows.append(block.reshape(header.seq_len, header.row_width))
                    offset += header.seq_len * header.row_width * 4
                yield SequenceRecord(
                    centers, task_code, np.concatenate(masks), np.concatenate(rows, axis=0)
                )
            if fh.read(1):
                raise SequenceFormatError(f"{path}: trailing bytes after last record")
            if crc != header.checksum:
                raise SequenceFormatError(
                    f"{path}: payload checksum {crc:#010x} != header {header.checksum:#010x}"
                )
        finally:
            fh.close()

    return header, records()


def read_all(path) -> tuple[SequenceHeader, list[SequenceRecord]]:
    header, records = read_sequences(path)
    return header, list(records)
