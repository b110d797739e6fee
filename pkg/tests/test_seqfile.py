import zlib

import numpy as np
import pytest

from llga.errors import SequenceFormatError, ValidationError
from llga.seqfile import (
    SequenceHeader,
    SequenceRecord,
    TEMPLATE_CODES,
    crc32_combine,
    read_all,
    read_sequences,
    write_sequences,
)


def make_records(count, seq_len=5, width=3, k=1, seed=0):
    rng = np.random.default_rng(seed)
    records = []
    for i in range(count):
        mask = rng.random(k * seq_len) < 0.3
        rows = rng.normal(size=(k * seq_len, width)).astype("<f4")
        rows[mask, :1] = 0.0
        centers = tuple(range(i, i + k))
        records.append(SequenceRecord(centers, 2 if k == 2 else 0, mask, rows))
    return records


def header_for(seq_len=5, width=3):
    return SequenceHeader(TEMPLATE_CODES["ho"], width, 0, seq_len, 0, seed=42)


class TestRoundTrip:
    def test_bit_exact(self, tmp_path):
        p = tmp_path / "s.llga"
        records = make_records(7)
        write_sequences(p, header_for(), records)
        header, loaded = read_all(p)
        assert header.sample_count == 7 and header.seed == 42
        for original, copy in zip(records, loaded):
            assert original.centers == copy.centers
            assert original.task_code == copy.task_code
            np.testing.assert_array_equal(original.pad_mask, copy.pad_mask)
            assert original.rows.tobytes() == copy.rows.tobytes()

    def test_two_writes_identical_bytes(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        write_sequences(a, header_for(), make_records(4))
        write_sequences(b, header_for(), make_records(4))
        assert a.read_bytes() == b.read_bytes()

    def test_zero_samples(self, tmp_path):
        p = tmp_path / "empty.llga"
        header = write_sequences(p, header_for(), [])
        assert header.sample_count == 0
        loaded, records = read_all(p)
        assert loaded.sample_count == 0 and records == []

    def test_lp_record_two_sequences(self, tmp_path):
        p = tmp_path / "lp.llga"
        records = make_records(3, k=2)
        write_sequences(p, header_for(), records)
        _, loaded = read_all(p)
        assert loaded[0].centers == (0, 1)
        assert loaded[0].rows.shape == (10, 3)

    def test_odd_seq_len_bitset(self, tmp_path):
        p = tmp_path / "odd.llga"
        records = make_records(2, seq_len=13)
        write_sequences(p, header_for(seq_len=13), records)
        _, loaded = read_all(p)
        np.testing.assert_array_equal(loaded[1].pad_mask, records[1].pad_mask)


class TestCorruption:
    def test_flipped_payload_byte(self, tmp_path):
        p = tmp_path / "s.llga"
        write_sequences(p, header_for(), make_records(3))
        data = bytearray(p.read_bytes())
        data[-1] ^= 0xFF
        p.write_bytes(bytes(data))
        with pytest.raises(SequenceFormatError, match="checksum"):
            read_all(p)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "s.llga"
        write_sequences(p, header_for(), make_records(1))
        data = bytearray(p.read_bytes())
        data[:4] = b"WHAT"
        p.write_bytes(bytes(data))
        with pytest.raises(SequenceFormatError, match="magic"):
            read_sequences(p)

    def test_truncated_record(self, tmp_path):
        p = tmp_path / "s.llga"
        write_sequences(p, header_for(), make_records(2))
        p.write_bytes(p.read_bytes()[:-10])
        header, records = read_sequences(p)
        with pytest.raises(SequenceFormatError, match="truncated"):
            list(records)

    def test_trailing_bytes(self, tmp_path):
        p = tmp_path / "s.llga"
        write_sequences(p, header_for(), make_records(2))
        p.write_bytes(p.read_bytes() + b"junk")
        header, records = read_sequences(p)
        with pytest.raises(SequenceFormatError, match="trailing"):
            list(records)

    def test_version_mismatch(self, tmp_path):
        p = tmp_path / "s.llga"
        write_sequences(p, header_for(), make_records(1))
        data = bytearray(p.read_bytes())
        data[4] = 9
        p.write_bytes(bytes(data))
        with pytest.raises(SequenceFormatError, match="version"):
            read_sequences(p)


class TestStreaming:
    def test_records_stream_lazily(self, tmp_path):
        p = tmp_path / "s.llga"
        write_sequences(p, header_for(), make_records(50))
        _, records = read_sequences(p)
        first = next(records)
        assert first.centers == (0,)
        rest = list(records)
        assert len(rest) == 49

    def test_record_shape_mismatch_rejected_on_write(self, tmp_path):
        p = tmp_path / "s.llga"
        bad = make_records(1, seq_len=4)
        with pytest.raises(ValidationError):
            write_sequences(p, header_for(seq_len=5), bad)


def test_crc32_combine_matches_concatenation():
    rng = np.random.default_rng(0)
    for _ in range(25):
        a = rng.bytes(int(rng.integers(0, 3000)))
        b = rng.bytes(int(rng.integers(0, 3000)))
        assert crc32_combine(zlib.crc32(a), zlib.crc32(b), len(b)) == zlib.crc32(a + b)
