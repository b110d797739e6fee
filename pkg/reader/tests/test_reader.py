import struct
import zlib

import numpy as np
import pytest

from pyreader import (
    SequenceFileError,
    open_sequence_file,
    read_feature_matrix,
    recompute_ho,
)

HEADER = struct.Struct("<4sIBIIIQQI")


def write_sequence_file(path, records, template=1, fdim=3, ldim=0, seq_len=2, seed=9):
    """Minimal fixture writer (test-local; the package itself never writes)."""
    payload = b""
    mask_bytes = (seq_len + 7) // 8
    for centers, task, mask, rows in records:
        payload += struct.pack(f"<B{len(centers)}QB", len(centers), *centers, task)
        for i in range(len(centers)):
            bits = np.packbits(mask[i * seq_len : (i + 1) * seq_len], bitorder="little")
            payload += bits.tobytes()[:mask_bytes]
            payload += rows[i * seq_len : (i + 1) * seq_len].astype("<f4").tobytes()
    header = HEADER.pack(
        b"LLGA", 1, template, fdim, ldim, seq_len, len(records), seed, zlib.crc32(payload)
    )
    path.write_bytes(header + payload)


def sample_records(count, seq_len=2, width=3, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        mask = np.zeros(seq_len, dtype=bool)
        rows = rng.normal(size=(seq_len, width)).astype("<f4")
        out.append(((i,), 0, mask, rows))
    return out


class TestOpenSequenceFile:
    def test_header_and_records(self, tmp_path):
        p = tmp_path / "s.llga"
        records = sample_records(4)
        write_sequence_file(p, records)
        header, views = open_sequence_file(p)
        assert header.template == "ho"
        assert header.sample_count == 4 and header.seed == 9
        views = list(views)
        assert [v.centers for v in views] == [(0,), (1,), (2,), (3,)]
        for (centers, task, mask, rows), view in zip(records, views):
            assert view.rows.tobytes() == rows.tobytes()

    def test_zero_sample_file(self, tmp_path):
        p = tmp_path / "empty.llga"
        write_sequence_file(p, [])
        header, views = open_sequence_file(p)
        assert header.sample_count == 0 and list(views) == []

    def test_corrupted_byte(self, tmp_path):
        p = tmp_path / "s.llga"
        write_sequence_file(p, sample_records(2))
        data = bytearray(p.read_bytes())
        data[-3] ^= 0x40
        p.write_bytes(bytes(data))
        with pytest.raises(SequenceFileError, match="checksum"):
            open_sequence_file(p)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "s.llga"
        write_sequence_file(p, sample_records(1))
        data = bytearray(p.read_bytes())
        data[:4] = b"LLGB"
        p.write_bytes(bytes(data))
        with pytest.raises(SequenceFileError, match="magic"):
            open_sequence_file(p)

    def test_truncation_reports_position(self, tmp_path):
        p = tmp_path / "s.llga"
        records = sample_records(2)
        write_sequence_file(p, records)
        whole = p.read_bytes()
        truncated = whole[:-5]
        # patch the checksum so truncation (not the checksum) is diagnosed
        payload = truncated[HEADER.size :]
        patched = bytearray(truncated)
        patched[HEADER.size - 4 : HEADER.size] = struct.pack("<I", zlib.crc32(payload))
        p.write_bytes(bytes(patched))
        header, views = open_sequence_file(p)
        with pytest.raises(SequenceFileError, match="record 1"):
            list(views)


class TestFeatureMatrix:
    def test_round_trip(self, tmp_path):
        p = tmp_path / "f.lgfm"
        values = np.arange(6, dtype="<f4").reshape(2, 3)
        p.write_bytes(struct.pack("<4sIII", b"LGFM", 1, 2, 3) + values.tobytes())
        np.testing.assert_array_equal(read_feature_matrix(p), values)

    def test_size_mismatch(self, tmp_path):
        p = tmp_path / "f.lgfm"
        p.write_bytes(struct.pack("<4sIII", b"LGFM", 1, 2, 3) + b"\x00" * 8)
        with pytest.raises(SequenceFileError, match="declares"):
            read_feature_matrix(p)


class TestRecomputeHO:
    def write_inputs(self, tmp_path, edges, feats):
        edge_path = tmp_path / "edges.txt"
        edge_path.write_text("".join(f"{u} {v}\n" for u, v in edges))
        feat_path = tmp_path / "f.lgfm"
        arr = np.asarray(feats, dtype="<f4")
        feat_path.write_bytes(
            struct.pack("<4sIII", b"LGFM", 1, arr.shape[0], arr.shape[1]) + arr.tobytes()
        )
        return edge_path, feat_path

    def test_triangle_first_hop(self, tmp_path):
        edge_path, feat_path = self.write_inputs(
            tmp_path, [(0, 1), (1, 2), (2, 0)], [[1.0, 0.0], [0.0, 1.0], [2.0, 2.0]]
        )
        hops = recompute_ho(edge_path, feat_path, 2)
        np.testing.assert_allclose(hops[0, 1], [1.0, 1.5])

    def test_isolated_node_zero(self, tmp_path):
        edge_path, feat_path = self.write_inputs(tmp_path, [(0, 1)], np.ones((3, 2)))
        hops = recompute_ho(edge_path, feat_path, 3)
        np.testing.assert_array_equal(hops[2, 1:], 0.0)

    def test_single_hop_equals_features(self, tmp_path):
        feats = np.random.default_rng(0).normal(size=(4, 3))
        edge_path, feat_path = self.write_inputs(tmp_path, [(0, 1), (2, 3)], feats)
        hops = recompute_ho(edge_path, feat_path, 1)
        np.testing.assert_allclose(hops[:, 0, :], feats.astype("<f4").astype(np.float64))
