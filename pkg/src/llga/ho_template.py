"""Hop-Field Overview encoding.

Iterated parameter-free mean aggregation: hop 0 is the raw feature matrix
and hop i averages hop i-1 over each node's 1-hop neighborhood. A center
node is then summarized by its rows across the first K hop matrices.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import SequenceFormatError, ValidationError
from .graph_store import FeatureMatrix, GraphStore
from .nd_template import EmbeddingSequence

HOP_TABLE_MAGIC = b"LGHT"
HOP_TABLE_VERSION = 1

DEFAULT_NUM_HOPS = 4


@dataclass(frozen=True)
class HOConfig:
    num_hops: int = DEFAULT_NUM_HOPS

    def __post_init__(self):
        if self.num_hops < 1:
            raise ValidationError(f"num_hops must be >= 1, got {self.num_hops}")


@dataclass(frozen=True)
class HopEmbeddingTable:
    """Stacked hop matrices H^0..H^{K-1}, each (num_nodes, feature_dim)."""

    hops: np.ndarray  # float64, (K, num_nodes, feature_dim)

    def __post_init__(self):
        hops = np.asarray(self.hops, dtype=np.float64)
        if hops.ndim != 3:
            raise ValidationError("hop table must be (K, nodes, dim)")
        if not np.all(np.isfinite(hops)):
            raise ValidationError("hop table must be finite")
        hops.flags.writeable = False
        object.__setattr__(self, "hops", hops)

    @property
    def depth(self) -> int:
        return self.hops.shape[0]

    @property
    def num_nodes(self) -> int:
        return self.hops.shape[1]

    @property
    def feature_dim(self) -> int:
        return self.hops.shape[2]


def compute_hops(g: GraphStore, feats: FeatureMatrix, num_hops: int) -> HopEmbeddingTable:
    """K sweeps of neighbor-mean propagation over the whole graph.

    Isolated nodes get zero rows for every hop >= 1 (empty mean is defined
    as the zero vector).
    """
    if num_hops < 1:
        raise ValidationError(f"num_hops must be >= 1, got {num_hops}")
    if feats.rows != g.num_nodes:
        raise ValidationError(f"feature rows ({feats.rows}) != num_nodes ({g.num_nodes})")
    src = np.repeat(np.arange(g.num_nodes), np.diff(g.indptr))
    deg = np.diff(g.indptr).astype(np.float64)
    scale = np.zeros_like(deg)
    scale[deg > 0] = 1.0 / deg[deg > 0]

    hops = np.zeros((num_hops, g.num_nodes, feats.dim), dtype=np.float64)
    hops[0] = feats.values
    for i in range(1, num_hops):
        acc = np.zeros_like(hops[0])
        np.add.at(acc, src, hops[i - 1][g.indices])
        hops[i] = acc * scale[:, None]
    return HopEmbeddingTable(hops)


def assemble_ho(table: HopEmbeddingTable, v: int, num_hops: int) -> EmbeddingSequence:
    """Rows [h_v^0, ..., h_v^{K-1}] in hop order; no placeholder slots."""
    if not 0 <= v < table.num_nodes:
        raise ValidationError(f"node id {v} out of range [0, {table.num_nodes})")
    if not 1 <= num_hops <= table.depth:
        raise ValidationError(f"num_hops {num_hops} exceeds table depth {table.depth}")
    rows = table.hops[:num_hops, v, :].copy()
    return EmbeddingSequence(
        rows, np.zeros(num_hops, dtype=bool), feature_dim=table.feature_dim, lap_dim=0
    )


def write_hop_table(path, table: HopEmbeddingTable):
    """Cache file: float64 hop rows truncated to float32 little-endian."""
    with open(path, "wb") as fh:
        fh.write(
            struct.pack(
                "<4sIIII",
                HOP_TABLE_MAGIC,
                HOP_TABLE_VERSION,
                table.depth,
                table.num_nodes,
                table.feature_dim,
            )
        )
        fh.write(table.hops.astype("<f4").tobytes())


def read_hop_table(path) -> HopEmbeddingTable:
    with open(path, "rb") as fh:
        header = fh.read(20)
        if len(header) < 20:
            raise SequenceFormatError(f"{path}: truncated hop-table header")
        magic, version, depth, rows, dim = struct.unpack("<4sIIII", header)
        if magic != HOP_TABLE_MAGIC:
            raise SequenceFormatError(f"{path}: bad magic {magic!r}")
        if version != HOP_TABLE_VERSION:
            raise SequenceFormatError(f"{path}: unsupported version {version}")
        payload = fh.read()
    expected = depth * rows * dim * 4
    if len(payload) != expected:
        raise SequenceFormatError(f"{path}: payload size {len(payload)} != expected {expected}")
    hops = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(depth, rows, dim)
    return HopEmbeddingTable(hops)
