"""Neighborhood Detail encoding.

Builds a fixed-shape sampled tree around a center node, serializes it in
level order (placeholders fill undersized neighbor sets and propagate to
their whole subtree), and assembles one embedding row per position: the
node's feature row (zeros for placeholders) concatenated with the tree
position's Laplacian embedding.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .graph_store import FeatureMatrix, GraphStore
from .laplacian import LaplacianBasis, TreeShape
from .seeding import sample_without_replacement

PAD = -1

DEFAULT_BRANCHING = (10, 10)


@dataclass(frozen=True)
class NDConfig:
    shape: TreeShape = field(default_factory=lambda: TreeShape(DEFAULT_BRANCHING))
    seed: int = 0
    include_parent: bool = True


@dataclass(frozen=True)
class NodeSequence:
    """Level-order tree serialization; PAD (-1) marks placeholder slots."""

    center: int
    entries: tuple[int, ...]
    shape: TreeShape

    def __post_init__(self):
        if len(self.entries) != self.shape.size:
            raise ValidationError(
                f"sequence length {len(self.entries)} != tree size {self.shape.size}"
            )
        if self.entries[0] != self.center:
            raise ValidationError("entries[0] must be the center node")


@dataclass(frozen=True)
class EmbeddingSequence:
    """Numeric rows for a node sequence plus its placeholder mask."""

    rows: np.ndarray  # float64, (seq_len, feature_dim + lap_dim)
    pad_mask: np.ndarray  # bool, (seq_len,)
    feature_dim: int
    lap_dim: int

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        mask = np.asarray(self.pad_mask, dtype=bool)
        if rows.ndim != 2 or rows.shape[1] != self.feature_dim + self.lap_dim:
            raise ValidationError(f"row width {rows.shape} != feature_dim + lap_dim")
        if mask.shape != (rows.shape[0],):
            raise ValidationError("pad_mask length must match row count")
        if not np.all(np.isfinite(rows)):
            raise ValidationError("embedding rows must be finite")
        if mask.any() and np.any(rows[mask, : self.feature_dim] != 0.0):
            raise ValidationError("placeholder rows must have a zero feature segment")
        rows.flags.writeable = False
        mask.flags.writeable = False
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "pad_mask", mask)

    @property
    def seq_len(self) -> int:
        return self.rows.shape[0]


def build_tree(g: GraphStore, v: int, cfg: NDConfig) -> NodeSequence:
    """Sample the fixed-shape tree rooted at v and serialize it level-order.

    Each real node's child slots take its full 1-hop set (the tree parent
    included unless cfg.include_parent is off) in ascending id order, padded
    up to the branching factor; oversized sets are sampled without
    replacement by an RNG derived from (seed, v, parent position), then
    listed ascending. Placeholder slots expand to all-placeholder subtrees.
    """
    if not 0 <= v < g.num_nodes:
        raise ValidationError(f"node id {v} out of range [0, {g.num_nodes})")
    shape = cfg.shape
    indptr, indices = g.indptr, g.indices
    entries = [PAD] * shape.size
    entries[0] = int(v)
    parents = None if cfg.include_parent else [PAD] * shape.size
    offsets = shape.level_offsets
    child_start = 1
    for level in range(shape.depth):
        width = shape.branching[level]
        for pos in range(offsets[level], offsets[level] + shape.level_sizes[level]):
            node = entries[pos]
            if node == PAD:
                child_start += width
                continue
            candidates = indices[indptr[node] : indptr[node + 1]]
            if parents is not None and parents[pos] != PAD:
                candidates = candidates[candidates != parents[pos]]
            if candidates.size > width:
                picked = sorted(sample_without_replacement(candidates.tolist(), width, cfg.seed, v, pos))
            else:
                picked = candidates.tolist()  # CSR lists are already ascending
            entries[child_start : child_start + len(picked)] = picked
            if parents is not None:
                parents[child_start : child_start + len(picked)] = [node] * len(picked)
            child_start += width
    return NodeSequence(center=int(v), entries=tuple(entries), shape=shape)


def assemble_nd(seq: NodeSequence, feats: FeatureMatrix, basis: LaplacianBasis) -> EmbeddingSequence:
    """Row i = [feature row of entry i (zeros if PAD) || Laplacian column i]."""
    if basis.shape != seq.shape:
        raise ValidationError(
            f"basis shape {basis.shape.branching} != sequence shape {seq.shape.branching}"
        )
    ids = np.array(seq.entries, dtype=np.int64)
    mask = ids == PAD
    real = ids[~mask]
    if real.size and real.max() >= feats.rows:
        raise ValidationError(f"missing feature row for node {int(real.max())}")
    feature_part = np.zeros((seq.shape.size, feats.dim), dtype=np.float64)
    feature_part[~mask] = feats.values[real]
    rows = np.concatenate([feature_part, basis.embedding_matrix], axis=1)
    return EmbeddingSequence(rows, mask, feature_dim=feats.dim, lap_dim=basis.embedding_dim)


def assemble_center_only(v: int, feats: FeatureMatrix) -> EmbeddingSequence:
    """Template-free fallback: the center node's feature row alone."""
    row = feats.row(v)
    return EmbeddingSequence(
        row[None, :].copy(), np.array([False]), feature_dim=feats.dim, lap_dim=0
    )
