"""Immutable text-attributed graph storage.

Graphs are undirected, held in compressed sparse row form with per-node
neighbor lists deduplicated and sorted ascending. Node feature matrices are
produced by an external text encoder and consumed here as dense arrays.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import GraphFormatError, ValidationError
from .seeding import make_rng, mix

FEATURE_MAGIC = b"LGFM"
FEATURE_VERSION = 1

TRAIN, VALID, TEST = 0, 1, 2
SPLIT_NAMES = ("train", "valid", "test")


@dataclass(frozen=True)
class FeatureMatrix:
    """Dense per-node feature rows (row i = encoded text of node i)."""

    values: np.ndarray  # float64, shape (rows, dim)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[1] == 0:
            raise ValidationError(f"feature matrix must be 2-d with dim > 0, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            r, c = np.argwhere(~np.isfinite(values))[0]
            raise GraphFormatError(f"non-finite feature value at ({r}, {c})")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def row(self, node: int) -> np.ndarray:
        if not 0 <= node < self.rows:
            raise ValidationError(f"no feature row for node {node} (have {self.rows})")
        return self.values[node]


class GraphStore:
    """Undirected graph in CSR form, optionally carrying features and labels.

    Immutable after construction: all arrays are marked read-only, so a
    single store can be shared across concurrent encoders.
    """

    def __init__(
        self,
        num_nodes: int,
        indptr: np.ndarray,
        indices: np.ndarray,
        features: FeatureMatrix | None = None,
        labels: np.ndarray | None = None,
        category_names: list[str] | None = None,
        node_texts: list[str] | None = None,
    ):
        if features is not None and features.rows != num_nodes:
            raise ValidationError(
                f"feature rows ({features.rows}) != num_nodes ({num_nodes})"
            )
        if labels is not None:
            labels = np.asarray(labels, dtype=np.int64)
            if labels.shape != (num_nodes,):
                raise ValidationError("labels must be one category index per node")
            labels.flags.writeable = False
        self.num_nodes = int(num_nodes)
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.indices = np.asarray(indices, dtype=np.int64)
        self.indptr.flags.writeable = False
        self.indices.flags.writeable = False
        self.features = features
        self.labels = labels
        self.category_names = list(category_names) if category_names is not None else None
        self.node_texts = list(node_texts) if node_texts is not None else None

    # -- construction ------------------------------------------------------

    @classmethod
    def from_edges(cls, num_nodes: int, u: np.ndarray, v: np.ndarray, **attrs) -> "GraphStore":
        """Build a store from parallel endpoint arrays.

        Symmetrizes, drops self-loops, deduplicates, and sorts each
        neighbor list ascending.
        """
        u = np.asarray(u, dtype=np.int64)
        v = np.asarray(v, dtype=np.int64)
        if u.shape != v.shape:
            raise ValidationError("endpoint arrays must have equal length")
        if u.size and (u.min() < 0 or v.min() < 0 or max(u.max(), v.max()) >= num_nodes):
            raise GraphFormatError("edge endpoint out of range")
        keep = u != v  # self-loops dropped at ingestion
        u, v = u[keep], v[keep]
        src = np.concatenate([u, v])
        dst = np.concatenate([v, u])
        keys = np.unique(src * np.int64(num_nodes) + dst)
        src = keys // num_nodes
        dst = keys % num_nodes
        indptr = np.zeros(num_nodes + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=num_nodes), out=indptr[1:])
        return cls(num_nodes, indptr, dst, **attrs)

    def replace(self, **attrs) -> "GraphStore":
        """Copy of this store with features/labels/texts swapped in."""
        merged = dict(
            features=self.features,
            labels=self.labels,
            category_names=self.category_names,
            node_texts=self.node_texts,
        )
        merged.update(attrs)
        return GraphStore(self.num_nodes, self.indptr, self.indices, **merged)

    # -- queries -----------------------------------------------------------

    @property
    def num_edges(self) -> int:
        return int(self.indices.size) // 2

    def degree(self, v: int) -> int:
        self._check_node(v)
        return int(self.indptr[v + 1] - self.indptr[v])

    def neighbors(self, v: int) -> np.ndarray:
        """1-hop neighbor ids of v, ascending."""
        self._check_node(v)
        return self.indices[self.indptr[v] : self.indptr[v + 1]]

    def has_edge(self, u: int, v: int) -> bool:
        nbrs = self.neighbors(u)
        i = np.searchsorted(nbrs, v)
        return i < nbrs.size and nbrs[i] == v

    def k_hop_set(self, v: int, k: int) -> set[int]:
        """Nodes at shortest-path distance exactly k from v."""
        self._check_node(v)
        if k < 1:
            raise ValidationError(f"k must be >= 1, got {k}")
        visited = np.zeros(self.num_nodes, dtype=bool)
        visited[v] = True
        frontier = np.array([v], dtype=np.int64)
        for _ in range(k):
            if frontier.size == 0:
                return set()
            gathered = [self.indices[self.indptr[u] : self.indptr[u + 1]] for u in frontier]
            nxt = np.unique(np.concatenate(gathered)) if gathered else np.array([], dtype=np.int64)
            nxt = nxt[~visited[nxt]]
            visited[nxt] = True
            frontier = nxt
        return set(int(x) for x in frontier)

    def _check_node(self, v: int):
        if not 0 <= v < self.num_nodes:
            raise ValidationError(f"node id {v} out of range [0, {self.num_nodes})")


# -- loaders ---------------------------------------------------------------


def load_edge_list(path, num_nodes: int) -> GraphStore:
    """Parse a text edge list (one `u v` or `u\\tv` pair per line).

    Blank lines are skipped; anything else that does not parse as two
    base-10 node ids raises with its 1-based line number. An empty file
    yields a valid edgeless graph.
    """
    us, vs = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise GraphFormatError(f"{path}:{lineno}: expected two node ids, got {line.strip()!r}")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise GraphFormatError(f"{path}:{lineno}: non-integer node id in {line.strip()!r}") from None
            if u < 0 or v < 0 or u >= num_nodes or v >= num_nodes:
                raise GraphFormatError(f"{path}:{lineno}: node id out of range [0, {num_nodes})")
            us.append(u)
            vs.append(v)
    return GraphStore.from_edges(num_nodes, np.array(us, dtype=np.int64), np.array(vs, dtype=np.int64))


def load_features(path) -> FeatureMatrix:
    """Read an LGFM binary feature file (float32 little-endian payload)."""
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) < 16:
            raise GraphFormatError(f"{path}: truncated header")
        magic, version, rows, dim = struct.unpack("<4sIII", header)
        if magic != FEATURE_MAGIC:
            raise GraphFormatError(f"{path}: bad magic {magic!r}, expected {FEATURE_MAGIC!r}")
        if version != FEATURE_VERSION:
            raise GraphFormatError(f"{path}: unsupported version {version}")
        payload = fh.read()
    expected = rows * dim * 4
    if len(payload) != expected:
        raise GraphFormatError(
            f"{path}: payload holds {len(payload) // 4} float32 values, header declares {rows * dim}"
        )
    values = np.frombuffer(payload, dtype="<f4").reshape(rows, dim)
    if not np.all(np.isfinite(values)):
        r, c = np.argwhere(~np.isfinite(values))[0]
        raise GraphFormatError(f"{path}: non-finite value at ({r}, {c})")
    return FeatureMatrix(values.astype(np.float64))


def write_features(path, matrix: FeatureMatrix):
    """Write an LGFM file (float64 values truncated to float32)."""
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sIII", FEATURE_MAGIC, FEATURE_VERSION, matrix.rows, matrix.dim))
        fh.write(matrix.values.astype("<f4").tobytes())


def load_labels(path, num_nodes: int, num_categories: int | None = None) -> np.ndarray:
    """Read `node_id<TAB>category_index` lines; unlisted nodes get -1."""
    labels = np.full(num_nodes, -1, dtype=np.int64)
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise GraphFormatError(f"{path}:{lineno}: expected `node<TAB>category`")
            try:
                node, cat = int(parts[0]), int(parts[1])
            except ValueError:
                raise GraphFormatError(f"{path}:{lineno}: non-integer field") from None
            if not 0 <= node < num_nodes:
                raise GraphFormatError(f"{path}:{lineno}: node id {node} out of range")
            if cat < 0 or (num_categories is not None and cat >= num_categories):
                raise GraphFormatError(f"{path}:{lineno}: category index {cat} out of range")
            labels[node] = cat
    return labels


def load_category_names(path) -> list[str]:
    """One full category name per line; index = line number."""
    with open(path, "r", encoding="utf-8") as fh:
        names = [line.rstrip("\n") for line in fh]
    while names and names[-1] == "":
        names.pop()
    if any(not name for name in names):
        raise GraphFormatError(f"{path}: empty category name")
    return names


def load_node_texts(path) -> list[str]:
    """One raw text attribute per line; index = node id."""
    with open(path, "r", encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh]


# -- splits ----------------------------------------------------------------


@dataclass(frozen=True)
class Split:
    """Per-node train/valid/test assignment."""

    assignment: np.ndarray  # int8 codes: TRAIN/VALID/TEST
    seed: int
    ratios: tuple[float, float, float]

    def __post_init__(self):
        arr = np.asarray(self.assignment, dtype=np.int8)
        arr.flags.writeable = False
        object.__setattr__(self, "assignment", arr)

    def nodes(self, part: str) -> np.ndarray:
        """Ascending node ids assigned to `part` ('train'/'valid'/'test')."""
        if part not in SPLIT_NAMES:
            raise ValidationError(f"unknown split part {part!r}")
        return np.flatnonzero(self.assignment == SPLIT_NAMES.index(part))

    def counts(self) -> tuple[int, int, int]:
        return tuple(int(np.sum(self.assignment == c)) for c in (TRAIN, VALID, TEST))


def make_splits(g: GraphStore, ratios, seed: int) -> Split:
    """Partition nodes by a seeded shuffle and normalized cumulative ratios."""
    r = np.asarray(ratios, dtype=np.float64)
    if r.shape != (3,) or np.any(r < 0):
        raise ValidationError("ratios must be three nonnegative reals")
    total = r.sum()
    if total <= 0:
        raise ValidationError("ratios must not all be zero")
    n = g.num_nodes
    perm = np.random.Generator(np.random.PCG64(mix(seed, n))).permutation(n)
    bounds = [round(n * c) for c in np.cumsum(r[:2]) / total]
    assignment = np.empty(n, dtype=np.int8)
    assignment[perm[: bounds[0]]] = TRAIN
    assignment[perm[bounds[0] : bounds[1]]] = VALID
    assignment[perm[bounds[1] :]] = TEST
    return Split(assignment, seed=seed, ratios=tuple(float(x) for x in r))


# -- link pairs ------------------------------------------------------------

NEGATIVE_ATTEMPT_FACTOR = 1000  # rejection-sampling cap: factor * count tries


@dataclass(frozen=True)
class LinkPair:
    u: int
    v: int
    connected: bool
    part: str  # 'train' or 'test'


def sample_link_pairs(g: GraphStore, split: Split, count: int, seed: int, part: str = "train") -> list[LinkPair]:
    """Balanced edge/non-edge pairs whose endpoints both lie in one split part.

    count/2 positives are drawn uniformly without replacement from the
    part-internal edges; count/2 negatives by uniform rejection over
    part-internal non-edges. Deterministic per seed.
    """
    if count < 2 or count % 2 != 0:
        raise ValidationError("count must be even and >= 2")
    part_nodes = split.nodes(part)
    if part_nodes.size < 2:
        raise ValidationError(f"{part} split has fewer than 2 nodes")
    in_part = np.zeros(g.num_nodes, dtype=bool)
    in_part[part_nodes] = True

    src = np.repeat(np.arange(g.num_nodes), np.diff(g.indptr))
    dst = g.indices
    keep = (src < dst) & in_part[src] & in_part[dst]
    edges = np.stack([src[keep], dst[keep]], axis=1)
    if edges.shape[0] == 0:
        raise ValidationError(f"{part} split has no internal edges")
    half = count // 2
    if half > edges.shape[0]:
        raise ValidationError(f"{part} split has only {edges.shape[0]} internal edges, need {half}")

    rng = make_rng(seed, SPLIT_NAMES.index(part) if part in SPLIT_NAMES else 3, count)
    chosen = rng.sample(range(edges.shape[0]), half)
    pairs = [LinkPair(int(edges[i, 0]), int(edges[i, 1]), True, part) for i in chosen]

    seen: set[tuple[int, int]] = set()
    attempts = 0
    while len(seen) < half:
        if attempts >= NEGATIVE_ATTEMPT_FACTOR * count:
            raise ValidationError(
                f"could not find {half} non-edges in {part} split after {attempts} attempts"
            )
        attempts += 1
        u = int(part_nodes[rng.randrange(part_nodes.size)])
        v = int(part_nodes[rng.randrange(part_nodes.size)])
        if u == v:
            continue
        key = (min(u, v), max(u, v))
        if key in seen or g.has_edge(u, v):
            continue
        seen.add(key)
        pairs.append(LinkPair(key[0], key[1], False, part))
    return pairs
