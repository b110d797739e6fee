"""Fixed computational-tree Laplacian and its positional-embedding basis.

The sampled tree for a given branching profile always has the same shape,
so its symmetric normalized Laplacian is eigendecomposed once and the
resulting basis is reused for every center node. Decomposition uses cyclic
Jacobi rotations with deterministic sign and ordering rules so the basis is
byte-identical across runs.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConvergenceError, SequenceFormatError, ValidationError

BASIS_MAGIC = b"LGLB"
BASIS_VERSION = 1

DEFAULT_TOL = 1e-10
MAX_SWEEPS = 100


@dataclass(frozen=True)
class TreeShape:
    """Branching profile [n_1, ..., n_L] of the perfect sampled tree."""

    branching: tuple[int, ...]

    def __post_init__(self):
        branching = tuple(int(n) for n in self.branching)
        if not branching or any(n < 1 for n in branching):
            raise ValidationError(f"branching factors must all be >= 1, got {branching}")
        object.__setattr__(self, "branching", branching)

    @property
    def depth(self) -> int:
        return len(self.branching)

    @property
    def level_sizes(self) -> tuple[int, ...]:
        sizes = [1]
        for n in self.branching:
            sizes.append(sizes[-1] * n)
        return tuple(sizes)

    @property
    def level_offsets(self) -> tuple[int, ...]:
        offsets = [0]
        for size in self.level_sizes[:-1]:
            offsets.append(offsets[-1] + size)
        return tuple(offsets)

    @property
    def size(self) -> int:
        return sum(self.level_sizes)

    def children(self, position: int, level: int) -> range:
        """Level-order indices of the children of `position` at `level`."""
        offsets = self.level_offsets
        n_next = self.branching[level]
        start = offsets[level + 1] + (position - offsets[level]) * n_next
        return range(start, start + n_next)

    def parent(self, position: int) -> int | None:
        if position == 0:
            return None
        offsets = self.level_offsets
        level = np.searchsorted(offsets, position, side="right") - 1
        return offsets[level - 1] + (position - offsets[level]) // self.branching[level - 1]


def tree_adjacency(shape: TreeShape) -> np.ndarray:
    """Dense 0/1 adjacency of the perfect tree under level-order indexing."""
    size = shape.size
    a = np.zeros((size, size), dtype=np.float64)
    offsets = shape.level_offsets
    for level in range(shape.depth):
        for pos in range(offsets[level], offsets[level] + shape.level_sizes[level]):
            for child in shape.children(pos, level):
                a[pos, child] = 1.0
                a[child, pos] = 1.0
    return a


def normalized_laplacian(adjacency: np.ndarray) -> np.ndarray:
    """L = I - D^{-1/2} A D^{-1/2}; rows/columns of degree-0 nodes stay zero."""
    a = np.asarray(adjacency, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"adjacency must be square, got shape {a.shape}")
    if not np.array_equal(a, a.T):
        raise ValidationError("adjacency must be symmetric")
    deg = a.sum(axis=1)
    nonzero = deg > 0
    inv_sqrt = np.zeros_like(deg)
    inv_sqrt[nonzero] = 1.0 / np.sqrt(deg[nonzero])
    lap = -(inv_sqrt[:, None] * a * inv_sqrt[None, :])
    lap[np.diag_indices_from(lap)] = np.where(nonzero, 1.0, 0.0)
    return lap


def _max_offdiag(a: np.ndarray) -> float:
    off = np.abs(a - np.diag(np.diag(a)))
    return float(off.max()) if a.shape[0] > 1 else 0.0


def eigendecompose(matrix: np.ndarray, tol: float = DEFAULT_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Returns (eigenvalues, U) with eigenvalues ascending and row r of U the
    r-th unit eigenvector. Deterministic tie handling: each eigenvector's
    sign is fixed so its largest-magnitude component (lowest index on
    magnitude ties) is positive, and equal eigenvalues are ordered with the
    lexicographically larger eigenvector first.
    """
    a = np.array(matrix, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"matrix must be square, got shape {a.shape}")
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-12):
        raise ValidationError("matrix must be symmetric")
    n = a.shape[0]
    v = np.eye(n)

    sweeps = 0
    while _max_offdiag(a) > tol:
        if sweeps >= MAX_SWEEPS:
            raise ConvergenceError(
                f"Jacobi did not converge in {MAX_SWEEPS} sweeps (off-diag {_max_offdiag(a):.3e})"
            )
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                if a[p, q] == 0.0:
                    continue
                theta = 0.5 * np.arctan2(2.0 * a[p, q], a[q, q] - a[p, p])
                c, s = np.cos(theta), np.sin(theta)
                rot_p = c * a[p, :] - s * a[q, :]
                rot_q = s * a[p, :] + c * a[q, :]
                a[p, :], a[q, :] = rot_p, rot_q
                rot_p = c * a[:, p] - s * a[:, q]
                rot_q = s * a[:, p] + c * a[:, q]
                a[:, p], a[:, q] = rot_p, rot_q
                rot_p = c * v[:, p] - s * v[:, q]
                rot_q = s * v[:, p] + c * v[:, q]
                v[:, p], v[:, q] = rot_p, rot_q

    eigenvalues = np.diag(a).copy()
    vectors = v.T  # row r = eigenvector r

    for r in range(n):
        mags = np.abs(vectors[r])
        # magnitude ties are approximate in floats; compare with slack
        lead = int(np.flatnonzero(mags >= mags.max() * (1.0 - 1e-9))[0])
        if vectors[r, lead] < 0:
            vectors[r] = -vectors[r]

    def sort_key(r: int):
        return (eigenvalues[r], tuple(-x for x in vectors[r]))

    order = sorted(range(n), key=sort_key)
    return eigenvalues[order], vectors[order]


@dataclass(frozen=True)
class LaplacianBasis:
    """Eigenpairs of the tree Laplacian; column i of U embeds position i."""

    shape: TreeShape
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # rows are eigenvectors
    embedding_dim: int

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=np.float64)
        u = np.asarray(self.eigenvectors, dtype=np.float64)
        if lam.shape != (self.shape.size,) or u.shape != (self.shape.size, self.shape.size):
            raise ValidationError("eigenpair shapes do not match the tree size")
        if not 1 <= self.embedding_dim <= self.shape.size:
            raise ValidationError(f"embedding_dim must be in [1, {self.shape.size}]")
        lam.flags.writeable = False
        u.flags.writeable = False
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "eigenvectors", u)

    def position_embedding(self, i: int) -> np.ndarray:
        """Column i of U restricted to the first embedding_dim eigenpairs."""
        if not 0 <= i < self.shape.size:
            raise ValidationError(f"position {i} out of range [0, {self.shape.size})")
        return self.eigenvectors[: self.embedding_dim, i]

    @property
    def embedding_matrix(self) -> np.ndarray:
        """All position embeddings as rows: (size, embedding_dim)."""
        return self.eigenvectors[: self.embedding_dim, :].T


def build_basis(shape: TreeShape, embedding_dim: int | None = None, tol: float = DEFAULT_TOL) -> LaplacianBasis:
    """Decompose the tree Laplacian for `shape` (full spectrum by default)."""
    lap = normalized_laplacian(tree_adjacency(shape))
    eigenvalues, vectors = eigendecompose(lap, tol=tol)
    # The normalized-Laplacian spectrum lies in [0, 2]; snap round-off spills.
    eigenvalues = eigenvalues.copy()
    eigenvalues[np.abs(eigenvalues) < 1e-12] = 0.0
    eigenvalues[np.abs(eigenvalues - 2.0) < 1e-12] = 2.0
    dim = shape.size if embedding_dim is None else int(embedding_dim)
    return LaplacianBasis(shape, eigenvalues, vectors, dim)


@lru_cache(maxsize=16)
def cached_basis(branching: tuple[int, ...], embedding_dim: int | None = None) -> LaplacianBasis:
    """Computed once per tree shape and shared by all encoders."""
    return build_basis(TreeShape(branching), embedding_dim=embedding_dim)


def write_basis(path, basis: LaplacianBasis):
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sIII", BASIS_MAGIC, BASIS_VERSION, basis.shape.size, basis.embedding_dim))
        fh.write(struct.pack("<I", basis.shape.depth))
        fh.write(struct.pack(f"<{basis.shape.depth}I", *basis.shape.branching))
        fh.write(basis.eigenvalues.astype("<f8").tobytes())
        fh.write(basis.eigenvectors.astype("<f8").tobytes())


def read_basis(path) -> LaplacianBasis:
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) < 16:
            raise SequenceFormatError(f"{path}: truncated basis header")
        magic, version, size, embedding_dim = struct.unpack("<4sIII", header)
        if magic != BASIS_MAGIC:
            raise SequenceFormatError(f"{path}: bad magic {magic!r}")
        if version != BASIS_VERSION:
            raise SequenceFormatError(f"{path}: unsupported version {version}")
        (depth,) = struct.unpack("<I", fh.read(4))
        branching = struct.unpack(f"<{depth}I", fh.read(4 * depth))
        shape = TreeShape(branching)
        if shape.size != size:
            raise SequenceFormatError(f"{path}: branching {branching} does not produce size {size}")
        lam = np.frombuffer(fh.read(8 * size), dtype="<f8")
        u = np.frombuffer(fh.read(8 * size * size), dtype="<f8")
        if lam.size != size or u.size != size * size:
            raise SequenceFormatError(f"{path}: truncated eigenpair payload")
        return LaplacianBasis(shape, lam.copy(), u.copy().reshape(size, size), embedding_dim)
