"""Trainable projector from node-embedding rows to token-embedding space.

A two-layer MLP whose parameters are the only trainable state in the whole
pipeline. Math is float64 throughout so analytic gradients can be verified
against central finite differences; serialized weights are float32.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .errors import SequenceFormatError, ValidationError
from .seeding import mix

WEIGHTS_MAGIC = b"LGPJ"
WEIGHTS_VERSION = 1

ACTIVATIONS = ("relu", "gelu", "identity")

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _act(name: str, x: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(x, 0.0)
    if name == "gelu":
        return 0.5 * x * (1.0 + erf(x * _INV_SQRT2))
    return x


def _act_grad(name: str, x: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (x > 0.0).astype(np.float64)
    if name == "gelu":
        return 0.5 * (1.0 + erf(x * _INV_SQRT2)) + x * np.exp(-0.5 * x * x) * _INV_SQRT2PI
    return np.ones_like(x)


@dataclass
class ProjectorParams:
    w1: np.ndarray  # (hidden, in)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (out, hidden)
    b2: np.ndarray  # (out,)
    activation: str = "gelu"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValidationError(f"unknown activation {self.activation!r}")
        for name in ("w1", "b1", "w2", "b2"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        if (
            self.w1.ndim != 2
            or self.b1.shape != (self.w1.shape[0],)
            or self.w2.ndim != 2
            or self.w2.shape[1] != self.w1.shape[0]
            or self.b2.shape != (self.w2.shape[0],)
        ):
            raise ValidationError("inconsistent projector tensor shapes")
        if any(not np.all(np.isfinite(getattr(self, n))) for n in ("w1", "b1", "w2", "b2")):
            raise ValidationError("projector parameters must be finite")

    @property
    def in_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def out_dim(self) -> int:
        return self.w2.shape[0]

    def tensors(self) -> dict[str, np.ndarray]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def copy(self) -> "ProjectorParams":
        return ProjectorParams(
            self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy(), self.activation
        )


@dataclass
class ProjectorGrads:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @classmethod
    def zeros_like(cls, params: ProjectorParams) -> "ProjectorGrads":
        return cls(
            np.zeros_like(params.w1),
            np.zeros_like(params.b1),
            np.zeros_like(params.w2),
            np.zeros_like(params.b2),
        )

    def tensors(self) -> dict[str, np.ndarray]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def add_(self, other: "ProjectorGrads", scale: float = 1.0) -> "ProjectorGrads":
        for name, tensor in self.tensors().items():
            tensor += scale * other.tensors()[name]
        return self

    def scale_(self, factor: float) -> "ProjectorGrads":
        for tensor in self.tensors().values():
            tensor *= factor
        return self


def init(in_dim: int, hidden_dim: int, out_dim: int, seed: int, activation: str = "gelu") -> ProjectorParams:
    """Seeded Xavier-uniform weights, zero biases."""
    if min(in_dim, hidden_dim, out_dim) < 1:
        raise ValidationError("projector dimensions must be >= 1")
    rng = np.random.Generator(np.random.PCG64(mix(seed, in_dim, hidden_dim, out_dim)))
    lim1 = np.sqrt(6.0 / (in_dim + hidden_dim))
    lim2 = np.sqrt(6.0 / (hidden_dim + out_dim))
    return ProjectorParams(
        rng.uniform(-lim1, lim1, size=(hidden_dim, in_dim)),
        np.zeros(hidden_dim),
        rng.uniform(-lim2, lim2, size=(out_dim, hidden_dim)),
        np.zeros(out_dim),
        activation,
    )


def forward(params: ProjectorParams, h: np.ndarray) -> np.ndarray:
    """e = W2 act(W1 h + b1) + b2 for a single row."""
    h = np.asarray(h, dtype=np.float64)
    if h.shape != (params.in_dim,):
        raise ValidationError(f"input dim {h.shape} != ({params.in_dim},)")
    z = params.w1 @ h + params.b1
    return params.w2 @ _act(params.activation, z) + params.b2


def forward_batch(params: ProjectorParams, rows: np.ndarray) -> np.ndarray:
    """forward() applied to every row of a (n, in_dim) matrix."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != params.in_dim:
        raise ValidationError(f"input shape {rows.shape} != (n, {params.in_dim})")
    z = rows @ params.w1.T + params.b1
    return _act(params.activation, z) @ params.w2.T + params.b2


def backward(
    params: ProjectorParams, h: np.ndarray, grad_e: np.ndarray
) -> tuple[ProjectorGrads, np.ndarray]:
    """Exact reverse-mode derivatives of forward for one row."""
    h = np.asarray(h, dtype=np.float64)
    grad_e = np.asarray(grad_e, dtype=np.float64)
    if h.shape != (params.in_dim,) or grad_e.shape != (params.out_dim,):
        raise ValidationError("backward shape mismatch")
    grads, grad_rows = backward_batch(params, h[None, :], grad_e[None, :])
    return grads, grad_rows[0]


def backward_batch(
    params: ProjectorParams, rows: np.ndarray, grad_e: np.ndarray
) -> tuple[ProjectorGrads, np.ndarray]:
    """Gradients summed over rows; also returns per-row input gradients."""
    rows = np.asarray(rows, dtype=np.float64)
    grad_e = np.asarray(grad_e, dtype=np.float64)
    if rows.ndim != 2 or grad_e.shape != (rows.shape[0], params.out_dim):
        raise ValidationError("backward shape mismatch")
    z = rows @ params.w1.T + params.b1
    a = _act(params.activation, z)
    grad_a = grad_e @ params.w2
    grad_z = grad_a * _act_grad(params.activation, z)
    grads = ProjectorGrads(
        w1=grad_z.T @ rows,
        b1=grad_z.sum(axis=0),
        w2=grad_e.T @ a,
        b2=grad_e.sum(axis=0),
    )
    return grads, grad_z @ params.w1


def grad_check(params: ProjectorParams, loss_fn, eps: float = 1e-5, max_coords: int = 10_000) -> float:
    """Max relative error of analytic vs central-difference gradients.

    `loss_fn` maps ProjectorParams to (scalar, ProjectorGrads). Every
    parameter coordinate is probed; above `max_coords` total parameters a
    seeded 1000-coordinate subsample is used. Relative error is taken
    against max(|analytic|, |numeric|, 1e-6) so near-zero coordinates are
    judged on an absolute scale.
    """
    if eps <= 0:
        raise ValidationError("eps must be positive")
    base_loss, analytic = loss_fn(params)
    if not np.isfinite(base_loss):
        raise ValidationError(f"loss is non-finite: {base_loss}")

    names = ("w1", "b1", "w2", "b2")
    sizes = [params.tensors()[n].size for n in names]
    total = sum(sizes)
    coords = np.arange(total)
    if total > max_coords:
        rng = np.random.Generator(np.random.PCG64(mix(total, 1000)))
        coords = np.sort(rng.choice(total, size=1000, replace=False))

    probe = params.copy()
    flats = [probe.tensors()[n].reshape(-1) for n in names]
    analytic_flat = np.concatenate([analytic.tensors()[n].reshape(-1) for n in names])
    bounds = np.cumsum([0] + sizes)

    worst = 0.0
    for coord in coords:
        t = int(np.searchsorted(bounds, coord, side="right") - 1)
        i = int(coord - bounds[t])
        original = flats[t][i]
        flats[t][i] = original + eps
        hi, _ = loss_fn(probe)
        flats[t][i] = original - eps
        lo, _ = loss_fn(probe)
        flats[t][i] = original
        numeric = (hi - lo) / (2.0 * eps)
        a = analytic_flat[coord]
        worst = max(worst, abs(a - numeric) / max(abs(a), abs(numeric), 1e-6))
    return worst


ACTIVATION_CODES = {"relu": 0, "gelu": 1, "identity": 2}
_CODE_ACTIVATIONS = {v: k for k, v in ACTIVATION_CODES.items()}


def save_weights(path, params: ProjectorParams):
    """LGPJ weight file: float32 little-endian tensors in declaration order."""
    with open(path, "wb") as fh:
        fh.write(
            struct.pack(
                "<4sIIIIB",
                WEIGHTS_MAGIC,
                WEIGHTS_VERSION,
                params.in_dim,
                params.hidden_dim,
                params.out_dim,
                ACTIVATION_CODES[params.activation],
            )
        )
        for tensor in params.tensors().values():
            fh.write(tensor.astype("<f4").tobytes())


def load_weights(path) -> ProjectorParams:
    with open(path, "rb") as fh:
        header = fh.read(21)
        if len(header) < 21:
            raise SequenceFormatError(f"{path}: truncated weight header")
        magic, version, in_dim, hidden_dim, out_dim, act_code = struct.unpack("<4sIIIIB", header)
        if magic != WEIGHTS_MAGIC:
            raise SequenceFormatError(f"{path}: bad magic {magic!r}")
        if version != WEIGHTS_VERSION:
            raise SequenceFormatError(f"{path}: unsupported version {version}")
        if act_code not in _CODE_ACTIVATIONS:
            raise SequenceFormatError(f"{path}: unknown activation code {act_code}")
        counts = (hidden_dim * in_dim, hidden_dim, out_dim * hidden_dim, out_dim)
        payload = fh.read()
    if len(payload) != 4 * sum(counts):
        raise SequenceFormatError(f"{path}: truncated weight payload")
    values = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    w1, b1, w2, b2 = np.split(values, np.cumsum(counts)[:-1])
    return ProjectorParams(
        w1.reshape(hidden_dim, in_dim),
        b1,
        w2.reshape(out_dim, hidden_dim),
        b2,
        _CODE_ACTIVATIONS[act_code],
    )
