"""Desk-scale alignment tuning against a frozen mock decoder.

The decoder is a seeded, frozen conditional token model: it scores the next
answer token from a mean-pooled context of the full input stream (text
token embeddings plus projected graph rows) and the previous answer token.
Only projector parameters ever receive gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import projector as proj_mod
from .errors import TrainingError, ValidationError
from .projector import ProjectorGrads, ProjectorParams
from .prompts import EncodedSample, Tokenizer
from .seeding import make_rng, mix

DEFAULT_DECODER_DIM = 64


@dataclass(frozen=True)
class MockDecoder:
    """Frozen stand-in language model; tensors are read-only after build."""

    token_embeddings: np.ndarray  # (vocab, d)
    output_weights: np.ndarray  # (vocab, d)
    seed: int

    def __post_init__(self):
        te = np.asarray(self.token_embeddings, dtype=np.float64)
        ow = np.asarray(self.output_weights, dtype=np.float64)
        if te.ndim != 2 or te.shape != ow.shape:
            raise ValidationError("decoder tensors must both be (vocab, d)")
        te.flags.writeable = False
        ow.flags.writeable = False
        object.__setattr__(self, "token_embeddings", te)
        object.__setattr__(self, "output_weights", ow)

    @property
    def vocab_size(self) -> int:
        return self.token_embeddings.shape[0]

    @property
    def dim(self) -> int:
        return self.token_embeddings.shape[1]


def make_decoder(vocab_size: int, dim: int = DEFAULT_DECODER_DIM, seed: int = 0) -> MockDecoder:
    """Entries ~ seeded normal(0, 1/sqrt(dim)) so rows have unit-scale norm."""
    if vocab_size < 1 or dim < 1:
        raise ValidationError("vocab_size and dim must be >= 1")
    rng = np.random.Generator(np.random.PCG64(mix(seed, vocab_size, dim)))
    scale = 1.0 / np.sqrt(dim)
    return MockDecoder(
        rng.normal(0.0, scale, size=(vocab_size, dim)),
        rng.normal(0.0, scale, size=(vocab_size, dim)),
        seed,
    )


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 2e-5
    batch_size: int = 16
    epochs: int = 1
    optimizer: str = "adam"  # adam(0.9, 0.999, 1e-8) or sgd
    seed: int = 0
    replicate: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValidationError("learning_rate must be >= 0")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValidationError("batch_size and epochs must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValidationError(f"unknown optimizer {self.optimizer!r}")


@dataclass(frozen=True)
class LossCurve:
    losses: tuple[float, ...]

    @property
    def steps(self) -> int:
        return len(self.losses)


def _stream_rows(sample: EncodedSample) -> np.ndarray:
    if not sample.sequences:
        return np.zeros((0, 0))
    return np.concatenate([seq.rows for seq in sample.sequences], axis=0)


def _context_parts(dec: MockDecoder, sample: EncodedSample, params: ProjectorParams):
    token_ids = [i for seg in sample.token_segments for i in seg]
    rows = _stream_rows(sample)
    stream_len = len(token_ids) + rows.shape[0]
    if stream_len == 0:
        raise ValidationError("sample has an empty input stream")
    if rows.shape[0] and rows.shape[1] != params.in_dim:
        raise ValidationError(f"embedding row dim {rows.shape[1]} != projector in_dim {params.in_dim}")
    if params.out_dim != dec.dim:
        raise ValidationError(f"projector out_dim {params.out_dim} != decoder dim {dec.dim}")
    total = np.zeros(dec.dim)
    if token_ids:
        total += dec.token_embeddings[token_ids].sum(axis=0)
    if rows.shape[0]:
        total += proj_mod.forward_batch(params, rows).sum(axis=0)
    return total / stream_len, rows, stream_len


def context_vector(dec: MockDecoder, sample: EncodedSample, params: ProjectorParams) -> np.ndarray:
    """Mean of token embeddings and projected rows over the full stream."""
    c, _, _ = _context_parts(dec, sample, params)
    return c


def answer_loss(
    dec: MockDecoder, sample: EncodedSample, params: ProjectorParams
) -> tuple[float, ProjectorGrads]:
    """Mean answer-token NLL and its gradient w.r.t. projector parameters.

    Teacher forcing over answer positions: logits_t = W_out tanh(c + emb of
    the previous answer token). The context mean routes 1/stream_length of
    the gradient into each projected row; decoder tensors stay untouched.
    """
    if len(sample.answer_ids) < 2:
        raise ValidationError("sample has no answer tokens")
    c, rows, stream_len = _context_parts(dec, sample, params)
    prev_ids = np.array(sample.answer_ids[:-1])
    target_ids = np.array(sample.answer_ids[1:])
    steps = len(target_ids)

    z = c[None, :] + dec.token_embeddings[prev_ids]
    a = np.tanh(z)
    logits = a @ dec.output_weights.T
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = float(-log_probs[np.arange(steps), target_ids].mean())
    if not np.isfinite(loss):
        raise TrainingError(f"non-finite answer loss ({loss})")

    grad_logits = np.exp(log_probs)
    grad_logits[np.arange(steps), target_ids] -= 1.0
    grad_logits /= steps
    grad_a = grad_logits @ dec.output_weights
    grad_c = ((1.0 - a * a) * grad_a).sum(axis=0)

    grads = ProjectorGrads.zeros_like(params)
    if rows.shape[0]:
        grad_rows = np.tile(grad_c / stream_len, (rows.shape[0], 1))
        row_grads, _ = proj_mod.backward_batch(params, rows, grad_rows)
        grads.add_(row_grads)
    return loss, grads


class _Optimizer:
    def __init__(self, cfg: TrainConfig, params: ProjectorParams):
        self.cfg = cfg
        self.step_count = 0
        self.m = ProjectorGrads.zeros_like(params)
        self.v = ProjectorGrads.zeros_like(params)

    def step(self, params: ProjectorParams, grads: ProjectorGrads):
        self.step_count += 1
        lr = self.cfg.learning_rate
        if self.cfg.optimizer == "sgd":
            for name, tensor in params.tensors().items():
                tensor -= lr * grads.tensors()[name]
            return
        beta1, beta2, eps = 0.9, 0.999, 1e-8
        for name, tensor in params.tensors().items():
            g = grads.tensors()[name]
            m = self.m.tensors()[name]
            v = self.v.tensors()[name]
            m *= beta1
            m += (1 - beta1) * g
            v *= beta2
            v += (1 - beta2) * g * g
            m_hat = m / (1 - beta1**self.step_count)
            v_hat = v / (1 - beta2**self.step_count)
            tensor -= lr * m_hat / (np.sqrt(v_hat) + eps)


def train(
    params: ProjectorParams,
    dataset,
    dec: MockDecoder,
    cfg: TrainConfig,
    dataset_names=None,
) -> tuple[ProjectorParams, LossCurve]:
    """Mini-batch optimization of the projector only; deterministic per seed.

    `dataset_names` optionally tags each sample with its source dataset so
    cfg.replicate can repeat small datasets within every epoch stream.
    """
    samples = list(dataset)
    if not samples:
        raise ValidationError("training dataset is empty")
    if dataset_names is None:
        dataset_names = ["default"] * len(samples)
    if len(dataset_names) != len(samples):
        raise ValidationError("dataset_names must parallel the sample list")

    base_indices = []
    for i, name in enumerate(dataset_names):
        base_indices.extend([i] * cfg.replicate.get(name, 1))

    params = params.copy()
    optimizer = _Optimizer(cfg, params)
    losses: list[float] = []
    for epoch in range(cfg.epochs):
        order = list(base_indices)
        make_rng(cfg.seed, epoch).shuffle(order)
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            total = ProjectorGrads.zeros_like(params)
            batch_loss = 0.0
            for idx in batch:  # fixed order: end state independent of scheduling
                try:
                    loss, grads = answer_loss(dec, samples[idx], params)
                except TrainingError as err:
                    raise TrainingError(f"step {len(losses)}: {err}", step=len(losses)) from None
                batch_loss += loss
                total.add_(grads)
            batch_loss /= len(batch)
            if not np.isfinite(batch_loss):
                raise TrainingError(f"non-finite loss at step {len(losses)}", step=len(losses))
            total.scale_(1.0 / len(batch))
            optimizer.step(params, total)
            losses.append(batch_loss)
    return params, LossCurve(tuple(losses))


def greedy_decode(
    dec: MockDecoder, sample: EncodedSample, params: ProjectorParams, max_len: int
) -> list[int]:
    """Argmax decoding (ties break to the lowest id); stops at EOS or max_len."""
    if max_len < 1:
        raise ValidationError("max_len must be >= 1")
    c, _, _ = _context_parts(dec, sample, params)
    out: list[int] = []
    prev = Tokenizer.BOS
    for _ in range(max_len):
        logits = dec.output_weights @ np.tanh(c + dec.token_embeddings[prev])
        prev = int(np.argmax(logits))
        out.append(prev)
        if prev == Tokenizer.EOS:
            break
    return out


def extract_description_label(text: str) -> str | None:
    """Pull the category name out of an `... in the X domain ...` description."""
    start = text.find("in the ")
    if start < 0:
        return None
    end = text.find(" domain", start)
    if end < 0:
        return None
    return text[start + len("in the ") : end]


def evaluate(
    task: str,
    samples,
    dec: MockDecoder,
    params: ProjectorParams,
    tok: Tokenizer,
    category_names=None,
    max_len: int | None = None,
) -> float:
    """Greedy-decode accuracy for a task over samples with ground-truth answers.

    Node classification and description apply the description-label rule in
    the tokenizer's normalized space; link prediction matches the first
    decoded token against yes/no.
    """
    samples = list(samples)
    if not samples:
        raise ValidationError("no samples to evaluate")
    if any(len(s.answer_ids) < 2 for s in samples):
        raise ValidationError("evaluation samples must carry ground-truth answers")
    if max_len is None:
        max_len = max(len(s.answer_ids) for s in samples) + 2

    if task == "link_prediction":
        yes_id, no_id = tok.encode("yes")[0], tok.encode("no")[0]
        correct = 0
        for sample in samples:
            decoded = greedy_decode(dec, sample.without_answer(), params, max_len)
            truth = sample.answer_ids[1]
            correct += bool(decoded and decoded[0] == truth and truth in (yes_id, no_id))
        return correct / len(samples)

    if task in ("node_classification", "node_description"):
        if category_names is not None:
            names = [tok.normalize(name) for name in category_names]
        else:
            names = sorted({_truth_label(task, s, tok) for s in samples})
        correct = 0
        for sample in samples:
            decoded_text = tok.decode(greedy_decode(dec, sample.without_answer(), params, max_len))
            label = _truth_label(task, sample, tok)
            ok = label in decoded_text and not any(
                name in decoded_text for name in names if name != label
            )
            correct += ok
        return correct / len(samples)

    raise ValidationError(f"unknown task tag {task!r}")


def _truth_label(task: str, sample: EncodedSample, tok: Tokenizer) -> str:
    answer_text = tok.decode(sample.answer_ids)
    if task == "node_classification":
        return answer_text
    label = extract_description_label(answer_text)
    if label is None:
        raise ValidationError("description answer lacks an `in the X domain` clause")
    return label
