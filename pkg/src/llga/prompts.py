"""Chat prompts for the three graph tasks, plus the local tokenizer.

Prompt questions carry <GRAPH_SLOT> markers where projected node-embedding
rows are spliced in; the tokenizer is a deterministic word-level stand-in
for a real chat-model tokenizer (the decoder it feeds is equally local, so
the two only need to agree with each other).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .nd_template import EmbeddingSequence

GRAPH_SLOT_MARKER = "<GRAPH_SLOT>"

BOS_TOKEN = "<bos>"
EOS_TOKEN = "<eos>"
UNK_TOKEN = "<unk>"
SLOT_TOKEN = "<graph_slot>"

SYSTEM_MESSAGE = (
    "You are a helpful language and graph assistant. You are able to understand "
    "the graph content provided and assist with graph-related questions."
)

NC_QUESTION = (
    "Given a node-centered graph: <GRAPH_SLOT>, which category does the center "
    "node belong to? Choose from: {names}."
)
NC_TEXT_PREFIX = "The center node text is: {text}. "
LP_QUESTION = (
    "Given two node-centered graphs: <GRAPH_SLOT> and <GRAPH_SLOT>, are these "
    "two center nodes connected? Answer yes or no."
)
ND_QUESTION = "Please describe the center node: <GRAPH_SLOT>."
ND_ANSWER = "The center node represents a {domain_word} in the {label_name} domain, it's about {description}."

TASK_SLOTS = {"node_classification": 1, "link_prediction": 2, "node_description": 1}

_TOKEN_RE = re.compile(r"[a-z0-9]+|[^a-z0-9\s]")


def _words(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Tokenizer:
    """Word-level vocabulary with dense ids; specials occupy ids 0..3."""

    id_to_token: tuple[str, ...]
    token_to_id: dict[str, int] = field(repr=False)

    BOS, EOS, UNK, SLOT = 0, 1, 2, 3

    @property
    def vocab_size(self) -> int:
        return len(self.id_to_token)

    def normalize(self, text: str) -> str:
        """Canonical form: lowercased tokens joined by single spaces."""
        return " ".join(self._split(text))

    def _split(self, text: str) -> list[str]:
        parts = []
        for i, chunk in enumerate(text.split(GRAPH_SLOT_MARKER)):
            if i > 0:
                parts.append(SLOT_TOKEN)
            parts.extend(_words(chunk))
        return parts

    def encode(self, text: str) -> list[int]:
        return [self.token_to_id.get(tok, self.UNK) for tok in self._split(text)]

    def decode(self, ids) -> str:
        tokens = []
        for i in ids:
            if i in (self.BOS, self.EOS):
                continue
            if not 0 <= i < self.vocab_size:
                raise ValidationError(f"token id {i} out of range")
            tokens.append(self.id_to_token[i])
        return " ".join(tokens)


def build_vocab(corpus) -> Tokenizer:
    """Deterministic tokenizer over a corpus: specials + sorted unique words."""
    corpus = list(corpus)
    if not corpus:
        raise ValidationError("corpus must be nonempty")
    seen = set()
    for text in corpus:
        seen.update(_words(text.replace(GRAPH_SLOT_MARKER, " ")))
    id_to_token = (BOS_TOKEN, EOS_TOKEN, UNK_TOKEN, SLOT_TOKEN) + tuple(sorted(seen))
    return Tokenizer(id_to_token, {tok: i for i, tok in enumerate(id_to_token)})


@dataclass(frozen=True)
class ChatPrompt:
    question: str
    answer: str
    task: str
    system: str = SYSTEM_MESSAGE
    include_center_text: bool = False

    def __post_init__(self):
        if self.task not in TASK_SLOTS:
            raise ValidationError(f"unknown task {self.task!r}")
        slots = self.question.count(GRAPH_SLOT_MARKER)
        if slots != TASK_SLOTS[self.task]:
            raise ValidationError(
                f"{self.task} prompt needs {TASK_SLOTS[self.task]} graph slot(s), found {slots}"
            )

    @property
    def slot_count(self) -> int:
        return TASK_SLOTS[self.task]


def build_nc_prompt(
    category_names,
    label_name: str,
    include_center_text: bool = False,
    center_text: str | None = None,
) -> ChatPrompt:
    """Node-classification prompt; the answer is the exact full category name."""
    names = list(category_names)
    if len(names) < 2:
        raise ValidationError("node classification needs at least 2 categories")
    question = NC_QUESTION.format(names="; ".join(names))
    if include_center_text:
        if center_text is None:
            raise ValidationError("include_center_text requires the node's raw text")
        question = NC_TEXT_PREFIX.format(text=center_text) + question
    return ChatPrompt(
        question=question,
        answer=label_name,
        task="node_classification",
        include_center_text=include_center_text,
    )


def build_lp_prompt(connected: bool) -> ChatPrompt:
    return ChatPrompt(
        question=LP_QUESTION,
        answer="yes" if connected else "no",
        task="link_prediction",
    )


def build_nd_prompt(domain_word: str, description: str, label_name: str) -> ChatPrompt:
    answer = ND_ANSWER.format(
        domain_word=domain_word, label_name=label_name, description=description
    )
    return ChatPrompt(question=ND_QUESTION, answer=answer, task="node_description")


@dataclass(frozen=True)
class EncodedSample:
    """Tokenized chat prompt with embedding sequences at the slot positions.

    token_segments has one more entry than sequences; reconstructing the
    stream as segments[0], seq[0], segments[1], ... preserves slot positions
    exactly. answer_ids are BOS/EOS framed (empty for inference samples).
    """

    token_segments: tuple[tuple[int, ...], ...]
    sequences: tuple[EmbeddingSequence, ...]
    answer_ids: tuple[int, ...]
    centers: tuple[int, ...]
    task: str

    def __post_init__(self):
        if len(self.token_segments) != len(self.sequences) + 1:
            raise ValidationError("token segments must interleave embedding sequences")
        if self.answer_ids and (
            self.answer_ids[0] != Tokenizer.BOS or self.answer_ids[-1] != Tokenizer.EOS
        ):
            raise ValidationError("answer ids must be BOS/EOS framed")

    @property
    def stream_length(self) -> int:
        return sum(len(seg) for seg in self.token_segments) + sum(
            seq.seq_len for seq in self.sequences
        )

    def without_answer(self) -> "EncodedSample":
        return EncodedSample(self.token_segments, self.sequences, (), self.centers, self.task)


def encode_sample(prompt: ChatPrompt, tok: Tokenizer, seqs, centers=()) -> EncodedSample:
    """Tokenize a prompt and splice embedding sequences at its slot markers."""
    seqs = tuple(seqs)
    chunks = prompt.question.split(GRAPH_SLOT_MARKER)
    if len(seqs) != len(chunks) - 1:
        raise ValidationError(
            f"prompt has {len(chunks) - 1} slot(s) but {len(seqs)} sequence(s) given"
        )
    segments = [tuple(tok.encode(prompt.system) + tok.encode(chunks[0]))]
    segments.extend(tuple(tok.encode(chunk)) for chunk in chunks[1:])
    answer_ids: tuple[int, ...] = ()
    if prompt.answer:
        answer_ids = (Tokenizer.BOS, *tok.encode(prompt.answer), Tokenizer.EOS)
    return EncodedSample(tuple(segments), seqs, answer_ids, tuple(centers), prompt.task)


def format_prompt_dump(prompt: ChatPrompt, seqs) -> str:
    """Inspection dump with one `⟦GRAPH:k rows⟧` marker per slot."""
    seqs = tuple(seqs)
    chunks = prompt.question.split(GRAPH_SLOT_MARKER)
    if len(seqs) != len(chunks) - 1:
        raise ValidationError("sequence count does not match prompt slots")
    question = chunks[0]
    for seq, chunk in zip(seqs, chunks[1:]):
        question += f"⟦GRAPH:{seq.seq_len} rows⟧" + chunk
    return f"system: {prompt.system}\nuser: {question}\nassistant: {prompt.answer}"


def description_label_matches(responses, labels, category_names) -> list[bool]:
    """Per-sample adjudication: the true category's full name must occur and
    no other category's full name may occur (case-sensitive substrings)."""
    responses, labels = list(responses), list(labels)
    if len(responses) != len(labels):
        raise ValidationError("responses and labels must have equal length")
    names = list(category_names)
    out = []
    for response, label in zip(responses, labels):
        ok = label in response and not any(
            name in response for name in names if name != label
        )
        out.append(ok)
    return out


def description_label_accuracy(responses, labels, category_names) -> float:
    matches = description_label_matches(responses, labels, category_names)
    return sum(matches) / len(matches) if matches else 0.0


def cosine_similarity(a, b) -> float:
    """a.b / (|a||b|); rejects zero-norm inputs and dimension mismatches."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValidationError(f"vectors must share one dimension, got {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValidationError("cosine similarity undefined for zero-norm input")
    return float(np.dot(a, b) / (na * nb))
