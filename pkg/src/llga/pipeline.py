"""End-to-end wiring: ingest, encode, task building, training, evaluation.

Everything here is deterministic given a RunConfig: encoding work can be
fanned out over processes (or threads when fork is unavailable) and the
output bytes are identical to a sequential run because records are packed
per node and written in node order.
"""

from __future__ import annotations

import concurrent.futures
import multiprocessing
import os
import zlib
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from . import projector as proj_mod
from . import trainer as trainer_mod
from .errors import ConfigError, ValidationError
from .graph_store import (
    FeatureMatrix,
    GraphStore,
    Split,
    load_category_names,
    load_edge_list,
    load_features,
    load_labels,
    load_node_texts,
    make_splits,
    sample_link_pairs,
)
from .ho_template import HopEmbeddingTable, assemble_ho, compute_hops
from .laplacian import TreeShape, cached_basis
from .nd_template import NDConfig, assemble_center_only, assemble_nd, build_tree
from .prompts import (
    LP_QUESTION,
    NC_QUESTION,
    NC_TEXT_PREFIX,
    ND_ANSWER,
    ND_QUESTION,
    SYSTEM_MESSAGE,
    EncodedSample,
    Tokenizer,
    build_lp_prompt,
    build_nc_prompt,
    build_nd_prompt,
    build_vocab,
    encode_sample,
    format_prompt_dump,
)
from .runconfig import RunConfig
from .seqfile import (
    SequenceHeader,
    SequenceRecord,
    TASK_CODES,
    TEMPLATE_CODES,
    crc32_combine,
    pack_record,
    write_chunks,
)

SPLIT_PARTS = ("train", "valid", "test")


def load_store(cfg: RunConfig) -> GraphStore:
    if not cfg.edges or cfg.num_nodes <= 0:
        raise ConfigError("config must set edges=<path> and num_nodes>0")
    store = load_edge_list(cfg.edges, cfg.num_nodes)
    attrs = {}
    if cfg.features:
        attrs["features"] = load_features(cfg.features)
    if cfg.categories:
        attrs["category_names"] = load_category_names(cfg.categories)
    if cfg.labels:
        names = attrs.get("category_names")
        attrs["labels"] = load_labels(
            cfg.labels, cfg.num_nodes, None if names is None else len(names)
        )
    if cfg.node_texts:
        attrs["node_texts"] = load_node_texts(cfg.node_texts)
    return store.replace(**attrs) if attrs else store


@dataclass(frozen=True)
class NodeEncoder:
    """Template-specific per-node encoder sharing immutable state."""

    template: str  # nd | ho | center
    store: GraphStore
    feats: FeatureMatrix
    nd_cfg: NDConfig | None = None
    hop_table: HopEmbeddingTable | None = None
    num_hops: int = 0

    @property
    def template_code(self) -> int:
        return TEMPLATE_CODES[self.template]

    @property
    def seq_len(self) -> int:
        if self.template == "nd":
            return self.nd_cfg.shape.size
        return self.num_hops if self.template == "ho" else 1

    @property
    def lap_dim(self) -> int:
        return self.nd_cfg.shape.size if self.template == "nd" else 0

    @property
    def row_width(self) -> int:
        return self.feats.dim + self.lap_dim

    def encode_node(self, v: int):
        if self.template == "nd":
            seq = build_tree(self.store, v, self.nd_cfg)
            return assemble_nd(seq, self.feats, cached_basis(self.nd_cfg.shape.branching))
        if self.template == "ho":
            return assemble_ho(self.hop_table, v, self.num_hops)
        return assemble_center_only(v, self.feats)

    # float32 blocks shared by the raw-record assembly path; per-element
    # truncation matches encode_node followed by an astype, so assembled
    # bytes are identical to packing the generic EmbeddingSequence.
    @cached_property
    def _feats32_padded(self) -> np.ndarray:
        zero = np.zeros((1, self.feats.dim), dtype="<f4")
        return np.concatenate([self.feats.values.astype("<f4"), zero], axis=0)

    @cached_property
    def _lap32(self) -> np.ndarray:
        return cached_basis(self.nd_cfg.shape.branching).embedding_matrix.astype("<f4")

    @cached_property
    def _hops32(self) -> np.ndarray:
        return np.ascontiguousarray(self.hop_table.hops[: self.num_hops].transpose(1, 0, 2).astype("<f4"))

    def tree_ids(self, nodes) -> np.ndarray:
        """Level-order tree entries for a batch of centers (PAD = -1)."""
        out = np.empty((len(nodes), self.nd_cfg.shape.size), dtype=np.int64)
        for i, v in enumerate(nodes):
            out[i] = build_tree(self.store, int(v), self.nd_cfg).entries
        return out

    def raw_payload(self, nodes, ids: np.ndarray | None = None) -> np.ndarray:
        """Concatenated raw records (task code 0) for a batch of centers.

        For the tree template, `ids` carries precomputed tree entries so
        workers can ship only id arrays instead of full row payloads. The
        result is a uint8 buffer of back-to-back records, assembled in
        place to avoid per-record copies.
        """
        count = len(nodes)
        seq_len, width = self.seq_len, self.row_width
        mask_bytes = (seq_len + 7) // 8
        rows_off = 10 + mask_bytes
        arr = np.empty((count, rows_off + seq_len * width * 4), dtype=np.uint8)
        arr[:, 0] = 1
        arr[:, 1:9] = np.asarray(nodes, dtype="<u8").reshape(-1, 1).view(np.uint8)
        arr[:, 9] = TASK_CODES["raw"]

        if rows_off % 4 == 0:  # float rows can be written in place
            rows = arr[:, rows_off:].view("<f4").reshape(count, seq_len, width)
        else:
            rows = np.empty((count, seq_len, width), dtype="<f4")

        if self.template == "nd":
            if ids is None:
                ids = self.tree_ids(nodes)
            mask = ids < 0
            fdim = self.feats.dim
            rows[:, :, :fdim] = self._feats32_padded[np.where(mask, self.feats.rows, ids)]
            rows[:, :, fdim:] = self._lap32
        elif self.template == "ho":
            mask = np.zeros((count, seq_len), dtype=bool)
            rows[:] = self._hops32[[int(v) for v in nodes]]
        else:
            mask = np.zeros((count, seq_len), dtype=bool)
            rows[:, 0, :] = self._feats32_padded[[int(v) for v in nodes]]

        arr[:, 10:rows_off] = np.packbits(mask, axis=1, bitorder="little")
        if rows_off % 4 != 0:
            arr[:, rows_off:] = rows.reshape(count, -1).view(np.uint8)
        return arr.reshape(-1)


def make_encoder(cfg: RunConfig, store: GraphStore) -> NodeEncoder:
    if store.features is None:
        raise ConfigError("encoding requires a feature matrix (features=<path>)")
    template = "center" if cfg.template == "none" else cfg.template
    if template == "nd":
        nd_cfg = NDConfig(shape=TreeShape(cfg.branching), seed=cfg.seed("encode_seed"))
        return NodeEncoder("nd", store, store.features, nd_cfg=nd_cfg)
    if template == "ho":
        table = compute_hops(store, store.features, cfg.num_hops)
        return NodeEncoder("ho", store, store.features, hop_table=table, num_hops=cfg.num_hops)
    return NodeEncoder("center", store, store.features)


# -- parallel raw encoding ---------------------------------------------------

_WORKER: dict = {}

ENCODE_CHUNK = 512


def _init_span_worker(encoder: NodeEncoder, path):
    _WORKER["encoder"] = encoder
    _WORKER["path"] = path
    _WORKER["fd"] = None


def _write_span(task) -> tuple[int, int, int]:
    # Records have a fixed size, so each worker assembles its chunk and
    # writes it at a precomputed offset; bytes match a sequential run and
    # the parent stitches the full-file CRC from per-chunk CRCs.
    offset, nodes = task
    payload = _WORKER["encoder"].raw_payload(nodes)
    if _WORKER["fd"] is None:
        _WORKER["fd"] = os.open(_WORKER["path"], os.O_WRONLY)
    os.pwrite(_WORKER["fd"], payload, offset)
    return zlib.crc32(payload), payload.nbytes, len(nodes)


def encode_nodes_to_file(path, encoder: NodeEncoder, nodes, seed: int, workers: int = 1) -> SequenceHeader:
    """Write raw per-node sequence records (node-id order) to one file."""
    header = SequenceHeader(
        template_code=encoder.template_code,
        feature_dim=encoder.feats.dim,
        lap_dim=encoder.lap_dim,
        seq_len=encoder.seq_len,
        sample_count=0,
        seed=seed,
    )
    nodes = [int(v) for v in nodes]
    chunks = [nodes[i : i + ENCODE_CHUNK] for i in range(0, len(nodes), ENCODE_CHUNK)]

    if encoder.template == "nd" and workers > 1 and len(chunks) > 1:
        return _encode_parallel(path, header, encoder, chunks, workers)
    payloads = ((encoder.raw_payload(chunk), len(chunk)) for chunk in chunks)
    return write_chunks(path, header, payloads)


def _encode_parallel(path, header: SequenceHeader, encoder: NodeEncoder, chunks, workers: int) -> SequenceHeader:
    header_size = len(header.pack())
    record_size = 10 + (header.seq_len + 7) // 8 + header.seq_len * header.row_width * 4
    tasks = []
    start = 0
    for chunk in chunks:
        tasks.append((header_size + start * record_size, chunk))
        start += len(chunk)

    with open(path, "wb") as fh:
        fh.write(header.pack())  # placeholder; patched below

    try:
        ctx = multiprocessing.get_context("fork")
        pool = concurrent.futures.ProcessPoolExecutor(
            max_workers=workers, mp_context=ctx,
            initializer=_init_span_worker, initargs=(encoder, path),
        )
    except ValueError:  # fork unavailable: threads give identical bytes
        _init_span_worker(encoder, path)
        pool = concurrent.futures.ThreadPoolExecutor(max_workers=workers)
    crc = 0
    count = 0
    with pool:
        for chunk_crc, chunk_bytes, chunk_count in pool.map(_write_span, tasks):
            crc = crc32_combine(crc, chunk_crc, chunk_bytes)
            count += chunk_count
    final = replace(header, sample_count=count, checksum=crc)
    with open(path, "r+b") as fh:
        fh.write(final.pack())
    return final


# -- task sample building ----------------------------------------------------


def build_corpus(cfg: RunConfig, store: GraphStore) -> list[str]:
    """Every string the tokenizer must cover, in a config-determined order."""
    corpus = [SYSTEM_MESSAGE, LP_QUESTION, ND_QUESTION, "yes", "no"]
    if store.category_names:
        corpus.append(NC_QUESTION.format(names="; ".join(store.category_names)))
        corpus.extend(store.category_names)
    corpus.append(NC_TEXT_PREFIX.format(text=""))
    corpus.append(ND_ANSWER.format(domain_word=cfg.domain_word, label_name="", description=""))
    if store.node_texts:
        corpus.extend(store.node_texts)
    return corpus


def _labeled_nodes(store: GraphStore, split: Split, part: str) -> np.ndarray:
    nodes = split.nodes(part)
    if store.labels is None:
        raise ConfigError("task needs labels=<path> and categories=<path>")
    return nodes[store.labels[nodes] >= 0]


def _center_text(store: GraphStore, v: int) -> str:
    if store.node_texts is None or v >= len(store.node_texts):
        raise ConfigError("include_center_text/node description need node_texts=<path>")
    return store.node_texts[v]


def _iter_prompts(cfg, store, split, encoder, task, part):
    """Yield (prompt, sequences, centers) for one task over one split part."""
    if task == "link_prediction":
        count = cfg.link_pairs if part == "train" else cfg.eval_pairs
        if count == 0:
            count = len(split.nodes("train")) // 2 * 2
        for pair in sample_link_pairs(store, split, count, cfg.seed("split_seed"), part=part):
            seqs = [encoder.encode_node(pair.u), encoder.encode_node(pair.v)]
            yield build_lp_prompt(pair.connected), seqs, (pair.u, pair.v)
        return

    if store.category_names is None:
        raise ConfigError("task needs categories=<path>")
    names = store.category_names
    for v in _labeled_nodes(store, split, part):
        v = int(v)
        label = names[store.labels[v]]
        if task == "node_classification":
            text = _center_text(store, v) if cfg.include_center_text else None
            prompt = build_nc_prompt(names, label, cfg.include_center_text, text)
        elif task == "node_description":
            prompt = build_nd_prompt(cfg.domain_word, _center_text(store, v), label)
        else:
            raise ValidationError(f"unknown task {task!r}")
        yield prompt, [encoder.encode_node(v)], (v,)


def build_task_samples(
    cfg: RunConfig,
    store: GraphStore,
    split: Split,
    tok: Tokenizer,
    encoder: NodeEncoder,
    task: str,
    part: str,
) -> list[EncodedSample]:
    """Encoded chat samples for one task over one split part."""
    return [
        encode_sample(prompt, tok, seqs, centers=centers)
        for prompt, seqs, centers in _iter_prompts(cfg, store, split, encoder, task, part)
    ]


def task_records(samples) -> list[SequenceRecord]:
    records = []
    for sample in samples:
        rows = np.concatenate([seq.rows for seq in sample.sequences], axis=0)
        mask = np.concatenate([seq.pad_mask for seq in sample.sequences])
        records.append(
            SequenceRecord(sample.centers, TASK_CODES[sample.task], mask, rows.astype("<f4"))
        )
    return records


def dump_samples(cfg, store, split, encoder, task, part) -> str:
    """Prompt-corpus dump with ⟦GRAPH:k rows⟧ markers (inspection only)."""
    blocks = [
        format_prompt_dump(prompt, seqs)
        for prompt, seqs, _ in _iter_prompts(cfg, store, split, encoder, task, part)
    ]
    return "\n\n".join(blocks) + "\n"


# -- training / evaluation ---------------------------------------------------


@dataclass
class PipelineContext:
    store: GraphStore
    split: Split
    encoder: NodeEncoder
    tok: Tokenizer
    decoder: trainer_mod.MockDecoder


def build_context(cfg: RunConfig) -> PipelineContext:
    store = load_store(cfg)
    split = make_splits(store, cfg.split_ratios, cfg.seed("split_seed"))
    encoder = make_encoder(cfg, store)
    tok = build_vocab(build_corpus(cfg, store))
    decoder = trainer_mod.make_decoder(tok.vocab_size, cfg.decoder_dim, cfg.seed("decoder_seed"))
    return PipelineContext(store, split, encoder, tok, decoder)


def train_pipeline(cfg: RunConfig, ctx: PipelineContext | None = None):
    """Train the projector on all configured tasks' train-split samples."""
    ctx = ctx or build_context(cfg)
    samples: list[EncodedSample] = []
    for task in cfg.tasks:
        samples.extend(build_task_samples(cfg, ctx.store, ctx.split, ctx.tok, ctx.encoder, task, "train"))
    params = proj_mod.init(
        ctx.encoder.row_width, cfg.hidden_dim, cfg.decoder_dim, cfg.seed("train_seed")
    )
    train_cfg = trainer_mod.TrainConfig(
        learning_rate=cfg.lr,
        batch_size=cfg.batch_size,
        epochs=cfg.epochs,
        optimizer=cfg.optimizer,
        seed=cfg.seed("train_seed"),
        replicate=dict(cfg.replicate),
    )
    names = [cfg.dataset_name] * len(samples)
    trained, curve = trainer_mod.train(params, samples, ctx.decoder, train_cfg, dataset_names=names)
    return ctx, trained, curve


def write_train_log(path, curve) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for step, loss in enumerate(curve.losses):
            fh.write(f"{step}\t{loss:.10f}\n")


def eval_pipeline(cfg: RunConfig, params, ctx: PipelineContext | None = None) -> dict[tuple[str, str], float]:
    """Greedy-decode accuracy for each configured task on train and test."""
    ctx = ctx or build_context(cfg)
    results: dict[tuple[str, str], float] = {}
    for task in cfg.tasks:
        for part in ("train", "test"):
            samples = build_task_samples(cfg, ctx.store, ctx.split, ctx.tok, ctx.encoder, task, part)
            results[(task, part)] = trainer_mod.evaluate(
                task,
                samples,
                ctx.decoder,
                params,
                ctx.tok,
                category_names=ctx.store.category_names,
            )
    return results


def normalized_edge_lines(store: GraphStore):
    src = np.repeat(np.arange(store.num_nodes), np.diff(store.indptr))
    for u, v in zip(src, store.indices):
        if u < v:
            yield f"{u}\t{v}\n"
