"""Command-line surface: ingest, encode, tasks, train, eval, inspect."""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from . import pipeline, projector
from .errors import LlgaError
from .runconfig import load_config
from .seqfile import SequenceHeader, TASK_NAMES, read_sequences, write_sequences


def _add_config(parser: argparse.ArgumentParser):
    parser.add_argument("--config", required=True, help="flat key=value run config")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="llga",
        description="Structure-aware graph-to-sequence encoding and projector alignment",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate inputs and dump a normalized edge list")
    _add_config(p)

    p = sub.add_parser("encode", help="write per-split raw sequence files")
    _add_config(p)
    p.add_argument("--template", choices=["nd", "ho", "none"], help="override config template")
    p.add_argument("--seed", type=int, help="override encode seed")
    p.add_argument("--workers", type=int, help="concurrent encoders")

    p = sub.add_parser("tasks", help="write task sample files and prompt dumps")
    _add_config(p)
    p.add_argument("--task", choices=["nc", "lp", "nd"], help="restrict to one task")

    p = sub.add_parser("train", help="alignment-tune the projector")
    _add_config(p)
    p.add_argument("--checkpoint-out", help="weight file path (default <out_dir>/projector.lgpj)")

    p = sub.add_parser("eval", help="greedy-decode accuracy per task and split")
    _add_config(p)
    p.add_argument("--checkpoint", required=True, help="projector weight file")

    p = sub.add_parser("inspect", help="print a sequence file header and leading records")
    p.add_argument("path", nargs="?", help="sequence file (default: every .llga in the config's out_dir)")
    p.add_argument("--config", help="run config used to locate sequence files")
    p.add_argument("--records", type=int, default=3, help="how many records to summarize")
    return parser


def _cmd_ingest(args) -> int:
    cfg = load_config(args.config)
    store = pipeline.load_store(cfg)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / "normalized-edges.txt"
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.writelines(pipeline.normalized_edge_lines(store))
    feature_dim = store.features.dim if store.features is not None else 0
    labeled = int((store.labels >= 0).sum()) if store.labels is not None else 0
    categories = len(store.category_names) if store.category_names else 0
    print(
        f"nodes={store.num_nodes} edges={store.num_edges} feature_dim={feature_dim} "
        f"labeled={labeled} categories={categories} -> {out_path}"
    )
    return 0


def _cmd_encode(args) -> int:
    cfg = load_config(args.config)
    if args.template:
        cfg.template = args.template
    if args.seed is not None:
        cfg.encode_seed = args.seed
    if args.workers is not None:
        cfg.workers = args.workers
    store = pipeline.load_store(cfg)
    split = pipeline.make_splits(store, cfg.split_ratios, cfg.seed("split_seed"))
    encoder = pipeline.make_encoder(cfg, store)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    template = "center" if cfg.template == "none" else cfg.template
    seed = cfg.seed("encode_seed")
    for part in pipeline.SPLIT_PARTS:
        nodes = split.nodes(part)
        path = out_dir / f"sequences-{template}-{part}.llga"
        start = time.perf_counter()
        header = pipeline.encode_nodes_to_file(path, encoder, nodes, seed, workers=cfg.workers)
        elapsed = time.perf_counter() - start
        rate = header.sample_count / elapsed if elapsed > 0 else float("inf")
        print(
            f"{path}: samples={header.sample_count} seq_len={header.seq_len} "
            f"row_width={header.row_width} ({rate:.0f} nodes/s)"
        )
    return 0


def _cmd_tasks(args) -> int:
    cfg = load_config(args.config)
    if args.task:
        aliases = {"nc": "node_classification", "lp": "link_prediction", "nd": "node_description"}
        cfg.tasks = (aliases[args.task],)
    ctx = pipeline.build_context(cfg)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    short = {"node_classification": "nc", "link_prediction": "lp", "node_description": "nd"}
    for task in cfg.tasks:
        for part in ("train", "test"):
            samples = pipeline.build_task_samples(
                cfg, ctx.store, ctx.split, ctx.tok, ctx.encoder, task, part
            )
            records = pipeline.task_records(samples)
            header = SequenceHeader(
                template_code=ctx.encoder.template_code,
                feature_dim=ctx.encoder.feats.dim,
                lap_dim=ctx.encoder.lap_dim,
                seq_len=ctx.encoder.seq_len,
                sample_count=0,
                seed=cfg.seed("encode_seed"),
            )
            seq_path = out_dir / f"tasks-{short[task]}-{part}.llga"
            write_sequences(seq_path, header, records)
            dump_path = out_dir / f"prompts-{short[task]}-{part}.txt"
            dump_path.write_text(
                pipeline.dump_samples(cfg, ctx.store, ctx.split, ctx.encoder, task, part),
                encoding="utf-8",
            )
            print(f"{seq_path}: samples={len(records)}; prompts -> {dump_path}")
    return 0


def _cmd_train(args) -> int:
    cfg = load_config(args.config)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ctx, trained, curve = pipeline.train_pipeline(cfg)
    checkpoint = Path(args.checkpoint_out) if args.checkpoint_out else out_dir / "projector.lgpj"
    projector.save_weights(checkpoint, trained)
    log_path = out_dir / "train.log"
    pipeline.write_train_log(log_path, curve)
    first = curve.losses[0] if curve.losses else float("nan")
    last = curve.losses[-1] if curve.losses else float("nan")
    print(f"steps={curve.steps} first_loss={first:.4f} last_loss={last:.4f} -> {checkpoint}")
    return 0


def _cmd_eval(args) -> int:
    cfg = load_config(args.config)
    params = projector.load_weights(args.checkpoint)
    results = pipeline.eval_pipeline(cfg, params)
    for (task, part), accuracy in results.items():
        print(f"{task}\t{part}\t{accuracy:.4f}")
    return 0


def _cmd_inspect(args) -> int:
    if args.path:
        paths = [Path(args.path)]
    elif args.config:
        cfg = load_config(args.config)
        paths = sorted(Path(cfg.out_dir).glob("*.llga"))
        if not paths:
            print(f"error: no .llga files in {cfg.out_dir}", file=sys.stderr)
            return 1
    else:
        print("error: inspect needs a path or --config", file=sys.stderr)
        return 1
    for path in paths:
        header, records = read_sequences(path)
        print(
            f"{path}: template={header.template} feature_dim={header.feature_dim} "
            f"lap_dim={header.lap_dim} seq_len={header.seq_len} "
            f"sample_count={header.sample_count} seed={header.seed} "
            f"checksum={header.checksum:#010x}"
        )
        for i, record in enumerate(records):
            if i >= args.records:
                break
            task = TASK_NAMES.get(record.task_code, str(record.task_code))
            print(
                f"record {i}: centers={list(record.centers)} task={task} "
                f"pads={int(record.pad_mask.sum())}/{record.pad_mask.size} "
                f"rows={record.rows.shape[0]}x{record.rows.shape[1]}"
            )
    return 0


_COMMANDS = {
    "ingest": _cmd_ingest,
    "encode": _cmd_encode,
    "tasks": _cmd_tasks,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "inspect": _cmd_inspect,
}


def cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_:  # argparse already printed usage
        return int(exit_.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except LlgaError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli())


if __name__ == "__main__":
    main()
