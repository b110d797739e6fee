import struct

import numpy as np
import pytest


def write_sbm_dataset(
    out_dir,
    num_nodes=60,
    p_in=0.3,
    p_cross=0.05,
    noise=0.1,
    dim=8,
    seed=0,
    names=("crimson", "azure"),
):
    """Two-block benchmark dataset on disk in the package's input formats."""
    rng = np.random.Generator(np.random.PCG64(seed))
    block = np.zeros(num_nodes, dtype=int)
    block[num_nodes // 2 :] = 1
    iu, ju = np.triu_indices(num_nodes, k=1)
    prob = np.where(block[iu] == block[ju], p_in, p_cross)
    keep = rng.random(iu.size) < prob

    edges = out_dir / "edges.txt"
    with open(edges, "w") as fh:
        for u, v in zip(iu[keep], ju[keep]):
            fh.write(f"{u}\t{v}\n")

    feats = rng.normal(0.0, noise, size=(num_nodes, dim))
    feats[np.arange(num_nodes), block] += 1.0
    features = out_dir / "feats.lgfm"
    with open(features, "wb") as fh:
        fh.write(struct.pack("<4sIII", b"LGFM", 1, num_nodes, dim))
        fh.write(feats.astype("<f4").tobytes())

    labels = out_dir / "labels.txt"
    labels.write_text("".join(f"{v}\t{block[v]}\n" for v in range(num_nodes)))
    categories = out_dir / "categories.txt"
    categories.write_text("".join(f"{name}\n" for name in names))
    texts = out_dir / "texts.txt"
    texts.write_text(
        "".join(f"a {names[block[v]]} item number {v}\n" for v in range(num_nodes))
    )
    return {
        "edges": edges,
        "features": features,
        "labels": labels,
        "categories": categories,
        "texts": texts,
        "block": block,
        "num_nodes": num_nodes,
    }


@pytest.fixture
def sbm_dataset(tmp_path):
    return write_sbm_dataset(tmp_path)


def config_text(paths, out_dir, **overrides):
    values = {
        "edges": paths["edges"],
        "num_nodes": paths["num_nodes"],
        "features": paths["features"],
        "labels": paths["labels"],
        "categories": paths["categories"],
        "node_texts": paths["texts"],
        "out_dir": out_dir,
        "template": "ho",
        "num_hops": 4,
        "split_ratios": "6,2,2",
        "split_seed": 0,
        "encode_seed": 0,
        "train_seed": 11,
        "decoder_seed": 7,
        "tasks": "nc,lp",
        "link_pairs": 20,
        "eval_pairs": 10,
        "lr": 0.05,
        "batch_size": 16,
        "epochs": 2,
        "decoder_dim": 32,
        "hidden_dim": 16,
    }
    values.update(overrides)
    return "".join(f"{key}={value}\n" for key, value in values.items())
