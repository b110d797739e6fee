"""Flat key=value run configuration shared by every CLI subcommand.

Unknown keys are rejected. Seeds must be explicit: a missing *_seed key
falls back to the LLGA_SEED environment variable and errors if that is
unset too.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields

from .errors import ConfigError

SEED_ENV_VAR = "LLGA_SEED"

_TASK_ALIASES = {"nc": "node_classification", "lp": "link_prediction", "nd": "node_description"}


def _parse_bool(value: str) -> bool:
    if value not in ("true", "false"):
        raise ConfigError(f"expected true/false, got {value!r}")
    return value == "true"


def _parse_int_list(value: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in value.split(",") if x != "")
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {value!r}") from None


def _parse_float_list(value: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in value.split(",") if x != "")
    except ValueError:
        raise ConfigError(f"expected comma-separated reals, got {value!r}") from None


def _parse_replicate(value: str) -> dict[str, int]:
    out: dict[str, int] = {}
    if not value:
        return out
    for item in value.split(","):
        name, _, count = item.partition(":")
        if not name or not count.isdigit():
            raise ConfigError(f"expected name:count entries, got {value!r}")
        out[name] = int(count)
    return out


def _parse_tasks(value: str) -> tuple[str, ...]:
    tasks = []
    for item in value.split(","):
        item = item.strip()
        if item not in _TASK_ALIASES:
            raise ConfigError(f"unknown task {item!r} (expected nc, lp, nd)")
        tasks.append(_TASK_ALIASES[item])
    return tuple(tasks)


@dataclass
class RunConfig:
    # dataset
    edges: str = ""
    num_nodes: int = 0
    features: str = ""
    labels: str = ""
    categories: str = ""
    node_texts: str = ""
    dataset_name: str = "default"
    out_dir: str = "."
    # encoding
    template: str = "nd"
    branching: tuple[int, ...] = (10, 10)
    num_hops: int = 4
    encode_seed: int | None = None
    workers: int = 1
    # splits and task sampling
    split_ratios: tuple[float, ...] = (6.0, 2.0, 2.0)
    split_seed: int | None = None
    tasks: tuple[str, ...] = ("node_classification",)
    link_pairs: int = 0  # 0 = match the train-node count
    eval_pairs: int = 100
    domain_word: str = "paper"
    include_center_text: bool = False
    # training
    lr: float = 2e-5
    batch_size: int = 16
    epochs: int = 1
    optimizer: str = "adam"
    train_seed: int | None = None
    decoder_seed: int | None = None
    decoder_dim: int = 64
    hidden_dim: int = 64
    replicate: dict[str, int] | None = None

    def __post_init__(self):
        if self.replicate is None:
            self.replicate = {}
        if self.template not in ("nd", "ho", "none"):
            raise ConfigError(f"template must be nd, ho, or none; got {self.template!r}")
        if len(self.split_ratios) != 3:
            raise ConfigError("split_ratios must hold three values")

    def seed(self, name: str) -> int:
        """Explicit seed or the LLGA_SEED fallback; error if neither is set."""
        value = getattr(self, name)
        if value is not None:
            return value
        env = os.environ.get(SEED_ENV_VAR)
        if env is None:
            raise ConfigError(f"{name} is not set and {SEED_ENV_VAR} is unset")
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {env!r}") from None


_PARSERS = {
    "num_nodes": int,
    "branching": _parse_int_list,
    "num_hops": int,
    "encode_seed": int,
    "workers": int,
    "split_ratios": _parse_float_list,
    "split_seed": int,
    "tasks": _parse_tasks,
    "link_pairs": int,
    "eval_pairs": int,
    "include_center_text": _parse_bool,
    "lr": float,
    "batch_size": int,
    "epochs": int,
    "train_seed": int,
    "decoder_seed": int,
    "decoder_dim": int,
    "hidden_dim": int,
    "replicate": _parse_replicate,
}

_KNOWN_KEYS = {f.name for f in fields(RunConfig)}


def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    values: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, value = stripped.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {stripped!r}")
        if key not in _KNOWN_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        parser = _PARSERS.get(key, str)
        try:
            values[key] = parser(value)
        except ConfigError as err:
            raise ConfigError(f"{source}:{lineno}: {err}") from None
    return RunConfig(**values)


def load_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_config_text(fh.read(), source=str(path))
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err.strerror}") from None
