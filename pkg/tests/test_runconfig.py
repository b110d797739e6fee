import pytest

from llga.errors import ConfigError
from llga.runconfig import RunConfig, load_config, parse_config_text


def test_parse_full_config(tmp_path):
    text = """
# toy run
edges=graph.txt
num_nodes=10
features=feats.lgfm
template=ho
num_hops=3
split_ratios=6,2,2
split_seed=1
encode_seed=2
train_seed=3
decoder_seed=4
tasks=nc,lp
lr=0.01
batch_size=8
replicate=tiny:3
include_center_text=false
"""
    cfg = parse_config_text(text)
    assert cfg.template == "ho" and cfg.num_hops == 3
    assert cfg.tasks == ("node_classification", "link_prediction")
    assert cfg.replicate == {"tiny": 3}
    assert cfg.seed("split_seed") == 1 and cfg.seed("decoder_seed") == 4


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config_text("edges=x\nbogus_key=1\n")


def test_duplicate_key_rejected():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config_text("num_nodes=1\nnum_nodes=2\n")


def test_malformed_line_reports_number():
    with pytest.raises(ConfigError, match=":3:"):
        parse_config_text("edges=x\n# fine\nnot a pair\n")


def test_bad_bool():
    with pytest.raises(ConfigError, match="true/false"):
        parse_config_text("include_center_text=yes\n")


def test_bad_task():
    with pytest.raises(ConfigError, match="unknown task"):
        parse_config_text("tasks=nc,xyz\n")


def test_seed_env_fallback(monkeypatch):
    cfg = parse_config_text("edges=x\n")
    monkeypatch.delenv("LLGA_SEED", raising=False)
    with pytest.raises(ConfigError, match="LLGA_SEED"):
        cfg.seed("train_seed")
    monkeypatch.setenv("LLGA_SEED", "77")
    assert cfg.seed("train_seed") == 77


def test_explicit_seed_wins_over_env(monkeypatch):
    monkeypatch.setenv("LLGA_SEED", "77")
    cfg = parse_config_text("train_seed=5\n")
    assert cfg.seed("train_seed") == 5


def test_bad_template():
    with pytest.raises(ConfigError, match="template"):
        parse_config_text("template=tree\n")


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "nope.cfg")


def test_defaults_match_reference_settings():
    cfg = RunConfig()
    assert cfg.lr == 2e-5
    assert cfg.batch_size == 16
    assert cfg.epochs == 1
    assert cfg.branching == (10, 10)
    assert cfg.num_hops == 4
