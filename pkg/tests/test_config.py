"""Run-config parsing and validation tests."""

import json
from pathlib import Path

import pytest

from sac.config import load_run_config, parse_run_config
from sac.sampler import ConfigError

REPO = Path(__file__).resolve().parent.parent


def test_empty_document_gives_defaults():
    cfg = parse_run_config({})
    assert cfg.seed == 0
    assert cfg.train_edges is None
    assert cfg.export_path is None
    assert cfg.train.batch_size >= 1
    assert cfg.eval.k == 20


def test_unknown_top_level_key_rejected():
    with pytest.raises(ConfigError, match="unknown config key 'frobnicate'"):
        parse_run_config({"frobnicate": 1})


def test_unknown_section_key_rejected():
    with pytest.raises(ConfigError, match="sampler.bogus"):
        parse_run_config({"sampler": {"bogus": 3}})


def test_unknown_train_key_rejected():
    with pytest.raises(ConfigError, match="train.momentum"):
        parse_run_config({"train": {"momentum": 0.9}})


def test_unknown_path_key_and_non_string_path_rejected():
    with pytest.raises(ConfigError, match="paths.scratch"):
        parse_run_config({"paths": {"scratch": "/tmp/x"}})
    with pytest.raises(ConfigError, match="must be a string"):
        parse_run_config({"paths": {"train_edges": 7}})


def test_seed_validation_and_override():
    for bad in (-1, True, "5", 1.5):
        with pytest.raises(ConfigError, match="seed"):
            parse_run_config({"seed": bad})
    assert parse_run_config({"seed": 3}).seed == 3
    assert parse_run_config({"seed": 3}, seed_override=9).seed == 9
    assert parse_run_config({"seed": 3}, seed_override=9).train.seed == 9


def test_fanouts_list_becomes_tuple():
    cfg = parse_run_config({"sampler": {"hops": 2, "fanouts": [3, 5]}})
    assert cfg.train.sampler.fanouts == (3, 5)
    with pytest.raises(ConfigError, match="fanouts"):
        parse_run_config({"sampler": {"fanouts": "3,5"}})


def test_module_invariants_surface_as_config_errors():
    with pytest.raises(ConfigError, match="temperature"):
        parse_run_config({"loss": {"temperature": 0.0}})
    with pytest.raises(ConfigError, match="batch_size"):
        parse_run_config({"train": {"batch_size": 0}})
    with pytest.raises(ConfigError, match="eval.k"):
        parse_run_config({"eval": {"k": 0}})


def test_section_must_be_object():
    with pytest.raises(ConfigError, match="must be an object"):
        parse_run_config({"walk": [1, 2]})
    with pytest.raises(ConfigError, match="root"):
        parse_run_config([])


def test_paths_round_trip_through_file(tmp_path):
    doc = {
        "seed": 4,
        "paths": {
            "train_edges": "a.tsv",
            "test_edges": "b.tsv",
            "checkpoint_dir": "ck",
            "export_path": "emb.bin",
        },
    }
    p = tmp_path / "run.json"
    p.write_text(json.dumps(doc))
    cfg = load_run_config(p)
    assert cfg.train_edges == "a.tsv"
    assert cfg.test_edges == "b.tsv"
    assert cfg.checkpoint_dir == "ck"
    assert cfg.export_path == "emb.bin"


def test_missing_file_and_bad_json_raise_config_error(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_run_config(tmp_path / "absent.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_run_config(bad)


def test_bundled_toy_config_parses():
    cfg = load_run_config(REPO / "configs" / "toy.json")
    assert cfg.train.encoder.dim == 16
    assert cfg.train.epochs == 250
    assert cfg.train.sampler.fanouts == (6, 6)
    assert cfg.export_path == "runs/toy/embeddings.tsv"
    assert cfg.eval.k == 20
