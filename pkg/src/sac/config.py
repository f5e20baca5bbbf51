"""JSON run configuration: one document for data paths and all module knobs.

Every key is validated before any file is touched; unknown keys are
rejected so typos fail loudly instead of silently using a default.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .evaluator import EvalConfig
from .encoder import EncoderConfig
from .negatives import WalkConfig
from .objectives import LossConfig
from .sampler import ConfigError, SamplerConfig
from .trainer import TrainConfig


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    train_edges: str | None = None
    test_edges: str | None = None
    checkpoint_dir: str | None = None
    export_path: str | None = None
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)


_PATH_KEYS = ("train_edges", "test_edges", "checkpoint_dir", "export_path")
_SECTIONS = {
    "sampler": SamplerConfig,
    "walk": WalkConfig,
    "loss": LossConfig,
    "encoder": EncoderConfig,
    "eval": EvalConfig,
}
_TRAIN_KEYS = (
    "batch_size",
    "learning_rate",
    "epochs",
    "checkpoint_interval",
    "items_as_targets",
    "workers",
    "dtype",
)


def _build_section(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"config section '{where}' must be an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown config key '{where}.{unknown[0]}'")
    kwargs = dict(data)
    if "fanouts" in kwargs:
        if not isinstance(kwargs["fanouts"], list):
            raise ConfigError(f"'{where}.fanouts' must be a list of integers")
        kwargs["fanouts"] = tuple(kwargs["fanouts"])
    try:
        return cls(**kwargs)
    except TypeError as e:
        raise ConfigError(f"config section '{where}': {e}") from None


def parse_run_config(doc: dict, seed_override: int | None = None) -> RunConfig:
    """Build and fully validate a RunConfig from a parsed JSON document."""
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    allowed = {"seed", "paths", "train", *_SECTIONS}
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise ConfigError(f"unknown config key '{unknown[0]}'")

    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")
    if seed_override is not None:
        seed = seed_override

    paths = doc.get("paths", {})
    if not isinstance(paths, dict):
        raise ConfigError("config section 'paths' must be an object")
    unknown = sorted(set(paths) - set(_PATH_KEYS))
    if unknown:
        raise ConfigError(f"unknown config key 'paths.{unknown[0]}'")
    for key, val in paths.items():
        if val is not None and not isinstance(val, str):
            raise ConfigError(f"'paths.{key}' must be a string")

    sections = {}
    for name, cls in _SECTIONS.items():
        sections[name] = _build_section(cls, doc.get(name, {}), name)

    train_doc = doc.get("train", {})
    if not isinstance(train_doc, dict):
        raise ConfigError("config section 'train' must be an object")
    unknown = sorted(set(train_doc) - set(_TRAIN_KEYS))
    if unknown:
        raise ConfigError(f"unknown config key 'train.{unknown[0]}'")

    try:
        train_cfg = TrainConfig(
            sampler=sections["sampler"],
            walk=sections["walk"],
            loss=sections["loss"],
            encoder=sections["encoder"],
            seed=seed,
            **train_doc,
        )
        train_cfg.validate()
        sections["eval"].validate()
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(str(e)) from None
    return RunConfig(
        seed=seed,
        train_edges=paths.get("train_edges"),
        test_edges=paths.get("test_edges"),
        checkpoint_dir=paths.get("checkpoint_dir"),
        export_path=paths.get("export_path"),
        train=train_cfg,
        eval=sections["eval"],
    )


def load_run_config(path, seed_override: int | None = None) -> RunConfig:
    """Read, parse and validate a JSON config file."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {e}") from None
    return parse_run_config(doc, seed_override)
