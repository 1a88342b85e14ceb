#!/usr/bin/env python
from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from actkit.act_core import TrainConfig
from actkit.augmentation import AugmentationSet, TransformKind
from actkit.encoder import EncoderParams, init_params
from actkit.exceptions import ConfigurationError
from actkit.synthgen import SyntheticConfig

# this_file: src/actkit/config.py
"""Flat ``key = value`` experiment files.

One setting per line, ``#`` starts a comment and blank lines are ignored.
Only ``seed`` is required; every other key defaults to the reference
experiment. Unknown and repeated keys are rejected with the offending line.
"""

logger = logging.getLogger(__name__)

# twenty noise offsets make the differences between views span every input direction
DEFAULT_AUGMENTATIONS = "noise:0.3:11-30, mask:0.2:31, smooth:0.5:32"


def _seed_range(text: str, item: str) -> range:
    first, sep, last = text.partition("-")
    if not sep:
        seed = int(text)
        return range(seed, seed + 1)
    start, stop = int(first), int(last)
    if stop < start:
        msg = f"augmentation '{item}' has an empty seed range"
        raise ValueError(msg)
    return range(start, stop + 1)


def parse_augmentations(text: str) -> tuple[tuple[str, float, int], ...]:
    """Parse ``kind:param:seed, ...`` into triples.

    ``kind:param:first-last`` stands for one transform per seed in the
    inclusive range.
    """
    specs = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        parts = item.split(":")
        if len(parts) != 3:
            msg = f"augmentation '{item}' is not kind:param:seed"
            raise ValueError(msg)
        kind, param, seeds = (p.strip() for p in parts)
        TransformKind(kind)
        specs.extend((kind, float(param), seed) for seed in _seed_range(seeds, item))
    if not specs:
        msg = "at least one augmentation is required"
        raise ValueError(msg)
    return tuple(specs)


class ExperimentConfig(BaseModel):
    """Every setting of one experiment."""

    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    seed: int

    # data
    d: int = Field(20, ge=1)
    n_classes: int = Field(4, ge=2, alias="K")
    n_s: int = Field(2000, ge=1)
    n_t: int = Field(40, ge=1)
    n_test: int = Field(400, ge=1)
    class_radius: float = Field(1.0, ge=0.0)
    center_separation: float = Field(3.0, gt=0.0)
    shift_rho: float = Field(0.05, ge=0.0)
    shift_eta: float = Field(0.05, ge=0.0)

    # encoder
    width: int = Field(64, ge=1)
    depth: int = Field(2, ge=1)
    d_star: int = Field(8, ge=1)
    b1: float = Field(1.0, gt=0.0)
    b2: float = Field(1.0, gt=0.0)
    kappa_budget: float = Field(math.inf, gt=0.0)

    # training
    lam: float = Field(5.0, ge=0.0, alias="lambda")
    learning_rate: float = Field(3e-3, gt=0.0)
    epochs: int = Field(200, ge=0)
    batch_size: int = Field(128, ge=1)
    standardize: bool = True
    inner_update: Literal["per_batch", "full_data"] = "per_batch"
    weight_decay: float = Field(1e-6, ge=0.0)
    optimizer: Literal["sgd", "adam"] = "adam"
    project: bool = True
    kappa_projection: bool = False
    checkpoint_every: int = Field(0, ge=0)
    log_every: int = Field(10, ge=1)

    augmentations: str = DEFAULT_AUGMENTATIONS

    # evaluation and diagnostics
    knn_k: int = Field(5, ge=1)
    epsilon: float = Field(0.5, gt=0.0)
    epsilon_min: float = Field(0.05, gt=0.0)
    epsilon_max: float = Field(2.0, gt=0.0)
    epsilon_count: int = Field(10, ge=1)
    quality_per_class: int = Field(64, ge=2)
    trim_quantile: float = Field(0.0, ge=0.0, lt=1.0)

    output_dir: str = "runs"

    @field_validator("augmentations")
    @classmethod
    def _check_augmentations(cls, value: str) -> str:
        parse_augmentations(value)
        return value

    @model_validator(mode="after")
    def _check_consistency(self) -> ExperimentConfig:
        if self.b1 > self.b2:
            msg = f"b1={self.b1} must not exceed b2={self.b2}"
            raise ValueError(msg)
        if self.width < max(self.d, self.d_star):
            msg = f"width={self.width} must be at least max(d, d_star)={max(self.d, self.d_star)}"
            raise ValueError(msg)
        if self.epsilon_min > self.epsilon_max:
            msg = f"epsilon_min={self.epsilon_min} exceeds epsilon_max={self.epsilon_max}"
            raise ValueError(msg)
        # builds the nested configs so their own checks surface here
        try:
            self.synthetic()
            self.train_config()
        except ValidationError as e:
            msg = "; ".join(str(error["msg"]) for error in e.errors())
            raise ValueError(msg) from e
        return self

    def synthetic(self) -> SyntheticConfig:
        return SyntheticConfig(
            d=self.d,
            n_classes=self.n_classes,
            n_s=self.n_s,
            n_t=self.n_t,
            n_test=self.n_test,
            class_radius=self.class_radius,
            center_separation=self.center_separation,
            shift_rho=self.shift_rho,
            shift_eta=self.shift_eta,
            seed=self.seed,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            lam=self.lam,
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
            d_star=self.d_star,
            standardize=self.standardize,
            inner_update=self.inner_update,
            weight_decay=self.weight_decay,
            optimizer=self.optimizer,
            project=self.project,
            kappa_projection=self.kappa_projection,
            checkpoint_every=self.checkpoint_every,
            log_every=self.log_every,
            seed=self.seed,
        )

    def augmentation_set(self) -> AugmentationSet:
        return AugmentationSet.from_specs(parse_augmentations(self.augmentations), self.d)

    def initial_encoder(self) -> EncoderParams:
        return init_params(
            self.d,
            self.d_star,
            self.width,
            self.depth,
            self.seed,
            kappa_budget=self.kappa_budget,
            b1=self.b1,
            b2=self.b2,
        )

    @property
    def output_path(self) -> Path:
        return Path(self.output_dir)


def _known_keys() -> set[str]:
    keys = set()
    for name, info in ExperimentConfig.model_fields.items():
        keys.add(info.alias or name)
    return keys


def parse_lines(text: str, source: str = "<string>") -> tuple[dict[str, str], dict[str, int]]:
    """Split a config document into values and the line that set each key."""
    values: dict[str, str] = {}
    lines: dict[str, int] = {}
    known = _known_keys()
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            msg = f"{source}: expected 'key = value', got '{raw.strip()}'"
            raise ConfigurationError(msg, line=number)
        if key not in known:
            msg = f"{source}: unknown key '{key}'"
            raise ConfigurationError(msg, key=key, line=number)
        if key in values:
            msg = f"{source}: key '{key}' repeats line {lines[key]}"
            raise ConfigurationError(msg, key=key, line=number)
        values[key] = value
        lines[key] = number
    return values, lines


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    """Validate a config document.

    Raises:
        ConfigurationError: With the 1-based line of the offending key when
            one can be named.
    """
    values, lines = parse_lines(text, source)
    try:
        return ExperimentConfig.model_validate(values)
    except ValidationError as e:
        error = e.errors()[0]
        loc = error["loc"]
        key = str(loc[0]) if loc else None
        if error["type"] == "missing":
            msg = f"{source}: missing required key '{key}'"
            raise ConfigurationError(msg, key=key) from e
        detail = error["msg"]
        if key in lines:
            msg = f"{source}: invalid value for '{key}': {detail}"
            raise ConfigurationError(msg, key=key, line=lines[key]) from e
        msg = f"{source}: {detail}"
        raise ConfigurationError(msg) from e


def load_config(path: str | Path) -> ExperimentConfig:
    """Read and validate an experiment file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        msg = f"cannot read config {path}: {e}"
        raise ConfigurationError(msg) from e
    config = parse_config(text, str(path))
    logger.debug("loaded %s", path)
    return config
