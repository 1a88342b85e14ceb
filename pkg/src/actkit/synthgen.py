#!/usr/bin/env python
from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import NamedTuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from actkit._utils import (
    FLOAT_DTYPE,
    LABEL_DTYPE,
    STREAM_GEOMETRY,
    STREAM_SOURCE,
    STREAM_TARGET,
    format_float,
    make_rng,
    read_array,
    read_header,
    write_header,
)
from actkit.downstream import LabeledSet
from actkit.exceptions import DataError

# this_file: src/actkit/synthgen.py
"""Synthetic source and target domains with known structure.

Class k is the uniform ball of radius ``class_radius`` around
``center_separation · u_k``, where u_0 … u_{K-1} are orthonormal. The target
translates every class by its own fixed vector of length ``shift_rho`` and
moves the class priors by ±``shift_eta``, with +η on the even labels 0, 2, ….
Labels are 0-based: the first class is label 0.
"""

logger = logging.getLogger(__name__)

DATASET_MAGIC = "actkit-dataset"


class SyntheticConfig(BaseModel):
    """Knobs of the synthetic domains."""

    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    d: int = Field(20, ge=1)
    n_classes: int = Field(4, ge=2, alias="K")
    n_s: int = Field(2000, ge=1)
    n_t: int = Field(40, ge=1)
    n_test: int = Field(400, ge=1)
    class_radius: float = Field(1.0, ge=0.0)
    center_separation: float = Field(3.0, gt=0.0)
    shift_rho: float = Field(0.05, ge=0.0)
    shift_eta: float = Field(0.05, ge=0.0)
    seed: int = 0

    @model_validator(mode="after")
    def _check_geometry(self) -> SyntheticConfig:
        if self.n_classes > self.d:
            msg = f"K={self.n_classes} orthogonal class axes need d >= K, got d={self.d}"
            raise ValueError(msg)
        if self.center_separation <= 2.0 * self.class_radius:
            msg = (
                f"center_separation={self.center_separation} must exceed 2·class_radius={2.0 * self.class_radius}"
                " for disjoint classes"
            )
            raise ValueError(msg)
        if self.shift_eta >= 1.0 / self.n_classes:
            msg = f"shift_eta={self.shift_eta} must stay below 1/K={1.0 / self.n_classes} for valid target priors"
            raise ValueError(msg)
        return self


class Geometry(NamedTuple):
    """Class centers (K×d) and per-class target translations (K×d)."""

    centers: np.ndarray
    shifts: np.ndarray


class TargetSplit(NamedTuple):
    labeled: LabeledSet
    test: LabeledSet


def source_priors(cfg: SyntheticConfig) -> np.ndarray:
    return np.full(cfg.n_classes, 1.0 / cfg.n_classes)


def target_priors(cfg: SyntheticConfig) -> np.ndarray:
    """Uniform priors moved by +η, −η, +η, … from label 0 on, then renormalized."""
    signs = np.where(np.arange(cfg.n_classes) % 2 == 0, 1.0, -1.0)
    priors = source_priors(cfg) + cfg.shift_eta * signs
    if np.any(priors <= 0):
        msg = f"shift_eta={cfg.shift_eta} leaves a nonpositive target prior"
        raise DataError(msg)
    return priors / priors.sum()


def class_geometry(cfg: SyntheticConfig, seed: int | None = None) -> Geometry:
    """Orthonormal class axes from a QR factorization, plus unit shift directions scaled by ρ."""
    rng = make_rng(cfg.seed if seed is None else seed, STREAM_GEOMETRY)
    q, r = np.linalg.qr(rng.standard_normal((cfg.d, cfg.n_classes)))
    # fix column signs so the frame does not depend on the QR convention
    q = q * np.where(np.diag(r) < 0, -1.0, 1.0)
    centers = cfg.center_separation * q.T
    directions = rng.standard_normal((cfg.n_classes, cfg.d))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    return Geometry(centers, cfg.shift_rho * directions)


def uniform_ball(rng: np.random.Generator, n: int, d: int, radius: float) -> np.ndarray:
    """n points uniform in the d-dimensional ball of the given radius."""
    if radius == 0.0:
        return np.zeros((n, d))
    directions = rng.standard_normal((n, d))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    return directions * (radius * rng.uniform(size=(n, 1)) ** (1.0 / d))


def _draw(
    rng: np.random.Generator,
    n: int,
    priors: np.ndarray,
    centers: np.ndarray,
    radius: float,
) -> LabeledSet:
    labels = rng.choice(priors.shape[0], size=n, p=priors)
    samples = centers[labels] + uniform_ball(rng, n, centers.shape[1], radius)
    return LabeledSet(samples, labels, priors.shape[0])


def generate_source(cfg: SyntheticConfig, seed: int | None = None) -> LabeledSet:
    """n_s source samples; labels are latent and only used for diagnostics."""
    seed = cfg.seed if seed is None else seed
    geometry = class_geometry(cfg, seed)
    data = _draw(make_rng(seed, STREAM_SOURCE), cfg.n_s, source_priors(cfg), geometry.centers, cfg.class_radius)
    logger.debug("generated %d source samples, class counts %s", cfg.n_s, data.class_counts().tolist())
    return data


def generate_target(cfg: SyntheticConfig, seed: int | None = None) -> TargetSplit:
    """n_t labeled few-shot target samples and a disjoint n_test test set."""
    seed = cfg.seed if seed is None else seed
    geometry = class_geometry(cfg, seed)
    rng = make_rng(seed, STREAM_TARGET)
    priors = target_priors(cfg)
    shifted = geometry.centers + geometry.shifts
    labeled = _draw(rng, cfg.n_t, priors, shifted, cfg.class_radius)
    test = _draw(rng, cfg.n_test, priors, shifted, cfg.class_radius)
    return TargetSplit(labeled, test)


# -- dataset files --------------------------------------------------------------


class Dataset(NamedTuple):
    samples: np.ndarray
    labels: np.ndarray | None
    n_classes: int

    def labeled(self) -> LabeledSet:
        if self.labels is None:
            msg = "dataset carries no labels"
            raise DataError(msg)
        return LabeledSet(self.samples, self.labels, self.n_classes)


def write_dataset(path: str | Path, samples: np.ndarray, labels: np.ndarray | None, n_classes: int) -> Path:
    """Text header, row-major little-endian float64 samples, then int64 labels."""
    path = Path(path)
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as handle:
        n, d = samples.shape
        write_header(handle, DATASET_MAGIC, {"n": n, "d": d, "K": n_classes, "has_labels": int(labels is not None)})
        handle.write(np.ascontiguousarray(samples, dtype=FLOAT_DTYPE).tobytes())
        if labels is not None:
            handle.write(np.ascontiguousarray(labels, dtype=LABEL_DTYPE).tobytes())
    return path


def read_dataset(path: str | Path) -> Dataset:
    path = Path(path)
    if not path.is_file():
        msg = f"dataset not found: {path}"
        raise DataError(msg)
    with path.open("rb") as handle:
        header = read_header(handle, DATASET_MAGIC, path)
        try:
            n, d, k = int(header["n"]), int(header["d"]), int(header["K"])
            has_labels = header["has_labels"] == "1"
        except (KeyError, ValueError) as e:
            msg = f"{path}: incomplete dataset header ({e})"
            raise DataError(msg) from e
        samples = read_array(handle, n * d, FLOAT_DTYPE, path).reshape(n, d)
        labels = read_array(handle, n, LABEL_DTYPE, path) if has_labels else None
    return Dataset(samples, labels, k)


def write_dataset_csv(path: str | Path, data: LabeledSet) -> Path:
    """Columns ``x0 … x{d-1}, label``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow([*(f"x{j}" for j in range(data.samples.shape[1])), "label"])
        for row, label in zip(data.samples, data.labels, strict=True):
            writer.writerow([*(format_float(v) for v in row), int(label)])
    return path


def read_dataset_csv(path: str | Path, n_classes: int | None = None) -> LabeledSet:
    path = Path(path)
    if not path.is_file():
        msg = f"dataset not found: {path}"
        raise DataError(msg)
    with path.open(encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if not header or header[-1] != "label":
            msg = f"{path}: expected a header ending in 'label'"
            raise DataError(msg)
        try:
            rows = [([float(v) for v in row[:-1]], int(row[-1])) for row in reader if row]
        except ValueError as e:
            msg = f"{path}: {e}"
            raise DataError(msg) from e
    samples = np.array([r[0] for r in rows], dtype=np.float64).reshape(len(rows), len(header) - 1)
    labels = np.array([r[1] for r in rows], dtype=np.int64)
    k = int(labels.max()) + 1 if n_classes is None else n_classes
    return LabeledSet(samples, labels, k)
