#!/usr/bin/env python
from __future__ import annotations

import logging
from functools import lru_cache
from typing import TYPE_CHECKING

import numpy as np

from actkit.exceptions import DataError

if TYPE_CHECKING:
    from pathlib import Path

# this_file: src/actkit/_utils.py
"""Internal utilities for actkit package.

This module contains shared helpers used internally by actkit modules:
seeded generators, logging setup, and the little-endian binary layout
shared by checkpoints and dataset files. These functions are private to
the package and not part of the public API.
"""

FLOAT_DTYPE = np.dtype("<f8")
LABEL_DTYPE = np.dtype("<i8")

# Spawn keys keep independent draws apart for a single user seed
STREAM_SOURCE = 0
STREAM_TARGET = 1
STREAM_TRAIN = 2
STREAM_PROBE = 3
STREAM_DIAGNOSTICS = 4
STREAM_GEOMETRY = 5


def make_rng(seed: int, stream: int | None = None) -> np.random.Generator:
    """Create a PCG64 generator for a seed, optionally on a named stream."""
    if stream is None:
        return np.random.default_rng(seed)
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream,)))


@lru_cache(maxsize=32)
def identity(n: int) -> np.ndarray:
    """Read-only n×n identity, cached per size."""
    eye = np.eye(n, dtype=np.float64)
    eye.setflags(write=False)
    return eye


def configure_logging(*, verbose: bool = False) -> None:
    """Route package logs through a rich handler.

    Only the CLI calls this; library users keep control of their own handlers.
    """
    from rich.logging import RichHandler

    level = logging.DEBUG if verbose else logging.INFO
    logger = logging.getLogger("actkit")
    logger.handlers.clear()
    logger.addHandler(RichHandler(show_path=False, rich_tracebacks=False, markup=False))
    logger.setLevel(level)
    logger.propagate = False


def format_float(value: float) -> str:
    """Shortest round-trip text for a float, stable across platforms."""
    return repr(float(value))


def write_header(handle, magic: str, fields: dict[str, object]) -> None:
    """Write a one-line ``magic key=value ...`` header."""
    parts = [magic]
    for key, value in fields.items():
        text = format_float(value) if isinstance(value, float) else str(value)
        parts.append(f"{key}={text}")
    handle.write((" ".join(parts) + "\n").encode("utf-8"))


def read_header(handle, magic: str, path: Path) -> dict[str, str]:
    """Read and check a header written by :func:`write_header`."""
    line = handle.readline().decode("utf-8").strip()
    tokens = line.split()
    if not tokens or tokens[0] != magic:
        msg = f"{path}: not an {magic} file"
        raise DataError(msg)
    fields: dict[str, str] = {}
    for token in tokens[1:]:
        key, sep, value = token.partition("=")
        if not sep:
            msg = f"{path}: malformed header token '{token}'"
            raise DataError(msg)
        fields[key] = value
    return fields


def read_array(handle, count: int, dtype: np.dtype, path: Path) -> np.ndarray:
    """Read exactly ``count`` little-endian values."""
    raw = handle.read(count * dtype.itemsize)
    if len(raw) != count * dtype.itemsize:
        msg = f"{path}: truncated payload (expected {count} values)"
        raise DataError(msg)
    return np.frombuffer(raw, dtype=dtype).astype(dtype.newbyteorder("="), copy=True)
