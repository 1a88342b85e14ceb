#!/usr/bin/env python
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

from actkit._utils import FLOAT_DTYPE, make_rng, read_array, read_header, write_header
from actkit.autodiff import Matrix, clamp_row_norms
from actkit.exceptions import ConfigurationError, DataError, NumericalError, ShapeError

if TYPE_CHECKING:
    from collections.abc import Iterator, Sequence

    from actkit.autodiff import Tape

# this_file: src/actkit/encoder.py
"""Norm-constrained ReLU encoders.

The network is

    φ_θ(x) = A_L σ(A_{L-1} σ(… σ(A_0 x + b_0) …) + b_{L-1})

followed by an optional radial projection of the output norm into
``[B1, B2]``. κ(θ) = ‖A_L‖_∞ · ∏ max{‖(A_l, b_l)‖_∞, 1} bounds the
∞-norm Lipschitz constant of φ_θ, and :func:`project_kappa` enforces
κ(θ) ≤ K by rescaling the last layer.
"""

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = "actkit-encoder"
_KAPPA_SLACK = 1e-12


def _inf_norm(matrix: np.ndarray) -> float:
    """Max row 1-norm."""
    return float(np.max(np.sum(np.abs(matrix), axis=1)))


@dataclass(frozen=True, eq=False)
class EncoderParams:
    """Parameters θ of an encoder in the class NN(W, L, K, B1, B2).

    ``weights`` holds A_0 … A_L (A_l is N_{l+1}×N_l) and ``biases`` holds
    b_0 … b_{L-1}. Arrays are stored as read-only float64 copies.
    """

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    kappa_budget: float = math.inf
    b1: float = 1.0
    b2: float = 1.0

    def __post_init__(self) -> None:
        weights = tuple(_frozen(w, 2) for w in self.weights)
        biases = tuple(_frozen(b, 1) for b in self.biases)
        if len(biases) < 1 or len(weights) != len(biases) + 1:
            msg = f"expected L>=1 biases and L+1 weight matrices, got {len(biases)} and {len(weights)}"
            raise ShapeError(msg)
        for index, (a, b) in enumerate(zip(weights[:-1], biases, strict=True)):
            if b.shape[0] != a.shape[0]:
                msg = f"layer {index}: bias length {b.shape[0]} does not match {a.shape[0]} rows"
                raise ShapeError(msg)
            if weights[index + 1].shape[1] != a.shape[0]:
                msg = f"layer {index + 1}: expects {weights[index + 1].shape[1]} inputs, previous layer gives {a.shape[0]}"
                raise ShapeError(msg)
        for arr in (*weights, *biases):
            if not np.all(np.isfinite(arr)):
                msg = "encoder parameters must be finite"
                raise NumericalError(msg)
        if not self.b2 > 0 or not 0 <= self.b1 <= self.b2:
            msg = f"norm bounds need 0 <= B1 <= B2 and B2 > 0, got B1={self.b1}, B2={self.b2}"
            raise ConfigurationError(msg)
        if not self.kappa_budget > 0:
            msg = f"kappa budget must be positive, got {self.kappa_budget}"
            raise ConfigurationError(msg)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "biases", biases)

    @property
    def depth(self) -> int:
        """L, the number of ReLU layers."""
        return len(self.biases)

    @property
    def width(self) -> int:
        """W, the widest hidden layer."""
        return max(b.shape[0] for b in self.biases)

    @property
    def d(self) -> int:
        return int(self.weights[0].shape[1])

    @property
    def d_star(self) -> int:
        return int(self.weights[-1].shape[0])

    @property
    def widths(self) -> tuple[int, ...]:
        """N_0 … N_{L+1}: input, hidden and output sizes."""
        return (self.d, *(b.shape[0] for b in self.biases), self.d_star)

    def layers(self) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        """Iterate over the hidden (A_l, b_l) pairs."""
        yield from zip(self.weights[:-1], self.biases, strict=True)

    def arrays(self) -> list[np.ndarray]:
        """Parameters in checkpoint order A_0, b_0, …, A_{L-1}, b_{L-1}, A_L."""
        out: list[np.ndarray] = []
        for a, b in self.layers():
            out.extend((a, b))
        out.append(self.weights[-1])
        return out

    def with_arrays(self, arrays: Sequence[np.ndarray]) -> EncoderParams:
        """Same architecture and bounds, new parameter values (checkpoint order)."""
        expected = 2 * self.depth + 1
        if len(arrays) != expected:
            msg = f"expected {expected} arrays, got {len(arrays)}"
            raise ShapeError(msg)
        weights = [np.asarray(arrays[i]) for i in range(0, expected - 1, 2)]
        biases = [np.asarray(arrays[i]).reshape(-1) for i in range(1, expected - 1, 2)]
        weights.append(np.asarray(arrays[-1]))
        for new, old in zip(weights, self.weights, strict=True):
            if new.shape != old.shape:
                msg = f"weight shape {new.shape} does not match {old.shape}"
                raise ShapeError(msg)
        return EncoderParams(tuple(weights), tuple(biases), self.kappa_budget, self.b1, self.b2)

    def __repr__(self) -> str:
        return (
            f"EncoderParams(d={self.d}, d_star={self.d_star}, W={self.width}, L={self.depth}, "
            f"K={self.kappa_budget}, B1={self.b1}, B2={self.b2})"
        )


def _frozen(values: np.ndarray, ndim: int) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != ndim:
        msg = f"expected a {ndim}-D array, got shape {arr.shape}"
        raise ShapeError(msg)
    arr.setflags(write=False)
    return arr


def init_params(
    d: int,
    d_star: int,
    width: int,
    depth: int,
    seed: int,
    *,
    kappa_budget: float = math.inf,
    b1: float = 1.0,
    b2: float = 1.0,
) -> EncoderParams:
    """Draw a fresh encoder with entries uniform in ±1/√fan_in.

    Args:
        d: Input dimension.
        d_star: Representation dimension.
        width: Hidden width W (every hidden layer has W units).
        depth: Number of ReLU layers L.
        seed: PRNG seed; the same seed gives bit-identical parameters.

    Raises:
        ConfigurationError: If W < max(d, d_star) or L < 1.
    """
    if d < 1 or d_star < 1:
        msg = f"dimensions must be positive, got d={d}, d_star={d_star}"
        raise ConfigurationError(msg)
    if depth < 1:
        msg = f"depth must be at least 1, got {depth}"
        raise ConfigurationError(msg)
    if width < max(d, d_star):
        msg = f"width {width} must be at least max(d, d_star) = {max(d, d_star)}"
        raise ConfigurationError(msg)

    rng = make_rng(seed)
    weights, biases = [], []
    fan_in = d
    for _ in range(depth):
        bound = 1.0 / math.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(width, fan_in)))
        biases.append(rng.uniform(-bound, bound, size=width))
        fan_in = width
    bound = 1.0 / math.sqrt(fan_in)
    weights.append(rng.uniform(-bound, bound, size=(d_star, fan_in)))
    return EncoderParams(tuple(weights), tuple(biases), kappa_budget, b1, b2)


def forward(params: EncoderParams, x: np.ndarray, *, project: bool = True) -> np.ndarray:
    """Evaluate the encoder on one sample (1-D) or a batch (rows are samples).

    With ``project`` the output norm is clamped into [B1, B2]; for the default
    B1 = B2 = 1 this is the radial map onto the unit sphere.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    h = np.atleast_2d(x)
    if h.shape[1] != params.d:
        msg = f"input has {h.shape[1]} features, encoder expects {params.d}"
        raise ShapeError(msg)
    for a, b in params.layers():
        h = np.maximum(h @ a.T + b, 0.0)
    out = h @ params.weights[-1].T
    if project:
        out = clamp_row_norms(out, params.b1, params.b2)
    return out[0] if single else out


def kappa(params: EncoderParams) -> float:
    """κ(θ) = ‖A_L‖_∞ · ∏_l max{‖(A_l, b_l)‖_∞, 1}."""
    value = _inf_norm(params.weights[-1])
    for a, b in params.layers():
        value *= max(_inf_norm(np.hstack((a, b[:, None]))), 1.0)
    return value


def project_kappa(params: EncoderParams) -> EncoderParams:
    """Rescale A_L so that κ(θ) ≤ K; a no-op when the budget already holds."""
    current = kappa(params)
    if current <= params.kappa_budget + _KAPPA_SLACK:
        return params
    factor = params.kappa_budget / current
    arrays = params.arrays()
    arrays[-1] = arrays[-1] * factor
    logger.debug("kappa %.6g exceeds budget %.6g, scaling A_L by %.6g", current, params.kappa_budget, factor)
    return params.with_arrays(arrays)


def lipschitz_ratio(params: EncoderParams, x: np.ndarray, y: np.ndarray, *, norm: float = np.inf) -> float:
    """Largest ‖φ(x)−φ(y)‖ / ‖x−y‖ over paired rows, without projection.

    In the ∞-norm this never exceeds :func:`kappa`.
    """
    x, y = np.atleast_2d(x), np.atleast_2d(y)
    num = np.linalg.norm(forward(params, x, project=False) - forward(params, y, project=False), ord=norm, axis=1)
    den = np.linalg.norm(x - y, ord=norm, axis=1)
    keep = den > 0
    if not np.any(keep):
        return 0.0
    return float(np.max(num[keep] / den[keep]))


# -- tape construction ---------------------------------------------------------


def register_params(tape: Tape, params: EncoderParams) -> list[int]:
    """Declare one trainable leaf per parameter array (checkpoint order)."""
    ids = []
    for index, (a, b) in enumerate(params.layers()):
        ids.append(tape.param(f"A{index}", a.shape))
        ids.append(tape.param(f"b{index}", (1, b.shape[0])))
    ids.append(tape.param(f"A{params.depth}", params.weights[-1].shape))
    return ids


def param_inputs(params: EncoderParams) -> list[Matrix]:
    """Parameter values as tape inputs, matching :func:`register_params`."""
    return [Matrix(arr) for arr in params.arrays()]


def record_forward(
    tape: Tape,
    param_ids: Sequence[int],
    x: int,
    *,
    project: bool = True,
    b1: float = 1.0,
    b2: float = 1.0,
) -> int:
    """Record the encoder on ``x`` (rows are samples) and return the output node."""
    h = x
    for index in range(0, len(param_ids) - 1, 2):
        a, b = param_ids[index], param_ids[index + 1]
        h = tape.relu(tape.add_row(tape.matmul(h, tape.transpose(a)), b))
    out = tape.matmul(h, tape.transpose(param_ids[-1]), name="phi")
    if project:
        out = tape.project_rows(out, b1, b2, name="f")
    return out


# -- checkpoints ---------------------------------------------------------------


def save_checkpoint(params: EncoderParams, path: str | Path) -> Path:
    """Write a text header followed by little-endian float64 layer data."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as handle:
        write_header(
            handle,
            CHECKPOINT_MAGIC,
            {
                "d": params.d,
                "d_star": params.d_star,
                "depth": params.depth,
                "width": params.width,
                "widths": ",".join(str(n) for n in params.widths),
                "kappa_budget": float(params.kappa_budget),
                "b1": float(params.b1),
                "b2": float(params.b2),
            },
        )
        for arr in params.arrays():
            handle.write(np.ascontiguousarray(arr, dtype=FLOAT_DTYPE).tobytes())
    return path


def load_checkpoint(path: str | Path) -> EncoderParams:
    """Read a checkpoint written by :func:`save_checkpoint`."""
    path = Path(path)
    if not path.is_file():
        msg = f"checkpoint not found: {path}"
        raise DataError(msg)
    with path.open("rb") as handle:
        header = read_header(handle, CHECKPOINT_MAGIC, path)
        try:
            widths = [int(n) for n in header["widths"].split(",")]
            kappa_budget = float(header["kappa_budget"])
            b1, b2 = float(header["b1"]), float(header["b2"])
        except (KeyError, ValueError) as e:
            msg = f"{path}: incomplete checkpoint header ({e})"
            raise DataError(msg) from e
        weights, biases = [], []
        for n_in, n_out in zip(widths[:-2], widths[1:-1], strict=True):
            weights.append(read_array(handle, n_out * n_in, FLOAT_DTYPE, path).reshape(n_out, n_in))
            biases.append(read_array(handle, n_out, FLOAT_DTYPE, path))
        weights.append(read_array(handle, widths[-1] * widths[-2], FLOAT_DTYPE, path).reshape(widths[-1], widths[-2]))
    return EncoderParams(tuple(weights), tuple(biases), kappa_budget, b1, b2)
