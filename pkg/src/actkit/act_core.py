#!/usr/bin/env python
from __future__ import annotations

import csv
import logging
import math
from dataclasses import astuple, dataclass, field, fields
from pathlib import Path
from typing import TYPE_CHECKING, Literal, NamedTuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from actkit._utils import STREAM_TRAIN, format_float, identity, make_rng
from actkit.augmentation import PairBatch, sample_pairs
from actkit.autodiff import Matrix, Tape, backward_gradients, evaluate_graph, standardize_columns
from actkit.encoder import forward, kappa, param_inputs, project_kappa, record_forward, register_params, save_checkpoint
from actkit.exceptions import ConfigurationError, DataError, NumericalError

if TYPE_CHECKING:
    from collections.abc import Iterator, Sequence

    from actkit.augmentation import AugmentationSet
    from actkit.encoder import EncoderParams

# this_file: src/actkit/act_core.py
"""The adversarial contrastive objective and its alternating solver.

For augmented pairs the empirical risk is

    L̂(f, G) = (1/n) Σ ‖f(x₁) − f(x₂)‖² + λ ⟨f(x₁) f(x₂)ᵀ − I, G⟩_F

over the ball ‖G‖_F ≤ ‖Ĉ − I‖_F, where Ĉ is the batch cross-correlation.
The inner maximizer is Ĝ = Ĉ − I, so the sup-loss equals
L_align + λ‖Ĉ − I‖_F². Training alternates the closed-form inner step with
one gradient step on f while Ĝ is held constant.
"""

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ("epoch", "loss", "l_align", "l_div", "gap_fro", "kappa")


class TrainConfig(BaseModel):
    """Hyperparameters of the alternating solver."""

    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    lam: float = Field(5.0, ge=0.0, alias="lambda", description="weight λ of the divergence term")
    learning_rate: float = Field(0.05, gt=0.0)
    epochs: int = Field(200, ge=0)
    batch_size: int = Field(128, ge=1)
    d_star: int = Field(8, ge=1)
    standardize: bool = True
    inner_update: Literal["per_batch", "full_data"] = "per_batch"
    weight_decay: float = Field(1e-6, ge=0.0)
    optimizer: Literal["sgd", "adam"] = "sgd"
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = Field(1e-8, gt=0.0)
    project: bool = True
    kappa_projection: bool = False
    checkpoint_every: int = Field(0, ge=0)
    log_every: int = Field(10, ge=1)
    seed: int = 0

    @model_validator(mode="after")
    def _check_batch(self) -> TrainConfig:
        if self.standardize and self.batch_size < 2:
            msg = "batch_size must be at least 2 when standardize is on"
            raise ValueError(msg)
        return self


@dataclass(frozen=True, eq=False)
class GramGap:
    """The inner solution Ĝ = Ĉ − I and the feasible-set radius ‖Ĉ − I‖_F."""

    G: np.ndarray
    radius: float

    def __post_init__(self) -> None:
        if np.linalg.norm(self.G) > self.radius + 1e-12:
            msg = f"‖G‖_F = {np.linalg.norm(self.G):.6g} exceeds the radius {self.radius:.6g}"
            raise ConfigurationError(msg)


class LossDecomposition(NamedTuple):
    l_align: float
    l_div: float

    @property
    def total(self) -> float:
        """The sup-loss L_align + L_div."""
        return self.l_align + self.l_div


@dataclass(frozen=True)
class TrainRecord:
    epoch: int
    loss: float
    l_align: float
    l_div: float
    gap_fro: float
    kappa: float


@dataclass
class TrainTrace:
    """Per-epoch training records."""

    records: list[TrainRecord] = field(default_factory=list)

    def append(self, record: TrainRecord) -> None:
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[TrainRecord]:
        return iter(self.records)

    def __getitem__(self, index: int) -> TrainRecord:
        return self.records[index]

    def to_csv(self, path: str | Path) -> Path:
        """Write ``epoch,loss,l_align,l_div,gap_fro,kappa`` rows."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(TRACE_COLUMNS)
            for record in self.records:
                epoch, *values = astuple(record)
                writer.writerow([epoch, *(format_float(v) for v in values)])
        return path

    @classmethod
    def from_csv(cls, path: str | Path) -> TrainTrace:
        with Path(path).open(encoding="utf-8", newline="") as handle:
            rows = list(csv.DictReader(handle))
        names = [f.name for f in fields(TrainRecord)]
        return cls([TrainRecord(int(row["epoch"]), *(float(row[n]) for n in names[1:])) for row in rows])


class TrainResult(NamedTuple):
    params: EncoderParams
    trace: TrainTrace


# -- objective ------------------------------------------------------------------


def _representations(f: EncoderParams, batch: PairBatch, project: bool) -> tuple[np.ndarray, np.ndarray]:
    return forward(f, batch.x1, project=project), forward(f, batch.x2, project=project)


def _correlation(z1: np.ndarray, z2: np.ndarray, standardize: bool) -> np.ndarray:
    if standardize:
        z1, z2 = standardize_columns(z1), standardize_columns(z2)
    return z1.T @ z2 / z1.shape[0]


def cross_correlation(f: EncoderParams, batch: PairBatch, standardize: bool = False, *, project: bool = True) -> np.ndarray:
    """Ĉ = (1/n) Σ f(x₁)f(x₂)ᵀ, or Z₁ᵀZ₂/n on column-standardized representations.

    Raises:
        NumericalError: If ``standardize`` meets a zero-variance dimension.
    """
    return _correlation(*_representations(f, batch, project), standardize)


def inner_solution(f: EncoderParams, batch: PairBatch, standardize: bool = False, *, project: bool = True) -> GramGap:
    """Closed-form maximizer Ĝ = Ĉ − I of the inner problem."""
    c = cross_correlation(f, batch, standardize, project=project)
    gap = c - identity(c.shape[0])
    return GramGap(gap, float(np.linalg.norm(gap)))


def empirical_loss(f: EncoderParams, gap: GramGap, batch: PairBatch, lam: float, *, project: bool = True) -> float:
    """L̂(f, G) with the per-pair inner products averaged over the batch."""
    z1, z2 = _representations(f, batch, project)
    if gap.G.shape != (z1.shape[1], z1.shape[1]):
        msg = f"G has shape {gap.G.shape}, representations have dimension {z1.shape[1]}"
        raise ConfigurationError(msg)
    diff = z1 - z2
    align = float(np.mean(np.sum(diff * diff, axis=1)))
    c = z1.T @ z2 / z1.shape[0]
    return align + lam * float(np.sum(c * gap.G) - np.trace(gap.G))


def _decompose(z1: np.ndarray, z2: np.ndarray, standardize: bool) -> tuple[float, float]:
    diff = z1 - z2
    align = float(np.mean(np.sum(diff * diff, axis=1)))
    c = _correlation(z1, z2, standardize)
    gap = float(np.linalg.norm(c - identity(c.shape[0])))
    return align, gap


def loss_decomposition(
    f: EncoderParams,
    batch: PairBatch,
    lam: float,
    *,
    standardize: bool = False,
    project: bool = True,
) -> LossDecomposition:
    """Split the sup-loss into L_align = mean ‖f(x₁) − f(x₂)‖² and L_div = λ‖Ĉ − I‖_F²."""
    align, gap = _decompose(*_representations(f, batch, project), standardize)
    return LossDecomposition(align, lam * gap * gap)


@dataclass(frozen=True)
class CollapseStatistics:
    """Rank diagnostics of the cross-correlation."""

    singular_values: tuple[float, ...]
    standardized_gap: float | None

    @property
    def min_singular_value(self) -> float:
        return self.singular_values[-1]


def collapse_statistics(f: EncoderParams, batch: PairBatch, *, project: bool = True) -> CollapseStatistics:
    """Singular values of the raw Ĉ and ‖Ĉ − I‖_F of the standardized Ĉ.

    The standardized gap is None when a representation dimension has no
    variance, which is itself a collapse.
    """
    z1, z2 = _representations(f, batch, project)
    values = np.linalg.svd(_correlation(z1, z2, standardize=False), compute_uv=False)
    try:
        c = _correlation(z1, z2, standardize=True)
        gap: float | None = float(np.linalg.norm(c - identity(c.shape[0])))
    except NumericalError:
        gap = None
    return CollapseStatistics(tuple(float(v) for v in values), gap)


# -- loss graph -----------------------------------------------------------------


@dataclass
class ACTGraph:
    """A recorded ACT loss for a fixed batch size.

    When ``gap`` is None the graph forms Ĝ itself from the batch and detaches
    it; otherwise Ĝ is a constant input.
    """

    tape: Tape
    param_ids: list[int]
    x1: int
    x2: int
    eye: int
    gap: int | None
    l_align: int
    l_div: int

    def inputs(
        self,
        params: EncoderParams,
        x1: np.ndarray,
        x2: np.ndarray,
        gap: GramGap | None = None,
    ) -> list[Matrix]:
        """Tape inputs in leaf order."""
        values = {self.x1: Matrix(x1), self.x2: Matrix(x2), self.eye: Matrix(identity(params.d_star))}
        if self.gap is not None:
            if gap is None:
                msg = "this graph takes G as an input"
                raise ConfigurationError(msg)
            values[self.gap] = Matrix(gap.G)
        values.update(zip(self.param_ids, param_inputs(params), strict=True))
        return [values[leaf] for leaf in self.tape.leaves]

    @property
    def param_positions(self) -> list[int]:
        return [self.tape.leaves.index(i) for i in self.param_ids]


def build_act_graph(
    template: EncoderParams,
    batch_size: int,
    lam: float,
    *,
    standardize: bool,
    project: bool = True,
    external_gap: bool = False,
) -> ACTGraph:
    """Record the ACT loss for batches of ``batch_size`` pairs."""
    tape = Tape()
    param_ids = register_params(tape, template)
    n, d, d_star = batch_size, template.d, template.d_star
    x1 = tape.constant("x1", (n, d))
    x2 = tape.constant("x2", (n, d))
    gap_leaf = tape.constant("G", (d_star, d_star)) if external_gap else None
    eye = tape.constant("I", (d_star, d_star))

    z1 = record_forward(tape, param_ids, x1, project=project, b1=template.b1, b2=template.b2)
    z2 = record_forward(tape, param_ids, x2, project=project, b1=template.b1, b2=template.b2)
    diff = tape.sub(z1, z2)
    l_align = tape.scale(tape.sum(tape.mul(diff, diff)), 1.0 / n, name="l_align")
    if standardize:
        z1, z2 = tape.standardize(z1), tape.standardize(z2)
    c = tape.scale(tape.matmul(tape.transpose(z1), z2), 1.0 / n, name="C")
    c_diff = tape.sub(c, eye, name="C-I")
    g = gap_leaf if gap_leaf is not None else tape.detach(c_diff, name="G")
    l_div = tape.scale(tape.inner(c_diff, g), lam, name="l_div")
    tape.set_output(tape.add(l_align, l_div, name="loss"))
    return ACTGraph(tape, param_ids, x1, x2, eye, gap_leaf, l_align, l_div)


# -- optimizers -----------------------------------------------------------------


class _SGD:
    def __init__(self, learning_rate: float, weight_decay: float):
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay

    def step(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> list[np.ndarray]:
        return [p - self.learning_rate * (g + self.weight_decay * p) for p, g in zip(params, grads, strict=True)]


class _Adam:
    def __init__(self, learning_rate: float, weight_decay: float, betas: tuple[float, float], eps: float):
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m: list[np.ndarray] | None = None
        self.v: list[np.ndarray] | None = None

    def step(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> list[np.ndarray]:
        grads = [g + self.weight_decay * p for p, g in zip(params, grads, strict=True)]
        if self.m is None or self.v is None:
            self.m = [np.zeros_like(g) for g in grads]
            self.v = [np.zeros_like(g) for g in grads]
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        out = []
        for i, (p, g) in enumerate(zip(params, grads, strict=True)):
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            out.append(p - self.learning_rate * (self.m[i] / c1) / (np.sqrt(self.v[i] / c2) + self.eps))
        return out


def _make_optimizer(config: TrainConfig) -> _SGD | _Adam:
    if config.optimizer == "adam":
        return _Adam(config.learning_rate, config.weight_decay, config.adam_betas, config.adam_eps)
    return _SGD(config.learning_rate, config.weight_decay)


# -- training loop --------------------------------------------------------------


def train(
    source: np.ndarray | PairBatch,
    aug_set: AugmentationSet,
    config: TrainConfig,
    init: EncoderParams,
    *,
    checkpoint_dir: str | Path | None = None,
) -> TrainResult:
    """Alternate the closed-form inner step with gradient steps on the encoder.

    Args:
        source: Unlabeled samples (rows) or a fixed set of augmented pairs.
            From samples, per-batch mode draws fresh pairs every epoch and
            full-data mode draws one augmented set up front.
        aug_set: The augmentation family used to form pairs.
        config: Solver settings.
        init: Starting encoder; returned unchanged when ``epochs`` is 0.
        checkpoint_dir: Where periodic checkpoints go when
            ``config.checkpoint_every`` is set.

    Raises:
        DataError: If there are fewer samples than one batch.
        NumericalError: On a non-finite loss; ``record`` holds the epoch state.
    """
    if config.d_star != init.d_star:
        msg = f"config d_star={config.d_star} does not match the encoder's {init.d_star}"
        raise ConfigurationError(msg)

    rng = make_rng(config.seed, STREAM_TRAIN)
    fixed: PairBatch | None = source if isinstance(source, PairBatch) else None
    samples = None if fixed is not None else np.atleast_2d(np.asarray(source, dtype=np.float64))
    n = len(fixed) if fixed is not None else samples.shape[0]  # type: ignore[union-attr]
    if n < config.batch_size:
        msg = f"need at least batch_size={config.batch_size} samples, got {n}"
        raise DataError(msg)
    full_data = config.inner_update == "full_data"
    if fixed is None and full_data:
        fixed = sample_pairs(aug_set, samples, rng)  # type: ignore[arg-type]

    graph = build_act_graph(
        init,
        config.batch_size,
        config.lam,
        standardize=config.standardize,
        project=config.project,
        external_gap=full_data,
    )
    positions = graph.param_positions
    optimizer = _make_optimizer(config)
    params = project_kappa(init) if config.kappa_projection else init
    trace = TrainTrace()
    n_batches = n // config.batch_size
    logger.info(
        "training %d epochs on %d samples (%d batches of %d, %s inner update)",
        config.epochs,
        n,
        n_batches,
        config.batch_size,
        config.inner_update,
    )

    for epoch in range(1, config.epochs + 1):
        pairs = fixed if fixed is not None else sample_pairs(aug_set, samples, rng)  # type: ignore[arg-type]
        order = rng.permutation(n)
        losses = []
        try:
            gap = inner_solution(params, pairs, config.standardize, project=config.project) if full_data else None
            for b in range(n_batches):
                rows = order[b * config.batch_size : (b + 1) * config.batch_size]
                loss = evaluate_graph(graph.tape, graph.inputs(params, pairs.x1[rows], pairs.x2[rows], gap))
                if not math.isfinite(loss):
                    msg = f"non-finite loss {loss} in batch {b}"
                    raise NumericalError(msg)
                grads = backward_gradients(graph.tape)
                params = params.with_arrays(optimizer.step(params.arrays(), [grads[i].data for i in positions]))
                if config.kappa_projection:
                    params = project_kappa(params)
                losses.append(loss)
            align, gap_fro = _decompose(*_representations(params, pairs, config.project), config.standardize)
        except NumericalError as e:
            record = {"epoch": epoch, "batches_done": len(losses), "last_loss": losses[-1] if losses else None}
            msg = f"training aborted at epoch {epoch}: {e}"
            raise NumericalError(msg, record=record) from e

        record = TrainRecord(
            epoch=epoch,
            loss=float(np.mean(losses)),
            l_align=align,
            l_div=config.lam * gap_fro * gap_fro,
            gap_fro=gap_fro,
            kappa=kappa(params),
        )
        if not all(math.isfinite(v) for v in astuple(record)):
            msg = f"training aborted at epoch {epoch}: non-finite trace record"
            raise NumericalError(msg, record=record.__dict__)
        trace.append(record)

        if epoch % config.log_every == 0 or epoch == config.epochs:
            logger.info(
                "epoch %d: loss=%.5f l_align=%.5f l_div=%.5f gap=%.5f kappa=%.4g",
                epoch,
                record.loss,
                record.l_align,
                record.l_div,
                record.gap_fro,
                record.kappa,
            )
        if checkpoint_dir is not None and config.checkpoint_every and epoch % config.checkpoint_every == 0:
            path = save_checkpoint(params, Path(checkpoint_dir) / f"epoch_{epoch:04d}.ckpt")
            logger.debug("wrote checkpoint %s", path)

    return TrainResult(params, trace)
