#!/usr/bin/env python
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING

import numpy as np

from actkit._utils import make_rng
from actkit.exceptions import ConfigurationError, DataError, OperationError

if TYPE_CHECKING:
    from collections.abc import Iterable, Sequence

# this_file: src/actkit/augmentation.py
"""Finite augmentation families, pair sampling and augmentation quality.

Every transform is a fixed map of the input vector. Randomness (noise
offsets, masked coordinates) is drawn once from the transform's own seed
when the family is built, so ``apply`` is deterministic and the family is
a finite set A = {A_γ : γ = 0 … m−1} with a known Lipschitz constant M.
"""

logger = logging.getLogger(__name__)


class TransformKind(str, Enum):
    """Supported vector-space augmentations."""

    NOISE = "noise"
    MASK = "mask"
    SMOOTH = "smooth"


@dataclass(frozen=True, eq=False)
class Transform:
    """One augmentation A_γ built for inputs of dimension ``dim``.

    - ``noise``: x ↦ x + o, with o uniform in [−param, param]^d drawn from ``seed``.
    - ``mask``: zero a fixed coordinate set; ``coords`` if given, otherwise a
      ``param`` fraction of coordinates drawn from ``seed``.
    - ``smooth``: x ↦ x + param·S x, S the circular 3-point moving average.
    """

    kind: TransformKind
    param: float
    seed: int
    dim: int
    coords: tuple[int, ...] | None = None
    _offset: np.ndarray = field(init=False, repr=False)
    _keep: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        kind = TransformKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if self.dim < 1:
            msg = f"transform dimension must be positive, got {self.dim}"
            raise ConfigurationError(msg)
        offset = np.zeros(self.dim)
        keep = np.ones(self.dim)
        rng = make_rng(self.seed)
        if kind is TransformKind.NOISE:
            if self.param < 0:
                msg = f"noise scale must be nonnegative, got {self.param}"
                raise ConfigurationError(msg)
            offset = rng.uniform(-self.param, self.param, size=self.dim)
        elif kind is TransformKind.MASK:
            if self.coords is not None:
                coords = np.asarray(self.coords, dtype=np.int64)
                if np.any((coords < 0) | (coords >= self.dim)):
                    msg = f"mask coordinates out of range for dimension {self.dim}: {self.coords}"
                    raise ConfigurationError(msg)
            else:
                if not 0 <= self.param < 1:
                    msg = f"mask fraction must lie in [0, 1), got {self.param}"
                    raise ConfigurationError(msg)
                count = round(self.param * self.dim)
                coords = np.sort(rng.choice(self.dim, size=count, replace=False))
            keep[coords] = 0.0
        elif self.param < 0:
            msg = f"smooth-scale gamma must be nonnegative, got {self.param}"
            raise ConfigurationError(msg)
        offset.setflags(write=False)
        keep.setflags(write=False)
        object.__setattr__(self, "_offset", offset)
        object.__setattr__(self, "_keep", keep)

    @property
    def lipschitz(self) -> float:
        """Declared Lipschitz constant: 1 for noise and mask, 1+γ for smooth."""
        if self.kind is TransformKind.SMOOTH:
            return 1.0 + self.param
        return 1.0

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.kind is TransformKind.NOISE:
            return x + self._offset
        if self.kind is TransformKind.MASK:
            return x * self._keep
        if self.param == 0.0:
            return x.copy()
        smoothed = (np.roll(x, 1, axis=-1) + x + np.roll(x, -1, axis=-1)) / 3.0
        return x + self.param * smoothed


@dataclass(frozen=True, eq=False)
class AugmentationSet:
    """The family A with its Lipschitz constant M."""

    transforms: tuple[Transform, ...]
    lipschitz_M: float | None = None

    def __post_init__(self) -> None:
        transforms = tuple(self.transforms)
        if not transforms:
            msg = "an augmentation set needs at least one transform"
            raise ConfigurationError(msg)
        dims = {t.dim for t in transforms}
        if len(dims) != 1:
            msg = f"all transforms must share one input dimension, got {sorted(dims)}"
            raise ConfigurationError(msg)
        declared = max(t.lipschitz for t in transforms)
        if self.lipschitz_M is None:
            object.__setattr__(self, "lipschitz_M", declared)
        elif self.lipschitz_M < declared:
            msg = f"M={self.lipschitz_M} is below the largest declared transform constant {declared}"
            raise ConfigurationError(msg)
        object.__setattr__(self, "transforms", transforms)

    @classmethod
    def from_specs(cls, specs: Iterable[tuple[str, float, int]], dim: int) -> AugmentationSet:
        """Build from (kind, parameter, seed) triples."""
        try:
            transforms = tuple(Transform(TransformKind(kind), float(param), int(seed), dim) for kind, param, seed in specs)
        except ValueError as e:
            msg = f"invalid augmentation spec: {e}"
            raise ConfigurationError(msg) from e
        return cls(transforms)

    @classmethod
    def identity(cls, dim: int) -> AugmentationSet:
        """The single-transform family {id}."""
        return cls((Transform(TransformKind.SMOOTH, 0.0, 0, dim),))

    @property
    def m(self) -> int:
        return len(self.transforms)

    @property
    def dim(self) -> int:
        return self.transforms[0].dim

    def apply(self, gamma: int, x: np.ndarray) -> np.ndarray:
        """A_γ(x) for one sample or a batch of rows."""
        if not 0 <= gamma < self.m:
            msg = f"augmentation index {gamma} out of range for m={self.m}"
            raise OperationError(msg)
        return self.transforms[gamma](x)

    def all_views(self, x: np.ndarray) -> np.ndarray:
        """Every view of every row: shape (m, n, d)."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return np.stack([t(x) for t in self.transforms])

    def __repr__(self) -> str:
        kinds = ", ".join(f"{t.kind.value}:{t.param:g}" for t in self.transforms)
        return f"AugmentationSet(m={self.m}, M={self.lipschitz_M:g}, [{kinds}])"


@dataclass(frozen=True, eq=False)
class PairBatch:
    """n augmented pairs (x1⁽ⁱ⁾, x2⁽ⁱ⁾) with the ids of their source samples."""

    x1: np.ndarray
    x2: np.ndarray
    source_indices: np.ndarray

    def __post_init__(self) -> None:
        x1 = np.atleast_2d(np.asarray(self.x1, dtype=np.float64))
        x2 = np.atleast_2d(np.asarray(self.x2, dtype=np.float64))
        idx = np.asarray(self.source_indices, dtype=np.int64).reshape(-1)
        if x1.shape != x2.shape or x1.shape[0] < 1:
            msg = f"pair views must be nonempty and equal in shape, got {x1.shape} and {x2.shape}"
            raise DataError(msg)
        if idx.shape[0] != x1.shape[0]:
            msg = f"{idx.shape[0]} source indices for {x1.shape[0]} pairs"
            raise DataError(msg)
        object.__setattr__(self, "x1", x1)
        object.__setattr__(self, "x2", x2)
        object.__setattr__(self, "source_indices", idx)

    def __len__(self) -> int:
        return int(self.x1.shape[0])

    def subset(self, rows: np.ndarray) -> PairBatch:
        return PairBatch(self.x1[rows], self.x2[rows], self.source_indices[rows])


@dataclass(frozen=True)
class AugmentationQuality:
    """Estimated (σ, δ) of a labeled sample under an augmentation family."""

    sigma: float
    delta: float
    per_class_delta: tuple[float, ...]
    per_class_sigma: tuple[float, ...]


# -- functional API -------------------------------------------------------------


def apply(aug_set: AugmentationSet, gamma: int, x: np.ndarray) -> np.ndarray:
    """Apply transform γ to ``x``."""
    return aug_set.apply(gamma, x)


def sample_pair(aug_set: AugmentationSet, x: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Draw γ, γ′ i.i.d. uniform over the family and return (A_γ(x), A_γ′(x))."""
    gamma, gamma_prime = rng.integers(0, aug_set.m, size=2)
    return aug_set.apply(int(gamma), x), aug_set.apply(int(gamma_prime), x)


def sample_pairs(
    aug_set: AugmentationSet,
    samples: np.ndarray,
    rng: np.random.Generator,
    indices: np.ndarray | None = None,
) -> PairBatch:
    """Augmented pairs for every row of ``samples`` in one vectorized draw."""
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    n = samples.shape[0]
    choice = rng.integers(0, aug_set.m, size=(n, 2))
    views = aug_set.all_views(samples)
    rows = np.arange(n)
    ids = rows if indices is None else np.asarray(indices)
    return PairBatch(views[choice[:, 0], rows], views[choice[:, 1], rows], ids)


def lipschitz_constant(aug_set: AugmentationSet) -> float:
    """M = max of the declared per-transform constants."""
    return max(t.lipschitz for t in aug_set.transforms)


def _class_distances(views: np.ndarray) -> np.ndarray:
    """For one class, min over view pairs of ‖A_γ(x_i) − A_β(x_j)‖ for all i, j."""
    n = views.shape[1]
    out = np.zeros((n, n))
    for i in range(n):
        # distances from every view of sample i to every view of every sample
        diff = views[:, i, None, None, :] - views[None, :, :, :]
        dist = np.sqrt(np.sum(diff * diff, axis=-1))
        out[i] = dist.min(axis=(0, 1))
    np.fill_diagonal(out, 0.0)
    return out


def estimate_quality(
    samples: np.ndarray,
    labels: Sequence[int] | np.ndarray,
    aug_set: AugmentationSet,
    *,
    n_classes: int | None = None,
    trim_quantile: float = 0.0,
) -> AugmentationQuality:
    """Estimate (σ, δ) for a labeled sample.

    For a class, the distance of two samples is the smallest distance between
    any of their m² view pairs. δ of the class is the largest such distance
    within the retained part C*(k); with ``trim_quantile`` = q the ⌈q·n_k⌉
    samples whose farthest same-class distance is largest are dropped and σ
    is the smallest retained fraction over classes.

    Labels are 0-based class indices: the first class is 0 and
    ``per_class_delta[k]`` belongs to label ``k``.

    Raises:
        DataError: If there are no labels, samples and labels differ in
            length, or a class is empty or has fewer than two samples.
    """
    if not 0.0 <= trim_quantile < 1.0:
        msg = f"trim quantile must lie in [0, 1), got {trim_quantile}"
        raise ConfigurationError(msg)
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if labels.size == 0:
        msg = "quality estimate needs labeled samples, got none"
        raise DataError(msg)
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if samples.shape[0] != labels.size:
        msg = f"{samples.shape[0]} samples but {labels.size} labels"
        raise DataError(msg)
    k_count = int(labels.max()) + 1 if n_classes is None else n_classes

    deltas, sigmas = [], []
    for k in range(k_count):
        members = samples[labels == k]
        if members.shape[0] == 0:
            msg = f"class {k} is empty"
            raise DataError(msg)
        if members.shape[0] < 2:
            msg = f"class {k} needs at least two samples, got {members.shape[0]}"
            raise DataError(msg)
        dist = _class_distances(aug_set.all_views(members))
        n_k = members.shape[0]
        drop = min(int(np.ceil(trim_quantile * n_k)), n_k - 1)
        keep = np.sort(np.argsort(dist.max(axis=1), kind="stable")[: n_k - drop])
        deltas.append(float(dist[np.ix_(keep, keep)].max()))
        sigmas.append(keep.size / n_k)

    return AugmentationQuality(
        sigma=float(min(sigmas)),
        delta=float(max(deltas)),
        per_class_delta=tuple(deltas),
        per_class_sigma=tuple(sigmas),
    )
