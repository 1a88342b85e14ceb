#!/usr/bin/env python
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from actkit._utils import format_float, identity
from actkit.augmentation import estimate_quality
from actkit.encoder import forward, kappa
from actkit.exceptions import ConfigurationError, DataError

if TYPE_CHECKING:
    from collections.abc import Sequence

    from actkit.augmentation import AugmentationSet
    from actkit.downstream import LabeledSet, ProbeModel
    from actkit.encoder import EncoderParams

# this_file: src/actkit/diagnostics.py
"""Finite-sample versions of the quantities that certify transfer.

All expectations over the augmentation family are exact sums over its m
views. Population expectations over the data are replaced by empirical
means over the sample sets passed in.
"""

logger = logging.getLogger(__name__)

WASSERSTEIN_CAP = 512
ALIGNMENT_COLUMNS = ("epsilon", "r_s", "l_align", "source_rhs", "slack", "phi", "r_t", "target_rhs")
_BOUND_SLACK = 1e-9


# -- augmentation concentration -------------------------------------------------


def _views(f: EncoderParams, samples: np.ndarray, aug_set: AugmentationSet, project: bool) -> np.ndarray:
    """Representations of all views, shape (m, n, d*)."""
    views = aug_set.all_views(samples)
    m, n, d = views.shape
    return forward(f, views.reshape(m * n, d), project=project).reshape(m, n, -1)


def view_spread(f: EncoderParams, samples: np.ndarray, aug_set: AugmentationSet, *, project: bool = True) -> np.ndarray:
    """Per sample, the largest ‖f(A_γ(x)) − f(A_β(x))‖₂ over all m² view pairs."""
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if samples.shape[0] == 0:
        msg = "cannot measure view spread on an empty sample set"
        raise DataError(msg)
    reps = _views(f, samples, aug_set, project)
    spread = np.zeros(samples.shape[0])
    for gamma in range(aug_set.m):
        diff = reps[gamma][None] - reps
        spread = np.maximum(spread, np.sqrt(np.sum(diff * diff, axis=-1)).max(axis=0))
    return spread


def estimate_R(
    f: EncoderParams,
    samples: np.ndarray,
    aug_set: AugmentationSet,
    epsilon: float,
    *,
    project: bool = True,
) -> float:
    """Fraction of samples whose augmented views spread more than ε apart."""
    if epsilon <= 0:
        msg = f"epsilon must be positive, got {epsilon}"
        raise ConfigurationError(msg)
    return float(np.mean(view_spread(f, samples, aug_set, project=project) > epsilon))


def alignment_loss_exact(f: EncoderParams, samples: np.ndarray, aug_set: AugmentationSet, *, project: bool = True) -> float:
    """E_x of the mean over all m² view pairs of ‖f(A_γ(x)) − f(A_β(x))‖²."""
    reps = _views(f, np.atleast_2d(samples), aug_set, project)
    total = np.zeros(reps.shape[1])
    for gamma in range(aug_set.m):
        diff = reps[gamma][None] - reps
        total += np.sum(diff * diff, axis=(0, 2))
    return float(np.mean(total)) / aug_set.m**2


def divergence_exact(f: EncoderParams, samples: np.ndarray, aug_set: AugmentationSet, *, project: bool = True) -> float:
    """‖E_x E_{γ,β}[f(A_γ(x)) f(A_β(x))ᵀ] − I‖_F², the divergence term without λ."""
    centre = _views(f, np.atleast_2d(samples), aug_set, project).mean(axis=0)
    c = centre.T @ centre / centre.shape[0]
    return float(np.sum((c - identity(c.shape[0])) ** 2))


# -- class centres --------------------------------------------------------------


def class_centers(
    f: EncoderParams,
    samples: np.ndarray,
    labels: Sequence[int] | np.ndarray,
    aug_set: AugmentationSet,
    n_classes: int,
    *,
    project: bool = True,
) -> np.ndarray:
    """Row k is the class-k mean of the view-averaged representation (labels 0..K-1).

    Raises:
        DataError: If some class has no sample.
    """
    labels = np.asarray(labels, dtype=np.int64)
    counts = np.bincount(labels, minlength=n_classes)
    empty = np.flatnonzero(counts[:n_classes] == 0)
    if empty.size:
        msg = f"class {int(empty[0])} has no samples"
        raise DataError(msg)
    centre = _views(f, np.atleast_2d(samples), aug_set, project).mean(axis=0)
    out = np.zeros((n_classes, centre.shape[1]))
    np.add.at(out, labels, centre)
    return out / counts[:n_classes, None]


def max_center_alignment(centers: np.ndarray) -> float:
    """max over i ≠ j of |μ(i)ᵀμ(j)|."""
    centers = np.atleast_2d(centers)
    if centers.shape[0] < 2:
        msg = f"center alignment needs at least two classes, got {centers.shape[0]}"
        raise DataError(msg)
    gram = np.abs(centers @ centers.T)
    np.fill_diagonal(gram, -np.inf)
    return float(gram.max())


# -- certificate ----------------------------------------------------------------


@dataclass(frozen=True)
class Certificate:
    theta: float
    gamma_min: float
    delta_mu_hat: float
    clamped: bool = False


def theta_certificate(
    sigma_t: float,
    delta_t: float,
    epsilon: float,
    R_t: float,
    probe: ProbeModel,
    centers_t: np.ndarray,
    p_t_min: float,
    kappa: float,
    b1: float,
    b2: float,
) -> Certificate:
    """Γ_min, Δ_μ̂ and Θ of the sufficient condition for small target error.

    Γ_min = (σ_t − R_t/min p_t)(1 + (B1/B2)² − 𝒦δ_t/B2 − 2ε/B2) − 1,
    Δ = 1 − min_k ‖μ̂_t(k)‖²/B2² and
    Θ = Γ_min − √(2 − 2Γ_min) − Δ/2 − 2 max_k ‖μ̂_t(k) − μ_t(k)‖/B2.

    A Γ_min above 1 has its square-root argument clamped at 0 and the
    certificate is flagged.

    Raises:
        DataError: If the smallest target prior is not positive.
    """
    if p_t_min <= 0:
        msg = f"smallest target prior must be positive, got {p_t_min}"
        raise DataError(msg)
    w = np.atleast_2d(probe.W_hat)
    centers_t = np.atleast_2d(centers_t)
    if w.shape != centers_t.shape:
        msg = f"probe rows {w.shape} and target centers {centers_t.shape} differ in shape"
        raise DataError(msg)
    gamma_min = (sigma_t - R_t / p_t_min) * (1.0 + (b1 / b2) ** 2 - kappa * delta_t / b2 - 2.0 * epsilon / b2) - 1.0
    arg = 2.0 - 2.0 * gamma_min
    clamped = arg < 0
    if clamped:
        logger.warning("Γ_min = %.6g exceeds 1; clamping the square-root argument", gamma_min)
        arg = 0.0
    delta_mu_hat = 1.0 - float(np.min(np.sum(w * w, axis=1))) / b2**2
    drift = float(np.max(np.linalg.norm(w - centers_t, axis=1)))
    theta = gamma_min - math.sqrt(arg) - delta_mu_hat / 2.0 - 2.0 * drift / b2
    return Certificate(theta, gamma_min, delta_mu_hat, clamped)


def phi_bound(
    sigma_s: float,
    delta_s: float,
    epsilon: float,
    R_s: float,
    priors_s: Sequence[float] | np.ndarray,
    kappa: float,
    b2: float,
) -> float:
    """φ(σ_s, δ_s, ε, f), reported as a descriptive statistic."""
    priors_s = np.asarray(priors_s, dtype=np.float64)
    if np.any(priors_s <= 0):
        msg = "source priors must be positive"
        raise DataError(msg)
    n_classes = priors_s.shape[0]
    slack = (kappa * delta_s + 2.0 * epsilon) / b2
    inner = (
        (1.0 - sigma_s + slack / 2.0) ** 2
        + (1.0 - sigma_s)
        + n_classes * R_s * (3.0 - 2.0 * sigma_s + slack)
        + R_s**2 * float(np.sum(1.0 / priors_s))
    )
    return 4.0 * b2**2 * inner + b2 * math.sqrt(epsilon**2 + 4.0 * b2**2 * R_s)


def center_alignment_bound(
    l_div: float,
    phi: float,
    priors_s: Sequence[float] | np.ndarray,
    d_star: int,
    b2: float,
    lipschitz_M: float,
    kappa: float,
    rho: float,
) -> float:
    """Upper bound on max_{i≠j} |μ_t(i)ᵀμ_t(j)| from L_div, φ and the shift ρ."""
    smallest = np.sort(np.asarray(priors_s, dtype=np.float64))[:2]
    return math.sqrt(2.0 / float(smallest[0] * smallest[1]) * (l_div + phi)) + (
        2.0 * math.sqrt(d_star) * b2 * lipschitz_M * kappa * rho
    )


def target_alignment_rhs(
    l_align: float,
    epsilon: float,
    m: int,
    *,
    b2: float,
    d_star: int,
    lipschitz_M: float,
    kappa: float,
    n_classes: int,
    rho: float,
    eta: float,
) -> float:
    """(m⁴/ε²)(L_align + 8 B2 d* M 𝒦 ρ + 4 B2² d* K η)."""
    scale = m**4 / epsilon**2
    return scale * (l_align + 8.0 * b2 * d_star * lipschitz_M * kappa * rho + 4.0 * b2**2 * d_star * n_classes * eta)


# -- alignment bound over an ε grid ---------------------------------------------


@dataclass(frozen=True)
class AlignmentRecord:
    epsilon: float
    r_s: float
    l_align: float
    source_rhs: float
    phi: float | None = None
    r_t: float | None = None
    target_rhs: float | None = None

    @property
    def slack(self) -> float:
        return self.source_rhs - self.r_s**2

    @property
    def ok(self) -> bool:
        return self.slack >= -_BOUND_SLACK


def geometric_grid(low: float, high: float, count: int) -> np.ndarray:
    """``count`` geometrically spaced values from ``low`` to ``high``."""
    if not 0 < low <= high or count < 1:
        msg = f"invalid epsilon grid ({low}, {high}, {count})"
        raise ConfigurationError(msg)
    return np.geomspace(low, high, count)


def verify_alignment_bound(
    f: EncoderParams,
    samples: np.ndarray,
    aug_set: AugmentationSet,
    epsilon_grid: Sequence[float] | np.ndarray,
    *,
    sigma_s: float | None = None,
    delta_s: float | None = None,
    priors_s: Sequence[float] | np.ndarray | None = None,
    target: np.ndarray | None = None,
    rho: float = 0.0,
    eta: float = 0.0,
    project: bool = True,
) -> list[AlignmentRecord]:
    """Both sides of R_s(ε, f)² ≤ (m⁴/ε²)·L_align at every grid point.

    φ is filled in when σ_s, δ_s and the source priors are given. With a
    ``target`` sample the target-side R_t and its bound (using the measured
    shift ρ and prior gap η) are added.
    """
    m = aug_set.m
    l_align = alignment_loss_exact(f, samples, aug_set, project=project)
    spread = view_spread(f, samples, aug_set, project=project)
    target_spread = None if target is None else view_spread(f, target, aug_set, project=project)
    lip = kappa(f)
    with_phi = sigma_s is not None and delta_s is not None and priors_s is not None
    logger.debug("checking the alignment bound on %d epsilon values", len(epsilon_grid))

    records = []
    for eps in epsilon_grid:
        eps = float(eps)
        if eps <= 0:
            msg = f"epsilon must be positive, got {eps}"
            raise ConfigurationError(msg)
        r_s = float(np.mean(spread > eps))
        phi = phi_bound(sigma_s, delta_s, eps, r_s, priors_s, lip, f.b2) if with_phi else None  # type: ignore[arg-type]
        r_t = target_rhs = None
        if target_spread is not None:
            r_t = float(np.mean(target_spread > eps))
            n_classes = len(priors_s) if priors_s is not None else 1
            target_rhs = target_alignment_rhs(
                l_align,
                eps,
                m,
                b2=f.b2,
                d_star=f.d_star,
                lipschitz_M=float(aug_set.lipschitz_M),  # type: ignore[arg-type]
                kappa=lip,
                n_classes=n_classes,
                rho=rho,
                eta=eta,
            )
        records.append(AlignmentRecord(eps, r_s, l_align, m**4 / eps**2 * l_align, phi, r_t, target_rhs))
    return records


def write_alignment_csv(records: Sequence[AlignmentRecord], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    def cell(value: float | None) -> str:
        return "" if value is None else format_float(value)

    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(ALIGNMENT_COLUMNS)
        for r in records:
            writer.writerow(
                [cell(r.epsilon), cell(r.r_s), cell(r.l_align), cell(r.source_rhs), cell(r.slack), cell(r.phi), cell(r.r_t), cell(r.target_rhs)]
            )
    return path


# -- distribution shift ---------------------------------------------------------


def wasserstein1(a: np.ndarray, b: np.ndarray) -> float:
    """Exact W₁ between two equal-size empirical measures.

    The optimal matching is found with the Hungarian method; the value is
    the mean Euclidean cost of the matched pairs.

    Raises:
        DataError: On empty input, a size mismatch or more than 512 points
            per side.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        msg = "wasserstein1 needs nonempty samples"
        raise DataError(msg)
    a = a.reshape(a.shape[0], -1) if a.ndim else a.reshape(1, 1)
    b = b.reshape(b.shape[0], -1) if b.ndim else b.reshape(1, 1)
    if a.shape[0] != b.shape[0]:
        msg = f"wasserstein1 needs equal-size samples, got {a.shape[0]} and {b.shape[0]}"
        raise DataError(msg)
    if a.shape[0] > WASSERSTEIN_CAP:
        msg = f"wasserstein1 is capped at {WASSERSTEIN_CAP} points, got {a.shape[0]}"
        raise DataError(msg)
    cost = cdist(a, b)
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].mean())


def _subsample(points: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    if points.shape[0] == size:
        return points
    return points[np.sort(rng.choice(points.shape[0], size=size, replace=False))]


def wasserstein_per_class(
    source: LabeledSet,
    target: LabeledSet,
    rng: np.random.Generator,
) -> tuple[list[float], int]:
    """W₁ between matched source and target class conditionals.

    Both sides are subsampled to the smaller class size (at most 512) with
    ``rng``. Returns the per-class distances, indexed by 0-based label, and
    the matched sample size of the smallest class.
    """
    out, smallest = [], WASSERSTEIN_CAP
    for k in range(source.n_classes):
        a = source.samples[source.labels == k]
        b = target.samples[target.labels == k]
        size = min(a.shape[0], b.shape[0], WASSERSTEIN_CAP)
        if size == 0:
            msg = f"class {k} is empty on one side of the shift estimate"
            raise DataError(msg)
        out.append(wasserstein1(_subsample(a, size, rng), _subsample(b, size, rng)))
        smallest = min(smallest, size)
    return out, smallest


def wasserstein_noise_baseline(source: LabeledSet, rng: np.random.Generator) -> float:
    """Largest W₁ between two disjoint random halves of a source class.

    This is the level an unshifted target would reach from sampling alone.
    """
    worst = 0.0
    for k in range(source.n_classes):
        members = source.samples[source.labels == k]
        half = min(members.shape[0] // 2, WASSERSTEIN_CAP)
        if half == 0:
            continue
        order = rng.permutation(members.shape[0])
        worst = max(worst, wasserstein1(members[order[:half]], members[order[half : 2 * half]]))
    return worst


def empirical_priors(labels: Sequence[int] | np.ndarray, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        return np.zeros(n_classes)
    return np.bincount(labels, minlength=n_classes)[:n_classes] / labels.size


def prior_gap(
    source_labels: Sequence[int] | np.ndarray,
    target_labels: Sequence[int] | np.ndarray,
    n_classes: int,
) -> float:
    """max_k |p̂_s(k) − p̂_t(k)|."""
    return float(np.max(np.abs(empirical_priors(source_labels, n_classes) - empirical_priors(target_labels, n_classes))))


# -- report ---------------------------------------------------------------------


@dataclass
class DiagnosticsReport:
    """Certificate quantities measured on finite source and target samples."""

    epsilon: float
    n_source: int
    n_target: int
    R_s: float
    R_t: float
    centers_s: np.ndarray
    centers_t: np.ndarray
    max_center_alignment: float
    theta: float
    gamma_min: float
    delta_mu_hat: float
    certificate_clamped: bool
    l_align: float
    l_div: float
    phi: float
    center_alignment_bound: float
    alignment_bound_ok: bool
    wasserstein_per_class: list[float]
    wasserstein_sample_size: int
    wasserstein_baseline: float
    prior_gap_eta: float
    sigma_s: float
    delta_s: float
    sigma_t: float
    delta_t: float
    kappa: float
    alignment: list[AlignmentRecord] = field(default_factory=list, repr=False)
    b2_squared: float = 1.0

    @property
    def rho_hat(self) -> float:
        return max(self.wasserstein_per_class)

    @property
    def certificate_holds(self) -> bool:
        """Θ > 0 and the target centers are less aligned than B2²Θ."""
        return self.theta > 0 and self.max_center_alignment < self.b2_squared * self.theta

    def items(self) -> list[tuple[str, str]]:
        def matrix(values: np.ndarray) -> str:
            return ";".join(",".join(format_float(v) for v in row) for row in np.atleast_2d(values))

        scalars = {
            "epsilon": self.epsilon,
            "n_source": self.n_source,
            "n_target": self.n_target,
            "R_s": self.R_s,
            "R_t": self.R_t,
            "max_center_alignment": self.max_center_alignment,
            "theta": self.theta,
            "gamma_min": self.gamma_min,
            "delta_mu_hat": self.delta_mu_hat,
            "certificate_clamped": self.certificate_clamped,
            "certificate_holds": self.certificate_holds,
            "l_align": self.l_align,
            "l_div": self.l_div,
            "phi": self.phi,
            "center_alignment_bound": self.center_alignment_bound,
            "alignment_bound_ok": self.alignment_bound_ok,
            "rho_hat": self.rho_hat,
            "wasserstein_sample_size": self.wasserstein_sample_size,
            "wasserstein_baseline": self.wasserstein_baseline,
            "prior_gap_eta": self.prior_gap_eta,
            "sigma_s": self.sigma_s,
            "delta_s": self.delta_s,
            "sigma_t": self.sigma_t,
            "delta_t": self.delta_t,
            "kappa": self.kappa,
        }
        out = []
        for key, value in scalars.items():
            if isinstance(value, bool):
                text = str(value).lower()
            elif isinstance(value, float):
                text = format_float(value)
            else:
                text = str(value)
            out.append((key, text))
        out.append(("wasserstein_per_class", ",".join(format_float(v) for v in self.wasserstein_per_class)))
        out.append(("centers_s", matrix(self.centers_s)))
        out.append(("centers_t", matrix(self.centers_t)))
        return out

    def write(self, path: str | Path) -> Path:
        """Write ``key = value`` lines."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("".join(f"{k} = {v}\n" for k, v in self.items()), encoding="utf-8")
        return path


def _quality_subset(data: LabeledSet, per_class: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    keep = []
    for k in range(data.n_classes):
        members = np.flatnonzero(data.labels == k)
        if members.shape[0] > per_class:
            members = np.sort(rng.choice(members, size=per_class, replace=False))
        keep.append(members)
    rows = np.concatenate(keep)
    return data.samples[rows], data.labels[rows]


def run_diagnostics(
    f: EncoderParams,
    source: LabeledSet,
    target: LabeledSet,
    probe: ProbeModel,
    aug_set: AugmentationSet,
    epsilon: float,
    epsilon_grid: Sequence[float] | np.ndarray,
    rng: np.random.Generator,
    *,
    quality_per_class: int = 64,
    trim_quantile: float = 0.0,
    project: bool = True,
) -> DiagnosticsReport:
    """Measure every certificate quantity for a trained encoder.

    Args:
        f: The frozen encoder.
        source: Source samples with their latent labels.
        target: Held-out labeled target samples used for R_t and μ_t.
        probe: Template probe fitted on the few-shot target set.
        aug_set: The augmentation family.
        epsilon: The ε of the certificate.
        epsilon_grid: Grid for the alignment bound.
        rng: Drives every subsample (quality estimation and W₁).
        quality_per_class: Samples per class used to estimate (σ, δ).
        trim_quantile: Passed to :func:`estimate_quality`.
    """
    n_classes = source.n_classes
    lip = kappa(f)
    priors_s = empirical_priors(source.labels, n_classes)
    priors_t = empirical_priors(target.labels, n_classes)

    q_s = estimate_quality(*_quality_subset(source, quality_per_class, rng), aug_set, n_classes=n_classes, trim_quantile=trim_quantile)
    q_t = estimate_quality(*_quality_subset(target, quality_per_class, rng), aug_set, n_classes=n_classes, trim_quantile=trim_quantile)

    w_per_class, w_size = wasserstein_per_class(source, target, rng)
    baseline = wasserstein_noise_baseline(source, rng)
    eta = prior_gap(source.labels, target.labels, n_classes)

    alignment = verify_alignment_bound(
        f,
        source.samples,
        aug_set,
        epsilon_grid,
        sigma_s=q_s.sigma,
        delta_s=q_s.delta,
        priors_s=priors_s,
        target=target.samples,
        rho=max(w_per_class),
        eta=eta,
        project=project,
    )
    R_s = estimate_R(f, source.samples, aug_set, epsilon, project=project)
    R_t = estimate_R(f, target.samples, aug_set, epsilon, project=project)
    centers_s = class_centers(f, source.samples, source.labels, aug_set, n_classes, project=project)
    centers_t = class_centers(f, target.samples, target.labels, aug_set, n_classes, project=project)
    certificate = theta_certificate(q_t.sigma, q_t.delta, epsilon, R_t, probe, centers_t, float(priors_t.min()), lip, f.b1, f.b2)
    l_align = alignment_loss_exact(f, source.samples, aug_set, project=project)
    l_div = divergence_exact(f, source.samples, aug_set, project=project)
    phi = phi_bound(q_s.sigma, q_s.delta, epsilon, R_s, priors_s, lip, f.b2)
    bound = center_alignment_bound(l_div, phi, priors_s, f.d_star, f.b2, float(aug_set.lipschitz_M), lip, max(w_per_class))  # type: ignore[arg-type]

    report = DiagnosticsReport(
        epsilon=float(epsilon),
        n_source=len(source),
        n_target=len(target),
        R_s=R_s,
        R_t=R_t,
        centers_s=centers_s,
        centers_t=centers_t,
        max_center_alignment=max_center_alignment(centers_t),
        theta=certificate.theta,
        gamma_min=certificate.gamma_min,
        delta_mu_hat=certificate.delta_mu_hat,
        certificate_clamped=certificate.clamped,
        l_align=l_align,
        l_div=l_div,
        phi=phi,
        center_alignment_bound=bound,
        alignment_bound_ok=all(r.ok for r in alignment),
        wasserstein_per_class=w_per_class,
        wasserstein_sample_size=w_size,
        wasserstein_baseline=baseline,
        prior_gap_eta=eta,
        sigma_s=q_s.sigma,
        delta_s=q_s.delta,
        sigma_t=q_t.sigma,
        delta_t=q_t.delta,
        kappa=lip,
        alignment=alignment,
        b2_squared=f.b2**2,
    )
    logger.info(
        "R_s=%.4f R_t=%.4f theta=%.4f max alignment=%.4f bound ok=%s",
        R_s,
        R_t,
        certificate.theta,
        report.max_center_alignment,
        report.alignment_bound_ok,
    )
    return report
