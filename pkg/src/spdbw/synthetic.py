"""Synthetic SPD data with controlled conditioning.

Stands in for the real covariance datasets: samples are drawn around
class-specific orthogonal frames with eigen-spectra stretched to hit a
target condition-number range, so ill-conditioning can be dialed in
exactly.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import DomainError
from .linalg import SpdMatrix, SymmetricMatrix, regularize


def random_symmetric(rng: np.random.Generator, dim: int, scale: float = 1.0) -> SymmetricMatrix:
    a = rng.standard_normal((dim, dim))
    return SymmetricMatrix(scale * 0.5 * (a + a.T))


def random_orthogonal(rng: np.random.Generator, dim: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diagonal(r))[None, :]


def _rotation_near_identity(rng: np.random.Generator, dim: int, scale: float) -> np.ndarray:
    """Cayley transform of a small random skew matrix (exactly orthogonal)."""
    a = rng.standard_normal((dim, dim))
    skew = scale * 0.5 * (a - a.T)
    eye = np.eye(dim)
    return np.linalg.solve(eye + skew, eye - skew)


def _spectrum(rng: np.random.Generator, dim: int, kappa: float, lam_max: float,
              jitter: float) -> np.ndarray:
    """Log-spaced spectrum from lam_max down to lam_max / kappa.

    Endpoints are pinned so the condition number is exact; interior
    entries get a little log-jitter.
    """
    logs = np.linspace(np.log10(lam_max), np.log10(lam_max / kappa), dim)
    if dim > 2 and jitter > 0:
        span = logs[0] - logs[-1] if dim > 1 else 1.0
        logs[1:-1] += rng.uniform(-jitter, jitter, dim - 2) * max(span, 1.0) / dim
        logs[1:-1] = np.clip(logs[1:-1], logs[-1], logs[0])
    return 10.0 ** logs


def random_spd(
    rng: np.random.Generator,
    dim: int,
    cond: float = 10.0,
    lam_max: float = 1.0,
    jitter: float = 0.25,
) -> SpdMatrix:
    """Random SPD matrix with condition number exactly ``cond``."""
    if cond < 1:
        raise DomainError("condition number must be >= 1")
    if dim == 1:
        return SpdMatrix(np.array([[lam_max]]))
    vals = _spectrum(rng, dim, cond, lam_max, jitter)
    return SpdMatrix.from_eig(random_orthogonal(rng, dim), vals)


def spd_with_kappa(
    rng: np.random.Generator,
    dim: int,
    kappa: float,
    basis: np.ndarray | None = None,
    basis_noise: float = 0.0,
    lam_max: float = 1.0,
) -> SpdMatrix:
    """SPD sample with exact condition number around an optional frame."""
    if basis is None:
        basis = random_orthogonal(rng, dim)
    if basis_noise > 0:
        basis = basis @ _rotation_near_identity(rng, dim, basis_noise)
    vals = _spectrum(rng, dim, kappa, lam_max, jitter=0.1)
    return SpdMatrix.from_eig(basis, vals)


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a labeled synthetic SPD dataset."""

    dim: int
    count_per_class: int
    num_classes: int = 2
    kappa_min: float = 1e3
    kappa_max: float = 1e6
    seed: int = 0
    separation: float = 0.6
    basis_noise: float = 0.15

    def __post_init__(self):
        if self.dim < 2:
            raise DomainError("dim must be >= 2")
        if not 1.0 <= self.kappa_min <= self.kappa_max <= 1e12:
            raise DomainError("kappa range must satisfy 1 <= min <= max <= 1e12")
        if self.count_per_class < 0 or self.num_classes < 1:
            raise DomainError("counts must be nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)


def make_dataset(spec: SyntheticSpec):
    """Generate (matrices, labels) per the spec; deterministic in the seed.

    Classes share one global frame; class c's frame is rotated by a fixed
    skew direction scaled by c * separation, and every sample adds a small
    per-sample rotation plus a log-uniform condition number in
    [kappa_min, kappa_max].
    """
    rng = np.random.default_rng(spec.seed)
    frame = random_orthogonal(rng, spec.dim)
    a = rng.standard_normal((spec.dim, spec.dim))
    skew = 0.5 * (a - a.T)
    skew /= max(np.linalg.norm(skew), 1e-12)
    eye = np.eye(spec.dim)
    class_frames = []
    for c in range(spec.num_classes):
        s = c * spec.separation * skew
        class_frames.append(frame @ np.linalg.solve(eye + s, eye - s))
    mats: list[SpdMatrix] = []
    labels: list[int] = []
    log_lo, log_hi = np.log10(spec.kappa_min), np.log10(spec.kappa_max)
    for c in range(spec.num_classes):
        for _ in range(spec.count_per_class):
            kappa = 10.0 ** rng.uniform(log_lo, log_hi)
            mats.append(
                spd_with_kappa(
                    rng, spec.dim, kappa, basis=class_frames[c],
                    basis_noise=spec.basis_noise,
                )
            )
            labels.append(c)
    return mats, np.array(labels, dtype=int)


def kappa_grid_batch(dim: int, count: int, kappa_lo: float, kappa_hi: float,
                     seed: int = 0) -> list[SpdMatrix]:
    """Batch with condition numbers exactly log-spaced over [kappa_lo, kappa_hi]."""
    rng = np.random.default_rng(seed)
    kappas = np.logspace(np.log10(kappa_lo), np.log10(kappa_hi), count)
    return [spd_with_kappa(rng, dim, k) for k in kappas]


def prepare_batch(arrays, lam: float = 0.0) -> list[SpdMatrix]:
    """Wrap raw symmetric arrays as SPD inputs, shifting by lam * I first."""
    out = []
    for arr in arrays:
        sym = SymmetricMatrix(arr)
        out.append(regularize(sym, lam) if lam > 0 else SpdMatrix(sym))
    return out
