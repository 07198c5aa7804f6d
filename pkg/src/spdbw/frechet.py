"""Weighted Frechet means and variance under the Bures-Wasserstein metric."""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatchError, DomainError, NumericalError, PositivityError
from .linalg import SpdMatrix, product_sqrt
from .metrics import bw_distance


class WeightVector:
    """Nonnegative weights summing to one."""

    __slots__ = ("_values",)

    def __init__(self, values):
        vals = np.asarray(values, dtype=float)
        if vals.ndim != 1 or vals.size == 0:
            raise DomainError("weights must form a nonempty 1-d vector")
        if np.any(vals < 0):
            raise DomainError("weights must be nonnegative")
        if abs(vals.sum() - 1.0) > 1e-12:
            raise DomainError(f"weights must sum to 1, got {vals.sum()!r}")
        vals = vals.copy()
        vals.setflags(write=False)
        self._values = vals

    @property
    def values(self) -> np.ndarray:
        return self._values

    def __len__(self):
        return self._values.size

    @classmethod
    def uniform(cls, n: int) -> "WeightVector":
        return cls(np.full(n, 1.0 / n))


def two_point_mean(x1: SpdMatrix, x2: SpdMatrix, omega: float) -> SpdMatrix:
    """Closed-form weighted BW barycenter of two points.

    (1-w)^2 X1 + w^2 X2 + w(1-w)((X2 X1)^{1/2} + (X1 X2)^{1/2}); this is
    the point at parameter ``omega`` on the geodesic from X1 to X2.
    """
    if not 0.0 <= omega <= 1.0:
        raise DomainError(f"omega must lie in [0, 1], got {omega}")
    if omega == 0.0:
        return x1
    if omega == 1.0:
        return x2
    c = product_sqrt(x1, x2)
    out = (
        (1.0 - omega) ** 2 * x1.array
        + omega ** 2 * x2.array
        + omega * (1.0 - omega) * (c + c.T)
    )
    return SpdMatrix(out)


def _check_batch(batch) -> int:
    if len(batch) == 0:
        raise DomainError("batch must be nonempty")
    dim = batch[0].dim
    for x in batch:
        if x.dim != dim:
            raise DimensionMismatchError("batch has inconsistent dimensions")
    return dim


def fixed_point_step(g: SpdMatrix, batch, weights: WeightVector) -> SpdMatrix:
    """One update H(G) = G^{-1/2} (sum_i w_i (G^{1/2} X_i G^{1/2})^{1/2})^2 G^{-1/2}."""
    r = g.sqrt().array
    ri = g.inv_sqrt().array
    acc = np.zeros((g.dim, g.dim))
    for w, x in zip(weights.values, batch):
        acc = acc + w * SpdMatrix(r @ x.array @ r).sqrt().array
    return SpdMatrix(ri @ (acc @ acc) @ ri)


def frechet_mean(batch, weights: WeightVector | None = None, iters: int = 100,
                 tol: float = 1e-8) -> SpdMatrix:
    """Weighted BW Frechet mean by fixed-point iteration.

    Starts from the arithmetic mean (always SPD for SPD inputs) and
    applies ``fixed_point_step`` until the BW distance between successive
    iterates drops below ``tol`` or ``iters`` updates have been taken. The
    batch-normalization layer calls this with ``iters=1``; tests converge
    it fully to check the Karcher equation.
    """
    _check_batch(batch)
    n = len(batch)
    if weights is None:
        weights = WeightVector.uniform(n)
    if len(weights) != n:
        raise DimensionMismatchError("one weight per batch element required")
    if iters < 0:
        raise DomainError("iters must be nonnegative")
    stack = np.stack([x.array for x in batch])
    g = SpdMatrix(np.einsum("i,ijk->jk", weights.values, stack))
    for it in range(iters):
        try:
            g_next = fixed_point_step(g, batch, weights)
        except PositivityError as exc:
            raise NumericalError(
                f"fixed-point iteration left the SPD cone at iteration {it}"
            ) from exc
        if tol > 0.0 and bw_distance(g_next, g) < tol:
            g = g_next
            break
        g = g_next
    return g


def frechet_variance(batch, mean: SpdMatrix, theta: float = 1.0) -> float:
    """Mean squared BW distance to ``mean``, divided by theta^2.

    The deformed metric only changes distances by the factor 1/theta^2,
    which is why the batch-normalization layer can compute its variance in
    the undeformed space and rescale.
    """
    if theta == 0:
        raise DomainError("theta must be nonzero")
    _check_batch(batch)
    total = 0.0
    for x in batch:
        total += bw_distance(mean, x) ** 2
    return total / (len(batch) * theta * theta)


def update_running_stats(
    running_mean: SpdMatrix,
    running_var: float,
    batch_mean: SpdMatrix,
    batch_var: float,
    momentum: float,
) -> tuple[SpdMatrix, float]:
    """Blend running statistics toward batch statistics.

    The mean moves along the geodesic (two-point weighted mean with weight
    ``momentum``); the variance mixes linearly.
    """
    if not 0.0 <= momentum <= 1.0:
        raise DomainError(f"momentum must lie in [0, 1], got {momentum}")
    new_mean = two_point_mean(running_mean, batch_mean, momentum)
    new_var = (1.0 - momentum) * running_var + momentum * batch_var
    return new_mean, float(new_var)
