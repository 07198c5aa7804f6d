"""Riemannian operators on the SPD manifold.

Implements the Bures-Wasserstein (BW) operator set (metric, distance,
geodesic, exp, log, parallel transport), the affine-invariant inner
product, the generalized BW metric parameterized by an SPD matrix M, and
its power deformation.

Parallel transport under BW is only available in closed form between
commuting base points; the batch-normalization pipeline only ever
transports to or from the identity, for which the dedicated kernels
:func:`transport_to_identity` / :func:`transport_from_identity` are used.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CommutationError, NumericalError, PositivityError
from .linalg import (
    PT_FROM_IDENTITY_KERNEL,
    PT_TO_IDENTITY_KERNEL,
    SpdMatrix,
    SymmetricMatrix,
    _check_same_dim,
    apply_pair_kernel,
    eigh_arrays,
    function_differential,
    generalized_lyapunov_solve,
    lyapunov_solve,
    power,
    product_sqrt,
)

# Radicands of the BW distance more negative than this are treated as
# genuine numerical failures rather than round-off near coincident points.
DISTANCE_CLAMP = -1e-10

# Relative commutator norm above which parallel transport refuses the pair.
COMMUTATION_TOL = 1e-8


def bw_inner(x: SpdMatrix, s1: SymmetricMatrix, s2: SymmetricMatrix) -> float:
    """Bures-Wasserstein inner product (1/2) tr(L_X(S1) S2) at base ``x``."""
    _check_same_dim(x.dim, s1.dim, s2.dim)
    l = lyapunov_solve(x, s1)
    return 0.5 * float(np.sum(l.array * s2.array))


def bw_norm(x: SpdMatrix, s: SymmetricMatrix) -> float:
    """Norm induced by :func:`bw_inner` (clamped at zero under round-off)."""
    return float(np.sqrt(max(bw_inner(x, s, s), 0.0)))


def bw_distance(x: SpdMatrix, y: SpdMatrix) -> float:
    """Bures-Wasserstein distance between two SPD matrices.

    sqrt(tr X + tr Y - 2 tr((X^{1/2} Y X^{1/2})^{1/2})); for commuting
    inputs this reduces to the l2 distance between the square roots of
    the eigenvalues.
    """
    _check_same_dim(x.dim, y.dim)
    r = x.sqrt().array
    cross = SpdMatrix(r @ y.array @ r).sqrt().array
    d2 = float(np.trace(x.array) + np.trace(y.array) - 2.0 * np.trace(cross))
    if d2 < DISTANCE_CLAMP:
        raise NumericalError(
            f"squared BW distance evaluated to {d2:.3e} < {DISTANCE_CLAMP:.0e}"
        )
    return float(np.sqrt(max(d2, 0.0)))


def bw_exp(x: SpdMatrix, s: SymmetricMatrix) -> SpdMatrix:
    """Exponential map Exp_X(S) = X + S + L_X(S) X L_X(S).

    The BW geodesic is incomplete: the result lies on the manifold only
    while I + L_X(S) stays positive definite.
    """
    _check_same_dim(x.dim, s.dim)
    l = lyapunov_solve(x, s).array
    gate = np.linalg.eigvalsh(np.eye(x.dim) + l)
    if gate[0] <= 0.0:
        raise PositivityError(
            "bw_exp left the SPD cone: I + L_X(S) has eigenvalue "
            f"{gate[0]:.6e} <= 0",
            min_eigenvalue=float(gate[0]),
        )
    out = x.array + s.array + l @ x.array @ l
    return SpdMatrix(out)


def bw_log(x: SpdMatrix, y: SpdMatrix) -> SymmetricMatrix:
    """Logarithmic map Log_X(Y) = (YX)^{1/2} + (XY)^{1/2} - 2X."""
    _check_same_dim(x.dim, y.dim)
    c = product_sqrt(x, y)
    return SymmetricMatrix(c + c.T - 2.0 * x.array)


def bw_geodesic(x: SpdMatrix, s: SymmetricMatrix, t: float) -> SpdMatrix:
    """Geodesic gamma(t) = X + tS + t^2 L_X(S) X L_X(S) from ``x`` with speed ``s``."""
    _check_same_dim(x.dim, s.dim)
    l = lyapunov_solve(x, s).array
    gate = np.linalg.eigvalsh(np.eye(x.dim) + t * l)
    if gate[0] <= 0.0:
        raise PositivityError(
            f"t={t:g} is outside the geodesic's completeness interval: "
            f"I + t L_X(S) has eigenvalue {gate[0]:.6e} <= 0",
            min_eigenvalue=float(gate[0]),
        )
    out = x.array + t * s.array + (t * t) * (l @ x.array @ l)
    return SpdMatrix(out)


def _joint_eigenbasis(x1: SpdMatrix, x2: SpdMatrix) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Common eigenbasis of a commuting SPD pair.

    Starts from the eigenbasis of ``x1`` and re-diagonalizes ``x2`` inside
    each (near-)degenerate eigenspace of ``x1``, which handles repeated
    eigenvalues (the identity in particular). Returns (U, lam, delta) with
    lam, delta the diagonals of U^T X1 U and U^T X2 U.
    """
    e1 = x1.eig
    u = e1.vectors.copy()
    lam = e1.values
    gap_tol = 1e-8 * max(lam[0], 1.0)
    d = x1.dim
    start = 0
    while start < d:
        stop = start + 1
        while stop < d and lam[stop - 1] - lam[stop] <= gap_tol:
            stop += 1
        if stop - start > 1:
            block = u[:, start:stop]
            sub = block.T @ x2.array @ block
            _, vecs = eigh_arrays(0.5 * (sub + sub.T))
            u[:, start:stop] = block @ vecs
        start = stop
    lam_out = np.einsum("ij,jk,ki->i", u.T, x1.array, u)
    delta = np.einsum("ij,jk,ki->i", u.T, x2.array, u)
    return u, lam_out, delta


def bw_parallel_transport(x1: SpdMatrix, x2: SpdMatrix, s: SymmetricMatrix) -> SymmetricMatrix:
    """Parallel transport of ``s`` from T_{X1} to T_{X2} along the BW geodesic.

    Only defined here for commuting base points: in their common eigenbasis
    the transport scales the (i, j) entry by sqrt((delta_i + delta_j) /
    (lam_i + lam_j)). Non-commuting pairs raise :class:`CommutationError`.
    """
    _check_same_dim(x1.dim, x2.dim, s.dim)
    comm = x1.array @ x2.array - x2.array @ x1.array
    bound = COMMUTATION_TOL * np.linalg.norm(x1.array) * np.linalg.norm(x2.array)
    if np.linalg.norm(comm) > bound:
        raise CommutationError(
            "parallel transport requires commuting base points; commutator "
            f"norm {np.linalg.norm(comm):.3e} exceeds {bound:.3e}"
        )
    u, lam, delta = _joint_eigenbasis(x1, x2)
    coeff = np.sqrt((delta[:, None] + delta[None, :]) / (lam[:, None] + lam[None, :]))
    sp = u.T @ s.array @ u
    return SymmetricMatrix(u @ (coeff * sp) @ u.T)


def transport_to_identity(b: SpdMatrix, s: SymmetricMatrix) -> SymmetricMatrix:
    """Gamma_{B -> I}(S): entrywise sqrt(2 / (lam_i + lam_j)) in B's eigenbasis."""
    _check_same_dim(b.dim, s.dim)
    e = b.eig
    return SymmetricMatrix(apply_pair_kernel(e.values, e.vectors, s.array, PT_TO_IDENTITY_KERNEL))


def transport_from_identity(g: SpdMatrix, s: SymmetricMatrix) -> SymmetricMatrix:
    """Gamma_{I -> G}(S): entrywise sqrt((delta_i + delta_j) / 2) in G's eigenbasis."""
    _check_same_dim(g.dim, s.dim)
    e = g.eig
    return SymmetricMatrix(apply_pair_kernel(e.values, e.vectors, s.array, PT_FROM_IDENTITY_KERNEL))


def bw_manifold_transport(x1: SpdMatrix, x2: SpdMatrix, p: SpdMatrix) -> SpdMatrix:
    """Move the point ``p`` (not a tangent) from around X1 to around X2.

    phi(P) = Exp_{X2}(Gamma_{X1 -> X2}(Log_{X1}(P))); maps X1 itself to X2.
    """
    s = bw_log(x1, p)
    return bw_exp(x2, bw_parallel_transport(x1, x2, s))


def ai_inner(x: SpdMatrix, s1: SymmetricMatrix, s2: SymmetricMatrix) -> float:
    """Affine-invariant inner product tr(X^{-1} S1 X^{-1} S2)."""
    _check_same_dim(x.dim, s1.dim, s2.dim)
    xi = x.inv().array
    a = xi @ s1.array
    b = xi @ s2.array
    return float(np.sum(a * b.T))


def gbw_inner(m: SpdMatrix, x: SpdMatrix, s1: SymmetricMatrix, s2: SymmetricMatrix) -> float:
    """Generalized BW inner product (1/2) tr(L_{X,M}(S1) S2).

    M = I recovers :func:`bw_inner`; M = X recovers a quarter of
    :func:`ai_inner`.
    """
    _check_same_dim(m.dim, x.dim, s1.dim, s2.dim)
    l = generalized_lyapunov_solve(x, m, s1)
    return 0.5 * float(np.sum(l.array * s2.array))


def power_differential(x: SpdMatrix, theta: float, s: SymmetricMatrix) -> SymmetricMatrix:
    """Differential of the matrix power X -> X^theta at ``x`` applied to ``s``."""
    return function_differential(x, power(theta), s)


def power_gbw_inner(
    m: SpdMatrix, theta: float, x: SpdMatrix, s1: SymmetricMatrix, s2: SymmetricMatrix
) -> float:
    """Power-deformed generalized BW metric.

    (1/theta^2) g^GBW_{X^theta}(d(pow)_X S1, d(pow)_X S2), evaluated
    literally; theta = 1 recovers :func:`gbw_inner`.
    """
    xp = x.power(theta)
    d1 = power_differential(x, theta, s1)
    d2 = power_differential(x, theta, s2)
    return gbw_inner(m, xp, d1, d2) / (theta * theta)


def power_ai_inner(
    theta: float, x: SpdMatrix, s1: SymmetricMatrix, s2: SymmetricMatrix
) -> float:
    """Power-deformed affine-invariant metric (same deformation, AIM core)."""
    xp = x.power(theta)
    d1 = power_differential(x, theta, s1)
    d2 = power_differential(x, theta, s2)
    return ai_inner(xp, d1, d2) / (theta * theta)


def power_gbw_zero_limit(m: SpdMatrix, x: SpdMatrix, s: SymmetricMatrix) -> float:
    """Limit of power_gbw_inner(m, theta, x, s, s) as theta -> 0.

    Equals (1/2) <L_M(dlog_X(S)), dlog_X(S)>: the deformed metric collapses
    onto the GBW metric at the identity evaluated on log differentials, a
    log-Euclidean-like form. Convergence is linear in theta.
    """
    from .linalg import LOG

    dlog = function_differential(x, LOG, s)
    return 0.5 * float(np.sum(lyapunov_solve(m, dlog).array * dlog.array))


@dataclass(frozen=True)
class MetricTag:
    """Selector for one of the metric families implemented here.

    ``kind`` is one of 'bw', 'ai', 'gbw', 'power_gbw', 'power_ai'; the
    GBW kinds carry the SPD parameter ``m`` and the power kinds a nonzero
    ``theta``.
    """

    kind: str
    m: SpdMatrix | None = None
    theta: float = 1.0

    _KINDS = ("bw", "ai", "gbw", "power_gbw", "power_ai")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown metric kind {self.kind!r}")
        if self.theta == 0:
            raise ValueError("power deformation requires theta != 0")
        if self.kind in ("gbw", "power_gbw") and self.m is None:
            raise ValueError(f"metric kind {self.kind!r} requires the SPD parameter m")

    def inner(self, x: SpdMatrix, s1: SymmetricMatrix, s2: SymmetricMatrix) -> float:
        if self.kind == "bw":
            return bw_inner(x, s1, s2)
        if self.kind == "ai":
            return ai_inner(x, s1, s2)
        if self.kind == "gbw":
            return gbw_inner(self.m, x, s1, s2)
        if self.kind == "power_gbw":
            return power_gbw_inner(self.m, self.theta, x, s1, s2)
        return power_ai_inner(self.theta, x, s1, s2)
