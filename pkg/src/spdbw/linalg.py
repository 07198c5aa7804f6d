"""Symmetric/SPD matrix types, eigendecompositions, and matrix functions.

Everything else in the package is built on the kernels here: the descending,
sign-fixed symmetric eigendecomposition, scalar functions lifted through the
eigenvalues, first divided differences, and the entrywise "pair function"
kernel that realizes the Lyapunov solver and the identity-anchored parallel
transports in one place.

All types are immutable values; all functions are pure.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionMismatchError, DomainError, NumericalError, PositivityError

# Relative floor under which an eigenvalue no longer counts as strictly positive.
EIG_POSITIVITY_FLOOR = 1e-14

# Relative spacing under which two eigenvalues share the derivative branch of a
# divided-difference table.
EQUAL_EIGENVALUE_TOL = 1e-12


def symmetrize(a: np.ndarray) -> np.ndarray:
    """Return the symmetric part (a + a.T) / 2 as a float array."""
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + a.T)


def _check_square(a: np.ndarray, name: str = "matrix") -> None:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatchError(f"{name} must be square, got shape {a.shape}")
    if a.shape[0] < 1:
        raise DimensionMismatchError(f"{name} must have dim >= 1")


def _check_same_dim(*dims: int) -> None:
    if len(set(dims)) > 1:
        raise DimensionMismatchError(f"dimension mismatch: {dims}")


def _fix_eigenvector_signs(vectors: np.ndarray) -> np.ndarray:
    """Make the first non-negligible component of each eigenvector positive."""
    absv = np.abs(vectors)
    thresh = 1e-12 * absv.max(axis=0)
    first = (absv > thresh[None, :]).argmax(axis=0)
    signs = np.sign(vectors[first, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs[None, :]


def eigh_arrays(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix as raw arrays.

    Returns ``(values, vectors)`` with values sorted descending and each
    eigenvector's sign fixed so results are reproducible across runs.
    """
    try:
        vals, vecs = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            "symmetric eigendecomposition did not converge "
            f"(input Frobenius norm {np.linalg.norm(a):.6e})"
        ) from exc
    vals = vals[::-1].copy()
    vecs = _fix_eigenvector_signs(vecs[:, ::-1])
    return vals, vecs


@dataclass(frozen=True)
class EigDecomposition:
    """Orthonormal eigenvectors and descending eigenvalues of a symmetric matrix."""

    vectors: np.ndarray
    values: np.ndarray

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    def reconstruct(self) -> np.ndarray:
        """U diag(values) U^T."""
        return (self.vectors * self.values[None, :]) @ self.vectors.T


class SymmetricMatrix:
    """A real symmetric matrix, the tangent-space element type.

    Entries are symmetrized on construction and frozen; instances are
    safe to share between threads.
    """

    __slots__ = ("_array",)

    def __init__(self, array):
        arr = symmetrize(array)
        _check_square(arr, "symmetric matrix")
        arr.setflags(write=False)
        object.__setattr__(self, "_array", arr)

    @property
    def array(self) -> np.ndarray:
        return self._array

    @property
    def dim(self) -> int:
        return self._array.shape[0]

    @classmethod
    def zeros(cls, dim: int) -> "SymmetricMatrix":
        return cls(np.zeros((dim, dim)))

    def norm(self) -> float:
        """Frobenius norm."""
        return float(np.linalg.norm(self._array))

    def __add__(self, other):
        if isinstance(other, SymmetricMatrix):
            return SymmetricMatrix(self._array + other._array)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, SymmetricMatrix):
            return SymmetricMatrix(self._array - other._array)
        return NotImplemented

    def __neg__(self):
        return SymmetricMatrix(-self._array)

    def __mul__(self, c):
        if isinstance(c, (int, float)):
            return SymmetricMatrix(self._array * float(c))
        return NotImplemented

    __rmul__ = __mul__

    def __repr__(self):
        return f"SymmetricMatrix(dim={self.dim})"


class SpdMatrix:
    """A symmetric positive-definite matrix with its eigendecomposition.

    Construction validates strict positivity against a relative floor:
    the smallest eigenvalue must exceed ``EIG_POSITIVITY_FLOOR`` times
    ``max(largest eigenvalue, 1)``, which admits the ill-conditioned
    inputs this package targets (condition numbers up to ~1e8 in double
    precision) while rejecting genuine PSD degeneracy.

    The decomposition is computed once at construction and cached for the
    lifetime of the value; instances are immutable.
    """

    __slots__ = ("_array", "_eig")

    def __init__(self, array, eig: EigDecomposition | None = None):
        if isinstance(array, SymmetricMatrix):
            arr = array.array
        else:
            arr = symmetrize(array)
            _check_square(arr, "SPD matrix")
            arr.setflags(write=False)
        if eig is None:
            vals, vecs = eigh_arrays(arr)
            vals.setflags(write=False)
            vecs.setflags(write=False)
            eig = EigDecomposition(vecs, vals)
        floor = EIG_POSITIVITY_FLOOR * max(eig.values[0], 1.0)
        if not np.all(np.isfinite(eig.values)) or eig.values[-1] <= floor:
            raise PositivityError(
                "matrix is not positive definite: smallest eigenvalue "
                f"{eig.values[-1]:.6e} is below the floor {floor:.6e}",
                min_eigenvalue=float(eig.values[-1]),
            )
        object.__setattr__(self, "_array", arr)
        object.__setattr__(self, "_eig", eig)

    @property
    def array(self) -> np.ndarray:
        return self._array

    @property
    def dim(self) -> int:
        return self._array.shape[0]

    @property
    def eig(self) -> EigDecomposition:
        return self._eig

    @property
    def sym(self) -> SymmetricMatrix:
        """The same value as a tangent-space element."""
        return SymmetricMatrix(self._array)

    @classmethod
    def identity(cls, dim: int) -> "SpdMatrix":
        eye = np.eye(dim)
        eig = EigDecomposition(np.eye(dim), np.ones(dim))
        return cls(eye, eig=eig)

    @classmethod
    def from_eig(cls, vectors: np.ndarray, values: np.ndarray) -> "SpdMatrix":
        """Assemble U diag(values) U^T, reusing the decomposition as cache."""
        values = np.asarray(values, dtype=float)
        order = np.argsort(values)[::-1]
        values = values[order].copy()
        vectors = _fix_eigenvector_signs(np.asarray(vectors, dtype=float)[:, order])
        arr = symmetrize((vectors * values[None, :]) @ vectors.T)
        arr.setflags(write=False)
        values.setflags(write=False)
        vectors.setflags(write=False)
        return cls(arr, eig=EigDecomposition(vectors, values))

    def sqrt(self) -> "SpdMatrix":
        return matrix_function_spd(self, SQRT)

    def inv_sqrt(self) -> "SpdMatrix":
        return matrix_function_spd(self, INV_SQRT)

    def inv(self) -> "SpdMatrix":
        return SpdMatrix.from_eig(self._eig.vectors, 1.0 / self._eig.values)

    def power(self, theta: float) -> "SpdMatrix":
        return matrix_function_spd(self, power(theta))

    def norm(self) -> float:
        return float(np.linalg.norm(self._array))

    def __repr__(self):
        vals = self._eig.values
        return f"SpdMatrix(dim={self.dim}, eig range [{vals[-1]:.3e}, {vals[0]:.3e}])"


@dataclass(frozen=True)
class ScalarFunction:
    """A scalar function lifted to SPD matrices through the eigenvalues.

    ``fn`` and ``grad`` are vectorized over eigenvalue arrays. ``grad`` feeds
    the equal-eigenvalue branch of the divided-difference table.
    """

    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    positive_domain: bool = False

    def check_domain(self, values: np.ndarray) -> None:
        if self.positive_domain and values[-1] <= 0.0:
            raise DomainError(
                f"{self.name} requires strictly positive eigenvalues, "
                f"got minimum {values[-1]:.6e}"
            )


SQRT = ScalarFunction("sqrt", np.sqrt, lambda lam: 0.5 / np.sqrt(lam), True)
INV_SQRT = ScalarFunction(
    "inv_sqrt", lambda lam: lam ** -0.5, lambda lam: -0.5 * lam ** -1.5, True
)
LOG = ScalarFunction("log", np.log, lambda lam: 1.0 / lam, True)
EXP = ScalarFunction("exp", np.exp, np.exp)


def power(theta: float) -> ScalarFunction:
    """The matrix power lam -> lam**theta, theta != 0."""
    if theta == 0:
        raise ValueError("power exponent must be nonzero")
    return ScalarFunction(
        f"pow({theta:g})",
        lambda lam: lam ** theta,
        lambda lam: theta * lam ** (theta - 1.0),
        True,
    )


def relu_floor(eps: float) -> ScalarFunction:
    """Eigenvalue rectification lam -> max(lam, eps)."""
    if eps <= 0:
        raise ValueError("rectification floor must be positive")
    return ScalarFunction(
        f"relu_floor({eps:g})",
        lambda lam: np.maximum(lam, eps),
        lambda lam: (lam > eps).astype(float),
    )


def divided_differences(values: np.ndarray, f: ScalarFunction) -> np.ndarray:
    """First divided-difference table of ``f`` at the given eigenvalues.

    Entry (i, j) is (f(lam_i) - f(lam_j)) / (lam_i - lam_j); near-equal pairs
    (within ``EQUAL_EIGENVALUE_TOL`` relative) take f' at the midpoint.
    """
    lam = np.asarray(values, dtype=float)
    fv = f.fn(lam)
    diff = lam[:, None] - lam[None, :]
    scale = np.maximum(np.maximum(np.abs(lam)[:, None], np.abs(lam)[None, :]), 1.0)
    near = np.abs(diff) < EQUAL_EIGENVALUE_TOL * scale
    with np.errstate(divide="ignore", invalid="ignore"):
        table = (fv[:, None] - fv[None, :]) / diff
    mid = 0.5 * (lam[:, None] + lam[None, :])
    return np.where(near, f.grad(mid), table)


def matrix_function(x: SpdMatrix, f: ScalarFunction) -> SymmetricMatrix:
    """Apply ``f`` to ``x`` through its eigenvalues: U f(Lambda) U^T."""
    e = x.eig
    f.check_domain(e.values)
    out = (e.vectors * f.fn(e.values)[None, :]) @ e.vectors.T
    return SymmetricMatrix(out)


def matrix_function_spd(x: SpdMatrix, f: ScalarFunction) -> SpdMatrix:
    """Same as :func:`matrix_function` for positivity-preserving ``f``.

    Returns an :class:`SpdMatrix` whose eigendecomposition is inherited
    rather than recomputed.
    """
    e = x.eig
    f.check_domain(e.values)
    return SpdMatrix.from_eig(e.vectors, f.fn(e.values))


def function_differential(x: SpdMatrix, f: ScalarFunction, s: SymmetricMatrix) -> SymmetricMatrix:
    """Differential of X -> f(X) at ``x`` in the direction ``s``.

    Computed with the first divided differences of ``f``:
    U (f^[1](Lambda) o (U^T S U)) U^T.
    """
    _check_same_dim(x.dim, s.dim)
    e = x.eig
    f.check_domain(e.values)
    table = divided_differences(e.values, f)
    sp = e.vectors.T @ s.array @ e.vectors
    return SymmetricMatrix(e.vectors @ (table * sp) @ e.vectors.T)


@dataclass(frozen=True)
class PairFunction:
    """Entrywise eigenbasis kernel S -> U [h(lam_i + lam_j) o S'] U^T.

    With h(t) = 1/t this is the Lyapunov solver; the square-root variants
    realize Bures-Wasserstein parallel transport to and from the identity.
    """

    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]


LYAPUNOV_KERNEL = PairFunction("lyapunov", lambda t: 1.0 / t, lambda t: -(t ** -2.0))
PT_FROM_IDENTITY_KERNEL = PairFunction(
    "pt_from_identity",
    lambda t: np.sqrt(0.5 * t),
    lambda t: 0.25 / np.sqrt(0.5 * t),
)
PT_TO_IDENTITY_KERNEL = PairFunction(
    "pt_to_identity",
    lambda t: np.sqrt(2.0 / t),
    lambda t: -0.5 * np.sqrt(2.0) * t ** -1.5,
)


def apply_pair_kernel(
    values: np.ndarray, vectors: np.ndarray, s: np.ndarray, kernel: PairFunction
) -> np.ndarray:
    """Apply a :class:`PairFunction` in the eigenbasis given by (values, vectors)."""
    coeff = kernel.fn(values[:, None] + values[None, :])
    sp = vectors.T @ s @ vectors
    return vectors @ (coeff * sp) @ vectors.T


def lyapunov_solve(x: SpdMatrix, s: SymmetricMatrix) -> SymmetricMatrix:
    """Solve X L + L X = S for the unique symmetric L.

    For SPD ``x`` the denominators lam_i + lam_j never vanish, so the
    eigenbasis solution V [S'_ij / (lam_i + lam_j)] V^T always exists.
    """
    _check_same_dim(x.dim, s.dim)
    e = x.eig
    out = apply_pair_kernel(e.values, e.vectors, s.array, LYAPUNOV_KERNEL)
    return SymmetricMatrix(out)


def generalized_lyapunov_solve(x: SpdMatrix, m: SpdMatrix, s: SymmetricMatrix) -> SymmetricMatrix:
    """Solve X L M + M L X = S.

    Reduced to a plain Lyapunov solve by congruence with M^{-1/2}:
    L = M^{-1/2} Lyap(M^{-1/2} X M^{-1/2}, M^{-1/2} S M^{-1/2}) M^{-1/2}.
    """
    _check_same_dim(x.dim, m.dim, s.dim)
    w = m.inv_sqrt().array
    x_t = SpdMatrix(w @ x.array @ w)
    s_t = SymmetricMatrix(w @ s.array @ w)
    inner = lyapunov_solve(x_t, s_t)
    return SymmetricMatrix(w @ inner.array @ w)


def product_sqrt(x: SpdMatrix, y: SpdMatrix) -> np.ndarray:
    """The square root (X Y)^{1/2} of a product of SPD matrices.

    X Y is not symmetric in general, but it is similar to the SPD matrix
    X^{1/2} Y X^{1/2}, so
    (X Y)^{1/2} = X^{1/2} (X^{1/2} Y X^{1/2})^{1/2} X^{-1/2}.
    """
    _check_same_dim(x.dim, y.dim)
    r = x.sqrt().array
    ri = x.inv_sqrt().array
    core = SpdMatrix(r @ y.array @ r).sqrt().array
    return r @ core @ ri


def condition_number(x: SpdMatrix) -> float:
    """Ratio of the largest to the smallest eigenvalue (always >= 1)."""
    vals = x.eig.values
    return float(vals[0] / vals[-1])


def regularize(x: SymmetricMatrix, lam: float) -> SpdMatrix:
    """Shift the spectrum: x + lam * I, validated as SPD.

    This is the usual covariance regularization; note it bounds the
    smallest eigenvalue from below by roughly ``lam`` but can leave the
    result badly conditioned.
    """
    if lam < 0:
        raise DomainError("regularization shift must be nonnegative")
    return SpdMatrix(x.array + lam * np.eye(x.dim))
