"""Reverse-mode differentiation over a fixed set of structured matrix ops.

The tape is built explicitly by layer code (define-by-run, no operator
overloading): each method appends a node, computes its value immediately,
and caches whatever the backward pass needs (eigendecompositions in
particular). Supported ops are the closed set below; anything else is
rejected when the node is pushed, never at gradient time.

Spectral backward rules:

* eigenvalue functions Y = U f(Lambda) U^T use the Daleckii-Krein formula,
  dL/dX = U (f^[1](Lambda) o (U^T dL/dY U)) U^T with f^[1] the first
  divided differences;
* the pair kernel P = U [h(lam_i + lam_j) o S'] U^T (Lyapunov solve for
  h(t) = 1/t, the two identity-anchored parallel transports for the
  square-root kernels) is self-adjoint in S, and its gradient in the base
  matrix is R_ab = sum_c h^[1](lam_a + lam_c, lam_b + lam_c)
  (S'_ac W'_cb + W'_ac S'_cb) rotated back by U; at h(t) = 1/t this
  reduces exactly to dL/dX = -P L_X(W) - L_X(W) P, the classical
  Lyapunov-operator gradient (covered by tests).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import DomainError, OptimizerError
from .linalg import (
    EQUAL_EIGENVALUE_TOL,
    LYAPUNOV_KERNEL,
    PairFunction,
    ScalarFunction,
    SpdMatrix,
    SymmetricMatrix,
    apply_pair_kernel,
    divided_differences,
    eigh_arrays,
    symmetrize,
)
from .metrics import bw_exp


def eigen_function_backward_kernel(
    values: np.ndarray, vectors: np.ndarray, f: ScalarFunction, upstream: np.ndarray
) -> np.ndarray:
    """Daleckii-Krein pullback of ``upstream`` through X -> f(X)."""
    table = divided_differences(values, f)
    w = vectors.T @ symmetrize(upstream) @ vectors
    return vectors @ (table * w) @ vectors.T


def backward_eigen_function(
    x: SpdMatrix, f: ScalarFunction, upstream: SymmetricMatrix
) -> SymmetricMatrix:
    """Gradient of L w.r.t. X for Y = f(X), given dL/dY."""
    e = x.eig
    return SymmetricMatrix(
        eigen_function_backward_kernel(e.values, e.vectors, f, upstream.array)
    )


def _pair_backward_base(
    values: np.ndarray,
    vectors: np.ndarray,
    kernel: PairFunction,
    s: np.ndarray,
    upstream: np.ndarray,
) -> np.ndarray:
    """Gradient w.r.t. the base matrix of the pair kernel (see module docstring)."""
    lam = values
    t = lam[:, None] + lam[None, :]
    h = kernel.fn(t)
    num = h[:, None, :] - h[None, :, :]
    den = (lam[:, None] - lam[None, :])[:, :, None]
    scale = np.maximum(np.maximum(np.abs(lam)[:, None], np.abs(lam)[None, :]), 1.0)
    near = (np.abs(lam[:, None] - lam[None, :]) < EQUAL_EIGENVALUE_TOL * scale)[:, :, None]
    mid = 0.5 * (t[:, None, :] + t[None, :, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        k = np.where(near, kernel.grad(mid), num / np.where(near, 1.0, den))
    sp = vectors.T @ s @ vectors
    wp = vectors.T @ symmetrize(upstream) @ vectors
    r = np.einsum("abc,ac,cb->ab", k, sp, wp) + np.einsum("abc,ac,cb->ab", k, wp, sp)
    return vectors @ r @ vectors.T


def backward_lyapunov(
    x: SpdMatrix, p: SymmetricMatrix, upstream: SymmetricMatrix
) -> tuple[SymmetricMatrix, SymmetricMatrix]:
    """Gradients through P = L_X(S) given dL/dP, as (dL/dS, dL/dX).

    dL/dS = L_X(dL/dP) and dL/dX = -P L_X(dL/dP) - L_X(dL/dP) P.
    """
    e = x.eig
    lw = apply_pair_kernel(e.values, e.vectors, symmetrize(upstream.array), LYAPUNOV_KERNEL)
    ds = SymmetricMatrix(lw)
    dx = SymmetricMatrix(-(p.array @ lw + lw @ p.array))
    return ds, dx


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max())
    return e / e.sum()


def _forward(kind: str, pvals: list, aux: dict) -> Any:
    if kind == "add":
        return pvals[0] + pvals[1]
    if kind == "scale":
        return aux["k"] * pvals[0]
    if kind == "scale_by":
        return pvals[1] * pvals[0]
    if kind == "matmul":
        return pvals[0] @ pvals[1]
    if kind == "transpose":
        return pvals[0].T
    if kind == "trace":
        return float(np.trace(pvals[0]))
    if kind == "congruence":
        return pvals[1].T @ pvals[0] @ pvals[1]
    if kind == "eig_fn":
        vals, vecs = eigh_arrays(symmetrize(pvals[0]))
        f: ScalarFunction = aux["f"]
        f.check_domain(vals)
        aux["eig"] = (vals, vecs)
        return (vecs * f.fn(vals)[None, :]) @ vecs.T
    if kind == "pair_fn":
        vals, vecs = eigh_arrays(symmetrize(pvals[0]))
        aux["eig"] = (vals, vecs)
        return apply_pair_kernel(vals, vecs, pvals[1], aux["kernel"])
    if kind == "sym_vec":
        iu = aux["iu"]
        return aux["weights"] * pvals[0][iu]
    if kind == "affine":
        return pvals[0] @ pvals[2] + pvals[1]
    if kind == "cross_entropy":
        z = pvals[0]
        zmax = z.max()
        return float(np.log(np.sum(np.exp(z - zmax))) + zmax - z[aux["label"]])
    if kind == "sadd":
        return pvals[0] + pvals[1]
    if kind == "saffine":
        return aux["k"] * pvals[0] + aux["c"]
    if kind == "smul":
        return pvals[0] * pvals[1]
    if kind == "sdiv":
        return pvals[0] / pvals[1]
    if kind == "ssqrt":
        if pvals[0] < 0:
            raise DomainError(f"ssqrt of negative value {pvals[0]!r}")
        return float(np.sqrt(pvals[0]))
    raise AssertionError(f"unreachable op kind {kind!r}")


_OP_KINDS = frozenset(
    {
        "leaf", "const", "add", "scale", "scale_by", "matmul", "transpose",
        "trace", "congruence", "eig_fn", "pair_fn", "sym_vec", "affine",
        "cross_entropy", "sadd", "saffine", "smul", "sdiv", "ssqrt",
    }
)


@dataclass
class Node:
    kind: str
    parents: tuple[int, ...]
    value: Any
    aux: dict = field(default_factory=dict)
    symmetric: bool = False


@dataclass
class Gradient:
    """Per-leaf adjoints keyed by node id."""

    adjoints: dict[int, Any]

    def __getitem__(self, node_id: int):
        return self.adjoints[node_id]

    def get(self, node_id: int, default=None):
        return self.adjoints.get(node_id, default)


class Tape:
    """Append-only record of the forward computation.

    Inputs of every node precede it, so reverse iteration is a valid
    topological order for the backward sweep. Values are computed at push
    time; :meth:`replay_check` recomputes them all and reports the largest
    deviation (zero for a healthy tape).
    """

    def __init__(self):
        self._nodes: list[Node] = []

    def __len__(self):
        return len(self._nodes)

    def node(self, node_id: int) -> Node:
        return self._nodes[node_id]

    def value(self, node_id: int):
        return self._nodes[node_id].value

    def _push(self, kind: str, parents: tuple[int, ...], value, aux=None,
              symmetric: bool = False) -> int:
        if kind not in _OP_KINDS:
            raise DomainError(f"unsupported tape op kind {kind!r}")
        self._nodes.append(Node(kind, parents, value, aux or {}, symmetric))
        return len(self._nodes) - 1

    # -- inputs ---------------------------------------------------------
    def leaf(self, value, symmetric: bool = False) -> int:
        if isinstance(value, (SymmetricMatrix, SpdMatrix)):
            value, symmetric = value.array, True
        if isinstance(value, np.ndarray):
            value = value.copy()
        else:
            value = float(value)
        return self._push("leaf", (), value, symmetric=symmetric)

    def const(self, value) -> int:
        if isinstance(value, (SymmetricMatrix, SpdMatrix)):
            value = value.array
        if isinstance(value, np.ndarray):
            value = value.copy()
        else:
            value = float(value)
        return self._push("const", (), value)

    # -- matrix ops -----------------------------------------------------
    def add(self, a: int, b: int) -> int:
        return self._op("add", (a, b))

    def scale(self, a: int, k: float) -> int:
        return self._op("scale", (a,), {"k": float(k)})

    def scale_by(self, a: int, c: int) -> int:
        """Matrix ``a`` times differentiable scalar node ``c``."""
        return self._op("scale_by", (a, c))

    def matmul(self, a: int, b: int) -> int:
        return self._op("matmul", (a, b))

    def transpose(self, a: int) -> int:
        return self._op("transpose", (a,))

    def trace(self, a: int) -> int:
        return self._op("trace", (a,))

    def congruence(self, x: int, a: int) -> int:
        """A^T X A for a (possibly rectangular) factor node ``a``."""
        return self._op("congruence", (x, a))

    def eig_fn(self, x: int, f: ScalarFunction) -> int:
        return self._op("eig_fn", (x,), {"f": f})

    def pair_fn(self, x: int, s: int, kernel: PairFunction) -> int:
        return self._op("pair_fn", (x, s), {"kernel": kernel})

    # -- classifier head --------------------------------------------------
    def sym_vec(self, x: int) -> int:
        """Upper-triangle vectorization with sqrt(2)-weighted off-diagonal."""
        d = self._nodes[x].value.shape[0]
        iu = np.triu_indices(d)
        weights = np.where(iu[0] == iu[1], 1.0, np.sqrt(2.0))
        return self._op("sym_vec", (x,), {"iu": iu, "weights": weights, "dim": d})

    def affine(self, w: int, b: int, v: int) -> int:
        return self._op("affine", (w, b, v))

    def cross_entropy(self, logits: int, label: int) -> int:
        return self._op("cross_entropy", (logits,), {"label": int(label)})

    # -- scalar ops -------------------------------------------------------
    def sadd(self, a: int, b: int) -> int:
        return self._op("sadd", (a, b))

    def saffine(self, a: int, k: float, c: float = 0.0) -> int:
        return self._op("saffine", (a,), {"k": float(k), "c": float(c)})

    def smul(self, a: int, b: int) -> int:
        return self._op("smul", (a, b))

    def sdiv(self, a: int, b: int) -> int:
        return self._op("sdiv", (a, b))

    def ssqrt(self, a: int) -> int:
        return self._op("ssqrt", (a,))

    def _op(self, kind: str, parents: tuple[int, ...], aux=None) -> int:
        aux = aux or {}
        pvals = [self._nodes[p].value for p in parents]
        value = _forward(kind, pvals, aux)
        return self._push(kind, parents, value, aux)

    # -- replay & backward ------------------------------------------------
    def replay_check(self) -> float:
        """Recompute every node from the leaves; return the largest deviation."""
        worst = 0.0
        values: list = []
        for node in self._nodes:
            if node.kind in ("leaf", "const"):
                values.append(node.value)
                continue
            fresh = _forward(node.kind, [values[p] for p in node.parents], dict(node.aux))
            values.append(fresh)
            worst = max(worst, float(np.max(np.abs(np.asarray(fresh) - np.asarray(node.value)))))
        return worst

    def grad(self, loss: int, wrt=None) -> Gradient:
        """Adjoints of the scalar node ``loss`` w.r.t. every leaf (or ``wrt``)."""
        if not np.isscalar(self._nodes[loss].value):
            raise DomainError("loss node must be scalar")
        adj: dict[int, Any] = {loss: 1.0}
        for nid in range(loss, -1, -1):
            node = self._nodes[nid]
            up = adj.pop(nid, None)
            if up is None or node.kind in ("leaf", "const"):
                if up is not None:
                    adj[nid] = up
                continue
            self._backward_node(node, up, adj)
        out: dict[int, Any] = {}
        targets = range(len(self._nodes)) if wrt is None else wrt
        for nid in targets:
            node = self._nodes[nid]
            if node.kind != "leaf":
                continue
            g = adj.get(nid)
            if g is None:
                g = np.zeros_like(node.value) if isinstance(node.value, np.ndarray) else 0.0
            elif node.symmetric:
                g = symmetrize(g)
            out[nid] = g
        return Gradient(out)

    def _backward_node(self, node: Node, up, adj: dict) -> None:
        k = node.kind
        p = node.parents
        val = lambda i: self._nodes[p[i]].value

        def acc(nid: int, g) -> None:
            if self._nodes[nid].kind == "const":
                return
            if nid in adj:
                adj[nid] = adj[nid] + g
            else:
                adj[nid] = g

        if k == "add":
            acc(p[0], up)
            acc(p[1], up)
        elif k == "scale":
            acc(p[0], node.aux["k"] * up)
        elif k == "scale_by":
            acc(p[0], val(1) * up)
            acc(p[1], float(np.sum(up * val(0))))
        elif k == "matmul":
            acc(p[0], up @ val(1).T)
            acc(p[1], val(0).T @ up)
        elif k == "transpose":
            acc(p[0], up.T)
        elif k == "trace":
            acc(p[0], up * np.eye(val(0).shape[0]))
        elif k == "congruence":
            x, a = val(0), val(1)
            acc(p[0], a @ up @ a.T)
            acc(p[1], x @ a @ up + x.T @ a @ up.T)
        elif k == "eig_fn":
            vals, vecs = node.aux["eig"]
            acc(p[0], eigen_function_backward_kernel(vals, vecs, node.aux["f"], up))
        elif k == "pair_fn":
            vals, vecs = node.aux["eig"]
            kernel = node.aux["kernel"]
            acc(p[1], apply_pair_kernel(vals, vecs, symmetrize(up), kernel))
            acc(p[0], _pair_backward_base(vals, vecs, kernel, val(1), up))
        elif k == "sym_vec":
            iu = node.aux["iu"]
            scatter = np.zeros((node.aux["dim"], node.aux["dim"]))
            scatter[iu] = node.aux["weights"] * up
            acc(p[0], symmetrize(scatter))
        elif k == "affine":
            acc(p[0], np.outer(up, val(2)))
            acc(p[1], up)
            acc(p[2], val(0).T @ up)
        elif k == "cross_entropy":
            z = val(0)
            g = _softmax(z)
            g[node.aux["label"]] -= 1.0
            acc(p[0], up * g)
        elif k == "sadd":
            acc(p[0], up)
            acc(p[1], up)
        elif k == "saffine":
            acc(p[0], node.aux["k"] * up)
        elif k == "smul":
            acc(p[0], up * val(1))
            acc(p[1], up * val(0))
        elif k == "sdiv":
            acc(p[0], up / val(1))
            acc(p[1], -up * val(0) / (val(1) ** 2))
        elif k == "ssqrt":
            acc(p[0], up * 0.5 / np.sqrt(val(0)))
        else:  # pragma: no cover - _push whitelists kinds
            raise AssertionError(k)


def grad(tape: Tape, loss: int, wrt=None) -> Gradient:
    """Reverse accumulation over the tape; see :meth:`Tape.grad`."""
    return tape.grad(loss, wrt)


MAX_STEP_HALVINGS = 20


def rsgd_step(param: SpdMatrix, euclid_grad: np.ndarray, lr: float) -> SpdMatrix:
    """One Riemannian SGD step on the SPD manifold under the BW metric.

    The Euclidean gradient is symmetrized and converted to the Riemannian
    gradient R = 2 (G X + X G), the unique tangent vector satisfying
    g^BW_X(R, S) = tr(G S) for all symmetric S; the step follows the
    exponential map. Because BW geodesics are incomplete, the learning
    rate is halved (up to 20 times) whenever the step would leave the
    cone.
    """
    if lr <= 0:
        raise DomainError("learning rate must be positive")
    g = symmetrize(np.asarray(euclid_grad, dtype=float))
    r = 2.0 * (g @ param.array + param.array @ g)
    step = SymmetricMatrix(-lr * r)
    for _ in range(MAX_STEP_HALVINGS + 1):
        try:
            return bw_exp(param, step)
        except DomainError:
            step = 0.5 * step
    raise OptimizerError(
        f"rsgd step is outside the geodesic domain even after {MAX_STEP_HALVINGS} halvings"
    )


def stiefel_step(w: np.ndarray, euclid_grad: np.ndarray, lr: float) -> np.ndarray:
    """One projected-gradient step with QR retraction on the Stiefel manifold."""
    w = np.asarray(w, dtype=float)
    g = np.asarray(euclid_grad, dtype=float)
    if np.linalg.norm(w.T @ w - np.eye(w.shape[1])) > 1e-10:
        raise DomainError("parameter left the Stiefel manifold")
    tangent = g - w @ symmetrize(w.T @ g)
    q, r = np.linalg.qr(w - lr * tangent)
    diag = np.diagonal(r)
    if np.any(np.abs(diag) < 1e-12):
        raise OptimizerError("rank-deficient retraction in stiefel_step")
    return q * np.sign(diag)[None, :]
