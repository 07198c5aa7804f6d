"""Runnable check suites: operators, propositions, gradients, batchnorm.

Each check compares an implementation against an independent oracle
(Kronecker-sum linear solves, closed forms, finite differences, scalar
pipelines) and reports a residual with its tolerance. The CLI ``verify``
subcommand and the acceptance tests are both thin wrappers over this
module.

The Kronecker-sum formulations are O(d^6) and exist only as oracles for
d <= 6; the production path is always the Lyapunov/eigenbasis one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tape, backward_eigen_function, backward_lyapunov, rsgd_step, stiefel_step
from .batchnorm import GbwbnState, bwbn_forward, gbwbn_forward, scale_from_identity
from .errors import DomainError
from .frechet import WeightVector, fixed_point_step, frechet_mean, two_point_mean
from .linalg import (
    LOG,
    SQRT,
    SpdMatrix,
    SymmetricMatrix,
    condition_number,
    function_differential,
    generalized_lyapunov_solve,
    lyapunov_solve,
    matrix_function,
    power,
    symmetrize,
)
from .metrics import (
    ai_inner,
    bw_distance,
    bw_exp,
    bw_inner,
    bw_log,
    bw_parallel_transport,
    gbw_inner,
    power_ai_inner,
    power_gbw_inner,
    power_gbw_zero_limit,
)
from .network import make_classification_model, _gbwbn_graph
from .synthetic import (
    kappa_grid_batch,
    make_dataset,
    random_orthogonal,
    random_spd,
    random_symmetric,
    SyntheticSpec,
)


@dataclass(frozen=True)
class CheckResult:
    name: str
    residual: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.residual <= self.tolerance

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "residual": self.residual,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


# ---------------------------------------------------------------------------
# oracles


def bw_inner_kron(x: SpdMatrix, s1: SymmetricMatrix, s2: SymmetricMatrix) -> float:
    """(1/2) vec(S1)^T (X (+) X)^{-1} vec(S2) by a dense Kronecker-sum solve."""
    d = x.dim
    eye = np.eye(d)
    k = np.kron(x.array, eye) + np.kron(eye, x.array)
    return 0.5 * float(s1.array.ravel() @ np.linalg.solve(k, s2.array.ravel()))


def gbw_inner_kron(m: SpdMatrix, x: SpdMatrix, s1: SymmetricMatrix, s2: SymmetricMatrix) -> float:
    """(1/2) vec(S1)^T (X (x) M + M (x) X)^{-1} vec(S2)."""
    k = np.kron(x.array, m.array) + np.kron(m.array, x.array)
    return 0.5 * float(s1.array.ravel() @ np.linalg.solve(k, s2.array.ravel()))


def ai_inner_kron(x: SpdMatrix, s1: SymmetricMatrix, s2: SymmetricMatrix) -> float:
    """vec(S1)^T (X (x) X)^{-1} vec(S2)."""
    k = np.kron(x.array, x.array)
    return float(s1.array.ravel() @ np.linalg.solve(k, s2.array.ravel()))


def central_fd(fun, h: float) -> float:
    """Central difference (fun(h) - fun(-h)) / (2h) of a scalar path."""
    return (fun(h) - fun(-h)) / (2.0 * h)


def central_fd4(fun, h: float) -> float:
    """Fourth-order central difference.

    Used for the deep layer/network losses: their float evaluation has
    ~1e-10 relative roughness (eigenvector sensitivity accumulated over
    the pipeline), so a second-order stencil at small h hits that noise
    floor; fourth order at a larger h stays below both error sources.
    """
    return (-fun(2 * h) + 8.0 * fun(h) - 8.0 * fun(-h) + fun(-2 * h)) / (12.0 * h)


def _rel(err: float, ref: float) -> float:
    return abs(err) / max(abs(ref), 1e-12)


def _unit_symmetric(rng: np.random.Generator, dim: int) -> SymmetricMatrix:
    s = random_symmetric(rng, dim)
    return SymmetricMatrix(s.array / max(np.linalg.norm(s.array), 1e-12))


# ---------------------------------------------------------------------------
# operators suite


DEFAULT_DIMS = (2, 3, 4, 6, 8, 12, 16, 24, 32)


def operators_suite(seed: int = 0, dims=None) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    dims = tuple(dims) if dims else DEFAULT_DIMS
    checks: list[CheckResult] = []

    worst = 0.0
    for i in range(200):
        d = dims[i % len(dims)]
        x = random_spd(rng, d, cond=10.0 ** rng.uniform(0, 4))
        y = random_spd(rng, d, cond=10.0 ** rng.uniform(0, 4))
        back = bw_exp(x, bw_log(x, y))
        worst = max(worst, np.linalg.norm(back.array - y.array) / np.linalg.norm(y.array))
    checks.append(CheckResult("exp_log_roundtrip", worst, 1e-8))

    worst = 0.0
    for i in range(60):
        d = dims[i % len(dims)]
        x = random_spd(rng, d, cond=10.0 ** rng.uniform(0, 4))
        s = random_symmetric(rng, d)
        l = lyapunov_solve(x, s).array
        res = x.array @ l + l @ x.array - s.array
        worst = max(worst, np.linalg.norm(res) / np.linalg.norm(s.array))
    checks.append(CheckResult("lyapunov_residual", worst, 1e-10))

    worst = 0.0
    for i in range(60):
        d = dims[i % len(dims)]
        x = random_spd(rng, d, cond=10.0 ** rng.uniform(0, 3))
        m = random_spd(rng, d, cond=10.0 ** rng.uniform(0, 3))
        s = random_symmetric(rng, d)
        l = generalized_lyapunov_solve(x, m, s).array
        res = x.array @ l @ m.array + m.array @ l @ x.array - s.array
        worst = max(worst, np.linalg.norm(res) / np.linalg.norm(s.array))
    checks.append(CheckResult("generalized_lyapunov_residual", worst, 1e-9))

    worst = 0.0
    for i in range(60):
        d = dims[i % len(dims)]
        q = random_orthogonal(rng, d)
        x1 = SpdMatrix.from_eig(q, 10.0 ** rng.uniform(-1.5, 1.5, d))
        which = i % 3
        if which == 0:
            x2 = SpdMatrix.identity(d)
        elif which == 1:
            x1, x2 = SpdMatrix.identity(d), x1
        else:
            x2 = SpdMatrix.from_eig(q, 10.0 ** rng.uniform(-1.5, 1.5, d))
        s = random_symmetric(rng, d)
        moved = bw_parallel_transport(x1, x2, s)
        a = bw_inner(x2, moved, moved)
        b = bw_inner(x1, s, s)
        worst = max(worst, _rel(a - b, b))
    checks.append(CheckResult("parallel_transport_preservation", worst, 1e-8))

    worst_bw = 0.0
    worst_gbw = 0.0
    for i in range(40):
        d = 2 + i % 5  # d <= 6
        x = random_spd(rng, d, cond=10.0 ** rng.uniform(0, 2))
        m = random_spd(rng, d, cond=10.0 ** rng.uniform(0, 2))
        s1 = random_symmetric(rng, d)
        s2 = random_symmetric(rng, d)
        ref = bw_inner_kron(x, s1, s2)
        worst_bw = max(worst_bw, _rel(bw_inner(x, s1, s2) - ref, ref))
        ref = gbw_inner_kron(m, x, s1, s2)
        worst_gbw = max(worst_gbw, _rel(gbw_inner(m, x, s1, s2) - ref, ref))
    checks.append(CheckResult("kron_oracle_bw_inner", worst_bw, 1e-9))
    checks.append(CheckResult("kron_oracle_gbw_inner", worst_gbw, 1e-9))

    # Frechet-mean checks (acceptance criterion 3 lives in this suite).
    worst = 0.0
    for i in range(10):
        d = (4, 8, 16)[i % 3]
        n = (4, 8, 32)[i % 3]
        batch = [random_spd(rng, d, cond=10.0 ** rng.uniform(0, 2)) for _ in range(n)]
        w = rng.uniform(0.5, 1.5, n)
        weights = WeightVector(w / w.sum())
        g = frechet_mean(batch, weights, iters=100, tol=1e-8)
        r = g.sqrt().array
        acc = np.zeros((d, d))
        for wi, xi in zip(weights.values, batch):
            acc += wi * SpdMatrix(r @ xi.array @ r).sqrt().array
        worst = max(worst, np.linalg.norm(g.array - acc) / np.linalg.norm(g.array))
    checks.append(CheckResult("karcher_residual", worst, 1e-6))

    worst = 0.0
    for i in range(20):
        d = dims[i % len(dims)]
        if d > 16:
            d = 16
        x1 = random_spd(rng, d, cond=10.0 ** rng.uniform(0, 2))
        x2 = random_spd(rng, d, cond=10.0 ** rng.uniform(0, 2))
        om = rng.uniform(0.1, 0.9)
        closed = two_point_mean(x1, x2, om)
        iterated = frechet_mean([x1, x2], WeightVector([1 - om, om]), iters=200, tol=1e-10)
        worst = max(
            worst, np.linalg.norm(closed.array - iterated.array) / np.linalg.norm(closed.array)
        )
    checks.append(CheckResult("two_point_closed_form", worst, 1e-6))

    worst = 0.0
    for i in range(10):
        d = 5
        n = 6
        spectra = 10.0 ** rng.uniform(-1, 1, (n, d))
        batch = [SpdMatrix(np.diag(sp)) for sp in spectra]
        w = rng.uniform(0.5, 1.5, n)
        w /= w.sum()
        g = frechet_mean(batch, WeightVector(w), iters=200, tol=1e-12)
        expected = np.diag((w @ np.sqrt(spectra)) ** 2)
        worst = max(worst, np.linalg.norm(g.array - expected) / np.linalg.norm(expected))
    checks.append(CheckResult("commuting_barycenter", worst, 1e-8))

    return checks


# ---------------------------------------------------------------------------
# propositions suite


def propositions_suite(seed: int = 0, dims=None) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    dims = tuple(d for d in (dims or DEFAULT_DIMS) if d <= 16)
    checks: list[CheckResult] = []

    worst = 0.0
    for i in range(100):
        d = dims[i % len(dims)]
        # eigenvalues in [0.5, 4] keep psi_s on the manifold for s up to 2
        x = random_spd(rng, d, cond=8.0, lam_max=4.0)
        for s in (0.25, 0.5, 2.0):
            lhs = bw_distance(scale_from_identity(x, s), SpdMatrix.identity(d))
            rhs = s * bw_distance(x, SpdMatrix.identity(d))
            worst = max(worst, abs(lhs - rhs))
    checks.append(CheckResult("prop31_scaling_identity", worst, 1e-10))

    worst = 0.0
    thetas = (0.5, 1.0, 2.0)
    for i in range(100):
        d = dims[i % len(dims)]
        theta = thetas[i % 3]
        x = random_spd(rng, d, cond=10.0 ** rng.uniform(0, 2))
        s1 = random_symmetric(rng, d)
        s2 = random_symmetric(rng, d)
        m = x.power(theta)  # the proof's contraction convention
        num = power_gbw_inner(m, theta, x, s1, s2)
        den = power_ai_inner(theta, x, s1, s2)
        worst = max(worst, abs(num / den - 0.25))
    checks.append(CheckResult("prop33_quarter_ratio", worst, 1e-6))

    # linear convergence in theta: gentle spectra keep the first-order
    # coefficient below |limit| so theta = 1e-3 lands inside the bound
    mono_ok = 0.0
    worst_gap = 0.0
    for i in range(10):
        d = dims[i % len(dims)]
        x = random_spd(rng, d, cond=3.0)
        m = random_spd(rng, d, cond=3.0)
        s = random_symmetric(rng, d)
        limit = power_gbw_zero_limit(m, x, s)
        gaps = [
            abs(power_gbw_inner(m, theta, x, s, s) - limit) for theta in (0.1, 0.01, 0.001)
        ]
        if not (gaps[0] > gaps[1] > gaps[2]):
            mono_ok = 1.0
        worst_gap = max(worst_gap, gaps[2] / max(abs(limit), 1e-12))
    checks.append(CheckResult("prop32_gap_monotone", mono_ok, 0.0))
    checks.append(CheckResult("prop32_final_gap", worst_gap, 1e-3))

    return checks


# ---------------------------------------------------------------------------
# gradients suite


def _fd_probe_eigen(rng, f, cond: float, dim: int) -> float:
    """Relative error of the Daleckii-Krein pullback vs a directional FD."""
    x = random_spd(rng, dim, cond=cond)
    upstream = _unit_symmetric(rng, dim)
    direction = _unit_symmetric(rng, dim)
    grad = backward_eigen_function(x, f, upstream)
    analytic = float(np.sum(grad.array * direction.array))
    lam_min = x.eig.values[-1]
    h = min(1e-5, 1e-3 * lam_min)

    def path(t: float) -> float:
        xt = SpdMatrix(x.array + t * direction.array)
        return float(np.sum(upstream.array * matrix_function(xt, f).array))

    return _rel(central_fd(path, h) - analytic, analytic)


def gradients_suite(seed: int = 0, dims=None) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    checks: list[CheckResult] = []

    for f, label in ((SQRT, "sqrt"), (LOG, "log"), (power(0.7), "pow")):
        worst = max(
            _fd_probe_eigen(rng, f, 10.0 ** rng.uniform(0, 3), int(rng.integers(2, 17)))
            for _ in range(50)
        )
        checks.append(CheckResult(f"eigen_backward_{label}", worst, 1e-5))
        worst = max(
            _fd_probe_eigen(rng, f, 10.0 ** rng.uniform(5, 6), int(rng.integers(2, 17)))
            for _ in range(10)
        )
        checks.append(CheckResult(f"eigen_backward_{label}_illcond", worst, 1e-4))

    worst = 0.0
    for _ in range(50):
        d = int(rng.integers(2, 17))
        x = random_spd(rng, d, cond=10.0 ** rng.uniform(0, 2))
        s = random_symmetric(rng, d)
        upstream = _unit_symmetric(rng, d)
        p = lyapunov_solve(x, s)
        ds, dx = backward_lyapunov(x, p, upstream)
        e = _unit_symmetric(rng, d)
        analytic = float(np.sum(ds.array * e.array))
        fd = central_fd(
            lambda t: float(
                np.sum(
                    upstream.array
                    * lyapunov_solve(x, SymmetricMatrix(s.array + t * e.array)).array
                )
            ),
            1e-5,
        )
        worst = max(worst, _rel(fd - analytic, analytic))
        analytic = float(np.sum(dx.array * e.array))
        fd = central_fd(
            lambda t: float(
                np.sum(upstream.array * lyapunov_solve(SpdMatrix(x.array + t * e.array), s).array)
            ),
            min(1e-5, 1e-3 * x.eig.values[-1]),
        )
        worst = max(worst, _rel(fd - analytic, analytic))
    checks.append(CheckResult("lyapunov_backward_fd", worst, 1e-5))

    # the generic pair-kernel base gradient must reproduce the classical rule
    worst = 0.0
    for _ in range(20):
        d = int(rng.integers(2, 13))
        x = random_spd(rng, d, cond=10.0 ** rng.uniform(0, 2))
        s = random_symmetric(rng, d)
        upstream = _unit_symmetric(rng, d)
        tape = Tape()
        x_id = tape.leaf(x.array, symmetric=True)
        s_id = tape.leaf(s.array, symmetric=True)
        from .linalg import LYAPUNOV_KERNEL

        out = tape.pair_fn(x_id, s_id, LYAPUNOV_KERNEL)
        loss = tape.trace(tape.matmul(tape.const(upstream.array), out))
        g = tape.grad(loss, wrt=[x_id, s_id])
        ds_ref, dx_ref = backward_lyapunov(x, lyapunov_solve(x, s), upstream)
        scale = max(np.linalg.norm(dx_ref.array), 1e-12)
        worst = max(worst, np.linalg.norm(g[x_id] - dx_ref.array) / scale)
        worst = max(worst, np.linalg.norm(g[s_id] - ds_ref.array) / scale)
    checks.append(CheckResult("pair_kernel_matches_lyapunov_rule", worst, 1e-12))

    # transports: FD through the tape ops, both arguments
    from .linalg import PT_FROM_IDENTITY_KERNEL, PT_TO_IDENTITY_KERNEL
    from .linalg import apply_pair_kernel

    worst = 0.0
    for kernel in (PT_FROM_IDENTITY_KERNEL, PT_TO_IDENTITY_KERNEL):
        for _ in range(25):
            d = int(rng.integers(2, 13))
            x = random_spd(rng, d, cond=10.0 ** rng.uniform(0, 2))
            s = random_symmetric(rng, d)
            upstream = _unit_symmetric(rng, d)
            e = _unit_symmetric(rng, d)
            tape = Tape()
            x_id = tape.leaf(x.array, symmetric=True)
            s_id = tape.leaf(s.array, symmetric=True)
            out = tape.pair_fn(x_id, s_id, kernel)
            loss = tape.trace(tape.matmul(tape.const(upstream.array), out))
            g = tape.grad(loss, wrt=[x_id, s_id])

            def apply_at(xt: SpdMatrix, st: np.ndarray) -> float:
                ee = xt.eig
                val = apply_pair_kernel(ee.values, ee.vectors, st, kernel)
                return float(np.sum(upstream.array * val))

            h = min(1e-5, 1e-3 * x.eig.values[-1])
            fd = central_fd(lambda t: apply_at(SpdMatrix(x.array + t * e.array), s.array), h)
            worst = max(worst, _rel(fd - float(np.sum(g[x_id] * e.array)), fd))
            fd = central_fd(lambda t: apply_at(x, s.array + t * e.array), 1e-5)
            worst = max(worst, _rel(fd - float(np.sum(g[s_id] * e.array)), fd))
    checks.append(CheckResult("transport_backward_fd", worst, 1e-5))

    layer_fd, layer_dev = _gbwbn_layer_fd(seed)
    checks.append(CheckResult("gbwbn_layer_fd", layer_fd, 1e-5))
    checks.append(CheckResult("gbwbn_tape_vs_plain_forward", layer_dev, 1e-10))
    net_fd, net_dev = _network_fd(seed)
    checks.append(CheckResult("network_fd", net_fd, 1e-5))
    checks.append(CheckResult("network_tape_vs_plain_loss", net_dev, 1e-10))

    worst = 0.0
    for _ in range(100):
        d = int(rng.integers(2, 13))
        x = random_spd(rng, d, cond=10.0 ** rng.uniform(0, 2))
        g = rng.standard_normal((d, d))
        gs = symmetrize(g)
        r = SymmetricMatrix(2.0 * (gs @ x.array + x.array @ gs))
        s = random_symmetric(rng, d)
        lhs = bw_inner(x, r, s)
        rhs = float(np.sum(gs * s.array))
        worst = max(worst, abs(lhs - rhs) / max(abs(rhs), 1.0))
    checks.append(CheckResult("rsgd_metric_identity", worst, 1e-9))

    bad = 0
    param = random_spd(np.random.default_rng(seed + 1), 8, cond=30.0)
    rng2 = np.random.default_rng(seed + 2)
    for _ in range(1000):
        grad_e = 0.05 * rng2.standard_normal((8, 8))
        param = rsgd_step(param, grad_e, lr=1e-2)
        if param.eig.values[-1] <= 0:
            bad += 1
    checks.append(CheckResult("rsgd_output_spd", float(bad), 0.0))

    worst = 0.0
    for _ in range(20):
        d = int(rng.integers(2, 13))
        x = random_spd(rng, d, cond=10.0)
        g = rng.standard_normal((d, d))
        gs = symmetrize(g)
        r = SymmetricMatrix(2.0 * (gs @ x.array + x.array @ gs))
        mu = 1e-4
        stepped = rsgd_step(x, g, lr=mu)
        expect = mu * np.sqrt(bw_inner(x, r, r))
        worst = max(worst, _rel(bw_distance(stepped, x) - expect, expect))
    checks.append(CheckResult("rsgd_first_order_step", worst, 0.05))

    w = random_orthogonal(np.random.default_rng(seed + 3), 9)[:, :4]
    rng3 = np.random.default_rng(seed + 4)
    drift = 0.0
    for _ in range(1000):
        w = stiefel_step(w, rng3.standard_normal(w.shape), lr=1e-2)
        drift = max(drift, np.linalg.norm(w.T @ w - np.eye(4)))
    checks.append(CheckResult("stiefel_orthonormality_drift", drift, 1e-8))

    return checks


def _gbwbn_layer_fd(seed: int) -> tuple[float, float]:
    """Full-layer gradient check.

    Returns (worst FD relative error, worst tape-vs-plain forward deviation).
    The FD runs through the tape's own forward values so the comparison is
    noise-free; a separate residual pins the tape forward to the plain
    :func:`gbwbn_forward` path, which is what the FD then transitively
    validates.
    """
    rng = np.random.default_rng(seed + 10)
    dim, n = 6, 5
    batch = [random_spd(rng, dim, cond=30.0) for _ in range(n)]
    probes = [random_symmetric(rng, dim).array for _ in range(n)]
    base = GbwbnState.create(dim, theta=0.5, momentum=0.1)
    base.m = random_spd(rng, dim, cond=4.0)
    base.bias = random_spd(rng, dim, cond=4.0)
    base.scale = 0.9
    saved = base.to_dict()

    def tape_loss(batch_arrays, state_dict):
        tape = Tape()
        x_ids = [tape.leaf(symmetrize(a), symmetric=True) for a in batch_arrays]
        outs, params = _gbwbn_graph(
            tape, x_ids, GbwbnState.from_dict(state_dict), training=True
        )
        loss = None
        for p, o in zip(probes, outs):
            term = tape.trace(tape.matmul(tape.const(p), o))
            loss = term if loss is None else tape.sadd(loss, term)
        return tape, x_ids, params, outs, loss

    arrays = [x.array for x in batch]
    tape, x_ids, params, outs, loss = tape_loss(arrays, saved)
    grads = tape.grad(loss, wrt=[params["m"], params["bias"], params["scale"], x_ids[0]])

    # plain-path consistency of the very forward the gradient differentiates
    plain = gbwbn_forward(batch, GbwbnState.from_dict(saved))
    path_dev = max(
        float(np.max(np.abs(tape.value(o) - p.array))) for o, p in zip(outs, plain)
    )

    worst = 0.0
    for name in ("m", "bias"):
        e = _unit_symmetric(rng, dim)

        def path(t: float) -> float:
            st = dict(saved)
            st[name] = (np.array(saved[name]) + t * e.array).tolist()
            t_, _, _, _, l_ = tape_loss(arrays, st)
            return float(t_.value(l_))

        fd = central_fd4(path, 1e-3)
        worst = max(worst, _rel(fd - float(np.sum(grads[params[name]] * e.array)), fd))

    def spath(t: float) -> float:
        st = dict(saved)
        st["scale"] = saved["scale"] + t
        t_, _, _, _, l_ = tape_loss(arrays, st)
        return float(t_.value(l_))

    fd = central_fd4(spath, 1e-3)
    worst = max(worst, _rel(fd - grads[params["scale"]], fd))

    e = _unit_symmetric(rng, dim)

    def xpath(t: float) -> float:
        moved = [arrays[0] + t * e.array] + arrays[1:]
        t_, _, _, _, l_ = tape_loss(moved, saved)
        return float(t_.value(l_))

    fd = central_fd4(xpath, 1e-3)
    worst = max(worst, _rel(fd - float(np.sum(grads[x_ids[0]] * e.array)), fd))
    return worst, path_dev


def _network_fd(seed: int) -> tuple[float, float]:
    """Tiny-network gradient check.

    Returns (worst FD relative error over every parameter leaf and one
    input, worst tape-vs-plain loss deviation). FD runs through the tape
    forward; the plain :meth:`batch_loss` path is pinned separately.
    """
    rng = np.random.default_rng(seed + 20)
    model = make_classification_model(6, 4, num_classes=2, theta=1.0, seed=seed + 21)
    # move every parameter off its initialization so each gradient path is live
    # (a zero classifier would zero the upstream gradients)
    for layer in model.layers:
        if hasattr(layer, "state"):
            layer.state.m = random_spd(rng, 4, cond=3.0)
            layer.state.bias = random_spd(rng, 4, cond=3.0)
            layer.state.scale = 0.85
        elif hasattr(layer, "b"):
            layer.w = 0.3 * rng.standard_normal(layer.w.shape)
            layer.b = 0.1 * rng.standard_normal(layer.b.shape)
    batch = [random_spd(rng, 6, cond=50.0) for _ in range(6)]
    labels = np.array([0, 1, 0, 1, 0, 1])
    snapshot = model.to_dict()

    def tape_loss(mutate=None, batch_override=None) -> float:
        m = model.from_dict(snapshot)
        if mutate is not None:
            mutate(m)
        m.set_mode("train")
        tape = Tape()
        loss_id, _, _ = m.build_loss(tape, batch_override or batch, labels, training=True)
        return float(tape.value(loss_id))

    work = model.from_dict(snapshot)
    work.set_mode("train")
    tape = Tape()
    loss_id, bindings, input_ids = work.build_loss(tape, batch, labels, training=True)
    grads = tape.grad(loss_id, wrt=[b.node for b in bindings] + [input_ids[0]])

    plain_model = model.from_dict(snapshot)
    plain_model.set_mode("train")
    path_dev = abs(float(tape.value(loss_id)) - plain_model.batch_loss(batch, labels))

    worst = 0.0
    for binding in bindings:
        g = grads[binding.node]
        if binding.kind == "scalar":
            analytic = g

            def path(t, b=binding):
                def mutate(m):
                    m.layers[b.layer_index].state.scale += t

                return tape_loss(mutate)

        else:
            direction = rng.standard_normal(np.asarray(g).shape)
            if binding.kind == "spd":
                direction = symmetrize(direction)
            direction /= max(np.linalg.norm(direction), 1e-12)
            analytic = float(np.sum(g * direction))

            def path(t, b=binding, d=direction):
                def mutate(m):
                    layer = m.layers[b.layer_index]
                    if b.kind == "spd":
                        st = layer.state
                        setattr(st, b.name, SpdMatrix(getattr(st, b.name).array + t * d))
                    else:
                        setattr(layer, b.name, getattr(layer, b.name) + t * d)

                return tape_loss(mutate)

        fd = central_fd4(path, 1e-3)
        worst = max(worst, _rel(fd - analytic, max(abs(fd), 1e-6)))

    e = _unit_symmetric(rng, 6)
    fd = central_fd4(
        lambda t: tape_loss(batch_override=[SpdMatrix(batch[0].array + t * e.array)] + batch[1:]),
        1e-3,
    )
    worst = max(worst, _rel(fd - float(np.sum(grads[input_ids[0]] * e.array)), max(abs(fd), 1e-6)))
    return worst, path_dev


# ---------------------------------------------------------------------------
# batchnorm suite


def batchnorm_suite(seed: int = 0, dims=None) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    checks: list[CheckResult] = []

    worst = 0.0
    for i in range(50):
        d = int(rng.integers(2, 13))
        n = int(rng.integers(3, 9))
        batch = [random_spd(rng, d, cond=10.0 ** rng.uniform(0, 3)) for _ in range(n)]
        bias = random_spd(rng, d, cond=5.0)
        s = float(rng.uniform(0.5, 1.0))
        st_g = GbwbnState.create(d, theta=1.0, scale=s)
        st_b = GbwbnState.create(d, theta=1.0, scale=s)
        st_g.bias = bias
        st_b.bias = bias
        out_g = gbwbn_forward(batch, st_g)
        out_b = bwbn_forward(batch, st_b)
        for a, b in zip(out_g, out_b):
            worst = max(worst, float(np.max(np.abs(a.array - b.array))))
        worst = max(
            worst, float(np.max(np.abs(st_g.running_mean.array - st_b.running_mean.array)))
        )
        worst = max(worst, abs(st_g.running_var - st_b.running_var))
    checks.append(CheckResult("reduction_theta1_m_identity", worst, 1e-12))

    batch = kappa_grid_batch(16, 500, 1e3, 1e8, seed=seed + 5)
    state = GbwbnState.create(16, theta=1.0, scale=1.0)
    outs = gbwbn_forward(batch, state)
    kappas = np.array([condition_number(o) for o in outs])
    checks.append(CheckResult("cond_after_bn_gt_1e3", float(np.sum(kappas > 1e3)), 0.0))
    checks.append(CheckResult("cond_after_bn_gt_1e4", float(np.sum(kappas > 1e4)), 0.0))
    checks.append(CheckResult("cond_after_bn_gt_1e5", float(np.sum(kappas > 1e5)), 0.0))
    checks.append(
        CheckResult(
            "cond_median_contraction",
            float(np.median(kappas) / np.median([condition_number(x) for x in batch])),
            1.0,
        )
    )

    # outputs stay SPD across scales and powers (min eigenvalue > 0 enforced
    # by the SpdMatrix type; count violations)
    bad = 0
    for i in range(10):
        d = int(rng.integers(2, 33))
        n = int(rng.integers(4, 9))
        b = [random_spd(rng, d, cond=10.0 ** rng.uniform(0, 8)) for _ in range(n)]
        st = GbwbnState.create(d, theta=(0.5, 1.0, 0.25)[i % 3], scale=float(rng.uniform(0.2, 1.0)))
        st.bias = random_spd(rng, d, cond=10.0)
        try:
            res = gbwbn_forward(b, st)
        except DomainError:
            bad += 1
            continue
        for o in res:
            if o.eig.values[-1] <= 0:
                bad += 1
    checks.append(CheckResult("output_positivity", float(bad), 0.0))

    # centering quality with converged statistics
    worst = 0.0
    for i in range(5):
        d = 8
        n = 16
        batch = [random_spd(rng, d, cond=10.0 ** rng.uniform(1, 4)) for _ in range(n)]
        state = GbwbnState.create(d, theta=1.0, scale=1.0)
        outs = gbwbn_forward(batch, state)
        eye = SpdMatrix.identity(d)
        before = bw_distance(frechet_mean(batch, iters=100, tol=1e-10), eye)
        after = bw_distance(frechet_mean(outs, iters=100, tol=1e-10), eye)
        worst = max(worst, after / before)
    checks.append(CheckResult("centering_contraction", worst, 0.1))

    # eval mode: deterministic, stateless
    d, n = 6, 5
    batch = [random_spd(rng, d, cond=100.0) for _ in range(n)]
    state = GbwbnState.create(d, theta=0.5)
    gbwbn_forward(batch, state)  # one training pass to move the stats
    state.mode = "eval"
    before = state.to_json()
    out1 = gbwbn_forward(batch, state)
    out2 = gbwbn_forward(batch, state)
    drift = 0.0 if state.to_json() == before else 1.0
    for a, b in zip(out1, out2):
        drift = max(drift, float(np.max(np.abs(a.array - b.array))))
    checks.append(CheckResult("eval_mode_stateless", drift, 0.0))

    # batch-order invariance of the statistics
    state1 = GbwbnState.create(d, theta=1.0)
    state2 = GbwbnState.create(d, theta=1.0)
    gbwbn_forward(batch, state1)
    gbwbn_forward(batch[::-1], state2)
    diff = float(np.max(np.abs(state1.running_mean.array - state2.running_mean.array)))
    diff = max(diff, abs(state1.running_var - state2.running_var))
    checks.append(CheckResult("batch_order_invariance", diff, 1e-12))

    return checks


# ---------------------------------------------------------------------------
# entry point


SUITES = {
    "operators": operators_suite,
    "propositions": propositions_suite,
    "gradients": gradients_suite,
    "batchnorm": batchnorm_suite,
}


def run_suite(name: str, seed: int = 0, dims=None) -> list[CheckResult]:
    """Run one named suite, or all of them in a fixed order."""
    if name == "all":
        out: list[CheckResult] = []
        for key in ("operators", "propositions", "gradients", "batchnorm"):
            out.extend(SUITES[key](seed=seed, dims=dims))
        return out
    if name not in SUITES:
        raise DomainError(f"unknown suite {name!r}; choose from {sorted(SUITES)} or 'all'")
    return SUITES[name](seed=seed, dims=dims)
