"""Riemannian batch normalization under BW and power-deformed GBW geometry.

``bwbn_forward`` is the plain Bures-Wasserstein layer: center the batch at
the identity by parallel transport, rescale dispersion on the tangent space
at the identity, transport to the learnable bias point. ``gbwbn_forward``
is the generalized, power-deformed layer, computed by mapping the batch
through the isometry f(X) = (M^{1/2} X M^{1/2})^{1/theta} into plain BW
space, normalizing there (with the variance divided by theta^2), and
mapping back.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, PositivityError
from .frechet import WeightVector, frechet_mean, frechet_variance, update_running_stats
from .linalg import SpdMatrix, SymmetricMatrix
from .metrics import bw_exp, bw_log, transport_from_identity, transport_to_identity

MODES = ("train", "eval")


@dataclass
class GbwbnState:
    """Parameters and running statistics of one normalization layer.

    ``m`` (metric parameter) and ``bias`` are learnable SPD matrices,
    ``scale`` a learnable nonzero real; ``theta`` is a fixed per-layer
    hyperparameter. Running statistics start at (I, 1) and are only
    written in train mode.
    """

    m: SpdMatrix
    bias: SpdMatrix
    scale: float
    theta: float
    momentum: float
    eps: float
    running_mean: SpdMatrix
    running_var: float
    mode: str = "train"

    def __post_init__(self):
        if self.scale == 0:
            raise DomainError("scale parameter must be nonzero")
        if self.theta == 0:
            raise DomainError("power parameter theta must be nonzero")
        if self.eps <= 0:
            raise DomainError("eps must be positive")
        if not 0.0 <= self.momentum <= 1.0:
            raise DomainError("momentum must lie in [0, 1]")
        if self.mode not in MODES:
            raise DomainError(f"mode must be one of {MODES}")
        dims = {self.m.dim, self.bias.dim, self.running_mean.dim}
        if len(dims) != 1:
            raise DomainError("m, bias and running_mean must share one dimension")

    @property
    def dim(self) -> int:
        return self.m.dim

    @classmethod
    def create(cls, dim: int, theta: float = 1.0, momentum: float = 0.1,
               eps: float = 1e-5, scale: float = 1.0) -> "GbwbnState":
        """Fresh layer state: M = bias = running mean = I, running variance 1."""
        return cls(
            m=SpdMatrix.identity(dim),
            bias=SpdMatrix.identity(dim),
            scale=scale,
            theta=theta,
            momentum=momentum,
            eps=eps,
            running_mean=SpdMatrix.identity(dim),
            running_var=1.0,
        )

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "theta": self.theta,
            "momentum": self.momentum,
            "eps": self.eps,
            "scale": self.scale,
            "m": self.m.array.tolist(),
            "bias": self.bias.array.tolist(),
            "running_mean": self.running_mean.array.tolist(),
            "running_var": self.running_var,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GbwbnState":
        return cls(
            m=SpdMatrix(np.array(data["m"], dtype=float)),
            bias=SpdMatrix(np.array(data["bias"], dtype=float)),
            scale=float(data["scale"]),
            theta=float(data["theta"]),
            momentum=float(data["momentum"]),
            eps=float(data["eps"]),
            running_mean=SpdMatrix(np.array(data["running_mean"], dtype=float)),
            running_var=float(data["running_var"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "GbwbnState":
        return cls.from_dict(json.loads(text))


def set_mode(state: GbwbnState, mode: str) -> GbwbnState:
    """Switch between batch statistics (train) and running statistics (eval)."""
    if mode not in MODES:
        raise DomainError(f"mode must be one of {MODES}")
    state.mode = mode
    return state


def scale_from_identity(x: SpdMatrix, s: float) -> SpdMatrix:
    """Scale the dispersion of ``x`` from the identity by the factor ``s``.

    psi_s(X) = Exp_I(s Log_I(X)) = (s (X^{1/2} - I) + I)^2, defined while
    s (X^{1/2} - I) + I stays positive definite; then
    d_BW(psi_s(X), I) = |s| d_BW(X, I).
    """
    if s == 0:
        raise DomainError("scaling factor must be nonzero")
    eye = np.eye(x.dim)
    t = s * (x.sqrt().array - eye) + eye
    gate = np.linalg.eigvalsh(t)
    if gate[0] <= 0.0:
        raise PositivityError(
            f"scaling by s={s:g} leaves the manifold: s(X^1/2 - I) + I has "
            f"eigenvalue {gate[0]:.6e} <= 0",
            min_eigenvalue=float(gate[0]),
        )
    return SpdMatrix(t @ t)


def _exp_identity(s: np.ndarray) -> np.ndarray:
    """Exp_I(S) = (I + S/2)^2, the closed form of the BW exponential at I."""
    t = np.eye(s.shape[0]) + 0.5 * s
    return t @ t


def _log_identity(x: SpdMatrix) -> SymmetricMatrix:
    """Log_I(X) = 2 X^{1/2} - 2 I."""
    return SymmetricMatrix(2.0 * x.sqrt().array - 2.0 * np.eye(x.dim))


def _normalize_element(xh: SpdMatrix, b: SpdMatrix, factor: float, g_hat: SpdMatrix,
                       index: int) -> SpdMatrix:
    """Center, scale, and bias one already-mapped batch element."""
    try:
        s_bar = transport_to_identity(b, bw_log(b, xh))
        x_bar = SpdMatrix(_exp_identity(s_bar.array))
    except PositivityError as exc:
        raise DomainError(
            f"centering left the SPD cone for batch element {index}: {exc}"
        ) from exc
    try:
        scaled = factor * _log_identity(x_bar)
        x_check = SpdMatrix(_exp_identity(scaled.array))
    except PositivityError as exc:
        raise DomainError(
            f"scaling left the SPD cone for batch element {index} "
            f"(factor {factor:g}): {exc}"
        ) from exc
    try:
        s_bias = transport_from_identity(g_hat, _log_identity(x_check))
        return bw_exp(g_hat, s_bias)
    except PositivityError as exc:
        raise DomainError(
            f"biasing left the SPD cone for batch element {index}: {exc}"
        ) from exc


def _bwbn_core(batch_hat, g_hat: SpdMatrix, state: GbwbnState,
               theta_for_var: float) -> list[SpdMatrix]:
    if len(batch_hat) == 0:
        raise DomainError("batch must be nonempty")
    if state.mode == "train":
        b = frechet_mean(batch_hat, WeightVector.uniform(len(batch_hat)), iters=1, tol=0.0)
        nu2 = frechet_variance(batch_hat, b, theta_for_var)
        state.running_mean, state.running_var = update_running_stats(
            state.running_mean, state.running_var, b, nu2, state.momentum
        )
    else:
        b = state.running_mean
        nu2 = state.running_var
    factor = state.scale / np.sqrt(nu2 + state.eps)
    return [
        _normalize_element(xh, b, factor, g_hat, i) for i, xh in enumerate(batch_hat)
    ]


def bwbn_forward(batch, state: GbwbnState) -> list[SpdMatrix]:
    """Bures-Wasserstein batch normalization (no metric parameter, no power).

    In train mode the batch mean (one fixed-point step from the arithmetic
    mean) and variance are used for normalization and folded into the
    running statistics; in eval mode the running statistics are used and
    nothing is written.
    """
    return _bwbn_core(list(batch), state.bias, state, 1.0)


def _is_identity(m: SpdMatrix) -> bool:
    return bool(np.array_equal(m.array, np.eye(m.dim)))


def gbwbn_forward(batch, state: GbwbnState) -> list[SpdMatrix]:
    """Batch normalization under the power-deformed generalized BW metric.

    Pipeline: X_hat_i = M^{-1/2} X_i^theta M^{-1/2} (and the bias alike),
    plain BW normalization of the X_hat batch with variance divided by
    theta^2, then X_out_i = (M^{1/2} X_tilde_i M^{1/2})^{1/theta}. With
    theta = 1 and M = I this runs the exact :func:`bwbn_forward` path.
    """
    batch = list(batch)
    if len(batch) == 0:
        raise DomainError("batch must be nonempty")
    theta = state.theta
    plain_power = theta == 1.0
    plain_metric = _is_identity(state.m)

    def map_in(x: SpdMatrix) -> SpdMatrix:
        y = x if plain_power else x.power(theta)
        if plain_metric:
            return y
        w = state.m.inv_sqrt().array
        return SpdMatrix(w @ y.array @ w)

    def map_out(x: SpdMatrix) -> SpdMatrix:
        if not plain_metric:
            r = state.m.sqrt().array
            x = SpdMatrix(r @ x.array @ r)
        return x if plain_power else x.power(1.0 / theta)

    try:
        batch_hat = [map_in(x) for x in batch]
        g_hat = map_in(state.bias)
    except PositivityError as exc:
        raise DomainError(f"input mapping left the SPD cone: {exc}") from exc
    normalized = _bwbn_core(batch_hat, g_hat, state, theta)
    try:
        return [map_out(x) for x in normalized]
    except PositivityError as exc:
        raise DomainError(f"output mapping left the SPD cone: {exc}") from exc
