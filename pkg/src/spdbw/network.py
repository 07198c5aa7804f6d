"""Minimal SPDNet-style backbone hosting the normalization layer.

Layers: BiMap (congruence by a Stiefel parameter), the GBWBN layer, ReEig
(eigenvalue rectification), LogEig + vectorization, and an affine softmax
classifier. Forward passes exist twice on purpose: a plain path used for
inference, and a tape path used for training; a test pins them together.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .autodiff import Gradient, Tape, rsgd_step, stiefel_step
from .batchnorm import GbwbnState, gbwbn_forward, set_mode
from .errors import DimensionMismatchError, DomainError, TrainingDivergenceError
from .frechet import update_running_stats
from .linalg import (
    INV_SQRT,
    LOG,
    LYAPUNOV_KERNEL,
    PT_FROM_IDENTITY_KERNEL,
    PT_TO_IDENTITY_KERNEL,
    SQRT,
    SpdMatrix,
    matrix_function,
    matrix_function_spd,
    power,
    relu_floor,
    symmetrize,
)

# ---------------------------------------------------------------------------
# layer specs


@dataclass(frozen=True)
class BiMapSpec:
    d_in: int
    d_out: int


@dataclass(frozen=True)
class GbwbnSpec:
    theta: float = 1.0
    momentum: float = 0.1
    eps: float = 1e-5
    scale: float = 1.0


@dataclass(frozen=True)
class ReEigSpec:
    eps: float = 1e-4


@dataclass(frozen=True)
class LogEigSpec:
    pass


@dataclass(frozen=True)
class ClassifierSpec:
    num_classes: int


def validate_layer_spec(specs, input_dim: int) -> int:
    """Check the dimension chain; returns the classifier's input width."""
    dim = input_dim
    vector_dim = None
    seen_logeig = False
    for i, spec in enumerate(specs):
        if isinstance(spec, BiMapSpec):
            if vector_dim is not None:
                raise DimensionMismatchError("BiMap cannot follow LogEig")
            if spec.d_in != dim:
                raise DimensionMismatchError(
                    f"BiMap layer {i} expects dim {spec.d_in}, chain gives {dim}"
                )
            if spec.d_out > spec.d_in or spec.d_out < 1:
                raise DimensionMismatchError("BiMap must reduce to 1 <= d_out <= d_in")
            dim = spec.d_out
        elif isinstance(spec, (GbwbnSpec, ReEigSpec)):
            if vector_dim is not None:
                raise DimensionMismatchError("SPD layers cannot follow LogEig")
        elif isinstance(spec, LogEigSpec):
            if seen_logeig:
                raise DimensionMismatchError("at most one LogEig layer")
            seen_logeig = True
            vector_dim = dim * (dim + 1) // 2
        elif isinstance(spec, ClassifierSpec):
            if vector_dim is None:
                raise DimensionMismatchError("Classifier requires a preceding LogEig")
            if i != len(specs) - 1:
                raise DimensionMismatchError("Classifier must be terminal")
        else:
            raise DomainError(f"unknown layer spec {spec!r}")
    if not specs or not isinstance(specs[-1], ClassifierSpec):
        raise DimensionMismatchError("network must end in a Classifier")
    return vector_dim


# ---------------------------------------------------------------------------
# layer ops (plain path)


def bimap_forward(w: np.ndarray, x: SpdMatrix) -> SpdMatrix:
    """W^T X W; full column rank of W keeps the result SPD."""
    if w.shape[0] != x.dim:
        raise DimensionMismatchError(
            f"BiMap weight expects input dim {w.shape[0]}, got {x.dim}"
        )
    return SpdMatrix(w.T @ x.array @ w)


def reeig_forward(x: SpdMatrix, eps: float) -> SpdMatrix:
    """Eigenvalue rectification U max(Lambda, eps) U^T."""
    return matrix_function_spd(x, relu_floor(eps))


def logeig_vectorize(x: SpdMatrix) -> np.ndarray:
    """Matrix log, then upper-triangle vectorization.

    Off-diagonal entries carry a sqrt(2) weight so the Euclidean norm of the
    vector equals the Frobenius norm of log(x).
    """
    lx = matrix_function(x, LOG).array
    iu = np.triu_indices(x.dim)
    weights = np.where(iu[0] == iu[1], 1.0, np.sqrt(2.0))
    return weights * lx[iu]


def _orthonormal_columns(rng: np.random.Generator, d_in: int, d_out: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((d_in, d_out)))
    return q * np.sign(np.diagonal(r))[None, :]


# ---------------------------------------------------------------------------
# model


@dataclass
class ParamBinding:
    layer_index: int
    name: str
    node: int
    kind: str  # 'stiefel' | 'spd' | 'scalar' | 'dense'


class _BiMapLayer:
    def __init__(self, spec: BiMapSpec, rng):
        self.spec = spec
        self.w = _orthonormal_columns(rng, spec.d_in, spec.d_out)


class _GbwbnLayer:
    def __init__(self, spec: GbwbnSpec, dim: int):
        self.spec = spec
        self.state = GbwbnState.create(
            dim, theta=spec.theta, momentum=spec.momentum, eps=spec.eps, scale=spec.scale
        )


class _ClassifierLayer:
    def __init__(self, spec: ClassifierSpec, in_dim: int):
        self.spec = spec
        self.w = np.zeros((spec.num_classes, in_dim))
        self.b = np.zeros(spec.num_classes)


class SpdNetwork:
    """A concrete network built from a layer spec with seeded parameters."""

    def __init__(self, specs, input_dim: int, seed: int = 0):
        validate_layer_spec(specs, input_dim)
        self.specs = list(specs)
        self.input_dim = input_dim
        rng = np.random.default_rng(seed)
        self.layers = []
        dim = input_dim
        for spec in self.specs:
            if isinstance(spec, BiMapSpec):
                self.layers.append(_BiMapLayer(spec, rng))
                dim = spec.d_out
            elif isinstance(spec, GbwbnSpec):
                self.layers.append(_GbwbnLayer(spec, dim))
            elif isinstance(spec, ReEigSpec):
                self.layers.append(spec)
            elif isinstance(spec, LogEigSpec):
                self.layers.append(spec)
            else:
                self.layers.append(_ClassifierLayer(spec, dim * (dim + 1) // 2))

    # -- modes ----------------------------------------------------------
    def set_mode(self, mode: str) -> None:
        for layer in self.layers:
            if isinstance(layer, _GbwbnLayer):
                set_mode(layer.state, mode)

    # -- plain forward ----------------------------------------------------
    def forward_logits(self, batch) -> np.ndarray:
        feats = list(batch)
        vectors = None
        for layer in self.layers:
            if isinstance(layer, _BiMapLayer):
                feats = [bimap_forward(layer.w, x) for x in feats]
            elif isinstance(layer, _GbwbnLayer):
                feats = gbwbn_forward(feats, layer.state)
            elif isinstance(layer, ReEigSpec):
                feats = [reeig_forward(x, layer.eps) for x in feats]
            elif isinstance(layer, LogEigSpec):
                vectors = np.stack([logeig_vectorize(x) for x in feats])
            else:
                return vectors @ layer.w.T + layer.b[None, :]
        raise AssertionError("unreachable: spec validation requires a classifier")

    def predict(self, batch) -> np.ndarray:
        return np.argmax(self.forward_logits(batch), axis=1)

    def accuracy(self, batch, labels) -> float:
        return float(np.mean(self.predict(batch) == np.asarray(labels)))

    def batch_loss(self, batch, labels) -> float:
        """Mean cross-entropy of the plain forward pass (current BN mode)."""
        logits = self.forward_logits(batch)
        zmax = logits.max(axis=1, keepdims=True)
        lse = np.log(np.exp(logits - zmax).sum(axis=1)) + zmax[:, 0]
        picked = logits[np.arange(len(labels)), np.asarray(labels)]
        return float(np.mean(lse - picked))

    # -- tape forward -----------------------------------------------------
    def build_loss(self, tape: Tape, batch, labels, training: bool = True):
        """Append the whole forward pass to ``tape``.

        Returns (loss node, parameter bindings, input leaf ids).
        """
        labels = np.asarray(labels)
        bindings: list[ParamBinding] = []
        ids = [tape.leaf(x.array, symmetric=True) for x in batch]
        input_ids = list(ids)
        vec_ids = None
        loss = None
        for li, layer in enumerate(self.layers):
            if isinstance(layer, _BiMapLayer):
                w_id = tape.leaf(layer.w)
                bindings.append(ParamBinding(li, "w", w_id, "stiefel"))
                ids = [tape.congruence(x, w_id) for x in ids]
            elif isinstance(layer, _GbwbnLayer):
                ids, param_ids = _gbwbn_graph(tape, ids, layer.state, training)
                bindings.append(ParamBinding(li, "m", param_ids["m"], "spd"))
                bindings.append(ParamBinding(li, "bias", param_ids["bias"], "spd"))
                bindings.append(ParamBinding(li, "scale", param_ids["scale"], "scalar"))
            elif isinstance(layer, ReEigSpec):
                ids = [tape.eig_fn(x, relu_floor(layer.eps)) for x in ids]
            elif isinstance(layer, LogEigSpec):
                vec_ids = [tape.sym_vec(tape.eig_fn(x, LOG)) for x in ids]
            else:
                w_id = tape.leaf(layer.w)
                b_id = tape.leaf(layer.b)
                bindings.append(ParamBinding(li, "w", w_id, "dense"))
                bindings.append(ParamBinding(li, "b", b_id, "dense"))
                ce = None
                for v, y in zip(vec_ids, labels):
                    term = tape.cross_entropy(tape.affine(w_id, b_id, v), int(y))
                    ce = term if ce is None else tape.sadd(ce, term)
                loss = tape.saffine(ce, 1.0 / len(labels))
        return loss, bindings, input_ids

    # -- parameter updates -------------------------------------------------
    def apply_updates(self, bindings, grads: Gradient, lr: float) -> None:
        for binding in bindings:
            layer = self.layers[binding.layer_index]
            g = grads[binding.node]
            if binding.kind == "stiefel":
                layer.w = stiefel_step(layer.w, g, lr)
            elif binding.kind == "spd":
                state = layer.state
                setattr(state, binding.name, rsgd_step(getattr(state, binding.name), g, lr))
            elif binding.kind == "scalar":
                new_scale = layer.state.scale - lr * g
                if new_scale == 0.0:
                    raise DomainError("scale parameter stepped to zero")
                layer.state.scale = new_scale
            else:
                setattr(layer, binding.name, getattr(layer, binding.name) - lr * g)

    # -- checkpointing ------------------------------------------------------
    def to_dict(self) -> dict:
        spec_dicts = []
        layer_dicts = []
        for spec, layer in zip(self.specs, self.layers):
            if isinstance(spec, BiMapSpec):
                spec_dicts.append({"type": "bimap", "d_in": spec.d_in, "d_out": spec.d_out})
                layer_dicts.append({"w": layer.w.tolist()})
            elif isinstance(spec, GbwbnSpec):
                spec_dicts.append(
                    {"type": "gbwbn", "theta": spec.theta, "momentum": spec.momentum,
                     "eps": spec.eps, "scale": spec.scale}
                )
                layer_dicts.append({"state": layer.state.to_dict()})
            elif isinstance(spec, ReEigSpec):
                spec_dicts.append({"type": "reeig", "eps": spec.eps})
                layer_dicts.append({})
            elif isinstance(spec, LogEigSpec):
                spec_dicts.append({"type": "logeig"})
                layer_dicts.append({})
            else:
                spec_dicts.append({"type": "classifier", "num_classes": spec.num_classes})
                layer_dicts.append({"w": layer.w.tolist(), "b": layer.b.tolist()})
        return {"input_dim": self.input_dim, "specs": spec_dicts, "layers": layer_dicts}

    @classmethod
    def from_dict(cls, data: dict) -> "SpdNetwork":
        specs = []
        for sd in data["specs"]:
            kind = sd["type"]
            if kind == "bimap":
                specs.append(BiMapSpec(sd["d_in"], sd["d_out"]))
            elif kind == "gbwbn":
                specs.append(GbwbnSpec(sd["theta"], sd["momentum"], sd["eps"], sd["scale"]))
            elif kind == "reeig":
                specs.append(ReEigSpec(sd["eps"]))
            elif kind == "logeig":
                specs.append(LogEigSpec())
            else:
                specs.append(ClassifierSpec(sd["num_classes"]))
        model = cls(specs, data["input_dim"], seed=0)
        for layer, ld in zip(model.layers, data["layers"]):
            if isinstance(layer, _BiMapLayer):
                layer.w = np.array(ld["w"], dtype=float)
            elif isinstance(layer, _GbwbnLayer):
                layer.state = GbwbnState.from_dict(ld["state"])
            elif isinstance(layer, _ClassifierLayer):
                layer.w = np.array(ld["w"], dtype=float)
                layer.b = np.array(ld["b"], dtype=float)
        return model

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "SpdNetwork":
        return cls.from_dict(json.loads(text))

    def clone(self) -> "SpdNetwork":
        return SpdNetwork.from_dict(self.to_dict())


def make_classification_model(
    input_dim: int,
    hidden_dim: int,
    num_classes: int = 2,
    with_bn: bool = True,
    theta: float = 1.0,
    reeig_eps: float = 1e-4,
    seed: int = 0,
) -> SpdNetwork:
    """BiMap -> [GBWBN] -> ReEig -> LogEig -> Classifier."""
    specs = [BiMapSpec(input_dim, hidden_dim)]
    if with_bn:
        specs.append(GbwbnSpec(theta=theta))
    specs += [ReEigSpec(reeig_eps), LogEigSpec(), ClassifierSpec(num_classes)]
    return SpdNetwork(specs, input_dim, seed=seed)


# ---------------------------------------------------------------------------
# GBWBN on the tape


def _gbwbn_graph(tape: Tape, x_ids, state: GbwbnState, training: bool):
    """Append the full normalization pipeline to the tape.

    Mirrors :func:`spdbw.batchnorm.gbwbn_forward` operation by operation;
    never shortcuts the M congruence (M is learnable). In train mode the
    running statistics are updated as a detached side effect, exactly as
    the plain forward does.
    """
    dim = state.dim
    theta = state.theta
    n = len(x_ids)
    m_id = tape.leaf(state.m.array, symmetric=True)
    g_id = tape.leaf(state.bias.array, symmetric=True)
    s_id = tape.leaf(state.scale)
    w_id = tape.eig_fn(m_id, INV_SQRT)

    def map_in(nid: int) -> int:
        y = nid if theta == 1.0 else tape.eig_fn(nid, power(theta))
        return tape.congruence(y, w_id)

    xh = [map_in(x) for x in x_ids]
    gh = map_in(g_id)

    if training:
        acc = tape.scale(xh[0], 1.0 / n)
        for x in xh[1:]:
            acc = tape.add(acc, tape.scale(x, 1.0 / n))
        root = tape.eig_fn(acc, SQRT)
        inv_root = tape.eig_fn(acc, INV_SQRT)
        inner = None
        for x in xh:
            term = tape.scale(tape.eig_fn(tape.congruence(x, root), SQRT), 1.0 / n)
            inner = term if inner is None else tape.add(inner, term)
        b_id = tape.congruence(tape.matmul(inner, inner), inv_root)
        b_sqrt = tape.eig_fn(b_id, SQRT)
        tb = tape.trace(b_id)
        nu_acc = None
        for x in xh:
            cross = tape.trace(tape.eig_fn(tape.congruence(x, b_sqrt), SQRT))
            d2 = tape.sadd(tape.sadd(tb, tape.trace(x)), tape.saffine(cross, -2.0))
            nu_acc = d2 if nu_acc is None else tape.sadd(nu_acc, d2)
        nu2_id = tape.saffine(nu_acc, 1.0 / (n * theta * theta))
        state.running_mean, state.running_var = update_running_stats(
            state.running_mean,
            state.running_var,
            SpdMatrix(symmetrize(tape.value(b_id))),
            float(tape.value(nu2_id)),
            state.momentum,
        )
    else:
        b_id = tape.const(state.running_mean.array)
        b_sqrt = tape.eig_fn(b_id, SQRT)
        nu2_id = tape.const(state.running_var)

    factor = tape.sdiv(s_id, tape.ssqrt(tape.saffine(nu2_id, 1.0, state.eps)))
    b_inv_sqrt = tape.eig_fn(b_id, INV_SQRT)
    eye = tape.const(np.eye(dim))
    neg2eye = tape.const(-2.0 * np.eye(dim))
    m_sqrt = tape.eig_fn(m_id, SQRT)

    outs = []
    for x in xh:
        core = tape.eig_fn(tape.congruence(x, b_sqrt), SQRT)
        c1 = tape.matmul(tape.matmul(b_sqrt, core), b_inv_sqrt)
        log_b = tape.add(tape.add(c1, tape.transpose(c1)), tape.scale(b_id, -2.0))
        s_bar = tape.pair_fn(b_id, log_b, PT_TO_IDENTITY_KERNEL)
        t0 = tape.add(eye, tape.scale(s_bar, 0.5))
        x_bar = tape.matmul(t0, t0)
        log_xbar = tape.add(tape.scale(tape.eig_fn(x_bar, SQRT), 2.0), neg2eye)
        scaled = tape.scale_by(log_xbar, factor)
        t1 = tape.add(eye, tape.scale(scaled, 0.5))
        x_check = tape.matmul(t1, t1)
        log_xcheck = tape.add(tape.scale(tape.eig_fn(x_check, SQRT), 2.0), neg2eye)
        s_bias = tape.pair_fn(gh, log_xcheck, PT_FROM_IDENTITY_KERNEL)
        lyap = tape.pair_fn(gh, s_bias, LYAPUNOV_KERNEL)
        lgl = tape.matmul(tape.matmul(lyap, gh), lyap)
        x_tilde = tape.add(tape.add(gh, s_bias), lgl)
        y = tape.congruence(x_tilde, m_sqrt)
        outs.append(y if theta == 1.0 else tape.eig_fn(y, power(1.0 / theta)))
    return outs, {"m": m_id, "bias": g_id, "scale": s_id}


# ---------------------------------------------------------------------------
# training loop


@dataclass
class TrainConfig:
    lr: float = 2.5e-3
    epochs: int = 50
    batch_size: int = 30
    seed: int = 0
    lambda_reg: float = 0.0


def train_step(model: SpdNetwork, batch, labels, lr: float) -> float:
    """One forward/backward/update on a batch; returns the batch loss."""
    model.set_mode("train")
    tape = Tape()
    loss_id, bindings, _ = model.build_loss(tape, batch, labels, training=True)
    grads = tape.grad(loss_id, wrt=[b.node for b in bindings])
    model.apply_updates(bindings, grads, lr)
    return float(tape.value(loss_id))


def evaluate(model: SpdNetwork, batch, labels) -> float:
    """Accuracy with running statistics (eval mode)."""
    model.set_mode("eval")
    try:
        return model.accuracy(batch, labels)
    finally:
        model.set_mode("train")


def train(model: SpdNetwork, train_data, test_data, cfg: TrainConfig):
    """SGD over epochs; deterministic given the seed.

    ``train_data``/``test_data`` are (list of SpdMatrix, labels). Returns
    one history row per epoch with train/test accuracy and mean loss; the
    model is updated in place.
    """
    xs, ys = train_data
    ys = np.asarray(ys)
    rng = np.random.default_rng(cfg.seed)
    history: list[dict] = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(xs))
        losses = []
        for start in range(0, len(xs), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss = train_step(model, [xs[i] for i in idx], ys[idx], cfg.lr)
            if not np.isfinite(loss):
                raise TrainingDivergenceError(
                    f"non-finite loss at epoch {epoch}", epoch=epoch
                )
            losses.append(loss)
        history.append(
            {
                "epoch": epoch,
                "train_loss": float(np.mean(losses)),
                "train_acc": evaluate(model, xs, ys),
                "test_acc": evaluate(model, test_data[0], test_data[1]),
            }
        )
    return history
