"""Model state, forward pass, residual features, prototypes, and gradients.

The backbone is a two-layer graph convolution where each layer applies the
linear transform first, then neighborhood aggregation, then ReLU (both layers,
including the last). Residual features subtract the plain 1-hop neighbor mean
(raw adjacency, no self term); isolated nodes keep their own representation.
Class prototypes are affine maps of frozen Gaussian base vectors. All gradients
are hand-derived reverse mode; nothing here depends on an autograd framework.
"""

from dataclasses import dataclass, field, replace as dc_replace

import numpy as np
import scipy.sparse as sp

from .graph import AttributedGraph
from .linalg import NormalizedAdjacency, spmm
from .rng import substream

PROB_CLIP = 1e-7

TRAINABLE_NAMES = ("w1", "w2", "cls_w1", "cls_b1", "cls_w2", "cls_b2",
                   "theta_n_w", "theta_n_b", "theta_a_w", "theta_a_b")
FROZEN_NAMES = ("z_n", "z_a")
TENSOR_NAMES = TRAINABLE_NAMES + FROZEN_NAMES


@dataclass(frozen=True)
class Dims:
    """Layer sizes; the prototype length t always equals the output width d."""

    d_prime: int
    hidden: int
    d: int

    @property
    def t(self) -> int:
        return self.d

    def __post_init__(self):
        if min(self.d_prime, self.hidden, self.d) < 1:
            raise ValueError(f"dimensions must be positive: {self}")


@dataclass(eq=False)
class ModelParameters:
    """Complete trainable state plus the frozen prototype base vectors."""

    dims: Dims
    w1: np.ndarray         # (d_prime, hidden)
    w2: np.ndarray         # (hidden, d)
    cls_w1: np.ndarray     # (d, d)
    cls_b1: np.ndarray     # (d,)
    cls_w2: np.ndarray     # (d, 1)
    cls_b2: np.ndarray     # (1,)
    theta_n_w: np.ndarray  # (t, t)
    theta_n_b: np.ndarray  # (t,)
    theta_a_w: np.ndarray  # (t, t)
    theta_a_b: np.ndarray  # (t,)
    z_n: np.ndarray        # (t,), frozen after init
    z_a: np.ndarray        # (t,), frozen after init

    def tensors(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in TENSOR_NAMES}

    def trainable(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in TRAINABLE_NAMES}

    def replace(self, **tensors: np.ndarray) -> "ModelParameters":
        unknown = set(tensors) - set(TRAINABLE_NAMES)
        if unknown:
            raise ValueError(f"not trainable: {sorted(unknown)}")
        return dc_replace(self, **tensors)

    def astype(self, dtype) -> "ModelParameters":
        cast = {name: arr.astype(dtype) for name, arr in self.tensors().items()}
        return ModelParameters(dims=self.dims, **cast)


@dataclass(frozen=True)
class PrototypePair:
    """Materialized normal and abnormal class prototypes."""

    p_n: np.ndarray
    p_a: np.ndarray


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_model(dims: Dims, mu: float, sigma: float, seed: int) -> ModelParameters:
    """Glorot-uniform weights, zero biases, Gaussian base vectors (frozen)."""
    if sigma <= 0.0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    rng = substream(seed, "init")
    d_p, h, d = dims.d_prime, dims.hidden, dims.d
    f32 = np.float32
    return ModelParameters(
        dims=dims,
        w1=_glorot(rng, d_p, h).astype(f32),
        w2=_glorot(rng, h, d).astype(f32),
        cls_w1=_glorot(rng, d, d).astype(f32),
        cls_b1=np.zeros(d, f32),
        cls_w2=_glorot(rng, d, 1).astype(f32),
        cls_b2=np.zeros(1, f32),
        theta_n_w=_glorot(rng, dims.t, dims.t).astype(f32),
        theta_n_b=np.zeros(dims.t, f32),
        theta_a_w=_glorot(rng, dims.t, dims.t).astype(f32),
        theta_a_b=np.zeros(dims.t, f32),
        z_n=rng.normal(mu, sigma, size=dims.t).astype(f32),
        z_a=rng.normal(mu, sigma, size=dims.t).astype(f32),
    )


class NeighborMean:
    """1-hop neighbor-mean operator and its adjoint (raw adjacency, no self)."""

    def __init__(self, g: AttributedGraph):
        deg = g.degrees().astype(np.float64)
        inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
        rows = np.repeat(np.arange(g.num_nodes, dtype=np.int64), g.degrees())
        mat = sp.csr_matrix((inv[rows], g.col_indices, g.row_offsets),
                            shape=(g.num_nodes, g.num_nodes))
        self._fwd: dict = {}
        self._adj: dict = {}
        self._mat = mat
        self._mat_t = mat.T.tocsr()
        self.num_nodes = g.num_nodes

    def _cast(self, cache: dict, base: sp.csr_matrix, dtype) -> sp.csr_matrix:
        key = np.dtype(dtype)
        if key not in cache:
            cache[key] = base.astype(key)
        return cache[key]

    def mean(self, h: np.ndarray) -> np.ndarray:
        return self._cast(self._fwd, self._mat, h.dtype) @ h

    def mean_adjoint(self, grad: np.ndarray) -> np.ndarray:
        return self._cast(self._adj, self._mat_t, grad.dtype) @ grad


def forward(params: ModelParameters, a_hat: NormalizedAdjacency,
            x_tilde: np.ndarray) -> np.ndarray:
    """Two aggregation layers: ReLU(A(ReLU(A X W1)) W2)."""
    return _forward_cache(params, a_hat, x_tilde)[-1]


def _forward_cache(params, a_hat, x_tilde):
    if x_tilde.shape[1] != params.w1.shape[0]:
        raise ValueError(f"input width {x_tilde.shape[1]} does not match "
                         f"w1 rows {params.w1.shape[0]}")
    w1 = params.w1.astype(x_tilde.dtype, copy=False)
    w2 = params.w2.astype(x_tilde.dtype, copy=False)
    a1 = spmm(a_hat, x_tilde @ w1)
    h1 = np.maximum(a1, 0.0)
    a2 = spmm(a_hat, h1 @ w2)
    h = np.maximum(a2, 0.0)
    return a1, h1, a2, h


def residuals(h: np.ndarray, g: AttributedGraph,
              mean_op: NeighborMean | None = None) -> np.ndarray:
    """Per-node deviation from the 1-hop neighbor mean; h itself if isolated."""
    if h.shape[0] != g.num_nodes:
        raise ValueError(f"h has {h.shape[0]} rows for a {g.num_nodes}-node graph")
    op = mean_op if mean_op is not None else NeighborMean(g)
    return h - op.mean(h)


def residual_subgraph(h_center: np.ndarray, h_members: np.ndarray) -> np.ndarray:
    """Center representation minus the member mean; empty member set passes through."""
    if len(h_members) == 0:
        return h_center.copy()
    return h_center - h_members.mean(axis=0, dtype=h_center.dtype)


def prototypes(params: ModelParameters) -> PrototypePair:
    """Affine maps of the frozen base vectors into representation space."""
    p_n = params.theta_n_w @ params.z_n + params.theta_n_b
    p_a = params.theta_a_w @ params.z_a + params.theta_a_b
    return PrototypePair(p_n=p_n, p_a=p_a)


def classify(params: ModelParameters, h: np.ndarray) -> np.ndarray:
    """Anomaly probability per node from the MLP head, clipped away from {0,1}."""
    _, _, logit = _classifier_cache(params, h)
    prob = _sigmoid(logit.astype(np.float64))
    return np.clip(prob, PROB_CLIP, 1.0 - PROB_CLIP)


def _classifier_cache(params, h):
    c1 = h @ params.cls_w1.astype(h.dtype, copy=False) + params.cls_b1.astype(h.dtype)
    act = np.maximum(c1, 0.0)
    logit = (act @ params.cls_w2.astype(h.dtype, copy=False)
             + params.cls_b2.astype(h.dtype)).ravel()
    return c1, act, logit


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass(frozen=True)
class LossValues:
    bce: float
    align: float
    total: float


def compute_losses(params: ModelParameters, a_hat: NormalizedAdjacency,
                   x_tilde: np.ndarray, g: AttributedGraph, alpha: float,
                   mean_op: NeighborMean | None = None) -> LossValues:
    """Loss breakdown on the same computational path the gradients use."""
    if g.labels is None:
        raise ValueError("labels are required to compute losses")
    op = mean_op if mean_op is not None else NeighborMean(g)
    h = forward(params, a_hat, x_tilde)
    r = h - op.mean(h)
    probs = classify(params, h)
    pp = prototypes(params)
    return _losses_from_parts(r, probs, g.labels, pp, alpha)


def _losses_from_parts(r, probs, labels, pp: PrototypePair, alpha) -> LossValues:
    y = labels.astype(bool)
    r64 = r.astype(np.float64)
    p_n = pp.p_n.astype(np.float64)
    p_a = pp.p_a.astype(np.float64)
    align = float(((r64[~y] - p_n) ** 2).sum() + ((r64[y] - p_a) ** 2).sum())
    p = probs.astype(np.float64)
    bce = float(-(np.log(p[y]).sum() + np.log1p(-p[~y]).sum()))
    return LossValues(bce=bce, align=align, total=bce + alpha * align)


def grad_total(params: ModelParameters, a_hat: NormalizedAdjacency,
               x_tilde: np.ndarray, g: AttributedGraph, alpha: float,
               mean_op: NeighborMean | None = None,
               ) -> tuple[dict[str, np.ndarray], LossValues]:
    """Analytic gradients of the total loss for every trainable tensor.

    The residual operator's adjoint routes each node's alignment gradient back
    through its neighbors' mean terms; ReLU masks use the strict x > 0
    convention. Base vectors z_n, z_a never receive gradients.
    """
    if g.labels is None:
        raise ValueError("labels are required to compute gradients")
    op = mean_op if mean_op is not None else NeighborMean(g)
    dtype = params.w1.dtype
    x = x_tilde.astype(dtype, copy=False)
    y_bool = g.labels.astype(bool)
    y = g.labels.astype(dtype)

    a1, h1, a2, h = _forward_cache(params, a_hat, x)
    c1, act, logit = _classifier_cache(params, h)
    p_raw = _sigmoid(logit.astype(np.float64))
    probs = np.clip(p_raw, PROB_CLIP, 1.0 - PROB_CLIP)
    r = h - op.mean(h)
    pp = prototypes(params)
    losses = _losses_from_parts(r, probs, g.labels, pp, alpha)
    if not np.isfinite(losses.total):
        raise FloatingPointError("non-finite loss")

    # classification head: d(bce)/d(logit) = p - y, zeroed where the clip is active
    live = (p_raw > PROB_CLIP) & (p_raw < 1.0 - PROB_CLIP)
    g_logit = np.where(live, p_raw - y.astype(np.float64), 0.0).astype(dtype)
    d_cls_w2 = act.T @ g_logit[:, None]
    d_cls_b2 = np.array([g_logit.sum()], dtype=dtype)
    g_act = g_logit[:, None] * params.cls_w2.astype(dtype).ravel()[None, :]
    g_c1 = np.where(c1 > 0, g_act, 0.0).astype(dtype)
    d_cls_w1 = h.T @ g_c1
    d_cls_b1 = g_c1.sum(axis=0)
    g_h = g_c1 @ params.cls_w1.astype(dtype).T

    # alignment: residuals toward the class prototype, prototypes toward residuals
    proto_rows = np.where(y_bool[:, None], pp.p_a.astype(dtype)[None, :],
                          pp.p_n.astype(dtype)[None, :])
    g_r = 2.0 * (r - proto_rows)
    g_h = g_h + alpha * (g_r - op.mean_adjoint(g_r))
    g_p_n = -alpha * g_r[~y_bool].sum(axis=0)
    g_p_a = -alpha * g_r[y_bool].sum(axis=0)
    z_n = params.z_n.astype(dtype)
    z_a = params.z_a.astype(dtype)
    d_theta_n_w = np.outer(g_p_n, z_n)
    d_theta_a_w = np.outer(g_p_a, z_a)

    # backbone
    g_a2 = np.where(a2 > 0, g_h, 0.0).astype(dtype)
    g_u2 = spmm(a_hat, g_a2)  # a_hat is symmetric, so adjoint == forward
    d_w2 = h1.T @ g_u2
    g_h1 = g_u2 @ params.w2.astype(dtype).T
    g_a1 = np.where(a1 > 0, g_h1, 0.0).astype(dtype)
    g_u1 = spmm(a_hat, g_a1)
    d_w1 = x.T @ g_u1

    grads = {
        "w1": d_w1, "w2": d_w2,
        "cls_w1": d_cls_w1, "cls_b1": d_cls_b1,
        "cls_w2": d_cls_w2, "cls_b2": d_cls_b2,
        "theta_n_w": d_theta_n_w, "theta_n_b": g_p_n,
        "theta_a_w": d_theta_a_w, "theta_a_b": g_p_a,
    }
    for name, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            raise FloatingPointError(f"non-finite gradient in {name}")
    return grads, losses
