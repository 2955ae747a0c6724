"""Dense/sparse numerics: truncated SVD, GCN adjacency normalization, Adam.

Learned tensors are float32 throughout the pipeline; reductions that feed
losses or metrics accumulate in float64. Sparse products run row-sequentially
(scipy CSR), so results are reproducible bit-for-bit for a fixed input.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .graph import AttributedGraph

SVD_OVERSAMPLE = 8
SVD_POWER_ITERATIONS = 4


def truncated_svd(x: np.ndarray, k: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Top-k singular values and right singular vectors of ``x``.

    Randomized subspace iteration with Gaussian sketching (oversampling
    SVD_OVERSAMPLE, SVD_POWER_ITERATIONS re-orthonormalized power steps).
    Column signs are fixed so the largest-magnitude entry of each right vector
    is positive, making the output insensitive to sketch randomness and row
    order of ``x``.

    Returns
    -------
    singular_values : (k,) float64, non-increasing
    right_vectors : (cols, k) float64 with orthonormal columns
    """
    x = np.asarray(x, dtype=np.float64)
    rows, cols = x.shape
    if not 1 <= k <= min(rows, cols):
        raise ValueError(f"k={k} out of range [1, {min(rows, cols)}]")
    rng = np.random.default_rng(seed)
    sketch = rng.standard_normal((cols, k + SVD_OVERSAMPLE))
    y = x @ sketch
    q, _ = np.linalg.qr(y)
    for _ in range(SVD_POWER_ITERATIONS):
        q, _ = np.linalg.qr(x.T @ q)
        q, _ = np.linalg.qr(x @ q)
    b = q.T @ x
    _, s, vt = np.linalg.svd(b, full_matrices=False)
    v = vt[:k].T.copy()
    for j in range(v.shape[1]):
        lead = np.argmax(np.abs(v[:, j]))
        if v[lead, j] < 0.0:
            v[:, j] = -v[:, j]
    return s[:k].copy(), v


def unify_features(x: np.ndarray, d_prime: int, seed: int) -> np.ndarray:
    """Project raw features onto their top right-singular subspace.

    Output has exactly ``d_prime`` columns: the projection is zero-padded when
    the attainable rank (min of rows, input dim, d_prime) falls short. Each
    graph is projected independently of any other.
    """
    if d_prime < 1:
        raise ValueError(f"d_prime must be >= 1, got {d_prime}")
    rows, cols = x.shape
    k = min(d_prime, rows, cols)
    _, v = truncated_svd(x, k, seed)
    proj = np.asarray(x, dtype=np.float64) @ v
    if k < d_prime:
        proj = np.hstack([proj, np.zeros((rows, d_prime - k))])
    return proj.astype(np.float32)


@dataclass(eq=False)
class NormalizedAdjacency:
    """Symmetric GCN operator D^-1/2 (A + I) D^-1/2 in CSR form."""

    num_nodes: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    weights: np.ndarray  # float64; cast to the operand dtype on use
    _by_dtype: dict = field(default_factory=dict, repr=False)

    def matrix(self, dtype) -> sp.csr_matrix:
        key = np.dtype(dtype)
        if key not in self._by_dtype:
            self._by_dtype[key] = sp.csr_matrix(
                (self.weights.astype(key), self.col_indices, self.row_offsets),
                shape=(self.num_nodes, self.num_nodes))
        return self._by_dtype[key]

    def dense(self, dtype=np.float64) -> np.ndarray:
        return self.matrix(dtype).toarray()


def normalize_adjacency(g: AttributedGraph) -> NormalizedAdjacency:
    """Symmetrically normalized adjacency with self-loops added."""
    n = g.num_nodes
    deg_tilde = (g.degrees() + 1).astype(np.float64)
    inv_sqrt = 1.0 / np.sqrt(deg_tilde)
    rows = np.concatenate([np.repeat(np.arange(n, dtype=np.int64), g.degrees()),
                           np.arange(n, dtype=np.int64)])
    cols = np.concatenate([g.col_indices, np.arange(n, dtype=np.int64)])
    order = np.lexsort((cols, rows))
    rows, cols = rows[order], cols[order]
    weights = inv_sqrt[rows] * inv_sqrt[cols]
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=offsets[1:])
    return NormalizedAdjacency(n, offsets, cols, weights)


def spmm(a_hat: NormalizedAdjacency, h: np.ndarray) -> np.ndarray:
    """Sparse-dense product with a fixed row-sequential reduction order."""
    if a_hat.num_nodes != h.shape[0]:
        raise ValueError(f"operator is {a_hat.num_nodes}x{a_hat.num_nodes}, "
                         f"operand has {h.shape[0]} rows")
    return a_hat.matrix(h.dtype) @ h


@dataclass
class AdamState:
    """Adam moments keyed by parameter name, plus the shared step counter."""

    lr: float
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(params: dict[str, np.ndarray], lr: float) -> AdamState:
    if lr <= 0.0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    return AdamState(lr=lr,
                     m={k: np.zeros_like(p) for k, p in params.items()},
                     v={k: np.zeros_like(p) for k, p in params.items()})


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState) -> dict[str, np.ndarray]:
    """One bias-corrected Adam update; mutates ``state``, returns new params."""
    if set(params) != set(grads):
        raise ValueError("parameter/gradient name sets differ")
    for name, grad in grads.items():
        if grad.shape != params[name].shape:
            raise ValueError(f"shape mismatch for {name}: "
                             f"{grad.shape} vs {params[name].shape}")
        if not np.all(np.isfinite(grad)):
            raise FloatingPointError(f"non-finite gradient in {name}")
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    out = {}
    for name, p in params.items():
        g = grads[name].astype(p.dtype, copy=False)
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        m_hat = m / bc1
        v_hat = v / bc2
        out[name] = p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return out
