"""Losses and the full-batch pre-training loop on an auxiliary labeled graph.

Losses are unnormalized sums over all nodes, exactly as optimized; per-node
means are only logged for readability. One epoch is one full-batch gradient
step; there is no minibatching, early stopping, or schedule.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graph import AttributedGraph
from .linalg import adam_init, adam_step, normalize_adjacency, unify_features
from .model import (Dims, ModelParameters, NeighborMean, PrototypePair,
                    grad_total, init_model)
from .rng import derive_seed

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 300
    lr: float = 1e-4
    alpha: float = 1.0
    hidden: int = 300
    proto_dim: int = 300
    d_prime: int = 10
    mu: float = 0.0
    sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.lr <= 0.0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.alpha < 0.0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.sigma <= 0.0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    def dims(self) -> Dims:
        return Dims(d_prime=self.d_prime, hidden=self.hidden, d=self.proto_dim)


@dataclass
class TrainReport:
    """Per-epoch loss trace (64-bit sums over all nodes)."""

    bce: list[float] = field(default_factory=list)
    align: list[float] = field(default_factory=list)
    total: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.total)

    def write_csv(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
            fh.write("epoch,l_bce,l_align,l_total\n")
            for i in range(len(self.total)):
                fh.write(f"{i + 1},{self.bce[i]:.12g},{self.align[i]:.12g},"
                         f"{self.total[i]:.12g}\n")


def loss_alignment(r: np.ndarray, labels: np.ndarray, pp: PrototypePair) -> float:
    """Sum of squared distances from each residual to its class prototype."""
    y = np.asarray(labels).astype(bool)
    r64 = r.astype(np.float64)
    p_n = pp.p_n.astype(np.float64)
    p_a = pp.p_a.astype(np.float64)
    return float(((r64[~y] - p_n) ** 2).sum() + ((r64[y] - p_a) ** 2).sum())


def loss_bce(probs: np.ndarray, labels: np.ndarray) -> float:
    """Summed negative log-likelihood of the labels under the head's probabilities."""
    y = np.asarray(labels).astype(bool)
    p = np.asarray(probs, dtype=np.float64)
    return float(-(np.log(p[y]).sum() + np.log1p(-p[~y]).sum()))


def loss_total(bce: float, align: float, alpha: float) -> float:
    return bce + alpha * align


def pretrain(g: AttributedGraph, cfg: TrainConfig) -> tuple[ModelParameters, TrainReport]:
    """Train prototype mappings, backbone, and head jointly; base vectors stay frozen.

    Deterministic for a fixed config and seed. Raises if labels are missing or
    single-class, and aborts with the epoch index if the loss turns non-finite.
    """
    if g.labels is None:
        raise ValueError("pre-training requires a labeled graph")
    n_pos = int(g.labels.sum())
    if n_pos == 0 or n_pos == g.num_nodes:
        raise ValueError("pre-training requires both classes in the labels")

    x_tilde = unify_features(g.features, cfg.d_prime, derive_seed(cfg.seed, "svd"))
    a_hat = normalize_adjacency(g)
    mean_op = NeighborMean(g)
    params = init_model(cfg.dims(), cfg.mu, cfg.sigma, cfg.seed)
    state = adam_init(params.trainable(), cfg.lr)
    report = TrainReport()

    log_every = max(1, cfg.epochs // 6)
    for epoch in range(cfg.epochs):
        try:
            grads, losses = grad_total(params, a_hat, x_tilde, g, cfg.alpha,
                                       mean_op=mean_op)
        except FloatingPointError as exc:
            raise RuntimeError(f"training diverged at epoch {epoch + 1}: {exc}") from exc
        report.bce.append(losses.bce)
        report.align.append(losses.align)
        report.total.append(losses.total)
        if epoch % log_every == 0 or epoch == cfg.epochs - 1:
            n = g.num_nodes
            log.info("epoch %d/%d: per-node bce=%.5f align=%.5f total=%.5f",
                     epoch + 1, cfg.epochs, losses.bce / n, losses.align / n,
                     losses.total / n)
        params = params.replace(**adam_step(params.trainable(), grads, state))
    return params, report
