"""Anomaly scoring: zero-shot, few-shot prompted, and subgraph-based.

A node's score is exp(r.p_a) + beta * exp(-r.p_n): direct similarity to the
abnormal prototype plus beta-weighted inverse similarity to the normal one.
Inner products are clipped to [-30, 30] before exponentiation; the clip count
is carried on the result since firing it is a (rank-preserving) deviation.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import content_hash
from .graph import AttributedGraph, induced_subgraph, random_walk_subgraph
from .linalg import normalize_adjacency, unify_features
from .model import (ModelParameters, NeighborMean, forward, prototypes,
                    residual_subgraph)
from .prompt import PromptParameters, refined_prototype
from .rng import derive_seed, substream

EXP_CLIP = 30.0
SUBGRAPH_SIZE_DEFAULT = 5

ZERO_SHOT = "zero_shot"
FEW_SHOT = "few_shot"
SUBGRAPH = "subgraph"


@dataclass(eq=False)
class ScoreVector:
    """Per-node anomaly scores; higher means more anomalous."""

    scores: np.ndarray          # float64, length N
    beta_used: float
    mode: str
    excluded: np.ndarray = field(default=None)  # bool, length N
    n_clipped: int = 0

    def __post_init__(self):
        if self.excluded is None:
            self.excluded = np.zeros(len(self.scores), dtype=bool)


def select_beta(sim: float, mode: str) -> float:
    """Weight for the normal-prototype term, from the graph's edge similarity."""
    if not np.isfinite(sim):
        raise ValueError(f"similarity must be finite, got {sim}")
    if mode == ZERO_SHOT:
        return 0.0 if sim > 0.5 else 4.0
    if mode == FEW_SHOT:
        return 0.5 if sim > 0.5 else 4.0
    raise ValueError(f"mode must be {ZERO_SHOT!r} or {FEW_SHOT!r}, got {mode!r}")


def _score_pairs(r: np.ndarray, p_a: np.ndarray, p_n: np.ndarray,
                 beta: float) -> tuple[np.ndarray, int]:
    r64 = r.astype(np.float64)
    dot_a = r64 @ p_a.astype(np.float64)
    dot_n = r64 @ p_n.astype(np.float64)
    clipped = int((np.abs(dot_a) > EXP_CLIP).sum() + (np.abs(dot_n) > EXP_CLIP).sum())
    scores = (np.exp(np.clip(dot_a, -EXP_CLIP, EXP_CLIP))
              + beta * np.exp(-np.clip(dot_n, -EXP_CLIP, EXP_CLIP)))
    return scores, clipped


def _graph_residuals(model: ModelParameters, g: AttributedGraph, seed: int) -> np.ndarray:
    x_tilde = unify_features(g.features, model.dims.d_prime, derive_seed(seed, "svd"))
    h = forward(model, normalize_adjacency(g), x_tilde)
    return h - NeighborMean(g).mean(h)


def score_zero_shot(model: ModelParameters, g: AttributedGraph, beta: float,
                    d_prime: int, seed: int = 0) -> ScoreVector:
    """Score every node of a never-seen graph with the frozen model."""
    if d_prime != model.dims.d_prime:
        raise ValueError(f"checkpoint was trained with d'={model.dims.d_prime}, "
                         f"requested d'={d_prime}")
    if beta < 0.0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    r = _graph_residuals(model, g, seed)
    pp = prototypes(model)
    scores, clipped = _score_pairs(r, pp.p_a, pp.p_n, beta)
    return ScoreVector(scores=scores, beta_used=beta, mode=ZERO_SHOT,
                       n_clipped=clipped)


def score_few_shot(model: ModelParameters, prompt: PromptParameters,
                   g: AttributedGraph, beta: float, seed: int = 0) -> ScoreVector:
    """Score with the prompt-refined prototype; shot nodes are marked excluded."""
    if beta < 0.0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    if prompt.source_model_hash is not None:
        have = content_hash(model.tensors())
        if prompt.source_model_hash != have:
            raise ValueError("prompt was tuned against a different model checkpoint "
                             f"({prompt.source_model_hash[:12]}... vs {have[:12]}...)")
    r = _graph_residuals(model, g, seed)
    pp = prototypes(model)
    refined = refined_prototype(pp, prompt)
    if prompt.target == "normal":
        scores, clipped = _score_pairs(r, pp.p_a, refined, beta)
    else:
        scores, clipped = _score_pairs(r, refined, pp.p_n, beta)
    excluded = np.zeros(g.num_nodes, dtype=bool)
    excluded[list(prompt.shot_nodes)] = True
    return ScoreVector(scores=scores, beta_used=beta, mode=FEW_SHOT,
                       excluded=excluded, n_clipped=clipped)


def _score_one_subgraph(model, g, x_tilde, v, size, beta, p_a, p_n, seed):
    sample = random_walk_subgraph(g, v, size, substream(seed, f"walk:{v}"))
    nodes = np.array(sorted({v} | set(sample.members)), dtype=np.int64)
    sub = induced_subgraph(g, nodes)
    h = forward(model, normalize_adjacency(sub), x_tilde[nodes])
    center = int(np.searchsorted(nodes, v))
    members = np.delete(np.arange(len(nodes)), center)
    r = residual_subgraph(h[center], h[members])
    scores, clipped = _score_pairs(r[None, :], p_a, p_n, beta)
    return float(scores[0]), clipped


def score_subgraph(model: ModelParameters, g: AttributedGraph, targets=None,
                   size: int = SUBGRAPH_SIZE_DEFAULT, beta: float = 0.0,
                   seed: int = 0, workers: int | None = None) -> ScoreVector:
    """Score targets from walk-extracted local subgraphs only.

    Feature unification runs once for the graph (same projection the zero-shot
    path uses); after extraction each target sees only its subgraph's rows and
    the subgraph's own normalized adjacency, never the full structure.
    Per-target RNG streams are derived from (seed, target), so results do not
    depend on scheduling; non-target entries are marked excluded.
    """
    if size < 1:
        raise ValueError(f"subgraph size must be >= 1, got {size}")
    if beta < 0.0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    if targets is None:
        targets = np.arange(g.num_nodes)
    targets = np.asarray(sorted(int(t) for t in targets), dtype=np.int64)
    if len(targets) and (targets[0] < 0 or targets[-1] >= g.num_nodes):
        raise ValueError(f"target id out of range [0, {g.num_nodes})")
    if workers is None:
        workers = int(os.environ.get("AGFM_THREADS", "0"))

    pp = prototypes(model)
    x_tilde = unify_features(g.features, model.dims.d_prime, derive_seed(seed, "svd"))
    run = lambda v: _score_one_subgraph(model, g, x_tilde, int(v), size, beta,
                                        pp.p_a, pp.p_n, seed)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, targets))
    else:
        results = [run(v) for v in targets]

    scores = np.zeros(g.num_nodes, dtype=np.float64)
    excluded = np.ones(g.num_nodes, dtype=bool)
    clipped = 0
    for v, (s, c) in zip(targets, results):
        scores[v] = s
        excluded[v] = False
        clipped += c
    return ScoreVector(scores=scores, beta_used=beta, mode=SUBGRAPH,
                       excluded=excluded, n_clipped=clipped)


def write_scores_csv(sv: ScoreVector, path: str | Path) -> None:
    """Delimited output: comment line with scoring settings, then node rows."""
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# beta_used={sv.beta_used:g} mode={sv.mode} clipped={sv.n_clipped}\n")
        fh.write("node,score,excluded\n")
        for i, (s, ex) in enumerate(zip(sv.scores, sv.excluded)):
            fh.write(f"{i},{s:.9g},{int(ex)}\n")


def read_scores_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Scores and exclusion mask back from a scores.csv file."""
    nodes, scores, excluded = [], [], []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line == "node,score,excluded":
                continue
            a, b, c = line.split(",")
            nodes.append(int(a))
            scores.append(float(b))
            excluded.append(bool(int(c)))
    order = np.argsort(nodes)
    return np.asarray(scores)[order], np.asarray(excluded)[order]
