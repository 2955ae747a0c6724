"""Few-shot prompt tuning of a frozen pre-trained model.

Only a small adaptation layer and a prompt vector are learned; every tensor of
the backbone, head, and prototype mappings stays untouched. Because the
backbone is frozen, the labeled nodes' residual features are computed once on
the full test graph and cached, which makes the tuning objective a convex
quadratic in the prompt parameters.
"""

from dataclasses import dataclass, field

import numpy as np

from .checkpoint import content_hash
from .graph import AttributedGraph
from .linalg import adam_init, adam_step, normalize_adjacency, unify_features
from .model import ModelParameters, NeighborMean, PrototypePair, forward, prototypes
from .rng import derive_seed

TUNE_EPOCHS_DEFAULT = 100
TUNE_LR_DEFAULT = 1e-3


@dataclass(eq=False)
class PromptParameters:
    """Adaptation layer phi, prompt vector psi, and tuning provenance."""

    target: str  # "normal" or "abnormal"
    phi_w: np.ndarray  # (d, d)
    phi_b: np.ndarray  # (d,)
    psi: np.ndarray    # (d,)
    tune_epochs: int
    tune_lr: float
    shot_nodes: tuple[int, ...] = ()
    source_model_hash: str | None = None


def zero_prompt(d: int, target: str = "normal") -> PromptParameters:
    """Prompt that leaves the pre-trained prototype exactly unchanged."""
    return PromptParameters(target=target,
                            phi_w=np.zeros((d, d), np.float32),
                            phi_b=np.zeros(d, np.float32),
                            psi=np.zeros(d, np.float32),
                            tune_epochs=0, tune_lr=TUNE_LR_DEFAULT)


def refined_prototype(pp: PrototypePair, prompt: PromptParameters) -> np.ndarray:
    """p' = p + (phi_w p + phi_b) + psi for the prompt's target prototype."""
    base = pp.p_n if prompt.target == "normal" else pp.p_a
    if prompt.psi.shape != base.shape:
        raise ValueError(f"prompt dimension {prompt.psi.shape[0]} does not match "
                         f"prototype dimension {base.shape[0]}")
    return base + (prompt.phi_w @ base + prompt.phi_b) + prompt.psi


def tune_normal(model: ModelParameters, g_test: AttributedGraph,
                labeled_normals, epochs: int = TUNE_EPOCHS_DEFAULT,
                lr: float = TUNE_LR_DEFAULT, seed: int = 0,
                ) -> tuple[PromptParameters, list[float]]:
    """Refine the normal prototype toward the labeled nodes' residuals."""
    return _tune(model, g_test, labeled_normals, "normal", epochs, lr, seed)


def tune_abnormal(model: ModelParameters, g_test: AttributedGraph,
                  labeled_anomalies, epochs: int = TUNE_EPOCHS_DEFAULT,
                  lr: float = TUNE_LR_DEFAULT, seed: int = 0,
                  ) -> tuple[PromptParameters, list[float]]:
    """Appendix variant: refine the abnormal prototype instead."""
    return _tune(model, g_test, labeled_anomalies, "abnormal", epochs, lr, seed)


def _tune(model, g, node_ids, target, epochs, lr, seed):
    shots = tuple(sorted(int(v) for v in node_ids))
    if not shots:
        raise ValueError("at least one labeled node is required for tuning")
    if shots[0] < 0 or shots[-1] >= g.num_nodes:
        raise ValueError(f"labeled node id out of range [0, {g.num_nodes})")

    # Frozen backbone: the shot residuals are fixed, compute them once.
    x_tilde = unify_features(g.features, model.dims.d_prime, derive_seed(seed, "svd"))
    h = forward(model, normalize_adjacency(g), x_tilde)
    r_shots = (h - NeighborMean(g).mean(h))[list(shots)].astype(np.float64)

    pp = prototypes(model)
    base = (pp.p_n if target == "normal" else pp.p_a).astype(np.float64)
    d = base.shape[0]
    params = {"phi_w": np.zeros((d, d)), "phi_b": np.zeros(d), "psi": np.zeros(d)}
    state = adam_init(params, lr) if epochs > 0 else None

    history: list[float] = []
    for _ in range(epochs):
        refined = base + params["phi_w"] @ base + params["phi_b"] + params["psi"]
        err = refined[None, :] - r_shots
        history.append(float((err ** 2).sum()))
        g_ref = 2.0 * err.sum(axis=0)
        grads = {"phi_w": np.outer(g_ref, base), "phi_b": g_ref, "psi": g_ref}
        params = adam_step(params, grads, state)

    prompt = PromptParameters(
        target=target,
        phi_w=params["phi_w"].astype(np.float32),
        phi_b=params["phi_b"].astype(np.float32),
        psi=params["psi"].astype(np.float32),
        tune_epochs=epochs, tune_lr=lr, shot_nodes=shots,
        source_model_hash=content_hash(model.tensors()),
    )
    return prompt, history


def prompt_loss(model: ModelParameters, g: AttributedGraph,
                prompt: PromptParameters, seed: int = 0) -> float:
    """Current one-class tuning loss of a prompt on its shot nodes."""
    x_tilde = unify_features(g.features, model.dims.d_prime, derive_seed(seed, "svd"))
    h = forward(model, normalize_adjacency(g), x_tilde)
    r = (h - NeighborMean(g).mean(h))[list(prompt.shot_nodes)].astype(np.float64)
    refined = refined_prototype(prototypes(model), prompt).astype(np.float64)
    return float(((r - refined[None, :]) ** 2).sum())
