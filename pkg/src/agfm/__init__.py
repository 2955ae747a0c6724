"""Prototype-aligned graph anomaly detection toolkit.

Pre-train a prototype-aligned GCN on one labeled attributed graph, then score
anomalies on unseen graphs zero-shot, with few-shot prompt tuning, or from
random-walk subgraphs alone. See the CLI (``agfm``) for the end-to-end paths.
"""

from .checkpoint import (CheckpointError, content_hash, load_checkpoint,
                         read_header, save_model_checkpoint,
                         save_prompt_checkpoint)
from .graph import (AttributedGraph, GraphFormatError, SubgraphSample,
                    SynthConfig, global_edge_similarity, induced_subgraph,
                    load_graph, random_walk_subgraph, save_graph, synth_graph,
                    validate)
from .linalg import (AdamState, NormalizedAdjacency, adam_init, adam_step,
                     normalize_adjacency, spmm, truncated_svd, unify_features)
from .metrics import EvalResult, auprc, auroc, evaluate
from .model import (Dims, LossValues, ModelParameters, NeighborMean,
                    PrototypePair, classify, compute_losses, forward,
                    grad_total, init_model, prototypes, residual_subgraph,
                    residuals)
from .prompt import (PromptParameters, prompt_loss, refined_prototype,
                     tune_abnormal, tune_normal, zero_prompt)
from .rng import derive_seed, substream
from .scoring import (ScoreVector, read_scores_csv, score_few_shot,
                      score_subgraph, score_zero_shot, select_beta,
                      write_scores_csv)
from .train import TrainConfig, TrainReport, loss_alignment, loss_bce, loss_total, pretrain

__version__ = "0.1.0"
