"""Command-line surface wiring the library into end-to-end pipelines.

Subcommands: pretrain, score, tune, score-few, score-subgraph, synth, sim,
eval. Every command is deterministic for fixed flags and --seed; AGFM_THREADS
caps per-target parallelism in subgraph scoring (0 = sequential, the default).
"""

import argparse
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import plots
from .checkpoint import (CheckpointError, load_checkpoint, save_model_checkpoint,
                         save_prompt_checkpoint)
from .graph import (GraphFormatError, SynthConfig, global_edge_similarity,
                    load_graph, read_labels_csv, save_graph, synth_graph)
from .metrics import evaluate
from .model import ModelParameters
from .prompt import PromptParameters, tune_abnormal, tune_normal
from .rng import substream
from .scoring import (FEW_SHOT, ZERO_SHOT, read_scores_csv, score_few_shot,
                      score_subgraph, score_zero_shot, select_beta,
                      write_scores_csv)
from .train import TrainConfig, pretrain

log = logging.getLogger(__name__)


def _beta_arg(value: str):
    if value == "auto":
        return "auto"
    return float(value)


def _resolve_beta(beta, g, mode) -> float:
    if beta != "auto":
        return float(beta)
    sim = global_edge_similarity(g)
    chosen = select_beta(sim, mode)
    log.info("beta=auto: similarity=%.3f -> beta=%g (%s)", sim, chosen, mode)
    return chosen


def _load_model(path) -> ModelParameters:
    obj = load_checkpoint(path)
    if not isinstance(obj, ModelParameters):
        raise CheckpointError(f"{path}: expected a model checkpoint")
    return obj


def _load_prompt(path) -> PromptParameters:
    obj = load_checkpoint(path)
    if not isinstance(obj, PromptParameters):
        raise CheckpointError(f"{path}: expected a prompt checkpoint")
    return obj


def _read_id_file(path) -> list[int]:
    ids = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        try:
            ids.append(int(line))
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: expected one integer node id per line") from exc
    return ids


def _print_eval(scores, excluded, labels) -> None:
    mask = ~excluded
    kept = labels[mask]
    if kept.min() == kept.max():
        log.warning("skipping metrics: only one class among scored nodes")
        return
    res = evaluate(scores[mask], kept)
    print(f"auroc={res.auroc:.6f} auprc={res.auprc:.6f} "
          f"n_pos={res.n_pos} n_neg={res.n_neg}")


def cmd_pretrain(args) -> int:
    g = load_graph(args.graph)
    cfg = TrainConfig(epochs=args.epochs, lr=args.lr, alpha=args.alpha,
                      hidden=args.hidden, proto_dim=args.proto_dim,
                      d_prime=args.dprime, mu=args.mu, sigma=args.sigma,
                      seed=args.seed)
    model, report = pretrain(g, cfg)
    save_model_checkpoint(args.out, model, config=asdict(cfg), seed=args.seed)
    print(f"checkpoint written: {args.out}")
    if args.report:
        report.write_csv(args.report)
        figure = Path(args.report).with_suffix(".png")
        plots.save_training_curves(report, figure)
        print(f"report written: {args.report} (+ {figure.name})")
    return 0


def cmd_score(args) -> int:
    model = _load_model(args.model)
    g = load_graph(args.graph)
    beta = _resolve_beta(args.beta, g, ZERO_SHOT)
    sv = score_zero_shot(model, g, beta, model.dims.d_prime, seed=args.seed)
    write_scores_csv(sv, args.out)
    print(f"scores written: {args.out}")
    if g.labels is not None:
        _print_eval(sv.scores, sv.excluded, g.labels)
    return 0


def cmd_tune(args) -> int:
    model = _load_model(args.model)
    g = load_graph(args.graph)
    if args.normals is not None:
        ids = _read_id_file(args.normals)
    else:
        if g.labels is None:
            raise ValueError("--shots needs a labeled graph; use --normals otherwise")
        wanted = 1 if args.target == "abnormal" else 0
        pool = np.flatnonzero(g.labels == wanted)
        if len(pool) < args.shots:
            raise ValueError(f"graph has only {len(pool)} nodes of class {wanted}, "
                             f"cannot sample {args.shots} shots")
        rng = substream(args.seed, "shots")
        ids = sorted(int(v) for v in rng.choice(pool, size=args.shots, replace=False))
    tune = tune_abnormal if args.target == "abnormal" else tune_normal
    prompt, history = tune(model, g, ids, epochs=args.epochs, lr=args.lr,
                           seed=args.seed)
    if history:
        log.info("prompt loss: %.6g -> %.6g over %d epochs",
                 history[0], history[-1], len(history))
    save_prompt_checkpoint(args.out, prompt, seed=args.seed)
    print(f"prompt written: {args.out}")
    return 0


def cmd_score_few(args) -> int:
    model = _load_model(args.model)
    prompt = _load_prompt(args.prompt)
    g = load_graph(args.graph)
    beta = _resolve_beta(args.beta, g, FEW_SHOT)
    sv = score_few_shot(model, prompt, g, beta)
    write_scores_csv(sv, args.out)
    print(f"scores written: {args.out}")
    if g.labels is not None:
        _print_eval(sv.scores, sv.excluded, g.labels)
    return 0


def cmd_score_subgraph(args) -> int:
    model = _load_model(args.model)
    g = load_graph(args.graph)
    beta = _resolve_beta(args.beta, g, ZERO_SHOT)
    targets = _read_id_file(args.targets) if args.targets else None
    sv = score_subgraph(model, g, targets=targets, size=args.size, beta=beta,
                        seed=args.seed)
    write_scores_csv(sv, args.out)
    print(f"scores written: {args.out}")
    if g.labels is not None:
        _print_eval(sv.scores, sv.excluded, g.labels)
    return 0


def cmd_synth(args) -> int:
    cfg = SynthConfig(n=args.nodes, dim=args.dim, blocks=args.blocks,
                      anomaly_rate=args.rate, homophily=args.homophily,
                      seed=args.seed)
    g = synth_graph(cfg)
    save_graph(g, args.out)
    print(f"graph written: {args.out} ({g.num_nodes} nodes, "
          f"{g.num_undirected_edges} edges, {int(g.labels.sum())} anomalies)")
    return 0


def cmd_sim(args) -> int:
    print(f"{global_edge_similarity(load_graph(args.graph)):.6f}")
    return 0


def cmd_eval(args) -> int:
    scores, excluded = read_scores_csv(args.scores)
    labels = read_labels_csv(Path(args.labels), len(scores))
    _print_eval(scores, excluded, labels)
    if args.plot:
        mask = ~excluded
        plots.save_ranking_curves(scores[mask], labels[mask], args.plot)
        print(f"plot written: {args.plot}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="agfm",
        description="Prototype-aligned graph anomaly detection: pretrain on a "
                    "labeled graph, then score new graphs zero-shot, few-shot, "
                    "or from local subgraphs.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pretrain", help="train a model on a labeled graph")
    p.add_argument("--graph", required=True, help="graph directory")
    p.add_argument("--out", required=True, help="output checkpoint file")
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--hidden", type=int, default=300)
    p.add_argument("--proto-dim", type=int, default=300, dest="proto_dim")
    p.add_argument("--dprime", type=int, default=10)
    p.add_argument("--mu", type=float, default=0.0)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", default=None, help="training-loss CSV (+ PNG figure)")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("score", help="zero-shot scoring of a graph")
    p.add_argument("--model", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--out", required=True, help="scores.csv path")
    p.add_argument("--beta", type=_beta_arg, default="auto")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("tune", help="few-shot prompt tuning on a target graph")
    p.add_argument("--model", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--out", required=True, help="output prompt file")
    shots = p.add_mutually_exclusive_group(required=True)
    shots.add_argument("--shots", type=int, help="sample K labeled shots (seeded)")
    shots.add_argument("--normals", help="file with one labeled node id per line")
    p.add_argument("--target", choices=("normal", "abnormal"), default="normal")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("score-few", help="few-shot scoring with a tuned prompt")
    p.add_argument("--model", required=True)
    p.add_argument("--prompt", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--beta", type=_beta_arg, default="auto")
    p.set_defaults(func=cmd_score_few)

    p = sub.add_parser("score-subgraph", help="score nodes from local subgraphs only")
    p.add_argument("--model", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--size", type=int, default=5)
    p.add_argument("--beta", type=_beta_arg, default="auto")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--targets", default=None, help="file with one target id per line")
    p.set_defaults(func=cmd_score_subgraph)

    p = sub.add_parser("synth", help="generate a labeled synthetic graph")
    p.add_argument("--out", required=True, help="output graph directory")
    p.add_argument("--nodes", type=int, required=True)
    p.add_argument("--rate", type=float, required=True)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--blocks", type=int, default=4)
    p.add_argument("--homophily", type=float, default=0.9)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("sim", help="print the global average edge similarity")
    p.add_argument("--graph", required=True)
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser("eval", help="metrics from a scores file and labels file")
    p.add_argument("--scores", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--plot", default=None, help="optional ROC/PR figure path")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s",
                        stream=sys.stderr)
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError, GraphFormatError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
