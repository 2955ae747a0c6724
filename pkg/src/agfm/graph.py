"""Attributed-graph data model, on-disk format, synthesis, and sampling.

Graphs are undirected, stored as canonical CSR (rows sorted, columns sorted
within each row, no self-loops, both directions present). Features are float32,
labels are optional {0,1} anomaly marks.

Directory format (UTF-8, LF):
    meta.json      {"name": str, "num_nodes": int, "feature_dim": int}
    edges.csv      header "src,dst", one edge per line, either direction
    features.csv   no header, N rows of feature_dim comma-separated floats
    labels.csv     optional, header "node,label", all N nodes, label in {0,1}
"""

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .rng import substream

# Random-walk restart probability; the step budget is 50 * requested size.
# A high restart rate keeps samples centered on the start node's own
# neighborhood rather than wandering into a single neighbor's community.
RESTART_PROB = 0.5
WALK_BUDGET_FACTOR = 50

# Synthetic generator constants (block model with injected anomalies).
SYNTH_AVG_DEGREE = 10
SYNTH_HUB_DEGREE = 30
SYNTH_FEATURE_NOISE = 0.25
SYNTH_CONTEXT_SHIFT = 4.0


class GraphFormatError(ValueError):
    """Raised when an on-disk graph directory violates the format."""


@dataclass(frozen=True, eq=False)
class AttributedGraph:
    """Undirected attributed graph in CSR form with optional anomaly labels."""

    num_nodes: int
    row_offsets: np.ndarray  # int64, length N+1
    col_indices: np.ndarray  # int64, both edge directions, no self-loops
    features: np.ndarray     # float32, shape (N, feature_dim)
    labels: np.ndarray | None = None  # uint8 in {0,1}, length N
    name: str = ""

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def num_undirected_edges(self) -> int:
        return len(self.col_indices) // 2

    def degrees(self) -> np.ndarray:
        return np.diff(self.row_offsets)

    def neighbors(self, v: int) -> np.ndarray:
        return self.col_indices[self.row_offsets[v]:self.row_offsets[v + 1]]


@dataclass(frozen=True)
class SubgraphSample:
    """Distinct nodes collected by a restart random walk around ``center``."""

    center: int
    members: frozenset[int]
    requested_size: int


@dataclass(frozen=True)
class SynthConfig:
    """Settings for the synthetic labeled-anomaly graph generator."""

    n: int
    dim: int = 32
    blocks: int = 4
    anomaly_rate: float = 0.05
    homophily: float = 0.9
    seed: int = 0
    name: str = field(default="")

    def resolved_name(self) -> str:
        return self.name or f"synth-n{self.n}-seed{self.seed}"


def build_csr(num_nodes: int, pairs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Canonical CSR from an array of undirected (i, j) pairs.

    Input pairs may appear in either or both directions; both directions are
    emitted, duplicates removed, self-loops assumed already excluded.
    """
    if len(pairs) == 0:
        return np.zeros(num_nodes + 1, dtype=np.int64), np.zeros(0, dtype=np.int64)
    pairs = np.asarray(pairs, dtype=np.int64)
    both = np.concatenate([pairs, pairs[:, ::-1]])
    codes = np.unique(both[:, 0] * num_nodes + both[:, 1])
    rows, cols = codes // num_nodes, codes % num_nodes
    offsets = np.zeros(num_nodes + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=num_nodes), out=offsets[1:])
    return offsets, cols


def undirected_pairs(g: AttributedGraph) -> np.ndarray:
    """Each undirected edge once, as (i, j) with i < j, sorted."""
    rows = np.repeat(np.arange(g.num_nodes, dtype=np.int64), g.degrees())
    mask = rows < g.col_indices
    return np.column_stack([rows[mask], g.col_indices[mask]])


def validate(g: AttributedGraph) -> list[str]:
    """Check every structural invariant; returns a list of violations (empty = ok)."""
    problems: list[str] = []
    n = g.num_nodes
    off, col = g.row_offsets, g.col_indices
    if len(off) != n + 1:
        problems.append(f"row_offsets has length {len(off)}, expected {n + 1}")
        return problems
    if off[0] != 0 or off[-1] != len(col):
        problems.append("row_offsets must start at 0 and end at len(col_indices)")
    if np.any(np.diff(off) < 0):
        problems.append("row_offsets is not non-decreasing")
        return problems
    if len(col) and (col.min() < 0 or col.max() >= n):
        problems.append("column index out of range [0, N)")
        return problems
    rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(off))
    if np.any(rows == col):
        problems.append("stored self-loop found")
    codes = rows * n + col
    if len(np.unique(codes)) != len(codes):
        problems.append("duplicate (row, col) entry found")
    rev = np.sort(col * n + rows)
    if not np.array_equal(np.sort(codes), rev):
        problems.append("adjacency is not symmetric")
    if g.features.shape[0] != n:
        problems.append(f"features have {g.features.shape[0]} rows, expected {n}")
    if not np.all(np.isfinite(g.features)):
        problems.append("non-finite feature value")
    if g.labels is not None:
        if len(g.labels) != n:
            problems.append(f"labels have length {len(g.labels)}, expected {n}")
        elif not np.isin(g.labels, (0, 1)).all():
            problems.append("label outside {0,1}")
    return problems


def _checked(g: AttributedGraph) -> AttributedGraph:
    problems = validate(g)
    if problems:
        raise GraphFormatError("invalid graph: " + "; ".join(problems))
    return g


def load_graph(dir_path: str | Path) -> AttributedGraph:
    """Load, symmetrize, deduplicate, and validate a graph directory."""
    root = Path(dir_path)
    meta_path = root / "meta.json"
    if not meta_path.is_file():
        raise GraphFormatError(f"missing file: {meta_path}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    try:
        name = str(meta["name"])
        n = int(meta["num_nodes"])
        dim = int(meta["feature_dim"])
    except KeyError as exc:
        raise GraphFormatError(f"meta.json is missing key {exc}") from exc
    if n < 0 or dim < 0:
        raise GraphFormatError("meta.json num_nodes/feature_dim must be non-negative")

    features = _read_features(root / "features.csv", n, dim)
    pairs = _read_edges(root / "edges.csv", n)
    labels = read_labels_csv(root / "labels.csv", n) if (root / "labels.csv").is_file() else None
    offsets, cols = build_csr(n, pairs)
    return _checked(AttributedGraph(n, offsets, cols, features, labels, name))


def _read_features(path: Path, n: int, dim: int) -> np.ndarray:
    if not path.is_file():
        raise GraphFormatError(f"missing file: {path}")
    out = np.empty((n, dim), dtype=np.float32)
    with path.open(encoding="utf-8") as fh:
        count = 0
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if count >= n:
                count += 1
                break
            parts = line.split(",")
            if len(parts) != dim:
                raise GraphFormatError(
                    f"{path}:{lineno}: expected {dim} values, found {len(parts)}"
                )
            try:
                out[count] = [float(p) for p in parts]
            except ValueError as exc:
                raise GraphFormatError(f"{path}:{lineno}: malformed float") from exc
            count += 1
    if count != n:
        raise GraphFormatError(f"{path}: {count} feature rows, expected {n}")
    return out


def _read_edges(path: Path, n: int) -> np.ndarray:
    if not path.is_file():
        raise GraphFormatError(f"missing file: {path}")
    src: list[int] = []
    dst: list[int] = []
    dropped_loops = 0
    with path.open(encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "src,dst":
            raise GraphFormatError(f'{path}: expected header "src,dst", found "{header}"')
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            try:
                a, b = int(parts[0]), int(parts[1])
            except (ValueError, IndexError) as exc:
                raise GraphFormatError(f"{path}:{lineno}: malformed edge row") from exc
            if not (0 <= a < n and 0 <= b < n):
                raise GraphFormatError(f"{path}:{lineno}: node index out of range [0, {n})")
            if a == b:
                dropped_loops += 1
                continue
            src.append(a)
            dst.append(b)
    if dropped_loops:
        warnings.warn(f"{path}: dropped {dropped_loops} self-loop(s)", stacklevel=3)
    return np.column_stack([np.asarray(src, dtype=np.int64),
                            np.asarray(dst, dtype=np.int64)]) if src else np.zeros((0, 2), np.int64)


def read_labels_csv(path: Path, n: int) -> np.ndarray:
    """Parse a labels.csv covering all ``n`` nodes exactly once."""
    labels = np.full(n, -1, dtype=np.int16)
    with path.open(encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "node,label":
            raise GraphFormatError(f'{path}: expected header "node,label", found "{header}"')
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            try:
                node, label = int(parts[0]), int(parts[1])
            except (ValueError, IndexError) as exc:
                raise GraphFormatError(f"{path}:{lineno}: malformed label row") from exc
            if not 0 <= node < n:
                raise GraphFormatError(f"{path}:{lineno}: node index out of range [0, {n})")
            if label not in (0, 1):
                raise GraphFormatError(f"{path}:{lineno}: label must be 0 or 1, found {label}")
            if labels[node] != -1:
                raise GraphFormatError(f"{path}:{lineno}: duplicate label for node {node}")
            labels[node] = label
    if np.any(labels == -1):
        missing = int(np.argmax(labels == -1))
        raise GraphFormatError(f"{path}: no label for node {missing}")
    return labels.astype(np.uint8)


def save_graph(g: AttributedGraph, dir_path: str | Path) -> None:
    """Write the directory format; canonical CSR makes save/load a byte round trip."""
    root = Path(dir_path)
    root.mkdir(parents=True, exist_ok=True)
    meta = {"name": g.name, "num_nodes": int(g.num_nodes), "feature_dim": int(g.feature_dim)}
    (root / "meta.json").write_text(json.dumps(meta) + "\n", encoding="utf-8")
    with (root / "edges.csv").open("w", encoding="utf-8", newline="\n") as fh:
        fh.write("src,dst\n")
        for i, j in undirected_pairs(g):
            fh.write(f"{i},{j}\n")
    with (root / "features.csv").open("w", encoding="utf-8", newline="\n") as fh:
        for row in g.features:
            # 9 significant digits round-trip float32 exactly
            fh.write(",".join(f"{float(v):.9g}" for v in row) + "\n")
    if g.labels is not None:
        with (root / "labels.csv").open("w", encoding="utf-8", newline="\n") as fh:
            fh.write("node,label\n")
            for i, y in enumerate(g.labels):
                fh.write(f"{i},{int(y)}\n")


def global_edge_similarity(g: AttributedGraph) -> float:
    """Mean cosine similarity of raw features over undirected edges.

    Zero feature vectors contribute 0 to the mean. Errors on edgeless graphs.
    """
    pairs = undirected_pairs(g)
    if len(pairs) == 0:
        raise ValueError("undefined similarity: graph has no edges")
    x = g.features.astype(np.float64)
    norms = np.linalg.norm(x, axis=1)
    xi, xj = x[pairs[:, 0]], x[pairs[:, 1]]
    denom = norms[pairs[:, 0]] * norms[pairs[:, 1]]
    dots = np.einsum("ij,ij->i", xi, xj)
    cos = np.where(denom > 0.0, dots / np.where(denom > 0.0, denom, 1.0), 0.0)
    return float(cos.mean())


def random_walk_subgraph(g: AttributedGraph, v: int, s: int,
                         rng: np.random.Generator) -> SubgraphSample:
    """Collect up to ``s`` distinct nodes around ``v`` by a restart random walk.

    The walk restarts at ``v`` with probability RESTART_PROB per step and stops
    once ``s`` distinct non-center nodes are visited or the 50*s step budget is
    spent. An isolated center yields an empty member set.
    """
    if s < 1:
        raise ValueError(f"subgraph size must be >= 1, got {s}")
    if not 0 <= v < g.num_nodes:
        raise ValueError(f"node index {v} out of range [0, {g.num_nodes})")
    members: set[int] = set()
    current = v
    for _ in range(WALK_BUDGET_FACTOR * s):
        if len(members) >= s:
            break
        if rng.random() < RESTART_PROB:
            current = v
            continue
        nbrs = g.neighbors(current)
        if len(nbrs) == 0:
            break  # only the center can be neighborless mid-walk
        current = int(nbrs[rng.integers(len(nbrs))])
        if current != v:
            members.add(current)
    return SubgraphSample(center=v, members=frozenset(members), requested_size=s)


def induced_subgraph(g: AttributedGraph, nodes: np.ndarray) -> AttributedGraph:
    """Subgraph on ``nodes`` (ascending, unique), relabeled to 0..len-1."""
    nodes = np.asarray(nodes, dtype=np.int64)
    relabel = np.full(g.num_nodes, -1, dtype=np.int64)
    relabel[nodes] = np.arange(len(nodes))
    pairs = undirected_pairs(g)
    keep = (relabel[pairs[:, 0]] >= 0) & (relabel[pairs[:, 1]] >= 0)
    offsets, cols = build_csr(len(nodes), relabel[pairs[keep]])
    labels = g.labels[nodes] if g.labels is not None else None
    return AttributedGraph(len(nodes), offsets, cols, g.features[nodes], labels,
                           f"{g.name}[{len(nodes)}]")


def synth_graph(cfg: SynthConfig) -> AttributedGraph:
    """Generate a labeled block-model graph with injected anomalies.

    Normal nodes get a shared block center plus small feature noise, and edges
    stay within their block with probability ``homophily``. Anomalies split
    evenly into structural (edges rewired to random high-degree hubs) and
    contextual (features redrawn from a shifted, inflated distribution).
    """
    if not 0.0 <= cfg.anomaly_rate < 0.5:
        raise ValueError(f"anomaly_rate must be in [0, 0.5), got {cfg.anomaly_rate}")
    if cfg.n < 10:
        raise ValueError(f"need at least 10 nodes, got {cfg.n}")
    if cfg.dim < 1 or cfg.blocks < 1:
        raise ValueError("dim and blocks must be positive")
    if not 0.0 <= cfg.homophily <= 1.0:
        raise ValueError(f"homophily must be in [0, 1], got {cfg.homophily}")

    rng = substream(cfg.seed, "synth")
    n, dim = cfg.n, cfg.dim

    block = rng.integers(0, cfg.blocks, size=n)
    centers = rng.normal(size=(cfg.blocks, dim))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    noise = rng.normal(size=(n, dim)) * (SYNTH_FEATURE_NOISE / math.sqrt(dim))
    features = centers[block] + noise

    # Within-block ring lattices give triangle-rich communities whose sampled
    # neighborhoods stay interconnected; cross-block edges are random pairs.
    # The homophily knob splits the degree budget between the two.
    edges: set[tuple[int, int]] = set()
    half_width = int(SYNTH_AVG_DEGREE * cfg.homophily / 2 + 0.5)
    for b in range(cfg.blocks):
        mem = np.flatnonzero(block == b)
        w = min(half_width, (len(mem) - 1) // 2)
        for idx in range(len(mem)):
            for delta in range(1, w + 1):
                j = mem[(idx + delta) % len(mem)]
                edges.add((min(int(mem[idx]), int(j)), max(int(mem[idx]), int(j))))
    for _ in range(round(n * SYNTH_AVG_DEGREE * (1.0 - cfg.homophily) / 2)):
        a = int(rng.integers(n))
        for _attempt in range(100):
            b = int(rng.integers(n))
            if b != a and (block[b] != block[a] or cfg.blocks == 1):
                break
        else:
            continue
        edges.add((min(a, b), max(a, b)))

    k = round(n * cfg.anomaly_rate)
    anomaly_ids = rng.choice(n, size=k, replace=False) if k else np.zeros(0, np.int64)
    structural = anomaly_ids[: k // 2]
    contextual = anomaly_ids[k // 2:]

    for v in structural:
        # replace the lattice neighborhood with a random same-block hub: the
        # node keeps its feature profile but its edges ignore ring geometry
        v = int(v)
        edges = {e for e in edges if v not in e}
        pool = np.flatnonzero(block == block[v])
        pool = pool[pool != v]
        targets = rng.choice(pool, size=min(SYNTH_HUB_DEGREE, len(pool)), replace=False)
        for t in targets:
            edges.add((min(v, int(t)), max(v, int(t))))

    for v in contextual:
        # shift along the node's own center so the offset survives projection
        features[v] = SYNTH_CONTEXT_SHIFT * centers[block[v]] + rng.normal(size=dim) * (
            SYNTH_FEATURE_NOISE / math.sqrt(dim))

    labels = np.zeros(n, dtype=np.uint8)
    labels[anomaly_ids] = 1

    pair_arr = np.array(sorted(edges), dtype=np.int64) if edges else np.zeros((0, 2), np.int64)
    offsets, cols = build_csr(n, pair_arr)
    g = AttributedGraph(n, offsets, cols, features.astype(np.float32), labels,
                        cfg.resolved_name())
    return _checked(g)
