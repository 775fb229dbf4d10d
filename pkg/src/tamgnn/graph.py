"""Graph data model, file ingestion, imbalanced splits, and synthetic graphs.

Graphs are undirected and stored in CSR form with both edge directions
present, no duplicates, and no self-loops (self contributions are added
analytically wherever a closed neighborhood is needed). Node ids are dense
integers 0..n-1 and class ids are dense integers 0..K-1, with -1 marking an
unlabeled node.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import SparseMatrix

UNLABELED = -1


class GraphParseError(ValueError):
    """Malformed input file; message carries path and line number."""


@dataclass(frozen=True)
class Graph:
    """Immutable undirected graph with node features and (partial) labels."""

    num_nodes: int
    csr_offsets: np.ndarray
    csr_targets: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def degrees(self) -> np.ndarray:
        return np.diff(self.csr_offsets)

    def neighbors(self, v: int) -> np.ndarray:
        return self.csr_targets[self.csr_offsets[v] : self.csr_offsets[v + 1]]

    def edge_pairs(self) -> np.ndarray:
        """Unique undirected edges as an (m, 2) array with u < v."""
        rows = np.repeat(np.arange(self.num_nodes), self.degrees())
        cols = self.csr_targets
        keep = rows < cols
        return np.stack([rows[keep], cols[keep]], axis=1)

    @property
    def num_edges(self) -> int:
        return self.csr_targets.shape[0] // 2

    def validate(self) -> None:
        if self.csr_offsets.shape != (self.num_nodes + 1,):
            raise ValueError("csr_offsets must have length num_nodes + 1")
        if np.any(np.diff(self.csr_offsets) < 0):
            raise ValueError("csr_offsets must be nondecreasing")
        if self.csr_targets.size and (
            self.csr_targets.min() < 0 or self.csr_targets.max() >= self.num_nodes
        ):
            raise ValueError("csr_targets out of range")
        if self.features.shape[0] != self.num_nodes:
            raise ValueError(
                f"feature rows ({self.features.shape[0]}) != num_nodes ({self.num_nodes})"
            )
        if self.labels.shape != (self.num_nodes,):
            raise ValueError("labels must have one entry per node")


@dataclass(frozen=True)
class SplitMasks:
    """Disjoint train/val/test node-id sets (sorted int arrays)."""

    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def validate(self, graph: Graph | None = None) -> None:
        sets = [set(self.train.tolist()), set(self.val.tolist()), set(self.test.tolist())]
        if (
            sets[0] & sets[1]
            or sets[0] & sets[2]
            or sets[1] & sets[2]
        ):
            raise ValueError("train/val/test masks must be pairwise disjoint")
        if graph is not None:
            for name, ids in (("train", self.train), ("val", self.val), ("test", self.test)):
                if ids.size and np.any(graph.labels[ids] == UNLABELED):
                    raise ValueError(f"{name} mask contains unlabeled nodes")


@dataclass(frozen=True)
class SbmSpec:
    """Stochastic block model: block sizes, symmetric edge probabilities,
    and Gaussian features with pairwise-separated class means."""

    class_sizes: tuple[int, ...]
    edge_prob: np.ndarray
    feature_dim: int
    class_mean_separation: float
    feature_noise: float
    seed: int

    def validate(self) -> None:
        k = len(self.class_sizes)
        if k == 0 or any(s <= 0 for s in self.class_sizes):
            raise ValueError("class_sizes must all be positive")
        p = np.asarray(self.edge_prob, dtype=np.float64)
        if p.shape != (k, k):
            raise ValueError("edge_prob must be square with one row per class")
        if not np.allclose(p, p.T):
            raise ValueError("edge_prob must be symmetric")
        if p.min() < 0.0 or p.max() > 1.0:
            raise ValueError("edge_prob entries must lie in [0, 1]")
        if self.feature_dim < k:
            raise ValueError("feature_dim must be >= number of classes")
        if self.class_mean_separation < 0:
            raise ValueError("class_mean_separation must be >= 0")
        if self.feature_noise <= 0:
            raise ValueError("feature_noise must be > 0")


def homophilous_sbm_spec(
    num_classes: int,
    nodes_per_class: int,
    p_in: float,
    p_out: float,
    feature_dim: int = 16,
    class_mean_separation: float = 1.0,
    feature_noise: float = 1.0,
    seed: int = 0,
) -> SbmSpec:
    """Two-probability block spec: p_in within a class, p_out across."""
    p = np.full((num_classes, num_classes), p_out, dtype=np.float64)
    np.fill_diagonal(p, p_in)
    return SbmSpec(
        class_sizes=(nodes_per_class,) * num_classes,
        edge_prob=p,
        feature_dim=feature_dim,
        class_mean_separation=class_mean_separation,
        feature_noise=feature_noise,
        seed=seed,
    )


def build_graph(
    num_nodes: int,
    edges: np.ndarray,
    features: np.ndarray,
    labels: np.ndarray,
    num_classes: int | None = None,
) -> tuple[Graph, int]:
    """Assemble a Graph from an (m, 2) edge array.

    Symmetrizes, removes duplicates, and drops self-loops. Returns the graph
    and the number of self-loops dropped.
    """
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.size and (edges.min() < 0 or edges.max() >= num_nodes):
        raise ValueError("edge endpoint out of range")
    self_loops = int(np.sum(edges[:, 0] == edges[:, 1]))
    edges = edges[edges[:, 0] != edges[:, 1]]
    if edges.size:
        both = np.concatenate([edges, edges[:, ::-1]], axis=0)
        both = np.unique(both, axis=0)
        order = np.lexsort((both[:, 1], both[:, 0]))
        both = both[order]
        targets = both[:, 1].copy()
        counts = np.bincount(both[:, 0], minlength=num_nodes)
    else:
        targets = np.empty(0, dtype=np.int64)
        counts = np.zeros(num_nodes, dtype=np.int64)
    offsets = np.zeros(num_nodes + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])

    features = np.ascontiguousarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if features.shape[0] != labels.shape[0]:
        raise ValueError(
            f"feature row count ({features.shape[0]}) != label count ({labels.shape[0]})"
        )
    if num_classes is None:
        num_classes = int(labels.max()) + 1 if labels.size else 0
    graph = Graph(
        num_nodes=num_nodes,
        csr_offsets=offsets,
        csr_targets=targets,
        features=features,
        labels=labels,
        num_classes=num_classes,
    )
    graph.validate()
    return graph, self_loops


def _parse_int_pair(line: str, path: str, lineno: int) -> tuple[int, int]:
    parts = line.split("\t") if "\t" in line else line.split()
    if len(parts) != 2:
        raise GraphParseError(f"{path}:{lineno}: expected two integer fields, got {line!r}")
    try:
        return int(parts[0]), int(parts[1])
    except ValueError as exc:
        raise GraphParseError(f"{path}:{lineno}: non-integer field in {line!r}") from exc


def load_graph(edge_path, feature_path, label_path) -> Graph:
    """Load a graph from an edge list, a feature CSV, and a label file.

    Input self-loops are dropped (with a warning), duplicate and reversed
    edges are merged. Node ids must be dense 0..n-1.
    """
    edge_path, feature_path, label_path = Path(edge_path), Path(feature_path), Path(label_path)

    features = _load_feature_csv(feature_path)
    n = features.shape[0]

    labels = np.full(n, UNLABELED, dtype=np.int64)
    seen = np.zeros(n, dtype=bool)
    count = 0
    with open(label_path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            node, cls = _parse_int_pair(line, str(label_path), lineno)
            if node < 0 or node >= n:
                raise GraphParseError(
                    f"{label_path}:{lineno}: node id {node} outside dense range 0..{n - 1}"
                )
            if seen[node]:
                raise GraphParseError(f"{label_path}:{lineno}: duplicate entry for node {node}")
            seen[node] = True
            labels[node] = cls
            count += 1
    if count != n:
        raise GraphParseError(
            f"{label_path}: {count} label lines for {n} feature rows (ids must be dense)"
        )

    edges = []
    with open(edge_path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            u, v = _parse_int_pair(line, str(edge_path), lineno)
            if u < 0 or u >= n or v < 0 or v >= n:
                raise GraphParseError(
                    f"{edge_path}:{lineno}: endpoint outside dense range 0..{n - 1}"
                )
            edges.append((u, v))
    edge_arr = np.asarray(edges, dtype=np.int64).reshape(-1, 2)

    graph, dropped = build_graph(n, edge_arr, features, labels)
    if dropped:
        warnings.warn(f"{edge_path}: dropped {dropped} self-loop(s)", stacklevel=2)
    return graph


def _load_feature_csv(path: Path) -> np.ndarray:
    rows = []
    width = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            try:
                row = [float(x) for x in line.split(",")]
            except ValueError as exc:
                raise GraphParseError(f"{path}:{lineno}: non-numeric feature value") from exc
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise GraphParseError(
                    f"{path}:{lineno}: expected {width} columns, got {len(row)}"
                )
            rows.append(row)
    if not rows:
        raise GraphParseError(f"{path}: no feature rows")
    return np.asarray(rows, dtype=np.float64)


def save_graph(graph: Graph, edge_path, feature_path, label_path) -> None:
    """Write a graph back out in the load_graph formats."""
    with open(edge_path, "w", encoding="utf-8") as fh:
        for u, v in graph.edge_pairs():
            fh.write(f"{u}\t{v}\n")
    with open(feature_path, "w", encoding="utf-8") as fh:
        for row in graph.features:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")
    with open(label_path, "w", encoding="utf-8") as fh:
        for node, cls in enumerate(graph.labels):
            fh.write(f"{node}\t{cls}\n")


def load_split(path) -> SplitMasks:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    try:
        masks = SplitMasks(
            train=np.asarray(sorted(obj["train"]), dtype=np.int64),
            val=np.asarray(sorted(obj["val"]), dtype=np.int64),
            test=np.asarray(sorted(obj["test"]), dtype=np.int64),
        )
    except KeyError as exc:
        raise GraphParseError(f"{path}: split JSON missing key {exc}") from exc
    masks.validate()
    return masks


def save_split(masks: SplitMasks, path) -> None:
    obj = {
        "train": [int(x) for x in masks.train],
        "val": [int(x) for x in masks.val],
        "test": [int(x) for x in masks.test],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=0, sort_keys=True)
        fh.write("\n")


def train_class_counts(graph: Graph, train_ids: np.ndarray) -> np.ndarray:
    """Per-class labeled-node counts over the training mask."""
    return np.bincount(graph.labels[train_ids], minlength=graph.num_classes)


def default_minor_classes(num_classes: int) -> np.ndarray:
    """Bottom half of the class ids (rounding down) are treated as minor."""
    k = num_classes // 2
    return np.arange(num_classes - k, num_classes, dtype=np.int64)


def make_step_imbalance_split(
    graph: Graph,
    base_train: np.ndarray,
    val: np.ndarray,
    test: np.ndarray,
    rho: float,
    minor_classes: np.ndarray | None = None,
    seed: int = 0,
) -> SplitMasks:
    """Subsample minor-class training nodes down to floor(max_k N_k / rho).

    Removed nodes become unlabeled for training (they are dropped from the
    train mask, not moved to val/test). Val/test are returned unchanged.
    """
    if rho < 1:
        raise ValueError("imbalance ratio rho must be >= 1")
    base_train = np.asarray(base_train, dtype=np.int64)
    if base_train.size and np.any(graph.labels[base_train] == UNLABELED):
        raise ValueError("base_train contains unlabeled nodes")
    if minor_classes is None:
        minor_classes = default_minor_classes(graph.num_classes)
    minor_classes = np.asarray(minor_classes, dtype=np.int64)

    counts = train_class_counts(graph, base_train)
    target = int(counts.max() // rho)
    if target < 1:
        raise ValueError(
            f"imbalance ratio too large: floor(max class count {counts.max()} / rho {rho}) < 1"
        )

    rng = np.random.default_rng(seed)
    keep = np.ones(base_train.size, dtype=bool)
    train_labels = graph.labels[base_train]
    for cls in minor_classes:
        idx = np.flatnonzero(train_labels == cls)
        if idx.size > target:
            kept = rng.permutation(idx)[:target]
            keep[idx] = False
            keep[kept] = True
    out = SplitMasks(
        train=np.sort(base_train[keep]),
        val=np.asarray(val, dtype=np.int64),
        test=np.asarray(test, dtype=np.int64),
    )
    out.validate()
    return out


def stratified_split(
    labels: np.ndarray,
    fractions: tuple[float, float, float] = (0.6, 0.2, 0.2),
    seed: int = 0,
) -> SplitMasks:
    """Per-class shuffled split into train/val/test by the given fractions."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("split fractions must sum to 1")
    rng = np.random.default_rng(seed)
    train, val, test = [], [], []
    for cls in np.unique(labels[labels != UNLABELED]):
        ids = rng.permutation(np.flatnonzero(labels == cls))
        n_tr = int(round(fractions[0] * ids.size))
        n_va = int(round(fractions[1] * ids.size))
        train.extend(ids[:n_tr])
        val.extend(ids[n_tr : n_tr + n_va])
        test.extend(ids[n_tr + n_va :])
    return SplitMasks(
        train=np.sort(np.asarray(train, dtype=np.int64)),
        val=np.sort(np.asarray(val, dtype=np.int64)),
        test=np.sort(np.asarray(test, dtype=np.int64)),
    )


def generate_sbm(spec: SbmSpec) -> tuple[Graph, SplitMasks]:
    """Sample a graph from the block model; pure function of the spec.

    Each pair (u, v), u < v, is connected independently with probability
    edge_prob[y_u][y_v]. Features are the node's class mean (scaled one-hot
    directions, pairwise class_mean_separation apart) plus isotropic
    Gaussian noise. The default split is stratified 60/20/20.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    sizes = np.asarray(spec.class_sizes, dtype=np.int64)
    n = int(sizes.sum())
    k = sizes.size
    labels = np.repeat(np.arange(k, dtype=np.int64), sizes)

    prob = np.asarray(spec.edge_prob, dtype=np.float64)[labels[:, None], labels[None, :]]
    draw = rng.random((n, n))
    upper = np.triu(draw < prob, k=1)
    us, vs = np.nonzero(upper)
    edges = np.stack([us, vs], axis=1)

    # Scaled one-hot class means: pairwise distance is exactly the requested
    # separation for every class pair.
    means = np.zeros((k, spec.feature_dim))
    means[np.arange(k), np.arange(k)] = spec.class_mean_separation / np.sqrt(2.0)
    features = means[labels] + spec.feature_noise * rng.standard_normal((n, spec.feature_dim))

    graph, _ = build_graph(n, edges, features, labels, num_classes=k)
    split_seed = int(rng.integers(0, 2**32))
    masks = stratified_split(labels, seed=split_seed)
    return graph, masks


def normalized_adjacency(graph: Graph) -> SparseMatrix:
    """Symmetrically normalized adjacency with analytic self-loops.

    Entry (v, u) is 1/sqrt((d_v + 1)(d_u + 1)) for u adjacent to v or u = v.
    """
    n = graph.num_nodes
    deg = graph.degrees()
    dhat = (deg + 1).astype(np.float64)
    inv_sqrt = 1.0 / np.sqrt(dhat)

    rows = np.repeat(np.arange(n), deg)
    cols = graph.csr_targets
    # Append the diagonal, then re-sort into CSR order.
    rows = np.concatenate([rows, np.arange(n)])
    cols = np.concatenate([cols, np.arange(n)])
    vals = inv_sqrt[rows] * inv_sqrt[cols]
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=offsets[1:])
    return SparseMatrix(offsets, cols, vals, (n, n))


def mean_aggregation_matrix(graph: Graph) -> SparseMatrix:
    """Row-normalized adjacency (no self entries); isolated rows stay zero."""
    n = graph.num_nodes
    deg = graph.degrees()
    rows = np.repeat(np.arange(n), deg)
    vals = 1.0 / deg[rows].astype(np.float64)
    offsets = graph.csr_offsets.copy()
    return SparseMatrix(offsets, graph.csr_targets.copy(), vals, (n, n))
