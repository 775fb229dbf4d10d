"""Topology statistics: class-wise temperatures, pseudo-labels, per-node
neighbor label distributions, class connectivity averages, and the
anomalously-connected node set.

A node's neighbor label distribution (NLD) is the class histogram of its
closed neighborhood: the node itself and labeled neighbors contribute
one-hot rows, unlabeled neighbors contribute their (temperature-scaled)
predicted class distribution, and the total is divided by degree + 1.
The connectivity matrix averages NLD rows over the labeled nodes of each
class. A labeled node is anomalously connected when some off-class NLD
entry exceeds its class average.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Graph

# Guard for ratios against connectivity entries that are exactly zero
# (classes that never touch). Applied as max(denominator, EPS) so strictly
# positive denominators are left bit-exact.
EPS = 1e-12

# Floor for the temperature denominator; extreme imbalance can otherwise
# drive it nonpositive.
TEMP_DENOM_FLOOR = 1e-6


@dataclass(frozen=True)
class NldMatrix:
    """Neighbor label distribution rows for the labeled nodes.

    row_of[v] maps a labeled node id to its row index in `rows`.
    """

    node_ids: np.ndarray
    rows: np.ndarray

    def row_for(self, node: int) -> np.ndarray:
        idx = np.searchsorted(self.node_ids, node)
        if idx >= self.node_ids.size or self.node_ids[idx] != node:
            raise KeyError(f"node {node} is not a labeled row")
        return self.rows[idx]


def class_temperatures(counts: np.ndarray, phi: float, delta: float = 0.4) -> np.ndarray:
    """Per-class logit divisors, larger for rarer classes.

    Each class gets a normalized prevalence pi_k = delta * N_k / mean(N)
    + (1 - delta); the temperature is 1 / (phi * (pi_k + 1 - max_j pi_j)),
    so the most frequent class sits exactly at 1/phi and rarer classes are
    divided harder. The denominator is floored to stay positive.
    """
    counts = np.asarray(counts, dtype=np.float64)
    if np.any(counts <= 0):
        raise ValueError("class counts must be positive")
    if phi <= 0:
        raise ValueError("phi must be positive")
    if not 0.0 <= delta <= 1.0:
        raise ValueError("delta must be in [0, 1]")
    pi = delta * counts / counts.mean() + (1.0 - delta)
    denom = np.maximum(phi * (pi + 1.0 - pi.max()), TEMP_DENOM_FLOOR)
    return 1.0 / denom


def pseudo_label_probs(logits: np.ndarray, temperatures: np.ndarray) -> np.ndarray:
    """Row softmax of logits divided class-wise by the temperatures."""
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise ValueError("non-finite logits")
    scaled = logits / np.asarray(temperatures, dtype=np.float64)[None, :]
    scaled = scaled - scaled.max(axis=1, keepdims=True)
    e = np.exp(scaled)
    return e / e.sum(axis=1, keepdims=True)


def neighbor_label_distribution(
    graph: Graph,
    train_ids: np.ndarray,
    labels: np.ndarray,
    probs: np.ndarray | None = None,
) -> NldMatrix:
    """NLD rows for every training-labeled node.

    Labeled neighbors (and the node itself) count as one-hot true labels;
    unlabeled neighbors contribute their row of `probs`. probs may be None
    only when every neighbor of a labeled node is labeled.
    """
    n, k = graph.num_nodes, graph.num_classes
    train_ids = np.asarray(train_ids, dtype=np.int64)
    labeled = np.zeros(n, dtype=bool)
    labeled[train_ids] = True

    contrib = np.zeros((n, k))
    if probs is not None:
        probs = np.asarray(probs, dtype=np.float64)
        if probs.shape != (n, k):
            raise ValueError(f"probs must be ({n}, {k}), got {probs.shape}")
        contrib[~labeled] = probs[~labeled]
    contrib[labeled] = 0.0
    contrib[train_ids, labels[train_ids]] = 1.0

    # Row v of (A + I) @ contrib accumulates the closed neighborhood; only
    # labeled rows are kept.
    deg = graph.degrees()
    sums = contrib.copy()
    np.add.at(
        sums,
        np.repeat(np.arange(n), deg),
        contrib[graph.csr_targets],
    )
    node_ids = np.sort(train_ids)
    rows = sums[node_ids] / (deg[node_ids] + 1.0)[:, None]
    if probs is None and not np.allclose(rows.sum(axis=1), 1.0):
        raise ValueError("unlabeled neighbors present but no probabilities given")
    return NldMatrix(node_ids=node_ids, rows=rows)


def connectivity_matrix(nld: NldMatrix, labels: np.ndarray, num_classes: int) -> np.ndarray:
    """Class-averaged NLD rows over the labeled nodes of each class."""
    row_labels = labels[nld.node_ids]
    conn = np.zeros((num_classes, num_classes))
    for cls in range(num_classes):
        members = row_labels == cls
        if not members.any():
            raise ValueError(f"class {cls} has no labeled nodes")
        conn[cls] = nld.rows[members].mean(axis=0)
    return conn


def anomalous_nodes(nld: NldMatrix, conn: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Labeled nodes whose best off-class NLD/average ratio strictly exceeds 1."""
    row_labels = labels[nld.node_ids]
    ratios = nld.rows / np.maximum(conn[row_labels], EPS)
    ratios[np.arange(row_labels.size), row_labels] = -np.inf
    return nld.node_ids[ratios.max(axis=1) > 1.0]


def truth_nld(graph: Graph, train_ids: np.ndarray) -> NldMatrix:
    """NLD computed from ground-truth labels of every neighbor.

    Used by the connectivity analysis when neighbor label information is
    assumed accessible; unlabeled (-1) neighbors contribute nothing.
    """
    n, k = graph.num_nodes, graph.num_classes
    onehot = np.zeros((n, k))
    has_label = graph.labels >= 0
    onehot[np.flatnonzero(has_label), graph.labels[has_label]] = 1.0
    deg = graph.degrees()
    sums = onehot.copy()
    np.add.at(sums, np.repeat(np.arange(n), deg), onehot[graph.csr_targets])
    node_ids = np.sort(np.asarray(train_ids, dtype=np.int64))
    rows = sums[node_ids] / (deg[node_ids] + 1.0)[:, None]
    return NldMatrix(node_ids=node_ids, rows=rows)


def dump_topology_csv(nld: NldMatrix, conn: np.ndarray, nld_path, conn_path) -> None:
    """Write the distribution rows and class averages as plain CSV."""
    with open(nld_path, "w", encoding="utf-8") as fh:
        fh.write("node," + ",".join(f"class_{j}" for j in range(conn.shape[0])) + "\n")
        for node, row in zip(nld.node_ids, nld.rows):
            fh.write(f"{node}," + ",".join(repr(float(x)) for x in row) + "\n")
    with open(conn_path, "w", encoding="utf-8") as fh:
        fh.write("class," + ",".join(f"class_{j}" for j in range(conn.shape[0])) + "\n")
        for cls, row in enumerate(conn):
            fh.write(f"{cls}," + ",".join(repr(float(x)) for x in row) + "\n")
