"""Balanced accuracy, macro-F1, and the false-positive topology analysis."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, asdict

import numpy as np

from .graph import Graph
from .topology import NldMatrix, anomalous_nodes, connectivity_matrix, neighbor_label_distribution, truth_nld


class MetricWarning(UserWarning):
    pass


def confusion_matrix(
    preds: np.ndarray, labels: np.ndarray, mask_ids: np.ndarray, num_classes: int
) -> np.ndarray:
    """Integer matrix with entry (i, j) = nodes of true class i predicted j."""
    true = labels[mask_ids]
    pred = preds[mask_ids]
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (true, pred), 1)
    return cm


def balanced_accuracy(
    preds: np.ndarray, labels: np.ndarray, mask_ids: np.ndarray, num_classes: int
) -> float:
    """Mean per-class recall; classes absent from the mask are excluded."""
    cm = confusion_matrix(preds, labels, mask_ids, num_classes)
    support = cm.sum(axis=1)
    present = support > 0
    if not present.all():
        missing = np.flatnonzero(~present).tolist()
        warnings.warn(
            f"balanced accuracy: classes {missing} absent from mask, excluded",
            MetricWarning,
            stacklevel=2,
        )
    recall = np.diag(cm)[present] / support[present]
    return float(recall.mean())


def macro_f1(
    preds: np.ndarray, labels: np.ndarray, mask_ids: np.ndarray, num_classes: int
) -> float:
    """Unweighted mean of per-class F1; a class with no true and no predicted
    positives contributes 0."""
    cm = confusion_matrix(preds, labels, mask_ids, num_classes)
    tp = np.diag(cm).astype(np.float64)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    denom = 2 * tp + fp + fn
    f1 = np.divide(2 * tp, denom, out=np.zeros(num_classes), where=denom > 0)
    return float(f1.mean())


@dataclass(frozen=True)
class FpReport:
    """False-positive concentration around anomalously-connected minor nodes.

    Ratios are None when their denominator is empty. abnormal_minor_fp is
    the false-positive rate over major evaluation nodes adjacent to the
    anomalous minor set; minor_fp is the same rate over all major evaluation
    nodes; fnr is the miss rate on minor-class evaluation nodes.
    """

    abnormal_minor_fp: float | None
    minor_fp: float | None
    fnr: float | None
    abnormal_fp_count: int
    abnormal_pool_size: int
    minor_fp_count: int
    major_eval_count: int
    fn_count: int
    minor_eval_count: int
    anomalous_minor_count: int

    def to_dict(self) -> dict:
        return asdict(self)


def _ratio(num: int, denom: int) -> float | None:
    return None if denom == 0 else num / denom


def fp_topology_analysis(
    graph: Graph,
    preds: np.ndarray,
    labels: np.ndarray,
    train_ids: np.ndarray,
    eval_ids: np.ndarray,
    minor_classes: np.ndarray,
    nld_source: str = "truth",
    probs: np.ndarray | None = None,
    multiset: bool = False,
) -> FpReport:
    """Compare false-positive rates near anomalous minor nodes vs. on average.

    The anomalous set is computed over the training-labeled nodes from
    either ground-truth neighbor labels ("truth") or model probabilities for
    unlabeled neighbors ("estimated"). A false positive for the minor
    classes is a major-true evaluation node predicted as any minor class.
    By default the neighbor pool is a union of the anomalous minor nodes'
    major evaluation neighbors; multiset=True counts nodes once per
    adjacency instead.
    """
    minor_classes = np.asarray(minor_classes, dtype=np.int64)
    eval_ids = np.asarray(eval_ids, dtype=np.int64)
    train_ids = np.asarray(train_ids, dtype=np.int64)

    if nld_source == "truth":
        nld = truth_nld(graph, train_ids)
    elif nld_source == "estimated":
        nld = neighbor_label_distribution(graph, train_ids, labels, probs)
    else:
        raise ValueError("nld_source must be 'truth' or 'estimated'")
    conn = connectivity_matrix(nld, labels, graph.num_classes)
    anomalous = anomalous_nodes(nld, conn, labels)
    anomalous_minor = anomalous[np.isin(labels[anomalous], minor_classes)]

    is_minor_class = np.zeros(graph.num_classes, dtype=bool)
    is_minor_class[minor_classes] = True
    in_eval = np.zeros(graph.num_nodes, dtype=bool)
    in_eval[eval_ids] = True
    major_eval = in_eval & ~is_minor_class[np.clip(labels, 0, None)] & (labels >= 0)
    minor_eval = in_eval & is_minor_class[np.clip(labels, 0, None)] & (labels >= 0)
    pred_minor = is_minor_class[preds]

    pool = [u for v in anomalous_minor for u in graph.neighbors(v) if major_eval[u]]
    if not multiset:
        pool = sorted(set(pool))
    pool = np.asarray(pool, dtype=np.int64)

    abnormal_fp = int(pred_minor[pool].sum()) if pool.size else 0
    minor_fp = int(pred_minor[major_eval].sum())
    major_count = int(major_eval.sum())
    minor_count = int(minor_eval.sum())
    fn = int(np.sum(preds[minor_eval] != labels[minor_eval]))

    return FpReport(
        abnormal_minor_fp=_ratio(abnormal_fp, pool.size),
        minor_fp=_ratio(minor_fp, major_count),
        fnr=_ratio(fn, minor_count),
        abnormal_fp_count=abnormal_fp,
        abnormal_pool_size=int(pool.size),
        minor_fp_count=minor_fp,
        major_eval_count=major_count,
        fn_count=fn,
        minor_eval_count=minor_count,
        anomalous_minor_count=int(anomalous_minor.size),
    )


def cross_entropy(logits: np.ndarray, targets: np.ndarray) -> float:
    """Plain unweighted softmax cross-entropy of detached logits."""
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(np.mean(log_norm[:, 0] - z[np.arange(targets.size), targets]))
