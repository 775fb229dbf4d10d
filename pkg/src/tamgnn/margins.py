"""Per-node, per-class additive logit margins.

Two topology-aware components are combined with a per-class base margin:

* The connectivity margin penalizes (never rewards) classes a node touches
  more than its class average does; it is -log of the excess-connection
  ratio, clipped at zero, and exactly zero for the node's own class.
* The distribution margin places the node's neighbor-label distribution in
  the triangle it forms with its own-class and target-class averages (sides
  measured by Jensen-Shannon divergence), and scales the margin by the
  cosine of the angle at the own-class vertex. It can be negative or
  positive: nodes clearly separated from a class get extra margin there.

Margins are constants under differentiation: they are computed from a
detached forward pass and added to logits before the loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .topology import EPS, NldMatrix

# Documented hyperparameter search space for the two margin coefficients and
# the temperature scale.
ALPHA_GRID = (0.25, 0.5, 1.5, 2.5)
BETA_GRID = (0.125, 0.25, 0.5)
PHI_GRID = (0.8, 1.2)

BASE_LOSSES = ("ce", "reweight", "balanced_softmax")


@dataclass(frozen=True)
class TamConfig:
    """Margin strengths and pseudo-label settings for one training run."""

    alpha: float = 0.5
    beta: float = 0.25
    phi: float = 1.2
    delta: float = 0.4
    warmup_epochs: int = 5
    base_loss: str = "balanced_softmax"

    def validate(self) -> None:
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be >= 0")
        if self.phi <= 0:
            raise ValueError("phi must be > 0")
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError("delta must be in [0, 1]")
        if self.warmup_epochs < 0:
            raise ValueError("warmup_epochs must be >= 0")
        if self.base_loss not in BASE_LOSSES:
            raise ValueError(f"base_loss must be one of {BASE_LOSSES}")

    @property
    def enabled(self) -> bool:
        return self.alpha > 0 or self.beta > 0


@dataclass(frozen=True)
class MarginTensor:
    """Additive logit margins for the labeled nodes.

    acm/adm hold the unscaled components; rows = base + alpha*acm + beta*adm
    is what the loss consumes.
    """

    node_ids: np.ndarray
    acm: np.ndarray
    adm: np.ndarray
    base: np.ndarray
    rows: np.ndarray


def js_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """Jensen-Shannon divergence, natural log, 0*log(0) treated as 0."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {q.shape}")
    m = 0.5 * (p + q)
    return 0.5 * _kl(p, m) + 0.5 * _kl(q, m)


def _kl(p: np.ndarray, m: np.ndarray) -> float:
    mask = p > 0
    return float(np.sum(p[mask] * (np.log(p[mask]) - np.log(m[mask]))))


def _js_rows_to_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """JS divergence between every row of a (n, k) and every row of b (m, k)."""
    pa = a[:, None, :]
    pb = b[None, :, :]
    m = 0.5 * (pa + pb)
    with np.errstate(divide="ignore", invalid="ignore"):
        ta = np.where(pa > 0, pa * (np.log(np.where(pa > 0, pa, 1.0)) - np.log(m)), 0.0)
        tb = np.where(pb > 0, pb * (np.log(np.where(pb > 0, pb, 1.0)) - np.log(m)), 0.0)
    return 0.5 * ta.sum(axis=2) + 0.5 * tb.sum(axis=2)


def acm_margins(nld_row: np.ndarray, conn: np.ndarray, y: int) -> np.ndarray:
    """Connectivity margin of one node against every class.

    For target t != y: -log((conn[y,y]/row[y]) * (row[t]/conn[y,t])) when the
    product ratio exceeds 1, else 0. The own class is exactly 0.
    """
    row = np.asarray(nld_row, dtype=np.float64)
    homophily_deficit = conn[y, y] / np.maximum(row[y], EPS)
    ratio = homophily_deficit * row / np.maximum(conn[y], EPS)
    out = -np.log(np.maximum(ratio, 1.0))
    out[y] = 0.0
    return out


def cos_angle(nld_row: np.ndarray, conn: np.ndarray, y: int, t: int) -> float:
    """Cosine at the own-class vertex of the (node, own-class, target-class)
    triangle with JS-divergence side lengths, clamped to [-1, 1]."""
    j_self = js_divergence(nld_row, conn[y])
    j_classes = js_divergence(conn[t], conn[y])
    if j_self <= 0.0 or j_classes <= 0.0:
        raise ValueError("degenerate triangle: zero-length side at the own-class vertex")
    j_target = js_divergence(nld_row, conn[t])
    raw = (j_self**2 + j_classes**2 - j_target**2) / (2.0 * j_self * j_classes)
    return float(np.clip(raw, -1.0, 1.0))


def adm_margins(nld_row: np.ndarray, conn: np.ndarray, y: int) -> np.ndarray:
    """Distribution margin of one node against every class.

    -js(row, conn[y]) * cos / js(conn[t], conn[y]) per target t; the own
    class and degenerate triangles (either side at the own-class vertex of
    length zero) are 0.
    """
    k = conn.shape[0]
    out = np.zeros(k)
    j_self = js_divergence(nld_row, conn[y])
    if j_self <= 0.0:
        return out
    for t in range(k):
        if t == y:
            continue
        j_classes = js_divergence(conn[t], conn[y])
        if j_classes <= 0.0:
            continue
        out[t] = -j_self * cos_angle(nld_row, conn, y, t) / j_classes
    return out


def acm_margins_batch(rows: np.ndarray, conn: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Vectorized connectivity margins for many nodes at once."""
    ys = np.asarray(ys, dtype=np.int64)
    deficit = conn[ys, ys] / np.maximum(rows[np.arange(ys.size), ys], EPS)
    ratio = deficit[:, None] * rows / np.maximum(conn[ys], EPS)
    out = -np.log(np.maximum(ratio, 1.0))
    out[np.arange(ys.size), ys] = 0.0
    return out


def adm_margins_batch(rows: np.ndarray, conn: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Vectorized distribution margins for many nodes at once."""
    ys = np.asarray(ys, dtype=np.int64)
    n = ys.size
    js_node_class = _js_rows_to_rows(rows, conn)
    js_class_class = _js_rows_to_rows(conn, conn)
    j_self = js_node_class[np.arange(n), ys]
    j_classes = js_class_class[:, ys].T  # (n, k): js(conn[t], conn[y_v])
    j_target = js_node_class

    valid = (j_self[:, None] > 0.0) & (j_classes > 0.0)
    safe_self = np.where(j_self > 0.0, j_self, 1.0)[:, None]
    safe_classes = np.where(valid, j_classes, 1.0)
    cos = (safe_self**2 + safe_classes**2 - j_target**2) / (2.0 * safe_self * safe_classes)
    cos = np.clip(cos, -1.0, 1.0)
    out = np.where(valid, -safe_self * cos / safe_classes, 0.0)
    out[np.arange(n), ys] = 0.0
    return out


def balanced_softmax_margins(counts: np.ndarray) -> np.ndarray:
    """Log class-count margin added to every node's logits during training."""
    counts = np.asarray(counts, dtype=np.float64)
    if np.any(counts <= 0):
        raise ValueError("class counts must be positive")
    return np.log(counts)


def reweight_weights(counts: np.ndarray) -> np.ndarray:
    """Inverse-frequency class weights, normalized so the count-weighted
    mean is 1."""
    counts = np.asarray(counts, dtype=np.float64)
    if np.any(counts <= 0):
        raise ValueError("class counts must be positive")
    return counts.mean() / counts


def base_margins_and_weights(base_loss: str, counts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Resolve the per-class base margin vector and class weights."""
    k = len(counts)
    if base_loss == "ce":
        return np.zeros(k), np.ones(k)
    if base_loss == "balanced_softmax":
        return balanced_softmax_margins(counts), np.ones(k)
    if base_loss == "reweight":
        return np.zeros(k), reweight_weights(counts)
    raise ValueError(f"base_loss must be one of {BASE_LOSSES}")


def assemble_tam(
    nld: NldMatrix,
    conn: np.ndarray,
    labels: np.ndarray,
    cfg: TamConfig,
    base: np.ndarray,
    epoch: int,
) -> MarginTensor:
    """Combine base, connectivity, and distribution margins for one epoch.

    During warmup (epoch <= cfg.warmup_epochs) only the base margin is
    emitted, whatever alpha and beta are.
    """
    cfg.validate()
    n = nld.node_ids.size
    k = conn.shape[0]
    base = np.asarray(base, dtype=np.float64)
    if epoch <= cfg.warmup_epochs or not cfg.enabled:
        zero = np.zeros((n, k))
        return MarginTensor(
            node_ids=nld.node_ids,
            acm=zero,
            adm=zero.copy(),
            base=base,
            rows=np.tile(base, (n, 1)),
        )
    ys = labels[nld.node_ids]
    acm = acm_margins_batch(nld.rows, conn, ys)
    adm = adm_margins_batch(nld.rows, conn, ys)
    rows = base[None, :] + cfg.alpha * acm + cfg.beta * adm
    return MarginTensor(node_ids=nld.node_ids, acm=acm, adm=adm, base=base, rows=rows)
