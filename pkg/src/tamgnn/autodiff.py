"""Minimal dense reverse-mode differentiation on a tape.

Everything is float64 and strictly two-dimensional. A Tape records one
forward pass; backward() replays it in reverse and accumulates exact
gradients into every tensor that requires them. Tapes are rebuilt each
forward pass and belong to a single training run.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse


class Tensor:
    """A (rows, cols) float64 array with an optional gradient buffer."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.ascontiguousarray(data, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"Tensor must be 2-D, got shape {arr.shape}")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


class SparseMatrix:
    """CSR matrix with fixed structure; products are delegated to scipy."""

    __slots__ = ("offsets", "targets", "values", "shape", "_csr")

    def __init__(self, offsets, targets, values, shape: tuple[int, int]):
        self.offsets = np.asarray(offsets, dtype=np.int64)
        self.targets = np.asarray(targets, dtype=np.int64)
        self.values = np.asarray(values, dtype=np.float64)
        self.shape = (int(shape[0]), int(shape[1]))
        if self.offsets.shape != (self.shape[0] + 1,):
            raise ValueError("offsets must have length rows + 1")
        if self.targets.shape != self.values.shape:
            raise ValueError("targets and values must align")
        if self.targets.size and (self.targets.min() < 0 or self.targets.max() >= self.shape[1]):
            raise ValueError("column index out of range")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("sparse values must be finite")
        self._csr = scipy.sparse.csr_matrix(
            (self.values, self.targets, self.offsets), shape=self.shape
        )

    def dot(self, dense: np.ndarray) -> np.ndarray:
        return self._csr @ dense

    def t_dot(self, dense: np.ndarray) -> np.ndarray:
        return self._csr.T @ dense

    def to_dense(self) -> np.ndarray:
        return self._csr.toarray()


def _accumulate(tensor: Tensor, grad: np.ndarray) -> None:
    if not tensor.requires_grad:
        return
    if tensor.grad is None:
        tensor.grad = grad.copy()
    else:
        tensor.grad += grad


class Tape:
    """Records forward ops; backward() runs their adjoints in reverse.

    Construct with record=False for evaluation passes: ops execute normally
    but nothing is recorded and outputs never require gradients.
    """

    def __init__(self, record: bool = True):
        self.record = record
        self._steps: list[tuple[Tensor, object]] = []

    def _emit(self, data: np.ndarray, inputs: tuple[Tensor, ...], backward) -> Tensor:
        needs = self.record and any(t.requires_grad for t in inputs)
        out = Tensor(data, requires_grad=needs)
        if needs:
            self._steps.append((out, backward))
        return out

    def backward(self, loss: Tensor) -> None:
        if loss.shape != (1, 1):
            raise ValueError("backward expects a scalar (1, 1) loss tensor")
        loss.grad = np.ones((1, 1))
        for out, backward in reversed(self._steps):
            if out.grad is not None:
                backward(out.grad)

    # ------------------------------------------------------------------ ops

    def matmul(self, a: Tensor, b: Tensor) -> Tensor:
        if a.shape[1] != b.shape[0]:
            raise ValueError(f"matmul dimension mismatch: {a.shape} @ {b.shape}")

        def backward(g):
            _accumulate(a, g @ b.data.T)
            _accumulate(b, a.data.T @ g)

        return self._emit(a.data @ b.data, (a, b), backward)

    def spmm(self, a: SparseMatrix, x: Tensor) -> Tensor:
        if a.shape[1] != x.shape[0]:
            raise ValueError(f"spmm dimension mismatch: {a.shape} @ {x.shape}")

        def backward(g):
            _accumulate(x, a.t_dot(g))

        return self._emit(a.dot(x.data), (x,), backward)

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        if a.shape != b.shape:
            raise ValueError(f"add shape mismatch: {a.shape} vs {b.shape}")

        def backward(g):
            _accumulate(a, g)
            _accumulate(b, g)

        return self._emit(a.data + b.data, (a, b), backward)

    def add_bias(self, x: Tensor, b: Tensor) -> Tensor:
        if b.shape != (1, x.shape[1]):
            raise ValueError(f"bias shape {b.shape} does not broadcast over {x.shape}")

        def backward(g):
            _accumulate(x, g)
            _accumulate(b, g.sum(axis=0, keepdims=True))

        return self._emit(x.data + b.data, (x, b), backward)

    def relu(self, x: Tensor) -> Tensor:
        mask = x.data > 0

        def backward(g):
            _accumulate(x, g * mask)

        return self._emit(np.where(mask, x.data, 0.0), (x,), backward)

    def dropout(self, x: Tensor, p: float, rng: np.random.Generator | None, train: bool) -> Tensor:
        """Inverted dropout: scales by 1/(1-p) at train time, identity at eval.

        p=0 and eval mode are exact identities and consume no randomness.
        """
        if not 0.0 <= p < 1.0:
            raise ValueError("dropout rate must be in [0, 1)")
        if not train or p == 0.0:
            def backward(g):
                _accumulate(x, g)

            return self._emit(x.data, (x,), backward)
        if rng is None:
            raise ValueError("train-mode dropout needs a random generator")
        scale = (rng.random(x.shape) >= p) / (1.0 - p)

        def backward(g):
            _accumulate(x, g * scale)

        return self._emit(x.data * scale, (x,), backward)

    def row_softmax(self, x: Tensor) -> Tensor:
        z = x.data - x.data.max(axis=1, keepdims=True)
        e = np.exp(z)
        probs = e / e.sum(axis=1, keepdims=True)

        def backward(g):
            inner = (g * probs).sum(axis=1, keepdims=True)
            _accumulate(x, probs * (g - inner))

        return self._emit(probs, (x,), backward)

    def take_rows(self, x: Tensor, rows: np.ndarray) -> Tensor:
        rows = np.asarray(rows, dtype=np.int64)

        def backward(g):
            full = np.zeros_like(x.data)
            np.add.at(full, rows, g)
            _accumulate(x, full)

        return self._emit(x.data[rows], (x,), backward)

    def margin_softmax_xent(
        self,
        logits: Tensor,
        margins: np.ndarray,
        targets: np.ndarray,
        class_weights: np.ndarray | None = None,
    ) -> Tensor:
        """Weighted mean of -log softmax(logits + margins)[target].

        Margins are constants with respect to differentiation; the gradient
        flows to the logits only. Log-sum-exp uses max-subtraction.
        """
        n, k = logits.shape
        margins = np.asarray(margins, dtype=np.float64)
        if margins.shape not in ((n, k), (k,)):
            raise ValueError(f"margins shape {margins.shape} incompatible with logits {logits.shape}")
        if not np.all(np.isfinite(logits.data)):
            raise ValueError("non-finite logits")
        if not np.all(np.isfinite(margins)):
            raise ValueError("non-finite margins")
        targets = np.asarray(targets, dtype=np.int64)
        if targets.shape != (n,) or targets.min() < 0 or targets.max() >= k:
            raise ValueError("targets must hold one valid class id per row")
        if class_weights is None:
            class_weights = np.ones(k)
        class_weights = np.asarray(class_weights, dtype=np.float64)
        if class_weights.shape != (k,) or np.any(class_weights <= 0):
            raise ValueError("class_weights must be positive, one per class")

        z = logits.data + margins
        z = z - z.max(axis=1, keepdims=True)
        log_norm = np.log(np.exp(z).sum(axis=1, keepdims=True))
        log_probs = z - log_norm
        node_losses = -log_probs[np.arange(n), targets]
        w = class_weights[targets]
        w_total = w.sum()
        loss = np.array([[float((w * node_losses).sum() / w_total)]])

        def backward(g):
            probs = np.exp(log_probs)
            probs[np.arange(n), targets] -= 1.0
            probs *= (w / w_total)[:, None]
            _accumulate(logits, g[0, 0] * probs)

        return self._emit(loss, (logits,), backward)


def identity_sparse(n: int) -> SparseMatrix:
    return SparseMatrix(
        np.arange(n + 1, dtype=np.int64),
        np.arange(n, dtype=np.int64),
        np.ones(n),
        (n, n),
    )
