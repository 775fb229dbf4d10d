"""GCN and GraphSAGE classifiers built on the tape engine.

Both architectures follow the same protocol: ReLU between layers, dropout
applied once, just before the last layer, and only in train mode on nets
with more than one layer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import SparseMatrix, Tape, Tensor

ARCH_GCN = "gcn"
ARCH_SAGE = "sage"


@dataclass(frozen=True)
class ModelConfig:
    arch: str
    in_dim: int
    out_dim: int
    num_layers: int = 2
    hidden_dim: int = 64
    dropout: float = 0.5
    seed: int = 0

    def validate(self) -> None:
        if self.arch not in (ARCH_GCN, ARCH_SAGE):
            raise ValueError(f"unknown architecture {self.arch!r}")
        if not 1 <= self.num_layers <= 3:
            raise ValueError("num_layers must be in 1..3")
        if min(self.in_dim, self.out_dim, self.hidden_dim) <= 0:
            raise ValueError("dimensions must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")


@dataclass
class ParamSet:
    """Per-layer weights and biases; the last layer is decay-exempt."""

    arch: str
    dropout: float
    layer_weights: list[list[Tensor]] = field(default_factory=list)
    layer_biases: list[Tensor] = field(default_factory=list)

    @property
    def num_layers(self) -> int:
        return len(self.layer_biases)

    def parameters(self) -> list[Tensor]:
        out: list[Tensor] = []
        for ws, b in zip(self.layer_weights, self.layer_biases):
            out.extend(ws)
            out.append(b)
        return out

    def decay_exempt(self) -> list[Tensor]:
        return [*self.layer_weights[-1], self.layer_biases[-1]]

    def copy_values(self) -> list[np.ndarray]:
        return [p.data.copy() for p in self.parameters()]

    def load_values(self, values: list[np.ndarray]) -> None:
        for p, v in zip(self.parameters(), values, strict=True):
            p.data[...] = v


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> Tensor:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, size=(fan_in, fan_out)), requires_grad=True)


def init_params(config: ModelConfig) -> ParamSet:
    """Glorot-uniform weights, zero biases; deterministic per config.seed."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    dims = (
        [config.in_dim]
        + [config.hidden_dim] * (config.num_layers - 1)
        + [config.out_dim]
    )
    params = ParamSet(arch=config.arch, dropout=config.dropout)
    weights_per_layer = 2 if config.arch == ARCH_SAGE else 1
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        params.layer_weights.append(
            [_glorot(rng, d_in, d_out) for _ in range(weights_per_layer)]
        )
        params.layer_biases.append(Tensor(np.zeros((1, d_out)), requires_grad=True))
    return params


def _maybe_dropout(
    tape: Tape, x: Tensor, params: ParamSet, layer: int, train: bool, rng
) -> Tensor:
    # Single dropout site: right before the last layer, never on 1-layer nets.
    if train and params.num_layers > 1 and layer == params.num_layers - 1:
        return tape.dropout(x, params.dropout, rng, train=True)
    return x


def gcn_forward(
    tape: Tape,
    a_hat: SparseMatrix,
    features: Tensor,
    params: ParamSet,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Stack of propagate(normalize(A) @ (X @ W) + b) layers."""
    if params.arch != ARCH_GCN:
        raise ValueError("parameter set was initialized for a different architecture")
    x = features
    for layer in range(params.num_layers):
        x = _maybe_dropout(tape, x, params, layer, train, rng)
        (w,) = params.layer_weights[layer]
        x = tape.add_bias(tape.spmm(a_hat, tape.matmul(x, w)), params.layer_biases[layer])
        if layer < params.num_layers - 1:
            x = tape.relu(x)
    return x


def sage_forward(
    tape: Tape,
    nbr_mean: SparseMatrix,
    features: Tensor,
    params: ParamSet,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Mean-aggregator layers: X @ W_self + mean_nbr(X) @ W_nbr + b.

    nbr_mean is the row-normalized adjacency; isolated nodes have an all-zero
    row, so their neighbor term vanishes.
    """
    if params.arch != ARCH_SAGE:
        raise ValueError("parameter set was initialized for a different architecture")
    x = features
    for layer in range(params.num_layers):
        x = _maybe_dropout(tape, x, params, layer, train, rng)
        w_self, w_nbr = params.layer_weights[layer]
        own = tape.matmul(x, w_self)
        agg = tape.matmul(tape.spmm(nbr_mean, x), w_nbr)
        x = tape.add_bias(tape.add(own, agg), params.layer_biases[layer])
        if layer < params.num_layers - 1:
            x = tape.relu(x)
    return x


def forward_logits(
    tape: Tape,
    prop_matrix: SparseMatrix,
    features: Tensor,
    params: ParamSet,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Dispatch on the architecture the ParamSet was built for."""
    if params.arch == ARCH_GCN:
        return gcn_forward(tape, prop_matrix, features, params, train, rng)
    return sage_forward(tape, prop_matrix, features, params, train, rng)
