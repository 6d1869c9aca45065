"""Dense-to-branch MLP decomposition and the forward passes for both forms.

A gated MLP computes W_down (phi(W_gate x) * W_up x). Partitioning the
intermediate dimension into contiguous slices and summing the per-slice
outputs reproduces the dense result: the same partial-sum identity that
tensor-parallel FFN execution relies on. ``convert`` performs that
partition without touching a single weight value; each branch carries a
scalar gate, 1.0 at creation.

Weights are stored [out_features x in_features], the Llama/Qwen
checkpoint convention, so branch slicing takes *rows* of the gate/up
projections and *columns* of the down projection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, ShapeError
from .tensor_ops import get_activation, matmul


@dataclass
class DenseMlp:
    w_gate: np.ndarray  # [d_inter x d_model]
    w_up: np.ndarray  # [d_inter x d_model]
    w_down: np.ndarray  # [d_model x d_inter]
    activation: str = "silu"

    def __post_init__(self):
        if self.w_gate.shape != self.w_up.shape:
            raise ShapeError(f"gate/up shapes differ: {self.w_gate.shape} vs {self.w_up.shape}")
        if self.w_down.shape != (self.w_gate.shape[1], self.w_gate.shape[0]):
            raise ShapeError(
                f"down projection must be transpose-shaped: got {self.w_down.shape} "
                f"for gate {self.w_gate.shape}"
            )

    @property
    def d_model(self) -> int:
        return self.w_gate.shape[1]

    @property
    def d_inter(self) -> int:
        return self.w_gate.shape[0]


@dataclass
class Branch:
    """One contiguous slice of an MLP plus its scalar gate."""

    w_gate: np.ndarray  # [d_b x d_model]
    w_up: np.ndarray  # [d_b x d_model]
    w_down: np.ndarray  # [d_model x d_b]
    alpha: float = 1.0

    def __post_init__(self):
        if self.w_gate.shape != self.w_up.shape:
            raise ShapeError(f"branch gate/up shapes differ: {self.w_gate.shape} vs {self.w_up.shape}")
        if self.w_down.shape != (self.w_gate.shape[1], self.w_gate.shape[0]):
            raise ShapeError(f"branch down shape {self.w_down.shape} does not match gate {self.w_gate.shape}")
        if self.width < 1:
            raise ShapeError("branch width must be >= 1")

    @property
    def width(self) -> int:
        return self.w_gate.shape[0]

    @property
    def d_model(self) -> int:
        return self.w_gate.shape[1]


@dataclass
class MoeMlp:
    """Ordered branch list; ``created_branches`` is the count at conversion
    time and survives structural drops (pruning compensation derives from it)."""

    branches: list[Branch]
    activation: str = "silu"
    created_branches: int = field(default=0)

    def __post_init__(self):
        if not self.branches:
            raise ShapeError("MoeMlp needs at least one branch")
        d_model = self.branches[0].d_model
        if any(b.d_model != d_model for b in self.branches):
            raise ShapeError("branches disagree on d_model")
        if self.created_branches <= 0:
            self.created_branches = len(self.branches)

    @property
    def d_model(self) -> int:
        return self.branches[0].d_model

    @property
    def d_inter_total(self) -> int:
        return sum(b.width for b in self.branches)

    @property
    def alphas(self) -> list[float]:
        return [b.alpha for b in self.branches]


def split_sizes(d_inter: int, num_branches: int) -> list[int]:
    """Partition d_inter into num_branches positive sizes, remainder first."""
    if num_branches < 1 or num_branches > d_inter:
        raise ArgumentError(f"cannot split width {d_inter} into {num_branches} branches")
    base, rem = divmod(d_inter, num_branches)
    return [base + 1 if b < rem else base for b in range(num_branches)]


def convert(mlp: DenseMlp, num_branches: int) -> MoeMlp:
    """Slice a dense MLP into contiguous branches; weight values unchanged."""
    sizes = split_sizes(mlp.d_inter, num_branches)
    branches = []
    offset = 0
    for size in sizes:
        rows = slice(offset, offset + size)
        branches.append(
            Branch(
                w_gate=mlp.w_gate[rows, :].copy(),
                w_up=mlp.w_up[rows, :].copy(),
                w_down=mlp.w_down[:, rows].copy(),
                alpha=1.0,
            )
        )
        offset += size
    return MoeMlp(branches=branches, activation=mlp.activation, created_branches=num_branches)


def _as_rows(x: np.ndarray, d_model: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float32)
    if x.ndim == 1:
        x = x[None, :]
        single = True
    elif x.ndim == 2:
        single = False
    else:
        raise ShapeError(f"expected a vector or a batch of rows, got {x.ndim}-d input")
    if x.shape[1] != d_model:
        raise ShapeError(f"input width {x.shape[1]} does not match d_model {d_model}")
    return x, single


def dense_forward(mlp: DenseMlp, x: np.ndarray) -> np.ndarray:
    """W_down (phi(W_gate x) * W_up x); accepts [d_model] or [n x d_model]."""
    rows, single = _as_rows(x, mlp.d_model)
    act = get_activation(mlp.activation)
    hidden = act(matmul(rows, mlp.w_gate.T)) * matmul(rows, mlp.w_up.T)
    out = matmul(hidden, mlp.w_down.T)
    return out[0] if single else out


def moe_forward(m: MoeMlp, x: np.ndarray) -> np.ndarray:
    """Sum of gated branch outputs, accumulated in ascending branch order."""
    rows, single = _as_rows(x, m.d_model)
    act = get_activation(m.activation)
    acc: np.ndarray | None = None
    for branch in m.branches:
        hidden = act(matmul(rows, branch.w_gate.T)) * matmul(rows, branch.w_up.T)
        term = np.float32(branch.alpha) * matmul(hidden, branch.w_down.T)
        acc = term if acc is None else acc + term
    assert acc is not None
    return acc[0] if single else acc


def ungated_forward(w_up: np.ndarray, w_down: np.ndarray, x: np.ndarray, activation: str = "silu") -> np.ndarray:
    """Two-matrix FFN, W_down phi(W_up x), evaluated directly."""
    rows, single = _as_rows(x, w_up.shape[1])
    act = get_activation(activation)
    out = matmul(act(matmul(rows, w_up.T)), w_down.T)
    return out[0] if single else out


def ungated_partial_sum(
    w_up: np.ndarray,
    w_down: np.ndarray,
    x: np.ndarray,
    num_branches: int,
    activation: str = "silu",
) -> np.ndarray:
    """Same FFN as a sum over contiguous row/column slices."""
    rows, single = _as_rows(x, w_up.shape[1])
    act = get_activation(activation)
    acc: np.ndarray | None = None
    offset = 0
    for size in split_sizes(w_up.shape[0], num_branches):
        sl = slice(offset, offset + size)
        term = matmul(act(matmul(rows, w_up[sl, :].T)), w_down[:, sl].T)
        acc = term if acc is None else acc + term
        offset += size
    assert acc is not None
    return acc[0] if single else acc
