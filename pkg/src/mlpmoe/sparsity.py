"""Post-conversion weight reduction: differential branch sparsity and
compensated whole-branch pruning.

Branch 0 stays dense; branch i of B gets its gate and up projections
magnitude-pruned at ratio ``max_ratio * i / B`` (quantile threshold per
branch, per matrix; strictly-greater entries survive). Whole-branch
pruning keeps the first K branches and scales their gates by sqrt(B/K),
which roughly preserves the output variance of the unpruned layer.
Zeroed weights stay stored as explicit zeros; only the non-zero count
shrinks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ArgumentError
from .mlp import Branch, MoeMlp
from .tensor_ops import mask_below, quantile_abs


def fade_ratios(num_branches: int, max_ratio: float = 0.9) -> list[float]:
    """Per-branch sparsity ratios: 0 for branch 0, max_ratio*i/B above."""
    if num_branches < 1:
        raise ArgumentError(f"branch count must be >= 1, got {num_branches}")
    if not 0.0 <= max_ratio < 1.0:
        raise ArgumentError(f"max_ratio must be in [0, 1), got {max_ratio}")
    return [max_ratio * i / num_branches for i in range(num_branches)]


@dataclass(frozen=True)
class FadePlan:
    max_ratio: float
    per_branch_ratios: list[float]

    @classmethod
    def for_branches(cls, num_branches: int, max_ratio: float = 0.9) -> "FadePlan":
        return cls(max_ratio=max_ratio, per_branch_ratios=fade_ratios(num_branches, max_ratio))


@dataclass(frozen=True)
class PrunePlan:
    keep: int
    compensation: float

    @classmethod
    def from_counts(cls, created_branches: int, keep: int) -> "PrunePlan":
        if not 1 <= keep <= created_branches:
            raise ArgumentError(f"keep={keep} out of range for {created_branches} branches")
        return cls(keep=keep, compensation=math.sqrt(created_branches / keep))


def fractal_fade(m: MoeMlp, max_ratio: float = 0.9) -> tuple[MoeMlp, list[int]]:
    """Sparsify gate/up weights branch by branch; down projections and
    branch 0 are untouched. Returns the new MLP and per-branch non-zero
    counts over gate+up."""
    plan = FadePlan.for_branches(len(m.branches), max_ratio)
    branches: list[Branch] = []
    kept_counts: list[int] = []
    for ratio, branch in zip(plan.per_branch_ratios, m.branches):
        if ratio == 0.0:
            branches.append(branch)
            kept = int(np.count_nonzero(branch.w_gate)) + int(np.count_nonzero(branch.w_up))
        else:
            gate, kept_gate = mask_below(branch.w_gate, quantile_abs(branch.w_gate, ratio))
            up, kept_up = mask_below(branch.w_up, quantile_abs(branch.w_up, ratio))
            branches.append(replace(branch, w_gate=gate, w_up=up))
            kept = kept_gate + kept_up
        kept_counts.append(kept)
    return MoeMlp(branches=branches, activation=m.activation, created_branches=m.created_branches), kept_counts


def compensated_prune(m: MoeMlp, keep: int) -> MoeMlp:
    """Gate the first ``keep`` branches at sqrt(B/keep), zero the rest.

    B is the creation-time branch count, so re-pruning after a
    structural drop still compensates against the original width.
    """
    plan = PrunePlan.from_counts(m.created_branches, keep)
    branches = [
        replace(b, alpha=plan.compensation if i < keep else 0.0)
        for i, b in enumerate(m.branches)
    ]
    return MoeMlp(branches=branches, activation=m.activation, created_branches=m.created_branches)


def drop_dead_branches(m: MoeMlp) -> MoeMlp:
    """Physically remove branches whose gate is exactly zero."""
    alive = [b for b in m.branches if b.alpha != 0.0]
    if not alive:
        raise ArgumentError("every branch has alpha == 0; refusing to produce an empty MLP")
    if len(alive) == len(m.branches):
        return m
    return MoeMlp(branches=alive, activation=m.activation, created_branches=m.created_branches)
