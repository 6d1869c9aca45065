"""Whole-checkpoint application of the per-layer transforms.

Every function returns a new Checkpoint; attention, norm, embedding and
head tensors pass through untouched.
"""

from __future__ import annotations

from dataclasses import replace

from .checkpoint import Checkpoint, resolve_mlp, with_mlp
from .errors import ArgumentError, SchemaError
from .mlp import DenseMlp, MoeMlp, convert
from .sparsity import compensated_prune, drop_dead_branches, fractal_fade


def _require_moe(ckpt: Checkpoint, layer: int) -> MoeMlp:
    mlp = resolve_mlp(ckpt, layer)
    if isinstance(mlp, DenseMlp):
        raise SchemaError(f"layer {layer} is still dense; run convert first")
    return mlp


def convert_checkpoint(ckpt: Checkpoint, num_branches: int) -> Checkpoint:
    """Slice every dense MLP into ``num_branches`` branches."""
    out = ckpt
    for layer in range(ckpt.meta.num_layers):
        mlp = resolve_mlp(ckpt, layer)
        if isinstance(mlp, MoeMlp):
            raise SchemaError(f"layer {layer} is already in branch form")
        try:
            out = with_mlp(out, layer, convert(mlp, num_branches))
        except ArgumentError as exc:
            raise ArgumentError(f"layer {layer}: {exc}") from None
    return replace(out, meta=replace(ckpt.meta, branches_created=num_branches))


def fade_checkpoint(ckpt: Checkpoint, max_ratio: float = 0.9) -> tuple[Checkpoint, dict[int, list[int]]]:
    """Apply differential sparsity to every layer; returns per-layer kept counts."""
    out = ckpt
    kept: dict[int, list[int]] = {}
    for layer in range(ckpt.meta.num_layers):
        faded, counts = fractal_fade(_require_moe(ckpt, layer), max_ratio)
        out = with_mlp(out, layer, faded)
        kept[layer] = counts
    return out, kept


def prune_checkpoint(ckpt: Checkpoint, keep: int, drop_dead: bool = False) -> Checkpoint:
    """Compensated-prune every layer, optionally removing dead branches."""
    out = ckpt
    new_d_inter = ckpt.meta.d_inter
    for layer in range(ckpt.meta.num_layers):
        pruned = compensated_prune(_require_moe(ckpt, layer), keep)
        if drop_dead:
            pruned = drop_dead_branches(pruned)
            new_d_inter = pruned.d_inter_total
        out = with_mlp(out, layer, pruned)
    return replace(out, meta=replace(ckpt.meta, d_inter=new_d_inter))
