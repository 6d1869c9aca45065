"""Tensor name templates mapping checkpoint keys to the model graph.

The default scheme follows the Llama/Qwen convention
(``model.layers.{i}.mlp.gate_proj.weight`` and friends); converted
checkpoints use branch-suffixed names under the same layer prefix.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

MLP_ROLES = ("gate", "up", "down")


@dataclass(frozen=True)
class NamingScheme:
    """Name templates, injective over (layer, role, branch)."""

    dense_mlp: str = "model.layers.{layer}.mlp.{role}_proj.weight"
    branch_mlp: str = "model.layers.{layer}.mlp.branches.{branch}.{role}.weight"
    branch_alpha: str = "model.layers.{layer}.mlp.branches.{branch}.alpha"
    embed: str = "model.embed_tokens.weight"
    attn_proj: str = "model.layers.{layer}.self_attn.{role}_proj.weight"
    input_norm: str = "model.layers.{layer}.input_layernorm.weight"
    post_attn_norm: str = "model.layers.{layer}.post_attention_layernorm.weight"
    final_norm: str = "model.norm.weight"
    lm_head: str = "lm_head.weight"

    _dense_re: re.Pattern = field(init=False, repr=False)
    _branch_re: re.Pattern = field(init=False, repr=False)
    _alpha_re: re.Pattern = field(init=False, repr=False)
    _layer_re: re.Pattern = field(init=False, repr=False)

    def __post_init__(self):
        def compile_template(template: str) -> re.Pattern:
            pattern = re.escape(template)
            pattern = pattern.replace(re.escape("{layer}"), r"(?P<layer>\d+)")
            pattern = pattern.replace(re.escape("{branch}"), r"(?P<branch>\d+)")
            pattern = pattern.replace(re.escape("{role}"), r"(?P<role>[a-z]+)")
            return re.compile(f"^{pattern}$")

        object.__setattr__(self, "_dense_re", compile_template(self.dense_mlp))
        object.__setattr__(self, "_branch_re", compile_template(self.branch_mlp))
        object.__setattr__(self, "_alpha_re", compile_template(self.branch_alpha))
        object.__setattr__(self, "_layer_re", re.compile(r"\.layers\.(\d+)\."))

    def dense_name(self, layer: int, role: str) -> str:
        return self.dense_mlp.format(layer=layer, role=role)

    def branch_name(self, layer: int, branch: int, role: str) -> str:
        return self.branch_mlp.format(layer=layer, branch=branch, role=role)

    def alpha_name(self, layer: int, branch: int) -> str:
        return self.branch_alpha.format(layer=layer, branch=branch)

    def parse_dense(self, name: str) -> tuple[int, str] | None:
        m = self._dense_re.match(name)
        if m is None or m.group("role") not in MLP_ROLES:
            return None
        return int(m.group("layer")), m.group("role")

    def parse_branch(self, name: str) -> tuple[int, int, str] | None:
        """Return (layer, branch, role) where role is gate/up/down or 'alpha'."""
        m = self._branch_re.match(name)
        if m is not None and m.group("role") in MLP_ROLES:
            return int(m.group("layer")), int(m.group("branch")), m.group("role")
        m = self._alpha_re.match(name)
        if m is not None:
            return int(m.group("layer")), int(m.group("branch")), "alpha"
        return None

    def layer_of(self, name: str) -> int | None:
        """Layer index embedded in any per-layer tensor name, if present."""
        m = self._layer_re.search(name)
        return int(m.group(1)) if m else None


LLAMA_NAMING = NamingScheme()
