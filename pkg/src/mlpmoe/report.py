"""Parameter accounting and the comparison table.

Counts distinguish stored parameters from non-zero parameters so the
effect of sparsification shows up in the table. Metric values are
rounded once, here, so the JSON and text renderings of a report can
never disagree.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .checkpoint import Checkpoint, resolve_mlp
from .engine import EvalResult
from .errors import ArgumentError
from .mlp import MoeMlp

PPL_DECIMALS = 4
TIME_DECIMALS = 3

COLUMNS = ("Variant", "Total Params", "Non-zero Params", "Proxy PPL ↓", "Gen Time (s) ↓")


@dataclass(frozen=True)
class ParamCount:
    total: int
    nonzero: int
    added_gates: int = 0
    per_layer: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.nonzero > self.total:
            raise ArgumentError(f"nonzero {self.nonzero} exceeds total {self.total}")


def count_params(ckpt: Checkpoint) -> ParamCount:
    """Stored and exactly-non-zero scalar counts, including branch gains.

    Every stored element counts toward ``total``, gain scalars included,
    so converting a layer into B branches grows the model by exactly B.
    Zero means bitwise 0.0, not small magnitude.
    """
    total = 0
    nonzero = 0
    per_layer: dict[int, int] = {}
    added_gates = 0
    for name, tensor in ckpt.tensors.items():
        total += tensor.size
        nonzero += int(np.count_nonzero(tensor))
        layer = ckpt.naming.layer_of(name)
        if layer is not None:
            per_layer[layer] = per_layer.get(layer, 0) + tensor.size
    for layer in range(ckpt.meta.num_layers):
        mlp = resolve_mlp(ckpt, layer)
        if isinstance(mlp, MoeMlp):
            added_gates += len(mlp.branches)
    return ParamCount(total=total, nonzero=nonzero, added_gates=added_gates, per_layer=dict(sorted(per_layer.items())))


def emit_report(results: list[tuple[str, ParamCount, EvalResult]]) -> dict:
    """Named results -> JSON-ready dict with rounded metrics and fixed columns."""
    if not results:
        raise ArgumentError("report needs at least one result")
    rows = []
    for variant, counts, evaluation in results:
        rows.append(
            {
                COLUMNS[0]: str(variant),
                COLUMNS[1]: counts.total,
                COLUMNS[2]: counts.nonzero,
                COLUMNS[3]: round(float(evaluation.proxy_ppl), PPL_DECIMALS),
                COLUMNS[4]: round(float(evaluation.wall_clock_seconds), TIME_DECIMALS),
            }
        )
    return {"columns": list(COLUMNS), "rows": rows}


def render_table(report: dict) -> str:
    """Monospace table from an emit_report dict; numbers match the JSON."""
    columns = report["columns"]
    cells = [[str(col) for col in columns]]
    for row in report["rows"]:
        rendered = []
        for col in columns:
            value = row[col]
            if isinstance(value, float):
                decimals = PPL_DECIMALS if col == COLUMNS[3] else TIME_DECIMALS
                rendered.append(f"{value:.{decimals}f}")
            else:
                rendered.append(str(value))
        cells.append(rendered)
    widths = [max(len(r[i]) for r in cells) for i in range(len(columns))]
    lines = []
    for idx, rendered in enumerate(cells):
        parts = []
        for i, cell in enumerate(rendered):
            parts.append(cell.ljust(widths[i]) if i == 0 else cell.rjust(widths[i]))
        lines.append("  ".join(parts).rstrip())
        if idx == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"
