"""Turn dense gated MLPs into summed branch experts, then thin them out.

Checkpoints are plain tensor containers; every transform here maps one
checkpoint to another. Conversion is exact (branch outputs sum to the
dense output), fading and pruning are deliberately lossy, and a small
built-in decoder stack measures what the surgery cost.
"""

import os as _os

# BLAS thread pools are sized at library load, so this must run before
# numpy is first imported anywhere in the process. Default is one
# thread for reproducible timings; MLPMOE_THREADS overrides.
_threads = _os.environ.get("MLPMOE_THREADS")
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
    if _threads is not None:
        _os.environ[_var] = _threads
    else:
        _os.environ.setdefault(_var, "1")

from .checkpoint import (
    Checkpoint,
    ModelMeta,
    load_checkpoint,
    resolve_mlp,
    save_checkpoint,
    validate_checkpoint,
    with_mlp,
)
from .engine import (
    EvalResult,
    ToyModelConfig,
    build_toy_model,
    forward_logits,
    generate,
    load_corpus,
    proxy_perplexity,
)
from .errors import (
    ArgumentError,
    FormatError,
    MlpMoeError,
    NumericError,
    SchemaError,
    ShapeError,
)
from .estimators import CompensatedPrune, DenseToMoe, FractalFade
from .mlp import (
    Branch,
    DenseMlp,
    MoeMlp,
    convert,
    dense_forward,
    moe_forward,
    split_sizes,
    ungated_forward,
    ungated_partial_sum,
)
from .report import ParamCount, count_params, emit_report, render_table
from .sparsity import (
    FadePlan,
    PrunePlan,
    compensated_prune,
    drop_dead_branches,
    fade_ratios,
    fractal_fade,
)
from .surgery import convert_checkpoint, fade_checkpoint, prune_checkpoint

__version__ = "0.1.0"

__all__ = [
    "ArgumentError",
    "Branch",
    "Checkpoint",
    "CompensatedPrune",
    "DenseMlp",
    "DenseToMoe",
    "EvalResult",
    "FadePlan",
    "FormatError",
    "FractalFade",
    "MlpMoeError",
    "ModelMeta",
    "MoeMlp",
    "NumericError",
    "ParamCount",
    "PrunePlan",
    "SchemaError",
    "ShapeError",
    "ToyModelConfig",
    "build_toy_model",
    "compensated_prune",
    "convert",
    "convert_checkpoint",
    "count_params",
    "dense_forward",
    "drop_dead_branches",
    "emit_report",
    "fade_checkpoint",
    "fade_ratios",
    "forward_logits",
    "fractal_fade",
    "generate",
    "load_checkpoint",
    "load_corpus",
    "moe_forward",
    "proxy_perplexity",
    "prune_checkpoint",
    "render_table",
    "resolve_mlp",
    "save_checkpoint",
    "split_sizes",
    "ungated_forward",
    "ungated_partial_sum",
    "validate_checkpoint",
    "with_mlp",
    "__version__",
]
