"""Desk-scale decoder forward pass and evaluation harness.

The toy model is a Llama-style stack (RMSNorm, causal multi-head
attention without rotary embeddings, gated MLP) just deep enough to
exercise the MLP transforms in situ. Each layer's MLP dispatches on the
form the checkpoint holds, dense or branch.
"""

from __future__ import annotations

import importlib.resources
import time
from dataclasses import dataclass

import numpy as np

from .checkpoint import Checkpoint, ModelMeta, resolve_mlp
from .errors import ArgumentError, NumericError, SchemaError
from .mlp import DenseMlp, dense_forward, moe_forward
from .naming import LLAMA_NAMING
from .tensor_ops import log_softmax, matmul

RMS_EPS = 1e-6
WEIGHT_STD = 0.02


@dataclass(frozen=True)
class ToyModelConfig:
    num_layers: int = 2
    d_model: int = 64
    d_inter: int = 256
    num_heads: int = 4
    vocab_size: int = 256
    seed: int = 42
    activation: str = "silu"

    def __post_init__(self):
        for name in ("num_layers", "d_model", "d_inter", "num_heads", "vocab_size"):
            if getattr(self, name) < 1:
                raise ArgumentError(f"{name} must be positive")
        if self.d_model % self.num_heads != 0:
            raise ArgumentError(f"d_model {self.d_model} not divisible by num_heads {self.num_heads}")
        if self.d_inter < self.d_model:
            raise ArgumentError(f"d_inter {self.d_inter} must be >= d_model {self.d_model}")


@dataclass(frozen=True)
class EvalResult:
    proxy_ppl: float
    token_count: int
    wall_clock_seconds: float
    tokens_generated: int = 0

    def __post_init__(self):
        if self.proxy_ppl < 1.0:
            raise ArgumentError(f"perplexity below 1 is impossible: {self.proxy_ppl}")


def build_toy_model(cfg: ToyModelConfig) -> Checkpoint:
    """Seeded random checkpoint; identical configs give identical bytes.

    Projection and embedding weights are N(0, 0.02^2); norm gains start
    at one. Draw order is fixed: embeddings, then per-layer attention
    and MLP weights, then the LM head.
    """
    rng = np.random.default_rng(cfg.seed)
    naming = LLAMA_NAMING

    def draw(*shape: int) -> np.ndarray:
        return rng.normal(0.0, WEIGHT_STD, size=shape).astype(np.float32)

    tensors: dict[str, np.ndarray] = {}
    tensors[naming.embed] = draw(cfg.vocab_size, cfg.d_model)
    for layer in range(cfg.num_layers):
        tensors[naming.input_norm.format(layer=layer)] = np.ones(cfg.d_model, dtype=np.float32)
        for role in ("q", "k", "v", "o"):
            tensors[naming.attn_proj.format(layer=layer, role=role)] = draw(cfg.d_model, cfg.d_model)
        tensors[naming.post_attn_norm.format(layer=layer)] = np.ones(cfg.d_model, dtype=np.float32)
        tensors[naming.dense_name(layer, "gate")] = draw(cfg.d_inter, cfg.d_model)
        tensors[naming.dense_name(layer, "up")] = draw(cfg.d_inter, cfg.d_model)
        tensors[naming.dense_name(layer, "down")] = draw(cfg.d_model, cfg.d_inter)
    tensors[naming.final_norm] = np.ones(cfg.d_model, dtype=np.float32)
    tensors[naming.lm_head] = draw(cfg.vocab_size, cfg.d_model)

    meta = ModelMeta(
        num_layers=cfg.num_layers,
        d_model=cfg.d_model,
        d_inter=cfg.d_inter,
        vocab_size=cfg.vocab_size,
        num_heads=cfg.num_heads,
        family="toy",
        activation=cfg.activation,
    )
    return Checkpoint(tensors=tensors, meta=meta)


def rms_norm(x: np.ndarray, weight: np.ndarray, eps: float = RMS_EPS) -> np.ndarray:
    ms = np.mean(np.square(x, dtype=np.float32), axis=-1, keepdims=True)
    return (x / np.sqrt(ms + eps)) * weight


def _causal_attention(h: np.ndarray, wq, wk, wv, wo, num_heads: int) -> np.ndarray:
    seq, d_model = h.shape
    d_head = d_model // num_heads

    def heads(w) -> np.ndarray:
        # [seq, d_model] -> [heads, seq, d_head]
        return matmul(h, w.T).reshape(seq, num_heads, d_head).transpose(1, 0, 2)

    q, k, v = heads(wq), heads(wk), heads(wv)
    scores = (q @ k.transpose(0, 2, 1)) / np.float32(np.sqrt(d_head))
    mask = np.triu(np.ones((seq, seq), dtype=bool), k=1)
    scores = np.where(mask, -np.inf, scores)
    scores = scores - scores.max(axis=-1, keepdims=True)
    weights = np.exp(scores)
    weights = weights / weights.sum(axis=-1, keepdims=True)
    ctx = (weights @ v).transpose(1, 0, 2).reshape(seq, d_model)
    return matmul(ctx, wo.T)


def _tensor(ckpt: Checkpoint, name: str) -> np.ndarray:
    try:
        return ckpt.tensors[name]
    except KeyError:
        raise SchemaError(f"checkpoint lacks tensor {name!r}; only complete models can run") from None


def forward_logits(ckpt: Checkpoint, token_ids) -> np.ndarray:
    """Causal decoder pass over a token sequence -> [seq x vocab] logits."""
    meta = ckpt.meta
    naming = ckpt.naming
    if meta.num_heads is None:
        raise ArgumentError("checkpoint metadata lacks num_heads; engine needs it for attention")
    ids = np.asarray(token_ids, dtype=np.int64)
    if ids.ndim != 1 or ids.size == 0:
        raise ArgumentError("token_ids must be a non-empty 1-d sequence")
    embed = _tensor(ckpt, naming.embed)
    vocab = embed.shape[0]
    if (ids < 0).any() or (ids >= vocab).any():
        raise ArgumentError(f"token id out of range for vocab size {vocab}")

    mlps = [resolve_mlp(ckpt, layer) for layer in range(meta.num_layers)]
    x = embed[ids].astype(np.float32)
    for layer in range(meta.num_layers):
        h = rms_norm(x, _tensor(ckpt, naming.input_norm.format(layer=layer)))
        x = x + _causal_attention(
            h,
            _tensor(ckpt, naming.attn_proj.format(layer=layer, role="q")),
            _tensor(ckpt, naming.attn_proj.format(layer=layer, role="k")),
            _tensor(ckpt, naming.attn_proj.format(layer=layer, role="v")),
            _tensor(ckpt, naming.attn_proj.format(layer=layer, role="o")),
            meta.num_heads,
        )
        h = rms_norm(x, _tensor(ckpt, naming.post_attn_norm.format(layer=layer)))
        mlp = mlps[layer]
        x = x + (dense_forward(mlp, h) if isinstance(mlp, DenseMlp) else moe_forward(mlp, h))

    logits = matmul(rms_norm(x, _tensor(ckpt, naming.final_norm)), _tensor(ckpt, naming.lm_head).T)
    if not np.isfinite(logits).all():
        raise NumericError("forward pass produced non-finite logits")
    return logits


def proxy_perplexity(ckpt: Checkpoint, text_tokens, window: int | None = None) -> EvalResult:
    """exp(mean next-token NLL) over the sequence.

    ``window`` splits the sequence into independent chunks so long
    corpora stay cheap; None attends over the whole thing at once.
    """
    tokens = list(text_tokens)
    if len(tokens) < 2:
        raise ArgumentError("perplexity needs at least 2 tokens")
    if window is not None and window < 2:
        raise ArgumentError("window must be >= 2")

    step = window or len(tokens)
    nll_sum = 0.0
    positions = 0
    start = time.perf_counter()
    for lo in range(0, len(tokens), step):
        chunk = tokens[lo : lo + step]
        if len(chunk) < 2:
            break
        logits = forward_logits(ckpt, chunk)
        logprobs = log_softmax(logits[:-1])
        targets = np.asarray(chunk[1:])
        nll_sum += float(-logprobs[np.arange(len(targets)), targets].sum())
        positions += len(targets)
    elapsed = time.perf_counter() - start

    return EvalResult(
        proxy_ppl=float(np.exp(nll_sum / positions)),
        token_count=len(tokens),
        wall_clock_seconds=elapsed,
    )


def generate(ckpt: Checkpoint, prompt, n_tokens: int) -> tuple[list[int], float]:
    """Greedy decoding; returns (full sequence, wall-clock seconds).

    Recomputes the whole prefix each step: no KV cache at desk scale.
    """
    if n_tokens < 1:
        raise ArgumentError("n_tokens must be >= 1")
    seq = [int(t) for t in prompt]
    if not seq:
        raise ArgumentError("prompt must be non-empty")
    start = time.perf_counter()
    for _ in range(n_tokens):
        logits = forward_logits(ckpt, seq)
        seq.append(int(np.argmax(logits[-1])))
    return seq, time.perf_counter() - start


def load_corpus(path=None) -> list[int]:
    """Byte-level token ids from a corpus file (bundled 4 KiB default)."""
    if path is None:
        data = importlib.resources.files("mlpmoe").joinpath("data/eval_corpus.txt").read_bytes()
    else:
        with open(str(path), "rb") as fh:
            data = fh.read()
    if len(data) < 2:
        raise ArgumentError("corpus must contain at least 2 bytes")
    return list(data)
