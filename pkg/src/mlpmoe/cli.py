"""Command-line front end for checkpoint surgery pipelines.

Subcommands cover the full load -> transform -> sparsify -> prune ->
evaluate -> report flow. Every command is deterministic given its input
bytes, flags, and seed; transform commands write a JSON sidecar of
settings next to the output checkpoint for provenance.

Exit codes: 0 success, 1 validation or tolerance failure, 2 I/O or
format error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .checkpoint import Checkpoint, load_checkpoint, resolve_mlp, save_checkpoint
from .engine import (
    EvalResult,
    ToyModelConfig,
    build_toy_model,
    forward_logits,
    generate,
    load_corpus,
    proxy_perplexity,
)
from .errors import ArgumentError, FormatError, MlpMoeError, SchemaError
from .mlp import DenseMlp, dense_forward, moe_forward
from .report import ParamCount, count_params, emit_report, render_table
from .surgery import convert_checkpoint, fade_checkpoint, prune_checkpoint

DEFAULT_SEED = 42
DEFAULT_GEN_TOKENS = 64
DEFAULT_PPL_WINDOW = 512
MLP_TOLERANCE = 1e-5
LOGIT_TOLERANCE = 1e-4


def _write_json(path: str, payload: dict) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def _write_sidecar(output: str, settings: dict) -> None:
    _write_json(output + ".json", settings)


def cmd_make_toy(args) -> int:
    cfg = ToyModelConfig(
        num_layers=args.layers,
        d_model=args.d_model,
        d_inter=args.d_inter,
        num_heads=args.heads,
        vocab_size=args.vocab,
        seed=args.seed,
    )
    ckpt = build_toy_model(cfg)
    save_checkpoint(ckpt, args.output)
    settings = {
        "command": "make-toy",
        "layers": cfg.num_layers,
        "d_model": cfg.d_model,
        "d_inter": cfg.d_inter,
        "heads": cfg.num_heads,
        "vocab": cfg.vocab_size,
        "seed": cfg.seed,
        "output": args.output,
    }
    _write_sidecar(args.output, settings)
    counts = count_params(ckpt)
    print(f"wrote toy model: {cfg.num_layers} layers, d_model {cfg.d_model}, {counts.total} params")
    return 0


def cmd_convert(args) -> int:
    ckpt = load_checkpoint(args.input)
    before = count_params(ckpt)
    out = convert_checkpoint(ckpt, args.branches)
    after = count_params(out)
    save_checkpoint(out, args.output)
    _write_sidecar(
        args.output,
        {
            "command": "convert",
            "input": args.input,
            "output": args.output,
            "branches": args.branches,
            "seed": args.seed,
            "layers": out.meta.num_layers,
            "param_delta": after.total - before.total,
        },
    )
    print(f"converted {out.meta.num_layers} layers into {args.branches} branches each")
    print(f"total params {before.total} -> {after.total} (+{after.total - before.total})")
    return 0


def cmd_sparsify(args) -> int:
    ckpt = load_checkpoint(args.input)
    out, kept = fade_checkpoint(ckpt, max_ratio=args.fade_max_ratio)
    save_checkpoint(out, args.output)

    stored = 0
    remaining = 0
    for layer, counts in kept.items():
        mlp = resolve_mlp(out, layer)
        stored += sum(b.w_gate.size + b.w_up.size for b in mlp.branches)
        remaining += sum(counts)
    fraction = remaining / stored if stored else 1.0
    _write_sidecar(
        args.output,
        {
            "command": "sparsify",
            "input": args.input,
            "output": args.output,
            "fade_max_ratio": args.fade_max_ratio,
            "seed": args.seed,
            "kept_per_layer": {str(k): v for k, v in kept.items()},
            "gate_up_nonzero_fraction": fraction,
        },
    )
    print(f"faded {len(kept)} layers, gate+up nonzero fraction {fraction:.6f}")
    return 0


def cmd_prune(args) -> int:
    ckpt = load_checkpoint(args.input)
    out = prune_checkpoint(ckpt, keep=args.prune_k, drop_dead=args.drop_dead)
    save_checkpoint(out, args.output)
    alphas = {
        str(layer): [round(a, 6) for a in resolve_mlp(out, layer).alphas]
        for layer in range(out.meta.num_layers)
    }
    _write_sidecar(
        args.output,
        {
            "command": "prune",
            "input": args.input,
            "output": args.output,
            "prune_k": args.prune_k,
            "drop_dead": args.drop_dead,
            "seed": args.seed,
            "alphas_per_layer": alphas,
        },
    )
    kept = args.prune_k
    verb = "dropped" if args.drop_dead else "silenced"
    first = next(iter(alphas.values()))
    print(f"kept {kept} branches per layer at gain {first[0]}, {verb} the rest")
    return 0


def cmd_verify(args) -> int:
    dense = load_checkpoint(args.input)
    converted = load_checkpoint(args.converted)
    if (dense.meta.num_layers, dense.meta.d_model) != (converted.meta.num_layers, converted.meta.d_model):
        raise SchemaError(
            f"architecture mismatch: {dense.meta.num_layers} layers x d_model {dense.meta.d_model} vs "
            f"{converted.meta.num_layers} x {converted.meta.d_model}"
        )

    rng = np.random.default_rng(args.seed)
    deviations = {}
    worst_mlp = 0.0
    for layer in range(dense.meta.num_layers):
        ref = resolve_mlp(dense, layer)
        cand = resolve_mlp(converted, layer)
        x = rng.normal(0.0, 1.0, size=(32, dense.meta.d_model)).astype(np.float32)
        ref_out = dense_forward(ref, x) if isinstance(ref, DenseMlp) else moe_forward(ref, x)
        cand_out = dense_forward(cand, x) if isinstance(cand, DenseMlp) else moe_forward(cand, x)
        dev = float(np.max(np.abs(ref_out - cand_out)))
        deviations[f"layer_{layer}_mlp"] = dev
        worst_mlp = max(worst_mlp, dev)
        print(f"layer {layer} mlp max deviation {dev:.3e}")

    vocab = dense.tensors[dense.naming.embed].shape[0]
    tokens = rng.integers(0, vocab, size=128)
    logit_dev = float(np.max(np.abs(forward_logits(dense, tokens) - forward_logits(converted, tokens))))
    deviations["logits"] = logit_dev
    print(f"logits max deviation {logit_dev:.3e}")

    passed = worst_mlp <= args.mlp_tol and logit_dev <= args.logit_tol
    if args.json_out:
        _write_json(
            args.json_out,
            {
                "command": "verify",
                "input": args.input,
                "converted": args.converted,
                "seed": args.seed,
                "mlp_tol": args.mlp_tol,
                "logit_tol": args.logit_tol,
                "deviations": deviations,
                "passed": passed,
            },
        )
    if not passed:
        print(f"FAIL: tolerance exceeded (mlp {worst_mlp:.3e} vs {args.mlp_tol}, logits {logit_dev:.3e} vs {args.logit_tol})")
        return 1
    print("PASS: outputs equivalent within tolerance")
    return 0


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.input)
    tokens = load_corpus(args.corpus)
    counts = count_params(ckpt)
    ppl = proxy_perplexity(ckpt, tokens, window=args.window)
    _, gen_seconds = generate(ckpt, tokens[:16], args.gen_tokens)
    variant = args.variant or Path(args.input).stem
    payload = {
        "command": "eval",
        "variant": variant,
        "input": args.input,
        "corpus": args.corpus or "bundled",
        "seed": args.seed,
        "window": args.window,
        "total_params": counts.total,
        "nonzero_params": counts.nonzero,
        "added_gates": counts.added_gates,
        "proxy_ppl": ppl.proxy_ppl,
        "token_count": ppl.token_count,
        "ppl_seconds": ppl.wall_clock_seconds,
        "tokens_generated": args.gen_tokens,
        "gen_seconds": gen_seconds,
    }
    if args.json_out:
        _write_json(args.json_out, payload)
    print(f"{variant}: ppl {ppl.proxy_ppl:.4f} over {ppl.token_count} tokens, "
          f"{args.gen_tokens} greedy tokens in {gen_seconds:.3f}s")
    return 0


def cmd_report(args) -> int:
    results = []
    for path in args.input:
        with open(path, encoding="utf-8") as fh:
            entry = json.load(fh)
        try:
            counts = ParamCount(
                total=int(entry["total_params"]),
                nonzero=int(entry["nonzero_params"]),
                added_gates=int(entry.get("added_gates", 0)),
            )
            evaluation = EvalResult(
                proxy_ppl=float(entry["proxy_ppl"]),
                token_count=int(entry["token_count"]),
                wall_clock_seconds=float(entry["gen_seconds"]),
                tokens_generated=int(entry.get("tokens_generated", 0)),
            )
            variant = str(entry["variant"])
        except KeyError as exc:
            raise SchemaError(f"{path}: missing field {exc}") from exc
        results.append((variant, counts, evaluation))

    report = emit_report(results)
    table = render_table(report)
    if args.json_out:
        _write_json(args.json_out, report)
    if args.output:
        Path(args.output).write_text(table, encoding="utf-8")
    print(table, end="")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mlpmoe",
        description="Split dense gated MLPs into summed branch experts, sparsify, prune, and evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_seed(p):
        p.add_argument("--seed", type=int, default=DEFAULT_SEED, help="RNG seed (default 42)")

    p = sub.add_parser("make-toy", help="write a seeded random toy model checkpoint")
    p.add_argument("--output", required=True)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--d-model", type=int, default=64)
    p.add_argument("--d-inter", type=int, default=256)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--vocab", type=int, default=256)
    add_seed(p)
    p.set_defaults(func=cmd_make_toy)

    p = sub.add_parser("convert", help="split every dense MLP into summing branches")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--branches", type=int, required=True)
    add_seed(p)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("sparsify", help="magnitude-fade later branches in place")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--fade-max-ratio", type=float, default=0.9)
    add_seed(p)
    p.set_defaults(func=cmd_sparsify)

    p = sub.add_parser("prune", help="keep the first K branches with variance compensation")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--prune-k", type=int, required=True)
    p.add_argument("--drop-dead", action="store_true", help="physically remove silenced branches")
    add_seed(p)
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("verify", help="check a transformed checkpoint against its dense source")
    p.add_argument("--input", required=True, help="dense reference checkpoint")
    p.add_argument("--converted", required=True, help="transformed checkpoint to check")
    p.add_argument("--mlp-tol", type=float, default=MLP_TOLERANCE)
    p.add_argument("--logit-tol", type=float, default=LOGIT_TOLERANCE)
    p.add_argument("--json-out")
    add_seed(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("eval", help="proxy perplexity and greedy generation timing")
    p.add_argument("--input", required=True)
    p.add_argument("--corpus", help="token byte file (default: bundled 4 KiB corpus)")
    p.add_argument("--window", type=int, default=DEFAULT_PPL_WINDOW)
    p.add_argument("--gen-tokens", type=int, default=DEFAULT_GEN_TOKENS)
    p.add_argument("--variant", help="row label for reports (default: input stem)")
    p.add_argument("--json-out")
    add_seed(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="combine eval JSON files into the comparison table")
    p.add_argument("--input", action="append", required=True, help="eval JSON file (repeatable)")
    p.add_argument("--output", help="write the text table here as well as stdout")
    p.add_argument("--json-out")
    add_seed(p)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FormatError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MlpMoeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
