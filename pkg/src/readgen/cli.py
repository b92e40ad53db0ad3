"""Command-line front end: preprocess, train, generate, evaluate.

Option precedence everywhere is built-in defaults, then the --config JSON
file, then explicit command-line flags. The READGEN_OUTPUT_DIR environment
variable supplies the default output directory when --output-dir is not
given. Diagnostics go to stderr; data goes to the named files.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import fields

import numpy as np

from .autodiff import DomainError
from .decoder import GenerationConfig, attention_dump
from .metrics import evaluate_corpus, load_stopwords, paired_bootstrap
from .textdata import (CorpusFormatError, ConversationInstance,
                       _parse_record, load_corpus, tokenize, write_corpus)
from .training import (TrainConfig, load_checkpoint, run_training,
                       write_loss_curve)

OUTPUT_DIR_ENV = "READGEN_OUTPUT_DIR"

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4


def _err(msg):
    print(f"readgen: {msg}", file=sys.stderr)


def _output_dir(args):
    path = args.output_dir or os.environ.get(OUTPUT_DIR_ENV) or "."
    os.makedirs(path, exist_ok=True)
    return path


def _load_config_file(path):
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise DomainError("config file must hold a JSON object")
    known = {f.name for f in fields(TrainConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise DomainError(f"unknown config keys: {', '.join(unknown)}")
    return raw


def build_train_config(args):
    """defaults < config file < command-line flags."""
    values = {}
    if getattr(args, "config", None):
        values.update(_load_config_file(args.config))
    overrides = {
        "seed": args.seed,
        "variant": getattr(args, "variant", None),
        "tau": getattr(args, "tau", None),
        "top_k": getattr(args, "top_k", None),
        "epochs": getattr(args, "epochs", None),
        "batch_size": getattr(args, "batch_size", None),
        "hidden_size": getattr(args, "hidden_size", None),
        "embedding_dim": getattr(args, "embedding_dim", None),
        "learning_rate": getattr(args, "learning_rate", None),
        "dropout_rate": getattr(args, "dropout_rate", None),
    }
    values.update({k: v for k, v in overrides.items() if v is not None})
    return TrainConfig(**values)


def corpus_statistics(instances):
    """Counting summary of a conversation corpus."""
    n = len(instances)
    turns = sum(len(i.history) for i in instances)
    utterances = turns + n  # history turns plus the gold response
    if n == 0:
        return {"dialogues": 0, "utterances": 0,
                "mean_history_turns": 0.0, "mean_turn_tokens": 0.0,
                "mean_response_tokens": 0.0, "mean_document_tokens": 0.0}
    turn_tokens = [len(t) for i in instances for t in i.history]
    return {
        "dialogues": n,
        "utterances": utterances,
        "mean_history_turns": turns / n,
        "mean_turn_tokens": (sum(turn_tokens) / len(turn_tokens)
                             if turn_tokens else 0.0),
        "mean_response_tokens": sum(len(i.response)
                                    for i in instances) / n,
        "mean_document_tokens": sum(len(i.document.flat_tokens())
                                    for i in instances) / n,
    }


def cmd_preprocess(args):
    out_dir = _output_dir(args)
    try:
        instances = list(load_corpus(args.input))
    except (CorpusFormatError, OSError) as exc:
        _err(str(exc))
        return EXIT_DATA
    corpus_path = os.path.join(out_dir, "corpus.jsonl")
    write_corpus(instances, corpus_path)
    stats = corpus_statistics(instances)
    stats_path = os.path.join(out_dir, "stats.json")
    with open(stats_path, "w", encoding="utf-8") as fh:
        json.dump(stats, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _err(f"wrote {len(instances)} instances to {corpus_path}")
    return EXIT_OK


def cmd_train(args):
    out_dir = _output_dir(args)
    try:
        config = build_train_config(args)
        train = list(load_corpus(args.data))
        val = list(load_corpus(args.val)) if args.val else None
    except (CorpusFormatError, DomainError, OSError) as exc:
        _err(str(exc))
        return EXIT_DATA
    if not train:
        _err("training corpus is empty")
        return EXIT_DATA
    ckpt = os.path.join(out_dir, "checkpoint.npz")
    try:
        result = run_training(train, config, val_instances=val,
                              checkpoint_path=ckpt,
                              resume_from=args.resume, log=_err)
    except RuntimeError as exc:
        _err(str(exc))
        return EXIT_RUNTIME
    write_loss_curve(result.curve, os.path.join(out_dir, "loss_curve.csv"))
    _err(f"finished {result.steps} steps; checkpoint at {ckpt}")
    return EXIT_OK


def _svg_heatmap(dump):
    """Attention weights as a standalone SVG grid, darker = more weight."""
    rows = dump["response_tokens"] + ["<eos>"]
    cols = dump["doc_tokens"]
    weights = dump["weights"]
    cell, label = 18, 90
    width = label + cell * max(len(cols), 1)
    height = label + cell * max(len(rows), 1)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" '
             f'width="{width}" height="{height}" '
             f'font-family="monospace" font-size="9">']
    for j, tok in enumerate(cols):
        x = label + j * cell + cell // 2
        parts.append(f'<text x="{x}" y="{label - 4}" text-anchor="end" '
                     f'transform="rotate(-60 {x} {label - 4})">{tok}</text>')
    for i, tok in enumerate(rows):
        y = label + i * cell
        parts.append(f'<text x="{label - 4}" y="{y + 13}" '
                     f'text-anchor="end">{tok}</text>')
        for j in range(len(cols)):
            w = weights[i][j] if i < len(weights) else 0.0
            shade = int(round(255 * (1.0 - w)))
            parts.append(f'<rect x="{label + j * cell}" y="{y}" '
                         f'width="{cell}" height="{cell}" '
                         f'fill="rgb({shade},{shade},255)"/>')
    parts.append("</svg>")
    return "".join(parts)


def _generate_one(model, instance, gen_config, rng, attn_dir):
    tokens, attn, memory = model.generate(instance, gen_config, rng=rng)
    if attn_dir is not None:
        dump = attention_dump(tokens, memory.doc_tokens, attn)
        base = os.path.join(attn_dir, instance.instance_id)
        with open(base + ".json", "w", encoding="utf-8") as fh:
            json.dump(dump, fh, indent=2)
            fh.write("\n")
        with open(base + ".svg", "w", encoding="utf-8") as fh:
            fh.write(_svg_heatmap(dump))
    return tokens


def cmd_generate(args):
    out_dir = _output_dir(args)
    try:
        model, _, _ = load_checkpoint(args.checkpoint)
    except (OSError, KeyError, DomainError) as exc:
        _err(f"cannot load checkpoint {args.checkpoint}: {exc}")
        return EXIT_DATA
    seed = args.seed if args.seed is not None else model.config.seed
    gen_config = GenerationConfig(
        tau=args.tau if args.tau is not None else model.config.tau,
        k=args.top_k if args.top_k is not None else model.config.top_k,
        max_length=model.config.max_generate, seed=seed)
    rng = np.random.default_rng(seed)
    attn_dir = None
    if args.dump_attention:
        attn_dir = os.path.join(out_dir, "attention")
        os.makedirs(attn_dir, exist_ok=True)

    if args.interactive:
        line = sys.stdin.readline()
        if not line.strip():
            _err("expected one corpus record on stdin")
            return EXIT_DATA
        try:
            instance = _parse_record(json.loads(line), line_no=1)
        except (CorpusFormatError, ValueError) as exc:
            _err(str(exc))
            return EXIT_DATA
        tokens = _generate_one(model, instance, gen_config, rng, attn_dir)
        print(" ".join(tokens))
        return EXIT_OK

    try:
        instances = list(load_corpus(args.data))
    except (CorpusFormatError, OSError) as exc:
        _err(str(exc))
        return EXIT_DATA
    out_path = os.path.join(out_dir, "outputs.jsonl")
    with open(out_path, "w", encoding="utf-8") as fh:
        for instance in instances:
            tokens = _generate_one(model, instance, gen_config, rng,
                                   attn_dir)
            fh.write(json.dumps({"id": instance.instance_id,
                                 "response": " ".join(tokens)},
                                sort_keys=True) + "\n")
    _err(f"wrote {len(instances)} outputs to {out_path}")
    return EXIT_OK


def read_outputs(path):
    outputs = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                outputs[rec["id"]] = tokenize(rec["response"])
            except (ValueError, KeyError, TypeError):
                raise CorpusFormatError(line_no,
                                        "expected {\"id\", \"response\"}")
    return outputs


def cmd_evaluate(args):
    out_dir = _output_dir(args)
    try:
        instances = list(load_corpus(args.data))
        outputs = read_outputs(args.outputs)
        baseline = read_outputs(args.baseline) if args.baseline else None
    except (CorpusFormatError, OSError) as exc:
        _err(str(exc))
        return EXIT_DATA
    stopwords = load_stopwords()
    try:
        report = evaluate_corpus(instances, outputs, stopwords)
    except DomainError as exc:
        _err(str(exc))
        return EXIT_DATA
    if baseline is not None:
        base_report = evaluate_corpus(instances, baseline, stopwords)
        ids = [row["id"] for row in report["per_instance"]]
        a = [row["meteor"] for row in report["per_instance"]]
        b_by_id = {row["id"]: row["meteor"]
                   for row in base_report["per_instance"]}
        b = [b_by_id[i] for i in ids]
        test = paired_bootstrap(a, b, replicates=args.bootstrap,
                                seed=args.seed or 0)
        report["comparison"] = dict(
            test, metric="meteor",
            baseline_aggregate=base_report["aggregate"])
    report_path = os.path.join(out_dir, "report.json")
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _err(f"wrote report to {report_path}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="readgen",
        description="Document-grounded conversational response generation.",
        epilog=f"The {OUTPUT_DIR_ENV} environment variable sets the default "
               f"output directory when --output-dir is omitted.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--output-dir", default=None,
                       help=f"output directory (default: ${OUTPUT_DIR_ENV} "
                            f"or the working directory)")
        p.add_argument("--seed", type=int, default=None,
                       help="random seed override")

    p = sub.add_parser("preprocess",
                       help="validate, truncate and canonicalize a corpus")
    p.add_argument("--input", required=True, help="raw JSON-lines corpus")
    common(p)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train one system variant")
    p.add_argument("--data", required=True, help="training corpus")
    p.add_argument("--val", default=None, help="held-out corpus")
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--variant", choices=("seq2seq", "cmr-f", "cmr", "cmr+w"),
                   default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--hidden-size", type=int, default=None)
    p.add_argument("--embedding-dim", type=int, default=None)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--dropout-rate", type=float, default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--top-k", type=int, default=None)
    p.add_argument("--resume", default=None,
                   help="checkpoint to resume from")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="decode responses from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", default=None, help="corpus to decode")
    p.add_argument("--tau", type=float, default=None,
                   help="softmax temperature")
    p.add_argument("--top-k", type=int, default=None,
                   help="sample from the k most probable tokens")
    p.add_argument("--dump-attention", action="store_true",
                   help="write per-instance attention JSON and SVG heatmaps")
    p.add_argument("--interactive", action="store_true",
                   help="read a single corpus record from stdin")
    common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="score outputs against a corpus")
    p.add_argument("--data", required=True, help="corpus with references")
    p.add_argument("--outputs", required=True, help="system outputs")
    p.add_argument("--baseline", default=None,
                   help="second outputs file for a paired comparison")
    p.add_argument("--bootstrap", type=int, default=10000,
                   help="bootstrap replicates for the paired comparison")
    common(p)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "generate" and not (args.interactive or args.data):
        _err("generate needs --data or --interactive")
        return EXIT_USAGE
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
