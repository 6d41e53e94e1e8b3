"""Command-line entry points for the completion toolkit.

Subcommands cover the full path from raw parallel text to a running
service: train-tokenizer, gen-data, pretrain, finetune, average, decode,
evaluate, serve, and toy-corpus for a synthetic end-to-end walkthrough.
"""

from __future__ import annotations

import argparse
import glob
import json
import os
import sys

import numpy as np

from .checkpoint import average_checkpoints, load_bundle, load_checkpoint, save_bundle, \
    save_checkpoint
from .data import CONTEXT_TYPES, CodeSwitch, GenConfig, build_cmlm_dataset, \
    build_wlac_dataset, generate_wlac_sample, read_freqs, read_pairs, read_roman_table, \
    read_wlac_jsonl, typed_char_alphabet, word_frequencies, write_cmlm_jsonl, write_freqs, \
    write_pairs, write_wlac_jsonl
from .decoding import DecodeConfig, decode_word
from .errors import ConfigError, InputError
from .evaluation import report_as_dict, run_eval
from .service import create_app
from .symbols import build_symbol_table, load_table, save_table
from .tokenizer import load_model, save_model, train_subword_model
from .toy import build_toy_corpus, corpus_text_lines, desk_config
from .training import multitask_finetune, pretrain, read_plan
from .transformer import TransformerConfig


def _cmd_train_tokenizer(args) -> int:
    with open(args.corpus, encoding="utf-8") as fh:
        lines = [line.strip() for line in fh if line.strip()]
    model = train_subword_model(lines, args.vocab_size)
    save_model(model, args.out)
    print(f"trained {len(model.pieces)} pieces from {len(lines)} lines -> {args.out}")
    return 0


def _parse_mask_range(text: str) -> tuple[float, float]:
    lo, sep, hi = text.partition(":")
    if not sep:
        raise ConfigError(f"expected lo:hi, got {text!r}")
    return float(lo), float(hi)


def _parse_types(text: str) -> list[str]:
    types = [t.strip() for t in text.split(",") if t.strip()]
    for t in types:
        if t not in CONTEXT_TYPES:
            raise ConfigError(f"unknown context type {t!r}")
    if not types:
        raise ConfigError("no context types requested")
    return types


def _cmd_gen_data(args) -> int:
    pairs = read_pairs(args.pairs)
    subwords = load_model(args.tokenizer)
    roman = read_roman_table(args.code_switch_table) if args.code_switch_table else None
    table = build_symbol_table(subwords, typed_char_alphabet(pairs, roman))
    types = _parse_types(args.types)
    mask_range = _parse_mask_range(args.cmlm_mask)
    if args.passes < 1:
        raise ConfigError("passes must be at least 1")
    rng = np.random.default_rng(args.seed)
    cfg = GenConfig(roman_table=roman)
    samples = []
    for _ in range(args.passes):
        for pair in pairs:
            for ctx in types:
                s = generate_wlac_sample(pair, ctx, rng, cfg)
                if s is not None:
                    samples.append(s)
    switch = CodeSwitch(roman) if roman else None
    cmlm = build_cmlm_dataset(pairs, mask_range, rng, subwords, table, code_switch=switch)
    os.makedirs(args.out, exist_ok=True)
    write_wlac_jsonl(samples, os.path.join(args.out, "wlac.jsonl"))
    write_cmlm_jsonl(cmlm.rows, os.path.join(args.out, "cmlm.jsonl"))
    save_table(table, os.path.join(args.out, "symbols.txt"))
    write_freqs(word_frequencies(pairs), os.path.join(args.out, "freqs.tsv"))
    print(f"{len(samples)} completion samples, {len(cmlm)} masked rows -> {args.out}")
    return 0


def _load_table_or_build(symbols_path, pairs, subwords, roman=None):
    if symbols_path:
        return load_table(symbols_path)
    return build_symbol_table(subwords, typed_char_alphabet(pairs, roman))


def _cmd_pretrain(args) -> int:
    plan = read_plan(args.plan)
    pairs = read_pairs(args.pairs)
    subwords = load_model(args.tokenizer)
    roman = read_roman_table(args.code_switch_table) if args.code_switch_table else None
    table = _load_table_or_build(args.symbols, pairs, subwords, roman)
    init = None
    config = None
    if args.init:
        init, _ = load_checkpoint(args.init)
    elif args.config:
        with open(args.config, encoding="utf-8") as fh:
            config = TransformerConfig.from_dict(json.load(fh))
    else:
        config = desk_config()
    switch = CodeSwitch(roman) if roman else None
    result = pretrain(plan, pairs, subwords, table, args.out, config=config, init=init,
                      code_switch=switch, switch_frac=args.switch_frac)
    save_bundle(args.out, result.params, plan.steps, table, subwords)
    print(f"{plan.phase} done: {plan.steps} steps, "
          f"{len(result.checkpoints)} checkpoints -> {args.out}")
    return 0


def _cmd_finetune(args) -> int:
    plan = read_plan(args.plan)
    init, _ = load_checkpoint(args.init)
    subwords = load_model(args.tokenizer)
    table = load_table(args.symbols) if args.symbols else load_bundle(
        checkpoint=args.init, tokenizer=args.tokenizer).table
    d_wlac = build_wlac_dataset(read_wlac_jsonl(args.wlac), subwords)
    d_cmlm = None
    if args.pairs:
        rng = np.random.default_rng(plan.seed + 3)
        d_cmlm = build_cmlm_dataset(read_pairs(args.pairs),
                                    (plan.cmlm_mask, plan.cmlm_mask), rng, subwords, table)
    result = multitask_finetune(plan, init, d_wlac, d_cmlm, table, subwords, args.out)
    save_bundle(args.out, result.params, plan.steps, table, subwords)
    print(f"{plan.phase} done: {plan.steps} steps -> {args.out}")
    return 0


def _cmd_average(args) -> int:
    paths = sorted(glob.glob(os.path.join(args.dir, "ckpt-*.bin")))
    if len(paths) < args.last:
        raise InputError(f"{args.dir}: found {len(paths)} checkpoints, need {args.last}")
    picked = paths[-args.last:]
    params = average_checkpoints(picked)
    _, step = load_checkpoint(picked[-1])
    save_checkpoint(args.out, params, step)
    print(f"averaged {len(picked)} checkpoints -> {args.out}")
    return 0


def _cmd_decode(args) -> int:
    bundle = load_bundle(checkpoint=args.model, tokenizer=args.tokenizer)
    cfg = DecodeConfig(beam=args.beam, max_subwords=args.max_subwords,
                       hard_prefix=args.hard_prefix, top_k=args.top_k)
    res = decode_word(bundle.params, args.src.split(), args.left.split(),
                      args.right.split(), args.typed, cfg, bundle.subwords, bundle.table)
    print(json.dumps({"candidates": [{"word": w, "logprob": lp} for w, lp in res.candidates],
                      "truncated": res.truncated, "reason": res.reason},
                     ensure_ascii=False))
    return 0


def _cmd_evaluate(args) -> int:
    bundle = load_bundle(checkpoint=args.model, tokenizer=args.tokenizer)
    samples = read_wlac_jsonl(args.test)
    freqs = read_freqs(args.train_freqs) if args.train_freqs else None
    cfg = DecodeConfig(beam=args.beam, top_k=args.top_k)
    report, freq_report = run_eval(bundle.params, samples, bundle.table, bundle.subwords,
                                   cfg, out_dir=args.out, train_freqs=freqs)
    payload = report_as_dict(report, freq_report)
    with open(os.path.join(args.out, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"acc {report.n_match}/{report.n_all} = {float(report.acc):.4f} "
          f"(truncated {report.truncated_count}) -> {args.out}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    bundle = load_bundle(checkpoint=args.model, tokenizer=args.tokenizer) \
        if args.model else None
    app = create_app(bundle=bundle, workers=args.workers)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def _cmd_toy_corpus(args) -> int:
    corpus = build_toy_corpus(args.seed, args.n_train, args.n_dev, args.n_test)
    rng = np.random.default_rng(args.seed + 1)
    os.makedirs(args.out, exist_ok=True)
    write_pairs(corpus.train_pairs, os.path.join(args.out, "train.tsv"))
    write_pairs(corpus.dev_pairs, os.path.join(args.out, "dev.tsv"))
    write_pairs(corpus.test_pairs, os.path.join(args.out, "test.tsv"))
    with open(os.path.join(args.out, "corpus.txt"), "w", encoding="utf-8") as fh:
        for line in corpus_text_lines(corpus.train_pairs):
            fh.write(line + "\n")
    write_freqs(word_frequencies(corpus.train_pairs), os.path.join(args.out, "freqs.tsv"))
    for name, pairs in (("dev_bi.jsonl", corpus.dev_pairs), ("test_bi.jsonl", corpus.test_pairs)):
        samples = [generate_wlac_sample(p, "bi", rng) for p in pairs]
        write_wlac_jsonl([s for s in samples if s is not None],
                         os.path.join(args.out, name))
    print(f"toy corpus: {len(corpus.train_pairs)} train / {len(corpus.dev_pairs)} dev / "
          f"{len(corpus.test_pairs)} test pairs -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wlac", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-tokenizer", help="fit a subword model on a text corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab-size", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train_tokenizer)

    p = sub.add_parser("gen-data", help="build completion and masked-LM datasets")
    p.add_argument("--pairs", required=True)
    p.add_argument("--tokenizer", required=True)
    p.add_argument("--types", default="zero,prefix,suffix,bi")
    p.add_argument("--passes", type=int, default=1,
                   help="completion sampling passes over the pair list")
    p.add_argument("--cmlm-mask", default="0.15:0.5")
    p.add_argument("--code-switch-table", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("pretrain", help="masked pretraining from parallel pairs")
    p.add_argument("--plan", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--tokenizer", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--symbols", default=None)
    p.add_argument("--config", default=None, help="transformer config JSON; default desk preset")
    p.add_argument("--init", default=None, help="resume from an existing checkpoint")
    p.add_argument("--code-switch-table", default=None)
    p.add_argument("--switch-frac", type=float, default=0.5)
    p.set_defaults(func=_cmd_pretrain)

    p = sub.add_parser("finetune", help="multitask or completion-only finetuning")
    p.add_argument("--plan", required=True)
    p.add_argument("--init", required=True)
    p.add_argument("--wlac", required=True, help="completion samples (jsonl)")
    p.add_argument("--pairs", default=None, help="pairs for the masked-LM side")
    p.add_argument("--tokenizer", required=True)
    p.add_argument("--symbols", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_finetune)

    p = sub.add_parser("average", help="average the last n checkpoints in a directory")
    p.add_argument("--last", type=int, default=10)
    p.add_argument("--dir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_average)

    p = sub.add_parser("decode", help="complete one typed prefix")
    p.add_argument("--model", required=True)
    p.add_argument("--tokenizer", default=None)
    p.add_argument("--src", required=True)
    p.add_argument("--left", default="")
    p.add_argument("--right", default="")
    p.add_argument("--typed", required=True)
    p.add_argument("--beam", type=int, default=4)
    p.add_argument("--max-subwords", type=int, default=8)
    p.add_argument("--hard-prefix", action="store_true")
    p.add_argument("--top-k", type=int, default=5)
    p.set_defaults(func=_cmd_decode)

    p = sub.add_parser("evaluate", help="accuracy report over a test set")
    p.add_argument("--model", required=True)
    p.add_argument("--tokenizer", default=None)
    p.add_argument("--test", required=True)
    p.add_argument("--train-freqs", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--beam", type=int, default=4)
    p.add_argument("--top-k", type=int, default=5)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("serve", help="run the completion HTTP service")
    p.add_argument("--model", default=None, help="checkpoint; default WLAC_MODEL_DIR")
    p.add_argument("--tokenizer", default=None)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--workers", type=int, default=2)
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("toy-corpus", help="write the synthetic benchmark corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-train", type=int, default=2000)
    p.add_argument("--n-dev", type=int, default=200)
    p.add_argument("--n-test", type=int, default=500)
    p.set_defaults(func=_cmd_toy_corpus)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
