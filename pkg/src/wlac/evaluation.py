"""Accuracy reports, frequency-binned breakdowns, and attention export.

Accuracy is an exact rational: matches over total, with a per-context-type
breakdown. The frequency report sorts samples by training-corpus frequency
of the target word (descending, stable) and splits them into ten contiguous
bins whose sizes differ by at most one, earlier bins taking the extras.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import transformer as tf
from .data import WlacSample
from .decoding import DecodeConfig, decode_word, encode_source_once
from .errors import ContractError
from .model import InstructionUnit, ModelParams, assemble_decoder_input, source_ids
from .symbols import SymbolTable
from .tokenizer import SubwordModel

N_BINS = 10
RESULTS_FILE = "results.jsonl"


@dataclass
class AccuracyReport:
    n_match: int
    n_all: int
    acc: Fraction
    by_context: dict[str, tuple[int, int, Fraction]] = field(default_factory=dict)
    truncated_count: int = 0


@dataclass
class FrequencyBinReport:
    """bins[i] = ((high_freq, low_freq), n, acc); bin 0 is the most frequent."""
    bins: list[tuple[tuple[int, int], int, Fraction]]


def _match(pred: str, gold: str, casefold: bool) -> bool:
    if casefold:
        return pred.casefold() == gold.casefold()
    return pred == gold


def compute_accuracy(predictions, golds, types, casefold: bool = False) -> AccuracyReport:
    predictions, golds, types = list(predictions), list(golds), list(types)
    if not predictions:
        raise ContractError("cannot score an empty prediction list")
    if not len(predictions) == len(golds) == len(types):
        raise ContractError("predictions, golds, and types must align")
    n_match = 0
    per: dict[str, list[int]] = {}
    for pred, gold, ctx in zip(predictions, golds, types):
        hit = _match(pred, gold, casefold)
        n_match += hit
        entry = per.setdefault(ctx, [0, 0])
        entry[0] += hit
        entry[1] += 1
    by_context = {ctx: (m, n, Fraction(m, n)) for ctx, (m, n) in sorted(per.items())}
    return AccuracyReport(n_match, len(golds), Fraction(n_match, len(golds)), by_context)


def frequency_bin_sizes(n: int, n_bins: int = N_BINS) -> list[int]:
    base, extra = divmod(n, n_bins)
    return [base + (i < extra) for i in range(n_bins)]


def accuracy_by_frequency_bin(samples, predictions, train_freqs,
                              casefold: bool = False) -> FrequencyBinReport:
    samples, predictions = list(samples), list(predictions)
    if len(samples) != len(predictions):
        raise ContractError("samples and predictions must align")
    if len(samples) < N_BINS:
        raise ContractError(f"frequency binning needs at least {N_BINS} samples")
    freqs = [int(train_freqs.get(s.target_word, 0)) for s in samples]
    order = sorted(range(len(samples)), key=lambda i: -freqs[i])
    bins = []
    start = 0
    for size in frequency_bin_sizes(len(samples)):
        chunk = order[start: start + size]
        start += size
        hits = sum(_match(predictions[i], samples[i].target_word, casefold) for i in chunk)
        span = (freqs[chunk[0]], freqs[chunk[-1]])
        bins.append((span, size, Fraction(hits, size)))
    return FrequencyBinReport(bins)


def run_eval(params: ModelParams, samples, table: SymbolTable, subwords: SubwordModel,
             cfg: DecodeConfig = DecodeConfig(), out_dir=None, train_freqs=None,
             casefold: bool = False, roman_table=None):
    """Top-1 decode of every sample; returns (AccuracyReport, FrequencyBinReport | None).

    When out_dir is given, one line per sample is written to results.jsonl.
    The frequency report is produced only when train_freqs is supplied.
    """
    samples = list(samples)
    if not samples:
        raise ContractError("cannot evaluate an empty sample list")
    records = []
    predictions = []
    truncated_count = 0
    for i, s in enumerate(samples):
        res = decode_word(params, s.src_tokens, s.left_context, s.right_context, s.typed,
                          cfg, subwords, table, roman_table=roman_table)
        word, logprob = res.candidates[0] if res.candidates else ("", None)
        truncated_count += res.truncated
        predictions.append(word)
        records.append({"id": i, "context_type": s.context_type, "gold": s.target_word,
                        "prediction": word, "correct": _match(word, s.target_word, casefold),
                        "logprob": logprob})
    report = compute_accuracy(predictions, [s.target_word for s in samples],
                              [s.context_type for s in samples], casefold)
    report.truncated_count = truncated_count
    freq_report = None
    if train_freqs is not None:
        freq_report = accuracy_by_frequency_bin(samples, predictions, train_freqs, casefold)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, RESULTS_FILE), "w", encoding="utf-8") as fh:
            for rec in records:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return report, freq_report


def report_as_dict(report: AccuracyReport, freq_report: FrequencyBinReport | None = None) -> dict:
    out = {
        "n_match": report.n_match,
        "n_all": report.n_all,
        "acc": float(report.acc),
        "truncated_count": report.truncated_count,
        "by_context": {ctx: {"n_match": m, "n_all": n, "acc": float(a)}
                       for ctx, (m, n, a) in report.by_context.items()},
    }
    if freq_report is not None:
        out["frequency_bins"] = [{"high": hi, "low": lo, "n": n, "acc": float(a)}
                                 for (hi, lo), n, a in freq_report.bins]
    return out


def export_attention(params: ModelParams, sample: WlacSample, table: SymbolTable,
                     subwords: SubwordModel, per_head: bool = False):
    """Last-layer cross-attention from the mask anchor onto source positions.

    Returns (matrix, labels): head-averaged shape (1, src_len) by default,
    (heads, src_len) with per_head. The anchor sits in the decoder input built
    from the sample's typed prefix with nothing decoded yet.
    """
    x_ids = source_ids(list(sample.src_tokens), table, subwords)
    d = assemble_decoder_input(sample.left_context, sample.right_context,
                               InstructionUnit(tuple(sample.typed)), table, subwords)
    enc = encode_source_once(params, x_ids)
    captured: list[np.ndarray] = []
    tf.decode(params.tensors, params.config, np.asarray([list(d.ids)], dtype=np.int64), enc,
              capture=captured)
    rows = captured[-1][0, :, d.mask_position, :]
    matrix = rows if per_head else rows.mean(axis=0, keepdims=True)
    labels = [table.symbol_of(sid) for sid in x_ids]
    return matrix, labels


def write_attention(matrix: np.ndarray, labels, path) -> None:
    payload = {"labels": list(labels), "rows": [[float(v) for v in row] for row in matrix]}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
