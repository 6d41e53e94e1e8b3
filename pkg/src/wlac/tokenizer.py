"""Subword segmentation: unigram-LM training, Viterbi encoding, model file I/O.

A trained model is a flat inventory of (piece, log unigram probability).
Every character seen in the training corpus is itself a piece, so any
word over the observed alphabet segments without failure; characters
outside the alphabet surface as the "[UNK]" placeholder piece.
"""

from __future__ import annotations

import math
from collections import Counter
from typing import Iterable

from .errors import ConfigError, InputError

UNK_PIECE = "[UNK]"

_MAX_PIECE_LEN = 10
_SEED_FACTOR = 12
_EM_ROUNDS = 2
_PRUNE_FRACTION = 0.25


class SubwordModel:
    """Immutable piece inventory with log unigram probabilities."""

    __slots__ = ("pieces", "logprob", "trained_vocab_size", "_alphabet", "_max_len", "_memo")

    def __init__(self, pieces_with_logprobs):
        pieces = []
        logprob = {}
        for piece, lp in pieces_with_logprobs:
            if not piece:
                raise InputError("empty piece string")
            if piece in logprob:
                raise InputError(f"duplicate piece {piece!r}")
            lp = float(lp)
            if not math.isfinite(lp) or lp > 0.0:
                raise InputError(f"piece {piece!r} has bad logprob {lp}")
            pieces.append(piece)
            logprob[piece] = lp
        if not pieces:
            raise InputError("model has no pieces")
        self.pieces = tuple(pieces)
        self.logprob = logprob
        self.trained_vocab_size = len(pieces)
        self._alphabet = frozenset(ch for p in pieces for ch in p)
        self._max_len = max(len(p) for p in pieces)
        self._memo = {}

    def __contains__(self, piece):
        return piece in self.logprob

    def alphabet(self):
        return self._alphabet


def _word_frequencies(corpus: Iterable[str]) -> Counter:
    freqs = Counter()
    for line in corpus:
        for token in line.split():
            freqs[token] += 1
    return freqs


def _viterbi(word, logprob, max_len):
    # Suffix DP: best[i] = (score, piece_count) for word[i:], then a greedy
    # left-to-right reconstruction picks the lexicographically smallest piece
    # among optimal continuations, which yields the lex-smallest sequence.
    n = len(word)
    best = [None] * (n + 1)
    best[n] = (0.0, 0)
    for i in range(n - 1, -1, -1):
        top = None
        limit = min(n, i + max_len)
        for j in range(i + 1, limit + 1):
            lp = logprob.get(word[i:j])
            if lp is None or best[j] is None:
                continue
            cand = (lp + best[j][0], best[j][1] + 1)
            if top is None or cand[0] > top[0] or (cand[0] == top[0] and cand[1] < top[1]):
                top = cand
        best[i] = top
    if best[0] is None:
        return None
    out = []
    i = 0
    while i < n:
        score_i, count_i = best[i]
        pick = None
        limit = min(n, i + max_len)
        for j in range(i + 1, limit + 1):
            piece = word[i:j]
            lp = logprob.get(piece)
            if lp is None or best[j] is None:
                continue
            if lp + best[j][0] == score_i and best[j][1] + 1 == count_i:
                if pick is None or piece < pick[0]:
                    pick = (piece, j)
        piece, i = pick
        out.append(piece)
    return out


def encode_word(model: SubwordModel, word: str) -> list[str]:
    """Segment one word into pieces, maximizing total log-probability.

    Ties break toward fewer pieces, then the lexicographically smallest
    piece sequence. Characters outside the model alphabet come back as
    the "[UNK]" placeholder piece, flagging the result.
    """
    if not word:
        raise InputError("cannot encode an empty word")
    memo = model._memo
    hit = memo.get(word)
    if hit is not None:
        return list(hit)
    out = []
    run = []
    alphabet = model._alphabet

    def flush():
        if run:
            seg = _viterbi("".join(run), model.logprob, model._max_len)
            out.extend(seg)
            run.clear()

    for ch in word:
        if ch in alphabet:
            run.append(ch)
        else:
            flush()
            out.append(UNK_PIECE)
    flush()
    memo[word] = tuple(out)
    return out


def decode_subwords(model: SubwordModel, pieces: list[str]) -> str:
    """Concatenate piece surface forms back into a word."""
    if not pieces:
        raise InputError("cannot decode an empty piece list")
    for p in pieces:
        if p != UNK_PIECE and p not in model.logprob:
            raise InputError(f"unknown piece {p!r}")
    return "".join(pieces)


def _seed_candidates(word_freqs, vocab_size, alphabet):
    sub_freq = Counter()
    for word, f in word_freqs.items():
        n = len(word)
        for i in range(n):
            for j in range(i + 2, min(n, i + _MAX_PIECE_LEN) + 1):
                sub_freq[word[i:j]] += f
    needed = max(vocab_size * _SEED_FACTOR, vocab_size) - len(alphabet)
    ranked = sorted(sub_freq.items(), key=lambda kv: (-kv[1] * len(kv[0]), kv[0]))
    return [s for s, _ in ranked[:needed]]


def _estimate(word_freqs, logprob, max_len, alphabet):
    counts = Counter()
    for word in sorted(word_freqs):
        seg = _viterbi(word, logprob, max_len)
        f = word_freqs[word]
        for piece in seg:
            counts[piece] += f
    for ch in alphabet:
        if counts[ch] <= 0:
            counts[ch] = 0.5  # floor keeps fallback chars alive with finite logprob
    return counts


def _normalize(counts):
    total = sum(counts[p] for p in sorted(counts))
    return {p: math.log(c / total) for p, c in counts.items() if c > 0}


def train_subword_model(corpus: Iterable[str], vocab_size: int) -> SubwordModel:
    """Induce a unigram-LM piece inventory of exactly vocab_size pieces.

    EM alternates Viterbi counting with re-normalization; pruning drops the
    least-used multi-character pieces until the target size is reached.
    Single characters are never pruned. Deterministic for a fixed corpus.
    """
    word_freqs = _word_frequencies(corpus)
    if not word_freqs:
        raise InputError("corpus is empty")
    alphabet = sorted({ch for w in word_freqs for ch in w})
    if vocab_size < len(alphabet) + 8:
        raise ConfigError(
            f"vocab_size {vocab_size} too small for alphabet of {len(alphabet)} chars (need ≥ {len(alphabet) + 8})"
        )

    candidates = _seed_candidates(word_freqs, vocab_size, alphabet)
    if len(alphabet) + len(candidates) < vocab_size:
        raise ConfigError(
            f"corpus supports at most {len(alphabet) + len(candidates)} pieces, vocab_size {vocab_size} unreachable"
        )

    counts = Counter()
    for word, f in sorted(word_freqs.items()):
        for ch in word:
            counts[ch] += f
    for sub in candidates:
        n_hits = sum(f * _occurrences(w, sub) for w, f in word_freqs.items())
        counts[sub] = max(n_hits, 1)
    logprob = _normalize(counts)
    max_len = max(len(p) for p in logprob)

    char_set = set(alphabet)
    while True:
        for _ in range(_EM_ROUNDS):
            counts = _estimate(word_freqs, logprob, max_len, char_set)
            keep = {p for p in logprob if p in char_set or counts[p] > 0}
            logprob = _normalize({p: counts[p] for p in keep})
        n_now = len(logprob)
        if n_now <= vocab_size:
            break
        n_drop = n_now - vocab_size
        cap = max(1, int(n_now * _PRUNE_FRACTION))
        if n_drop > cap:
            n_drop = cap
        prunable = sorted(
            (p for p in logprob if p not in char_set),
            key=lambda p: (counts[p], -len(p), p),
        )
        for p in prunable[:n_drop]:
            del logprob[p]

    if len(logprob) < vocab_size:
        # EM starved some seeds; refill from the ranked candidate pool.
        for sub in candidates:
            if sub not in logprob:
                logprob[sub] = min(logprob.values())
                if len(logprob) == vocab_size:
                    break
        counts = _estimate(word_freqs, logprob, max_len, char_set)
        for p in logprob:
            if counts[p] <= 0:
                counts[p] = 0.5
        logprob = _normalize(counts)
    if len(logprob) != vocab_size:
        raise ConfigError(f"could not reach vocab_size {vocab_size} (got {len(logprob)})")

    return SubwordModel(sorted(logprob.items()))


def _occurrences(word, sub):
    count = start = 0
    while True:
        idx = word.find(sub, start)
        if idx < 0:
            return count
        count += 1
        start = idx + 1


def save_model(model: SubwordModel, path) -> None:
    lines = [f"subword-model v1 {model.trained_vocab_size}\n"]
    for piece in model.pieces:
        lines.append(f"{piece}\t{model.logprob[piece]!r}\n")
    with open(path, "w", encoding="utf-8") as fh:
        fh.writelines(lines)


def load_model(path) -> SubwordModel:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split(" ")
        if len(header) != 3 or header[0] != "subword-model":
            raise InputError(f"{path}: not a subword model file")
        if header[1] != "v1":
            raise InputError(f"{path}: unsupported format version {header[1]!r}")
        declared = int(header[2])
        entries = []
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            piece, _, lp = line.partition("\t")
            entries.append((piece, float(lp)))
    if len(entries) != declared:
        raise InputError(f"{path}: header declares {declared} pieces, found {len(entries)}")
    return SubwordModel(entries)
