"""Deterministic synthetic corpus for desk-scale end-to-end runs.

Target words come in four kinds: simple CV words, bare stems, standalone
suffix particles, and stem+suffix compounds. Stems and suffixes both occur
as words of their own, so a budget-limited subword vocabulary keeps them as
pieces and compounds segment compositionally. The source side is a
letter-rotation transliteration of the target word, so the mapping is
learnable at the subword level and generalizes to compounds never seen in
training. A subset of simple words is deliberately ambiguous: six words
sharing one opaque source token, each with a different first letter, so only
the typed prefix can resolve them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .data import ParallelPair, WlacSample, sample_typed_prefix
from .errors import ContractError
from .transformer import TransformerConfig

ONSETS = ("br", "cr", "dr", "fl", "gr", "pl", "sk", "tr")
RIMES = ("am", "en", "ib", "od", "ul")
SIMPLE_ONSETS = ("b", "d", "f", "g", "h", "j", "k", "l", "m", "n", "p", "r", "s", "t", "v", "w")
SIMPLE_RIMES = ("ado", "eki", "ilu", "oba", "uke", "epo", "ani", "ovi")
SUFFIXES = ("ness", "ship", "ling", "ward", "most", "like", "less", "hood")

ROT_SHIFT = 7
N_AMBIG_PER_GROUP = 6
ZIPF_EXPONENT = 0.8


def rot_word(word: str, shift: int = ROT_SHIFT) -> str:
    """Per-letter Caesar rotation; the toy source language."""
    return "".join(chr((ord(ch) - 97 + shift) % 26 + 97) for ch in word)


@dataclass(frozen=True)
class Lexicon:
    simple: tuple[str, ...]
    stems: tuple[str, ...]
    suffixes: tuple[str, ...]
    train_combos: tuple[str, ...]
    held_out_combos: tuple[str, ...]
    ambiguous_groups: tuple[tuple[str, ...], ...]
    source_of: Mapping[str, str]
    train_words: tuple[str, ...]
    weights: tuple[float, ...]

    @property
    def all_words(self) -> tuple[str, ...]:
        return self.train_words + self.held_out_combos


def build_lexicon() -> Lexicon:
    stems = tuple(o + r for o in ONSETS for r in RIMES)
    simple = tuple(c + r for c in SIMPLE_ONSETS for r in SIMPLE_RIMES)
    train_combos = tuple(stems[i] + SUFFIXES[i % len(SUFFIXES)] for i in range(len(stems)))
    held_out = tuple(stems[i] + SUFFIXES[(i + 3) % len(SUFFIXES)] for i in range(24))
    overlap = set(train_combos) & set(held_out)
    if overlap:
        raise ContractError(f"held-out compounds collide with training ones: {sorted(overlap)[:3]}")

    # six words per rime, distinct first letters, sharing one opaque source
    groups = []
    for r, rime in enumerate(SIMPLE_RIMES):
        members = tuple(SIMPLE_ONSETS[(r + 2 * j) % len(SIMPLE_ONSETS)] + rime
                        for j in range(N_AMBIG_PER_GROUP))
        groups.append(members)
    ambiguous = {w for g in groups for w in g}

    source_of: dict[str, str] = {}
    for r, members in enumerate(groups):
        token = "q" + SIMPLE_RIMES[r]
        for w in members:
            source_of[w] = token
    for w in simple + stems + SUFFIXES + train_combos + held_out:
        if w not in ambiguous:
            source_of[w] = rot_word(w)
    rot_surfaces = {s for w, s in source_of.items() if w not in ambiguous}
    group_tokens = {"q" + r for r in SIMPLE_RIMES}
    if rot_surfaces & group_tokens:
        raise ContractError("group source tokens collide with transliterations")

    # particles first, stems next, open-class words in the tail: keeps every
    # morphological unit frequent enough to survive subword vocabulary pruning
    tail_words = list(simple) + list(train_combos)
    order = np.random.Generator(np.random.PCG64(12345)).permutation(len(tail_words))
    ranked = tuple(list(SUFFIXES) + list(stems) + [tail_words[i] for i in order])
    raw = 1.0 / np.power(np.arange(1, len(ranked) + 1, dtype=np.float64), ZIPF_EXPONENT)
    weights = tuple(raw / raw.sum())
    return Lexicon(simple, stems, SUFFIXES, train_combos, held_out,
                   tuple(groups), source_of, ranked, weights)


@dataclass
class ToyCorpus:
    lexicon: Lexicon
    train_pairs: list[ParallelPair]
    dev_pairs: list[ParallelPair]
    test_pairs: list[ParallelPair]


def sample_sentence(lex: Lexicon, rng: np.random.Generator,
                    min_len: int = 4, max_len: int = 8) -> ParallelPair:
    n = int(rng.integers(min_len, max_len + 1))
    idx = rng.choice(len(lex.train_words), size=n, p=np.asarray(lex.weights))
    words = [lex.train_words[int(i)] for i in idx]
    return ParallelPair(tuple(lex.source_of[w] for w in words), tuple(words))


def build_toy_corpus(seed: int = 0, n_train: int = 2000, n_dev: int = 200,
                     n_test: int = 500) -> ToyCorpus:
    lex = build_lexicon()
    rng = np.random.default_rng(seed)
    train = [sample_sentence(lex, rng) for _ in range(n_train)]
    dev = [sample_sentence(lex, rng) for _ in range(n_dev)]
    test = [sample_sentence(lex, rng) for _ in range(n_test)]
    return ToyCorpus(lex, train, dev, test)


def targeted_sample(word: str, lex: Lexicon, rng: np.random.Generator,
                    context_type: str = "bi") -> WlacSample:
    """Sample whose target word is chosen by the caller, not drawn."""
    n_left = int(rng.integers(1, 4)) if context_type in ("prefix", "bi") else 0
    n_right = int(rng.integers(1, 4)) if context_type in ("suffix", "bi") else 0
    idx = rng.choice(len(lex.train_words), size=n_left + n_right, p=np.asarray(lex.weights))
    around = [lex.train_words[int(i)] for i in idx]
    left = tuple(around[:n_left])
    right = tuple(around[n_left:])
    sentence = left + (word,) + right
    src = tuple(lex.source_of[w] for w in sentence)
    typed = sample_typed_prefix(word, rng)
    return WlacSample(src, left, right, typed, word, context_type)


def corpus_text_lines(pairs) -> list[str]:
    """Tokenizer training text: one line per side per pair."""
    lines = []
    for p in pairs:
        lines.append(" ".join(p.src_tokens))
        lines.append(" ".join(p.tgt_tokens))
    return lines


def typed_alphabet() -> set[str]:
    return set("abcdefghijklmnopqrstuvwxyz")


TOY_VOCAB_SIZE = 200


def desk_config() -> TransformerConfig:
    return TransformerConfig(layers=2, heads=4, d_model=64, d_ff=256,
                             dropout=0.1, max_len=96)
