"""Sample construction: completion samples, iterative rows, masked-LM data,
code switching, dataset mixing, and the file formats that carry them.

Word targets are chosen uniformly over eligible words (pure punctuation and
digits excluded). Context spans are contiguous but need not touch the target
word, so a sample can carry a gap on either side.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .errors import ConfigError, InputError
from .symbols import MASK, UNK, SymbolTable
from .tokenizer import SubwordModel, encode_word

CONTEXT_TYPES = ("zero", "prefix", "suffix", "bi")
EOW_SYMBOL = "[EOW]"
MASK_TOKEN = "[MASK]"


@dataclass(frozen=True)
class ParallelPair:
    src_tokens: tuple[str, ...]
    tgt_tokens: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "src_tokens", tuple(self.src_tokens))
        object.__setattr__(self, "tgt_tokens", tuple(self.tgt_tokens))
        if not self.src_tokens or not self.tgt_tokens:
            raise InputError("parallel pair with an empty side")


@dataclass(frozen=True)
class WlacSample:
    src_tokens: tuple[str, ...]
    left_context: tuple[str, ...]
    right_context: tuple[str, ...]
    typed: str
    target_word: str
    context_type: str

    def __post_init__(self):
        for name in ("src_tokens", "left_context", "right_context"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.context_type not in CONTEXT_TYPES:
            raise InputError(f"bad context_type {self.context_type!r}")
        if not self.src_tokens or not self.typed or not self.target_word:
            raise InputError("sample needs source tokens, typed chars, and a target word")
        has_l, has_r = bool(self.left_context), bool(self.right_context)
        wanted = {"zero": (False, False), "prefix": (True, False),
                  "suffix": (False, True), "bi": (True, True)}[self.context_type]
        if (has_l, has_r) != wanted:
            raise InputError(f"context emptiness does not match type {self.context_type!r}")


@dataclass(frozen=True)
class IterativeRow:
    base: WlacSample
    decoded: tuple[str, ...]
    target: str

    def __post_init__(self):
        object.__setattr__(self, "decoded", tuple(self.decoded))


@dataclass(frozen=True)
class CmlmSample:
    src_tokens: tuple[str, ...]
    corrupted: tuple[int, ...]
    gold_at_masks: tuple[tuple[int, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "src_tokens", tuple(self.src_tokens))
        object.__setattr__(self, "corrupted", tuple(int(i) for i in self.corrupted))
        object.__setattr__(self, "gold_at_masks", tuple((int(p), int(g)) for p, g in self.gold_at_masks))
        if not self.gold_at_masks:
            raise InputError("masked sample without masked positions")
        for pos, _ in self.gold_at_masks:
            if not 0 <= pos < len(self.corrupted):
                raise InputError("gold position outside the sequence")


@dataclass(frozen=True)
class Dataset:
    kind: str
    rows: tuple
    costs: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))
        object.__setattr__(self, "costs", tuple(self.costs))
        if self.kind not in ("wlac", "cmlm"):
            raise InputError(f"bad dataset kind {self.kind!r}")
        if len(self.rows) != len(self.costs):
            raise InputError("rows/costs length mismatch")
        want = IterativeRow if self.kind == "wlac" else CmlmSample
        if any(not isinstance(r, want) for r in self.rows):
            raise InputError(f"dataset of kind {self.kind!r} holds foreign rows")

    def __len__(self):
        return len(self.rows)


@dataclass(frozen=True)
class GenConfig:
    resample_context: bool = False
    roman_table: Mapping[str, str] | None = None


@dataclass(frozen=True)
class CodeSwitch:
    table: Mapping[str, str]
    p_token: float = 0.3
    p_char_mask: float = 0.15

    def __post_init__(self):
        if not 0.0 <= self.p_token <= 1.0 or not 0.0 <= self.p_char_mask <= 1.0:
            raise ConfigError("code-switch probabilities must lie in [0, 1]")


@dataclass
class Batch:
    kind: str
    rows: list


def eligible_word(token: str) -> bool:
    return any(ch.isalpha() for ch in token)


def eligible_positions(tgt_tokens) -> list[int]:
    return [i for i, tok in enumerate(tgt_tokens) if eligible_word(tok)]


def sample_typed_prefix(word: str, rng: np.random.Generator) -> str:
    """Uniform prefix length over {1..|word|}."""
    if not word:
        raise InputError("cannot sample a prefix of an empty word")
    k = int(rng.integers(1, len(word) + 1))
    return word[:k]


def generate_wlac_sample(pair: ParallelPair, context_type: str, rng: np.random.Generator,
                         cfg: GenConfig = GenConfig()):
    """One sample from a pair, or None when the pair cannot support it."""
    if context_type not in CONTEXT_TYPES:
        raise InputError(f"bad context_type {context_type!r}")
    positions = eligible_positions(pair.tgt_tokens)
    if not positions:
        return None
    j = positions[int(rng.integers(len(positions)))]
    n = len(pair.tgt_tokens)
    left_avail, right_avail = j, n - 1 - j

    def feasible(ct):
        need_l = ct in ("prefix", "bi")
        need_r = ct in ("suffix", "bi")
        return (left_avail >= 1 or not need_l) and (right_avail >= 1 or not need_r)

    if not feasible(context_type):
        if not cfg.resample_context:
            return None
        options = [ct for ct in CONTEXT_TYPES if feasible(ct)]
        context_type = options[int(rng.integers(len(options)))]

    left: tuple[str, ...] = ()
    right: tuple[str, ...] = ()
    if context_type in ("prefix", "bi"):
        ll = int(rng.integers(1, left_avail + 1))
        start = int(rng.integers(0, left_avail - ll + 1))
        left = pair.tgt_tokens[start:start + ll]
    if context_type in ("suffix", "bi"):
        lr = int(rng.integers(1, right_avail + 1))
        start = j + 1 + int(rng.integers(0, right_avail - lr + 1))
        right = pair.tgt_tokens[start:start + lr]

    word = pair.tgt_tokens[j]
    form = cfg.roman_table.get(word) if cfg.roman_table else None
    typed = sample_typed_prefix(form if form else word, rng)
    return WlacSample(pair.src_tokens, left, right, typed, word, context_type)


def validate_sample(sample: WlacSample, roman_table: Mapping[str, str] | None = None) -> None:
    """Raises InputError unless the typed chars prefix the word or its romanization."""
    w = sample.target_word
    if w.startswith(sample.typed):
        return
    if roman_table:
        form = roman_table.get(w)
        if form and form.startswith(sample.typed):
            return
    raise InputError(f"typed {sample.typed!r} is not a prefix of {w!r} or its romanization")


def expand_iterative_rows(sample: WlacSample, model: SubwordModel) -> list[IterativeRow]:
    """n pieces become n+1 rows: each next piece, then the end-of-word step."""
    pieces = encode_word(model, sample.target_word)
    rows = [IterativeRow(sample, tuple(pieces[:i]), pieces[i]) for i in range(len(pieces))]
    rows.append(IterativeRow(sample, tuple(pieces), EOW_SYMBOL))
    return rows


def _code_switch_tagged(tgt_tokens, table, rng, p_token, p_char_mask):
    """Tagged units: ("word", tok) | ("char", ch) | ("char_mask", original ch)."""
    units = []
    for tok in tgt_tokens:
        form = table.get(tok)
        if form and rng.random() < p_token:
            for ch in form:
                if rng.random() < p_char_mask:
                    units.append(("char_mask", ch))
                else:
                    units.append(("char", ch))
        else:
            units.append(("word", tok))
    return units


def code_switch_sentence(tgt_tokens, table: Mapping[str, str], rng: np.random.Generator,
                         p_token: float = 0.3, p_char_mask: float = 0.15) -> list[str]:
    """Mappable tokens become per-character sequences; some chars become [MASK]."""
    out = []
    for kind, payload in _code_switch_tagged(tgt_tokens, table, rng, p_token, p_char_mask):
        out.append(MASK_TOKEN if kind == "char_mask" else payload)
    return out


def _cmlm_from_units(src_tokens, units, mask_prob, rng, model: SubwordModel,
                     table: SymbolTable, count_range: tuple[float, float] | None = None) -> CmlmSample:
    """count_range picks an exact mask count so the realized fraction stays
    inside [lo, hi]; without it, masking is Bernoulli(mask_prob) per position."""
    ids: list[int] = []
    forced: list[tuple[int, int]] = []  # char-mask positions fixed before masking
    subword_positions: list[int] = []
    for kind, payload in units:
        if kind == "word":
            for piece in encode_word(model, payload):
                subword_positions.append(len(ids))
                ids.append(table.subword_id(piece))
        else:
            cid = table.char_id(payload)
            cid = UNK if cid is None else cid
            if kind == "char_mask":
                forced.append((len(ids), cid))
                ids.append(MASK)
            else:
                ids.append(cid)
    if not ids:
        raise InputError("target side empty after encoding")

    chosen: list[int] = []
    if subword_positions and count_range is not None:
        lo, hi = count_range
        n = len(subword_positions)
        m_lo = max(1, math.ceil(lo * n - 1e-9))
        m_hi = max(m_lo, math.floor(hi * n + 1e-9))
        m = min(max(int(round(mask_prob * n)), m_lo), m_hi, n)
        picked = rng.choice(n, size=m, replace=False)
        chosen = [subword_positions[int(i)] for i in sorted(picked)]
    elif subword_positions:
        for _ in range(1000):
            draws = rng.random(len(subword_positions)) < mask_prob
            chosen = [p for p, hit in zip(subword_positions, draws) if hit]
            if chosen or forced:
                break
        if not chosen and not forced:
            chosen = [subword_positions[int(rng.integers(len(subword_positions)))]]
    elif not forced:
        pos = int(rng.integers(len(ids)))
        forced.append((pos, ids[pos]))
        ids[pos] = MASK

    gold = list(forced)
    corrupted = list(ids)
    for pos in chosen:
        gold.append((pos, corrupted[pos]))
        corrupted[pos] = MASK
    gold.sort()
    return CmlmSample(src_tokens, corrupted, gold)


def generate_cmlm_sample(pair: ParallelPair, mask_prob: float, rng: np.random.Generator,
                         model: SubwordModel, table: SymbolTable,
                         code_switch: CodeSwitch | None = None) -> CmlmSample:
    """Corrupt the subword-encoded target side with Bernoulli(mask_prob) masks.

    With code switching, converted tokens contribute character ids; their
    char-level masks come from the code-switch step, while Bernoulli masking
    applies to the remaining subword positions. At least one position ends up
    masked.
    """
    if not 0.0 < mask_prob <= 1.0:
        raise ConfigError(f"mask_prob {mask_prob} outside (0, 1]")
    if code_switch is None:
        units = [("word", tok) for tok in pair.tgt_tokens]
    else:
        units = _code_switch_tagged(pair.tgt_tokens, code_switch.table, rng,
                                    code_switch.p_token, code_switch.p_char_mask)
    return _cmlm_from_units(pair.src_tokens, units, mask_prob, rng, model, table)


def _wlac_row_cost(row: IterativeRow, model: SubwordModel) -> int:
    s = row.base
    n_ctx = sum(len(encode_word(model, w)) for w in s.left_context + s.right_context)
    return len(s.src_tokens) + 2 + n_ctx + len(s.typed) + len(row.decoded) + 4


def build_wlac_dataset(samples: Iterable[WlacSample], model: SubwordModel) -> Dataset:
    rows: list[IterativeRow] = []
    for sample in samples:
        rows.extend(expand_iterative_rows(sample, model))
    costs = [_wlac_row_cost(r, model) for r in rows]
    return Dataset("wlac", tuple(rows), tuple(costs))


def build_cmlm_dataset(pairs: Iterable[ParallelPair], mask_range: tuple[float, float],
                       rng: np.random.Generator, model: SubwordModel, table: SymbolTable,
                       code_switch: CodeSwitch | None = None, switch_frac: float = 0.5,
                       stats: dict | None = None) -> Dataset:
    """Static masked-LM dataset; mask_prob per sample ~ U(mask_range).

    A genuine range is realized as an exact per-sample mask count, so every
    sample's fraction lands inside the range; a degenerate range (lo == hi)
    masks per position with that probability. When a code-switch spec is
    given, switch_frac of the pairs (Bernoulli) go through conversion; the
    rest stay plain.
    """
    lo, hi = mask_range
    if not 0.0 < lo <= hi <= 1.0:
        raise ConfigError(f"bad mask range {mask_range}")
    rows = []
    n_tokens = 0
    n_converted = 0
    n_switched = 0
    for pair in pairs:
        switched = code_switch is not None and rng.random() < switch_frac
        if switched:
            units = _code_switch_tagged(pair.tgt_tokens, code_switch.table, rng,
                                        code_switch.p_token, code_switch.p_char_mask)
            n_switched += 1
        else:
            units = [("word", tok) for tok in pair.tgt_tokens]
        p = lo if lo == hi else float(rng.uniform(lo, hi))
        rows.append(_cmlm_from_units(pair.src_tokens, units, p, rng, model, table,
                                     count_range=None if lo == hi else (lo, hi)))
        n_tokens += len(pair.tgt_tokens)
        n_converted += len(pair.tgt_tokens) - sum(1 for kind, _ in units if kind == "word")
    if stats is not None:
        stats.update(tokens=n_tokens, converted=n_converted, switched=n_switched)
    costs = [len(r.src_tokens) + 2 + len(r.corrupted) for r in rows]
    return Dataset("cmlm", tuple(rows), tuple(costs))


class _EpochSampler:
    def __init__(self, dataset: Dataset, rng: np.random.Generator):
        self.dataset = dataset
        self.rng = rng
        self.order = rng.permutation(len(dataset))
        self.pos = 0

    def take(self, budget: int) -> list:
        if self.pos >= len(self.order):
            self.order = self.rng.permutation(len(self.dataset))
            self.pos = 0
        rows = []
        spent = 0
        while self.pos < len(self.order):  # a batch never spans epochs
            idx = int(self.order[self.pos])
            cost = self.dataset.costs[idx]
            if rows and spent + cost > budget:
                break
            rows.append(self.dataset.rows[idx])
            spent += cost
            self.pos += 1
            if spent >= budget:
                break
        return rows


def mix_datasets(d_wlac: Dataset | None, d_cmlm: Dataset | None, ratio: tuple[float, float],
                 batch_size: int, rng: np.random.Generator):
    """Infinite batch stream; each batch homogeneous, kind drawn by ratio weight.

    Rows are consumed without replacement inside an epoch and reshuffled
    between epochs, independently per dataset.
    """
    wa, wb = float(ratio[0]), float(ratio[1])
    if wa < 0 or wb < 0 or wa + wb <= 0:
        raise ConfigError(f"bad mixing ratio {ratio}")
    if batch_size < 1:
        raise ConfigError("batch_size must be positive")
    if wa > 0 and (d_wlac is None or len(d_wlac) == 0):
        raise ConfigError("wlac dataset required by ratio but empty")
    if wb > 0 and (d_cmlm is None or len(d_cmlm) == 0):
        raise ConfigError("cmlm dataset required by ratio but empty")
    p_wlac = wa / (wa + wb)
    samplers = {}
    if wa > 0:
        samplers["wlac"] = _EpochSampler(d_wlac, rng)
    if wb > 0:
        samplers["cmlm"] = _EpochSampler(d_cmlm, rng)

    def stream():
        while True:
            kind = "wlac" if (p_wlac >= 1.0 or (p_wlac > 0.0 and rng.random() < p_wlac)) else "cmlm"
            yield Batch(kind, samplers[kind].take(batch_size))

    return stream()


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def read_pairs(path) -> list[ParallelPair]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            src, tab, tgt = line.partition("\t")
            if not tab or not src.split() or not tgt.split():
                raise InputError(f"{path}:{lineno}: expected 'source<TAB>target'")
            pairs.append(ParallelPair(tuple(src.split()), tuple(tgt.split())))
    if not pairs:
        raise InputError(f"{path}: no pairs")
    return pairs


def write_pairs(pairs: Iterable[ParallelPair], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(f"{' '.join(p.src_tokens)}\t{' '.join(p.tgt_tokens)}\n")


def read_roman_table(path) -> dict[str, str]:
    table = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            word, tab, form = line.partition("\t")
            if not tab or not word or not form:
                raise InputError(f"{path}:{lineno}: expected 'word<TAB>romanization'")
            table[word] = form
    return table


def write_roman_table(table: Mapping[str, str], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for word in sorted(table):
            fh.write(f"{word}\t{table[word]}\n")


def write_wlac_jsonl(samples: Iterable[WlacSample], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            rec = {"x": list(s.src_tokens), "c_l": list(s.left_context), "c_r": list(s.right_context),
                   "s": s.typed, "w": s.target_word, "context_type": s.context_type}
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")


def read_wlac_jsonl(path) -> list[WlacSample]:
    samples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                samples.append(WlacSample(tuple(rec["x"]), tuple(rec["c_l"]), tuple(rec["c_r"]),
                                          rec["s"], rec["w"], rec["context_type"]))
            except (KeyError, ValueError, TypeError) as exc:
                raise InputError(f"{path}:{lineno}: bad record: {exc}") from exc
    return samples


def write_cmlm_jsonl(samples: Iterable[CmlmSample], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            rec = {"x": list(s.src_tokens), "corrupted": list(s.corrupted),
                   "gold_at_masks": [list(g) for g in s.gold_at_masks]}
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")


def read_cmlm_jsonl(path) -> list[CmlmSample]:
    samples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                samples.append(CmlmSample(tuple(rec["x"]), tuple(rec["corrupted"]),
                                          tuple((p, g) for p, g in rec["gold_at_masks"])))
            except (KeyError, ValueError, TypeError) as exc:
                raise InputError(f"{path}:{lineno}: bad record: {exc}") from exc
    return samples


def word_frequencies(pairs: Iterable[ParallelPair]) -> Counter:
    freqs = Counter()
    for pair in pairs:
        for tok in pair.tgt_tokens:
            freqs[tok] += 1
    return freqs


def write_freqs(freqs: Mapping[str, int], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for word in sorted(freqs):
            fh.write(f"{word}\t{freqs[word]}\n")


def read_freqs(path) -> dict[str, int]:
    freqs = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            word, tab, count = line.partition("\t")
            if not tab:
                raise InputError(f"{path}:{lineno}: expected 'word<TAB>count'")
            freqs[word] = int(count)
    return freqs


def typed_char_alphabet(pairs: Iterable[ParallelPair], roman_table: Mapping[str, str] | None = None) -> set[str]:
    """Characters the typed prefix can contain: target-word chars + romanizations."""
    chars = set()
    for pair in pairs:
        for tok in pair.tgt_tokens:
            chars.update(tok)
    if roman_table:
        for form in roman_table.values():
            chars.update(form)
    return chars
