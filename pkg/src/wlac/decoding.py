"""Iterative completion decoding.

One subword is predicted per step at the single mask anchor; the chosen
piece is folded back into the instruction segment and the model is queried
again, until [EOW] or the length cap. A joint beam ranks finished and
unfinished hypotheses together; the anchor distribution is restricted to
subword ids plus [EOW], since characters and other specials are never valid
completions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import transformer as tf
from .autodiff import Tensor
from .errors import ConfigError, ContractError
from .model import InstructionUnit, ModelParams, assemble_decoder_input, pad_id_batch, source_ids
from .symbols import EOW, SymbolTable
from .tokenizer import SubwordModel, decode_subwords


@dataclass(frozen=True)
class DecodeConfig:
    """use_typed=False hides typed characters from the model (the no-typed-input
    ablation); the typed prefix then only drives the hard_prefix filter."""
    beam: int = 4
    max_subwords: int = 8
    hard_prefix: bool = False
    top_k: int = 5
    use_typed: bool = True

    def __post_init__(self):
        if self.beam < 1 or self.max_subwords < 1 or self.top_k < 1:
            raise ConfigError("beam, max_subwords, and top_k must be positive")


@dataclass(frozen=True)
class Hypothesis:
    decoded: tuple[str, ...] = ()
    logprob: float = 0.0
    finished: bool = False
    key: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "decoded", tuple(self.decoded))
        object.__setattr__(self, "key", tuple(self.key))
        if self.logprob > 1e-6:
            raise ContractError(f"hypothesis logprob {self.logprob} above 0")


@dataclass
class DecodeState:
    typed: tuple[str, ...]
    hyps: list[Hypothesis]
    steps: int = 0

    @property
    def all_finished(self) -> bool:
        return all(h.finished for h in self.hyps)


@dataclass
class DecodeResult:
    candidates: list[tuple[str, float]] = field(default_factory=list)
    truncated: bool = False
    reason: str = ""


def init_state(s: str, cfg: DecodeConfig) -> DecodeState:
    if not s:
        raise ContractError("decoding needs at least one typed character")
    return DecodeState(tuple(s), [Hypothesis()])


def allowed_anchor_ids(table: SymbolTable) -> np.ndarray:
    """Symbol ids a completion step may choose: every subword plus [EOW]."""
    return np.array([EOW] + list(table.subword_id_range()), dtype=np.int64)


def encode_source_once(params: ModelParams, x_ids) -> Tensor:
    return tf.encode(params.tensors, params.config, np.asarray([list(x_ids)], dtype=np.int64))


def _anchor_log_softmax(params: ModelParams, enc: Tensor, decs, anchors,
                        allowed: np.ndarray) -> np.ndarray:
    """Restricted log-softmax rows [n_hyps, n_allowed] at each anchor."""
    dec_ids, dec_real = pad_id_batch(decs)
    b = dec_ids.shape[0]
    enc_b = Tensor(np.broadcast_to(enc.data, (b,) + enc.data.shape[1:]).copy())
    logits = tf.decode(params.tensors, params.config, dec_ids, enc_b, self_mask=dec_real)
    rows = logits.data[np.arange(b), np.asarray(anchors)].astype(np.float64)
    sub = rows[:, allowed]
    z = sub - sub.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def beam_step(params: ModelParams, x_ids, c_l, c_r, state: DecodeState, cfg: DecodeConfig,
              table: SymbolTable, subwords: SubwordModel, enc: Tensor | None = None) -> DecodeState:
    """Expand every unfinished hypothesis one subword; keep the best beam."""
    live = [h for h in state.hyps if not h.finished]
    if not live:
        raise ContractError("beam_step with no unfinished hypothesis")
    if enc is None:
        enc = encode_source_once(params, x_ids)
    allowed = allowed_anchor_ids(table)
    typed = state.typed if cfg.use_typed else ()
    decs, anchors = [], []
    for h in live:
        d = assemble_decoder_input(c_l, c_r, InstructionUnit(typed, h.decoded),
                                   table, subwords)
        decs.append(list(d.ids))
        anchors.append(d.mask_position)
    lsm = _anchor_log_softmax(params, enc, decs, anchors, allowed)

    pool = [h for h in state.hyps if h.finished]
    for i, h in enumerate(live):
        row = lsm[i]
        # per-parent top beam suffices for the joint top beam
        order = np.lexsort((allowed, -row))[: cfg.beam]
        for j in order:
            sid = int(allowed[j])
            lp = h.logprob + float(row[j])
            if sid == EOW:
                pool.append(Hypothesis(h.decoded, lp, True, h.key + (sid,)))
            else:
                pool.append(Hypothesis(h.decoded + (table.piece_of(sid),), lp, False,
                                       h.key + (sid,)))
    pool.sort(key=lambda h: (-h.logprob, h.key))
    return DecodeState(state.typed, pool[: cfg.beam], state.steps + 1)


def prefix_matches(word: str, s: str, roman_table=None) -> bool:
    if word.startswith(s):
        return True
    if roman_table:
        form = roman_table.get(word)
        return bool(form and form.startswith(s))
    return False


def decode_word(params: ModelParams, x, c_l, c_r, s: str, cfg: DecodeConfig,
                subwords: SubwordModel, table: SymbolTable, roman_table=None) -> DecodeResult:
    """Ranked completions of typed prefix s given source x and contexts.

    The source is encoded once and shared across all steps and hypotheses.
    Hypotheses that finish with nothing decoded assemble to the empty string
    and are discarded.
    """
    x_ids = source_ids(list(x), table, subwords)
    enc = encode_source_once(params, x_ids)
    state = init_state(s, cfg)
    while not state.all_finished and state.steps < cfg.max_subwords:
        state = beam_step(params, x_ids, c_l, c_r, state, cfg, table, subwords, enc)

    finished = [h for h in state.hyps if h.finished and h.decoded]
    truncated = not finished
    pool = finished if finished else [h for h in state.hyps if h.decoded]
    best: dict[str, float] = {}
    for h in pool:
        word = decode_subwords(subwords, list(h.decoded))
        if word and (word not in best or h.logprob > best[word]):
            best[word] = h.logprob
    if not best:
        return DecodeResult([], True, "nothing_decoded")
    if cfg.hard_prefix:
        best = {w: lp for w, lp in best.items() if prefix_matches(w, s, roman_table)}
        if not best:
            return DecodeResult([], truncated, "no_prefix_match")
    ranked = sorted(best.items(), key=lambda kv: (-kv[1], kv[0]))[: cfg.top_k]
    return DecodeResult(ranked, truncated, "truncated" if truncated else "")


def score_sequence(params: ModelParams, x, c_l, c_r, s: str, pieces,
                   table: SymbolTable, subwords: SubwordModel,
                   include_eow: bool = True, use_typed: bool = True) -> float:
    """Teacher-forced sum of restricted anchor log-softmax scores for pieces."""
    x_ids = source_ids(list(x), table, subwords)
    enc = encode_source_once(params, x_ids)
    allowed = allowed_anchor_ids(table)
    col = {int(sid): k for k, sid in enumerate(allowed)}
    steps = list(pieces) + ([None] if include_eow else [])
    typed = tuple(s) if use_typed else ()
    total = 0.0
    for t, piece in enumerate(steps):
        d = assemble_decoder_input(c_l, c_r, InstructionUnit(typed, tuple(pieces[:t])),
                                   table, subwords)
        lsm = _anchor_log_softmax(params, enc, [list(d.ids)], [d.mask_position], allowed)
        sid = EOW if piece is None else table.subword_id(piece)
        total += float(lsm[0, col[sid]])
    return total
