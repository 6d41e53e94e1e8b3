"""Decoder-input assembly and the training objectives of the completion model.

The decoder reads one flat id sequence: left-context subwords, then an
instruction segment ([TIP], typed character ids, and [SEP] plus the already
decoded subwords when any exist), then a single [MASK] anchor, then
right-context subwords. The model predicts the target word's next subword
(or [EOW]) at the anchor. The encoder reads the source wrapped in
[BOS]/[EOS]. Positions run 0,1,2,... across the whole assembled sequence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import transformer as tf
from .autodiff import Tensor
from .data import EOW_SYMBOL
from .errors import ContractError
from .symbols import BOS, EOS, EOW, MASK, PAD, SEP, TIP, UNK, SymbolTable
from .tokenizer import SubwordModel, encode_word
from .transformer import TransformerConfig

SEGMENTS = ("left_ctx", "instruction", "anchor", "right_ctx")


@dataclass(frozen=True)
class InstructionUnit:
    """Typed characters plus any subwords already fixed by earlier steps."""

    typed_chars: tuple[str, ...]
    decoded: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "typed_chars", tuple(self.typed_chars))
        object.__setattr__(self, "decoded", tuple(self.decoded))
        for ch in self.typed_chars:
            if len(ch) != 1:
                raise ContractError(f"typed entry {ch!r} is not a single character")


@dataclass(frozen=True)
class DecoderInput:
    ids: tuple[int, ...]
    mask_position: int
    segment_tags: tuple[str, ...]
    oov_typed: bool = False

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(int(i) for i in self.ids))
        object.__setattr__(self, "segment_tags", tuple(self.segment_tags))
        if len(self.ids) != len(self.segment_tags):
            raise ContractError("ids and segment tags differ in length")
        anchors = [i for i, sid in enumerate(self.ids) if sid == MASK]
        if anchors != [self.mask_position]:
            raise ContractError(f"need exactly one anchor at {self.mask_position}, found {anchors}")
        if self.segment_tags[self.mask_position] != "anchor":
            raise ContractError("anchor position carries a non-anchor tag")
        order = [tag for i, tag in enumerate(self.segment_tags)
                 if i == 0 or tag != self.segment_tags[i - 1]]
        if len(set(order)) != len(order) or any(t not in SEGMENTS for t in order):
            raise ContractError(f"segments out of order: {order}")
        ranks = [SEGMENTS.index(t) for t in order]
        if ranks != sorted(ranks):
            raise ContractError(f"segments out of order: {order}")


@dataclass
class ModelParams:
    """Flat name-keyed tensors plus the architecture they instantiate."""

    tensors: dict[str, Tensor]
    config: TransformerConfig

    @property
    def vocab_size(self) -> int:
        return self.tensors["out.w"].data.shape[1]

    def clone(self) -> "ModelParams":
        """Independent copy; mutating one side never touches the other."""
        tensors = {name: Tensor(t.data.copy(), requires_grad=t.requires_grad)
                   for name, t in self.tensors.items()}
        return ModelParams(tensors, self.config)


def new_model(config: TransformerConfig, vocab_size: int, seed: int = 0,
              dtype=np.float32) -> ModelParams:
    return ModelParams(tf.init_params(config, vocab_size, seed, dtype), config)


def word_subword_ids(word: str, table: SymbolTable, model: SubwordModel) -> list[int]:
    return [table.subword_id(p) for p in encode_word(model, word)]


def context_subword_ids(words, table: SymbolTable, model: SubwordModel) -> list[int]:
    ids: list[int] = []
    for w in words:
        ids.extend(word_subword_ids(w, table, model))
    return ids


def source_ids(src_tokens, table: SymbolTable, model: SubwordModel) -> list[int]:
    """Encoder input ids: [BOS], subwords of every source token, [EOS]."""
    return [BOS] + context_subword_ids(src_tokens, table, model) + [EOS]


def assemble_decoder_input(c_l, c_r, iu: InstructionUnit, table: SymbolTable,
                           model: SubwordModel) -> DecoderInput:
    """Left subwords, [TIP] + typed chars (+ [SEP] + decoded), [MASK], right subwords.

    A typed character outside the table's alphabet maps to [UNK] and sets
    oov_typed instead of failing; everything else must be encodable.
    """
    ids: list[int] = []
    tags: list[str] = []
    for sid in context_subword_ids(c_l, table, model):
        ids.append(sid)
        tags.append("left_ctx")
    ids.append(TIP)
    tags.append("instruction")
    oov = False
    for ch in iu.typed_chars:
        cid = table.char_id(ch)
        if cid is None:
            cid = UNK
            oov = True
        ids.append(cid)
        tags.append("instruction")
    if iu.decoded:
        ids.append(SEP)
        tags.append("instruction")
        for piece in iu.decoded:
            ids.append(table.subword_id(piece))
            tags.append("instruction")
    anchor = len(ids)
    ids.append(MASK)
    tags.append("anchor")
    for sid in context_subword_ids(c_r, table, model):
        ids.append(sid)
        tags.append("right_ctx")
    return DecoderInput(tuple(ids), anchor, tuple(tags), oov)


def target_symbol_id(target: str, table: SymbolTable) -> int:
    """Training target at the anchor: a subword id, or [EOW] for the end step."""
    return EOW if target == EOW_SYMBOL else table.subword_id(target)


def pad_id_batch(seqs):
    """Right-pad id sequences with [PAD]; returns (ids [B, L], real-position mask)."""
    if not seqs:
        raise ContractError("cannot pad an empty batch")
    width = max(len(s) for s in seqs)
    ids = np.full((len(seqs), width), PAD, dtype=np.int64)
    real = np.zeros((len(seqs), width), dtype=bool)
    for i, s in enumerate(seqs):
        ids[i, : len(s)] = s
        real[i, : len(s)] = True
    return ids, real


def batched_logits(params: ModelParams, srcs, decs, *, rng=None, train=False,
                   capture=None):
    """Run encoder and decoder over padded batches; returns ([B, L, V], dec mask)."""
    src_ids, src_real = pad_id_batch(srcs)
    dec_ids, dec_real = pad_id_batch(decs)
    enc = tf.encode(params.tensors, params.config, src_ids, src_real, rng=rng, train=train)
    logits = tf.decode(params.tensors, params.config, dec_ids, enc, self_mask=dec_real,
                       cross_mask=src_real, rng=rng, train=train, capture=capture)
    return logits, dec_real


def predict_mask_logits(params: ModelParams, x_ids, dec_in: DecoderInput) -> Tensor:
    """Anchor-row logits over the whole symbol table for one sample."""
    logits, _ = batched_logits(params, [list(x_ids)], [list(dec_in.ids)])
    row = ad.take_rows(logits, np.array([0]), np.array([dec_in.mask_position]))
    return ad.reshape(row, (params.vocab_size,))


def _wlac_forward(params, rows, table, model, *, rng=None, train=False, use_typed=True):
    srcs, decs, anchors, targets = [], [], [], []
    for row in rows:
        base = row.base
        iu = InstructionUnit(tuple(base.typed) if use_typed else (), row.decoded)
        dec_in = assemble_decoder_input(base.left_context, base.right_context, iu, table, model)
        srcs.append(source_ids(base.src_tokens, table, model))
        decs.append(list(dec_in.ids))
        anchors.append(dec_in.mask_position)
        targets.append(target_symbol_id(row.target, table))
    logits, _ = batched_logits(params, srcs, decs, rng=rng, train=train)
    picked = ad.take_rows(logits, np.arange(len(rows)), np.asarray(anchors))
    return picked, np.asarray(targets, dtype=np.int64)


def wlac_loss(params: ModelParams, rows, table: SymbolTable, model: SubwordModel,
              *, rng=None, train=False, use_typed=True) -> Tensor:
    """Mean anchor cross-entropy over a batch of iterative completion rows.

    use_typed=False hides the typed characters from the instruction segment,
    leaving only decoded feedback; used by the no-typed-input ablation.
    """
    if not rows:
        raise ContractError("completion loss over an empty batch")
    picked, targets = _wlac_forward(params, rows, table, model, rng=rng, train=train,
                                    use_typed=use_typed)
    return ad.cross_entropy(picked, targets)


def cmlm_loss(params: ModelParams, rows, table: SymbolTable, model: SubwordModel,
              *, rng=None, train=False) -> Tensor:
    """Mean cross-entropy over every masked position of a masked-LM batch."""
    if not rows:
        raise ContractError("masked-LM loss over an empty batch")
    srcs, decs, b_idx, p_idx, targets = [], [], [], [], []
    for i, row in enumerate(rows):
        srcs.append(source_ids(row.src_tokens, table, model))
        decs.append(list(row.corrupted))
        for pos, gold in row.gold_at_masks:
            b_idx.append(i)
            p_idx.append(pos)
            targets.append(gold)
    logits, _ = batched_logits(params, srcs, decs, rng=rng, train=train)
    picked = ad.take_rows(logits, np.asarray(b_idx), np.asarray(p_idx))
    return ad.cross_entropy(picked, np.asarray(targets, dtype=np.int64))


def joint_loss(params: ModelParams, wlac_rows, cmlm_rows, table: SymbolTable,
               model: SubwordModel, *, rng=None, train=False, use_typed=True) -> Tensor:
    """Sum of the completion and masked-LM terms; an empty batch contributes 0."""
    if not wlac_rows and not cmlm_rows:
        raise ContractError("joint loss needs at least one non-empty batch")
    terms = []
    if wlac_rows:
        terms.append(wlac_loss(params, wlac_rows, table, model, rng=rng, train=train,
                               use_typed=use_typed))
    if cmlm_rows:
        terms.append(cmlm_loss(params, cmlm_rows, table, model, rng=rng, train=train))
    return terms[0] if len(terms) == 1 else ad.add(terms[0], terms[1])
