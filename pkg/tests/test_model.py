import math

import numpy as np
import pytest

from wlac import autodiff as ad
from wlac import transformer as tf
from wlac.autodiff import Tape, Tensor, backward
from wlac.data import CmlmSample, EOW_SYMBOL, IterativeRow, WlacSample, expand_iterative_rows
from wlac.errors import ContractError
from wlac.model import (
    DecoderInput,
    InstructionUnit,
    assemble_decoder_input,
    batched_logits,
    cmlm_loss,
    joint_loss,
    new_model,
    pad_id_batch,
    predict_mask_logits,
    source_ids,
    target_symbol_id,
    wlac_loss,
)
from wlac.optim import AdamState, adam_update
from wlac.symbols import BOS, EOS, EOW, MASK, SEP, TIP, UNK, build_symbol_table
from wlac.tokenizer import SubwordModel, encode_word
from wlac.transformer import TransformerConfig


def tiny_model() -> SubwordModel:
    chars = [(ch, -6.0) for ch in "abcdehiklnoprstuwx"]
    pieces = [("spa", -1.0), ("cious", -1.25), ("he", -1.5), ("llo", -1.5),
              ("pla", -1.2), ("wo", -1.3), ("ld", -1.4), ("the", -1.1)]
    return SubwordModel(sorted(chars + pieces))


MODEL = tiny_model()
TABLE = build_symbol_table(MODEL, set("abcdehiklnoprstuwx"))
CFG = TransformerConfig(layers=1, heads=2, d_model=16, d_ff=32, dropout=0.0, max_len=64)


def char_ids(s: str) -> list[int]:
    return [TABLE.char_id(ch) for ch in s]


def sub_ids(word: str) -> list[int]:
    return [TABLE.subword_id(p) for p in encode_word(MODEL, word)]


def sample(context_type: str = "bi", typed: str = "sp", word: str = "spacious",
           left=("the",), right=("world",)) -> WlacSample:
    lefts = left if context_type in ("prefix", "bi") else ()
    rights = right if context_type in ("suffix", "bi") else ()
    return WlacSample(("the", "plan"), lefts, rights, typed, word, context_type)


def softmax(v: np.ndarray) -> np.ndarray:
    z = v - v.max()
    e = np.exp(z)
    return e / e.sum()


def log_softmax_np(v: np.ndarray) -> np.ndarray:
    z = v - v.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def test_assemble_typed_only() -> None:
    iu = InstructionUnit(tuple("sp"))
    d = assemble_decoder_input((), (), iu, TABLE, MODEL)
    assert list(d.ids) == [TIP] + char_ids("sp") + [MASK]
    assert d.mask_position == 3
    assert d.segment_tags == ("instruction", "instruction", "instruction", "anchor")
    assert not d.oov_typed


def test_assemble_with_decoded() -> None:
    iu = InstructionUnit(tuple("sp"), ("spa",))
    d = assemble_decoder_input((), (), iu, TABLE, MODEL)
    assert list(d.ids) == [TIP] + char_ids("sp") + [SEP, TABLE.subword_id("spa"), MASK]
    assert d.mask_position == len(d.ids) - 1


def test_assemble_bi_context_order() -> None:
    iu = InstructionUnit(tuple("sp"))
    d = assemble_decoder_input(("the",), ("world",), iu, TABLE, MODEL)
    left = sub_ids("the")
    right = sub_ids("world")
    assert list(d.ids[: len(left)]) == left
    assert d.ids[len(left)] == TIP
    assert list(d.ids[-len(right):]) == right
    assert d.ids[d.mask_position] == MASK
    assert d.segment_tags[: len(left)] == ("left_ctx",) * len(left)
    assert d.segment_tags[-len(right):] == ("right_ctx",) * len(right)
    assert d.segment_tags[d.mask_position] == "anchor"


def test_assemble_multiword_contexts_concatenate() -> None:
    iu = InstructionUnit(tuple("h"))
    d = assemble_decoder_input(("the", "plan"), ("was", "old"), iu, TABLE, MODEL)
    left = sub_ids("the") + sub_ids("plan")
    assert list(d.ids[: len(left)]) == left


def test_assemble_oov_typed_char_maps_to_unk() -> None:
    iu = InstructionUnit(tuple("sq"))
    d = assemble_decoder_input((), (), iu, TABLE, MODEL)
    assert d.oov_typed
    assert d.ids[2] == UNK


def test_decoded_growth_steps() -> None:
    pieces = encode_word(MODEL, "spacious")
    assert len(pieces) >= 2
    sizes = []
    for k in range(len(pieces) + 1):
        iu = InstructionUnit(tuple("sp"), tuple(pieces[:k]))
        sizes.append(len(assemble_decoder_input((), (), iu, TABLE, MODEL).ids))
    assert sizes[1] - sizes[0] == 2
    for a, b in zip(sizes[1:], sizes[2:]):
        assert b - a == 1


def test_decoder_input_validation() -> None:
    with pytest.raises(ContractError):
        DecoderInput((TIP, 9), 1, ("instruction", "anchor"))
    with pytest.raises(ContractError):
        DecoderInput((MASK, MASK), 0, ("anchor", "anchor"))
    with pytest.raises(ContractError):
        DecoderInput((TIP, MASK), 0, ("instruction", "anchor"))
    with pytest.raises(ContractError):
        DecoderInput((TIP, MASK), 1, ("instruction",))
    with pytest.raises(ContractError):
        DecoderInput((9, MASK, 9), 1, ("right_ctx", "anchor", "left_ctx"))
    with pytest.raises(ContractError):
        DecoderInput((9, MASK, 9), 1, ("left_ctx", "anchor", "left_ctx"))


def test_instruction_unit_rejects_multichar_entries() -> None:
    with pytest.raises(ContractError):
        InstructionUnit(("sp",))


def test_source_ids_framing() -> None:
    ids = source_ids(("the", "plan"), TABLE, MODEL)
    assert ids[0] == BOS and ids[-1] == EOS
    assert ids[1:-1] == sub_ids("the") + sub_ids("plan")


def test_target_symbol_id() -> None:
    assert target_symbol_id(EOW_SYMBOL, TABLE) == EOW
    assert target_symbol_id("spa", TABLE) == TABLE.subword_id("spa")


def test_pad_id_batch() -> None:
    ids, real = pad_id_batch([[5, 6], [7, 8, 9]])
    assert ids.shape == (2, 3) and ids[0, 2] == 0
    assert real.tolist() == [[True, True, False], [True, True, True]]


def test_predict_logits_shape_and_softmax() -> None:
    params = new_model(CFG, TABLE.size, seed=1)
    d = assemble_decoder_input(("the",), ("world",), InstructionUnit(tuple("sp")), TABLE, MODEL)
    logits = predict_mask_logits(params, source_ids(("the", "plan"), TABLE, MODEL), d)
    assert logits.data.shape == (TABLE.size,)
    assert abs(softmax(logits.data.astype(np.float64)).sum() - 1.0) < 1e-6


def test_predict_matches_direct_composition() -> None:
    params = new_model(CFG, TABLE.size, seed=2)
    x = source_ids(("the", "plan"), TABLE, MODEL)
    d = assemble_decoder_input(("the",), ("world",), InstructionUnit(tuple("sp")), TABLE, MODEL)
    got = predict_mask_logits(params, x, d).data

    enc = tf.encode(params.tensors, params.config, x)
    full = tf.decode(params.tensors, params.config, list(d.ids), enc)
    want = full.data[d.mask_position]
    assert np.allclose(got, want, atol=1e-6)


def test_logits_depend_on_both_contexts() -> None:
    params = new_model(CFG, TABLE.size, seed=3)
    x = source_ids(("the", "plan"), TABLE, MODEL)

    def anchor(left, right):
        d = assemble_decoder_input(left, right, InstructionUnit(tuple("sp")), TABLE, MODEL)
        return predict_mask_logits(params, x, d).data

    base = anchor(("the",), ("world",))
    assert not np.allclose(base, anchor(("plan",), ("world",)), atol=1e-7)
    assert not np.allclose(base, anchor(("the",), ("hello",)), atol=1e-7)


def test_uniform_logit_loss_is_ln_vocab() -> None:
    params = new_model(CFG, TABLE.size, seed=4)
    params.tensors["out.w"].data[:] = 0.0
    params.tensors["out.b"].data[:] = 0.0
    rows = expand_iterative_rows(sample(), MODEL)
    loss = wlac_loss(params, rows, TABLE, MODEL)
    assert abs(float(loss.data) - math.log(TABLE.size)) < 1e-6


def test_wlac_loss_matches_manual_nll() -> None:
    params = new_model(CFG, TABLE.size, seed=5)
    rows = expand_iterative_rows(sample(), MODEL) + expand_iterative_rows(
        sample("prefix", typed="he", word="hello"), MODEL)
    loss = float(wlac_loss(params, rows, TABLE, MODEL).data)

    nlls = []
    for row in rows:
        base = row.base
        d = assemble_decoder_input(base.left_context, base.right_context,
                                   InstructionUnit(tuple(base.typed), row.decoded), TABLE, MODEL)
        logits = predict_mask_logits(params, source_ids(base.src_tokens, TABLE, MODEL), d)
        lp = log_softmax_np(logits.data.astype(np.float64))
        nlls.append(-lp[target_symbol_id(row.target, TABLE)])
    assert abs(loss - float(np.mean(nlls))) < 1e-5


def test_duplicated_rows_keep_mean_loss() -> None:
    params = new_model(CFG, TABLE.size, seed=6)
    rows = expand_iterative_rows(sample(), MODEL)
    one = float(wlac_loss(params, rows, TABLE, MODEL).data)
    two = float(wlac_loss(params, rows + rows, TABLE, MODEL).data)
    assert abs(one - two) < 1e-6


def make_cmlm_rows() -> list[CmlmSample]:
    ids_a = sub_ids("the") + sub_ids("plan")
    ids_b = sub_ids("hello") + sub_ids("world")
    row_a = CmlmSample(("the", "plan"), [MASK] + ids_a[1:], [(0, ids_a[0])])
    corrupted = list(ids_b)
    golds = [(1, corrupted[1]), (2, corrupted[2])]
    corrupted[1] = MASK
    corrupted[2] = MASK
    row_b = CmlmSample(("he", "said"), corrupted, golds)
    return [row_a, row_b]


def test_cmlm_loss_matches_manual_nll() -> None:
    params = new_model(CFG, TABLE.size, seed=7)
    rows = make_cmlm_rows()
    loss = float(cmlm_loss(params, rows, TABLE, MODEL).data)

    nlls = []
    for row in rows:
        srcs = [source_ids(row.src_tokens, TABLE, MODEL)]
        logits, _ = batched_logits(params, srcs, [list(row.corrupted)])
        lp = log_softmax_np(logits.data[0].astype(np.float64))
        for pos, gold in row.gold_at_masks:
            nlls.append(-lp[pos, gold])
    assert abs(loss - float(np.mean(nlls))) < 1e-5


def test_joint_loss_additivity_and_reductions() -> None:
    params = new_model(CFG, TABLE.size, seed=8)
    wrows = expand_iterative_rows(sample(), MODEL)
    crows = make_cmlm_rows()
    w = float(wlac_loss(params, wrows, TABLE, MODEL).data)
    c = float(cmlm_loss(params, crows, TABLE, MODEL).data)
    j = float(joint_loss(params, wrows, crows, TABLE, MODEL).data)
    assert abs(j - (w + c)) < 1e-6
    assert float(joint_loss(params, wrows, [], TABLE, MODEL).data) == w
    assert float(joint_loss(params, [], crows, TABLE, MODEL).data) == c
    with pytest.raises(ContractError):
        joint_loss(params, [], [], TABLE, MODEL)


def test_empty_batches_rejected() -> None:
    params = new_model(CFG, TABLE.size, seed=9)
    with pytest.raises(ContractError):
        wlac_loss(params, [], TABLE, MODEL)
    with pytest.raises(ContractError):
        cmlm_loss(params, [], TABLE, MODEL)


def test_dropout_training_path_is_seeded() -> None:
    cfg = TransformerConfig(layers=1, heads=2, d_model=16, d_ff=32, dropout=0.3, max_len=64)
    params = new_model(cfg, TABLE.size, seed=10)
    rows = expand_iterative_rows(sample(), MODEL)
    a = float(wlac_loss(params, rows, TABLE, MODEL, rng=np.random.default_rng(0), train=True).data)
    b = float(wlac_loss(params, rows, TABLE, MODEL, rng=np.random.default_rng(0), train=True).data)
    c = float(wlac_loss(params, rows, TABLE, MODEL, rng=np.random.default_rng(1), train=True).data)
    assert a == b
    assert a != c


def overfit_rows() -> list[IterativeRow]:
    # unique first letters so no two rows share an input with different targets
    words = ["spacious", "hello", "world", "plan", "the", "cloud", "bike", "index"]
    rows: list[IterativeRow] = []
    for i, w in enumerate(words):
        typed = w[: 1 + i % 2]
        s = WlacSample(("the", "plan"), ("the",), ("world",), typed, w, "bi")
        rows.extend(expand_iterative_rows(s, MODEL))
    return rows[:50]


def test_overfit_small_batch_reaches_low_loss() -> None:
    cfg = TransformerConfig(layers=1, heads=2, d_model=32, d_ff=64, dropout=0.0, max_len=64)
    params = new_model(cfg, TABLE.size, seed=11)
    rows = overfit_rows()
    state = AdamState()
    last = None
    for _ in range(200):
        with Tape() as tape:
            loss = wlac_loss(params, rows, TABLE, MODEL)
        grads = backward(tape, loss, params=list(params.tensors.values()))
        named = {name: grads[t] for name, t in params.tensors.items()}
        adam_update(params.tensors, named, state, lr=2e-3)
        last = float(loss.data)
    assert last is not None and last < 0.1, f"final loss {last}"


def fd_grad_entries(f, x: np.ndarray, entries, h: float = 1e-3) -> list[float]:
    out = []
    for idx in entries:
        orig = x[idx]
        x[idx] = orig + h
        fp = f()
        x[idx] = orig - h
        fm = f()
        x[idx] = orig
        out.append((fp - fm) / (2.0 * h))
    return out


def test_full_model_gradcheck() -> None:
    cfg = TransformerConfig(layers=1, heads=2, d_model=4, d_ff=8, dropout=0.0, max_len=64)
    params = new_model(cfg, TABLE.size, seed=12, dtype=np.float64)
    wrows = expand_iterative_rows(sample(), MODEL)[:2]
    crows = make_cmlm_rows()[:1]

    def build():
        return joint_loss(params, wrows, crows, TABLE, MODEL)

    with Tape() as tape:
        loss = build()
    grads = backward(tape, loss, params=list(params.tensors.values()))

    def value() -> float:
        return float(build().data)

    rng = np.random.default_rng(99)
    worst = 0.0
    for name, tensor in sorted(params.tensors.items()):
        x = tensor.data
        flat = [np.unravel_index(i, x.shape) for i in range(x.size)]
        if x.size > 64:
            keep = rng.choice(x.size, size=16, replace=False)
            flat = [np.unravel_index(int(i), x.shape) for i in keep]
        fd = np.array(fd_grad_entries(value, x, flat))
        got = np.array([grads[tensor][idx] for idx in flat])
        denom = np.maximum(np.maximum(np.abs(fd), np.abs(got)), 1e-2)
        err = float((np.abs(fd - got) / denom).max())
        worst = max(worst, err)
        assert err < 1e-3, f"{name}: rel err {err:.2e}"
    assert worst < 1e-3
