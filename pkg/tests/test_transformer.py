import math

import numpy as np
import pytest

from wlac.autodiff import Tensor
from wlac.errors import ConfigError, ContractError
from wlac.transformer import (
    AttnWeights,
    TransformerConfig,
    decode,
    encode,
    init_params,
    multi_head_attention,
    sinusoidal_positions,
)

RNG = np.random.default_rng(7)


def small_cfg(**kw) -> TransformerConfig:
    base = dict(layers=2, heads=2, d_model=8, d_ff=16, dropout=0.0, max_len=32)
    base.update(kw)
    return TransformerConfig(**base)


def rand_weights(d: int, dtype=np.float64) -> AttnWeights:
    def m():
        return Tensor(RNG.normal(size=(d, d)).astype(dtype))

    def b():
        return Tensor(RNG.normal(size=d).astype(dtype))

    return AttnWeights(m(), b(), m(), b(), m(), b(), m(), b())


def identity_weights(d: int) -> AttnWeights:
    eye = lambda: Tensor(np.eye(d))
    zero = lambda: Tensor(np.zeros(d))
    w = AttnWeights(eye(), zero(), eye(), zero(), eye(), zero(), eye(), zero())
    w.wq = Tensor(np.zeros((d, d)))  # zero queries -> all scores equal
    return w


def oracle_attention(q, k, v, w: AttnWeights, heads: int, mask=None) -> np.ndarray:
    d = q.shape[1]
    dh = d // heads
    Q = q @ w.wq.data + w.bq.data
    K = k @ w.wk.data + w.bk.data
    V = v @ w.wv.data + w.bv.data
    slices = []
    for h in range(heads):
        sl = slice(h * dh, (h + 1) * dh)
        scores = Q[:, sl] @ K[:, sl].T / math.sqrt(dh)
        if mask is not None:
            scores = np.where(mask, scores, -np.inf)
        e = np.exp(scores - scores.max(axis=-1, keepdims=True))
        a = e / e.sum(axis=-1, keepdims=True)
        slices.append(a @ V[:, sl])
    return np.concatenate(slices, axis=1) @ w.wo.data + w.bo.data


def test_uniform_scores_average_values() -> None:
    d = 4
    v = RNG.normal(size=(5, d))
    q = Tensor(RNG.normal(size=(3, d)))
    k = Tensor(RNG.normal(size=(5, d)))
    out = multi_head_attention(q, k, Tensor(v), identity_weights(d), heads=2).data
    mean_row = v.mean(axis=0)
    for row in out:
        assert np.allclose(row, mean_row, atol=1e-6)


def test_masked_positions_zero_weight_and_renormalized() -> None:
    d = 8
    q = Tensor(RNG.normal(size=(4, d)))
    k = Tensor(RNG.normal(size=(6, d)))
    v = Tensor(RNG.normal(size=(6, d)))
    mask = np.ones((4, 6), dtype=bool)
    mask[:, 1] = False
    mask[2, 4] = False
    captured: list[np.ndarray] = []
    multi_head_attention(q, k, v, rand_weights(d), heads=2, attn_mask=mask, capture=captured)
    (w,) = captured
    assert w.shape == (1, 2, 4, 6)
    assert np.all(w[:, :, :, 1] == 0.0)
    assert np.all(w[:, :, 2, 4] == 0.0)
    assert np.abs(w.sum(axis=-1) - 1.0).max() < 1e-6


def test_attention_matches_per_head_oracle() -> None:
    for heads in (1, 2, 4):
        d = 8
        q = RNG.normal(size=(5, d))
        k = RNG.normal(size=(7, d))
        v = RNG.normal(size=(7, d))
        mask = RNG.random((5, 7)) > 0.25
        mask[:, 0] = True
        w = rand_weights(d)
        got = multi_head_attention(Tensor(q), Tensor(k), Tensor(v), w, heads=heads, attn_mask=mask).data
        want = oracle_attention(q, k, v, w, heads, mask)
        denom = np.maximum(np.abs(want), 1e-3)
        assert (np.abs(got - want) / denom).max() < 1e-6


def test_attention_shape_mismatch_rejected() -> None:
    d = 8
    q = Tensor(RNG.normal(size=(4, d)))
    k = Tensor(RNG.normal(size=(5, d)))
    v = Tensor(RNG.normal(size=(6, d)))
    with pytest.raises(ContractError):
        multi_head_attention(q, k, v, rand_weights(d), heads=2)
    bad_mask = np.ones((4, 9), dtype=bool)
    with pytest.raises(ContractError):
        multi_head_attention(q, k, Tensor(RNG.normal(size=(5, d))), rand_weights(d), heads=2, attn_mask=bad_mask)


def test_encode_output_shape() -> None:
    cfg = small_cfg()
    params = init_params(cfg, vocab_size=20, seed=0)
    out = encode(params, cfg, [1, 5, 7, 2])
    assert out.data.shape == (4, cfg.d_model)
    batched = encode(params, cfg, [[1, 5, 7, 2], [3, 3, 0, 0]], pad_mask=[[True] * 4, [True, True, False, False]])
    assert batched.data.shape == (2, 4, cfg.d_model)


def test_encode_single_equals_batched_row() -> None:
    cfg = small_cfg()
    params = init_params(cfg, vocab_size=20, seed=0)
    single = encode(params, cfg, [4, 9, 11]).data
    batched = encode(params, cfg, [[4, 9, 11]]).data
    assert np.array_equal(single, batched[0])


def test_encode_pad_isolation() -> None:
    cfg = small_cfg()
    params = init_params(cfg, vocab_size=20, seed=1)
    mask = [True, True, False, False]
    a = encode(params, cfg, [5, 9, 13, 17], pad_mask=mask).data
    b = encode(params, cfg, [5, 9, 17, 13], pad_mask=mask).data
    assert np.array_equal(a[:2], b[:2])


def test_encode_eval_mode_bit_identical() -> None:
    cfg = small_cfg(dropout=0.1)  # dropout configured but eval mode must ignore it
    params = init_params(cfg, vocab_size=20, seed=2)
    a = encode(params, cfg, [1, 2, 3]).data
    b = encode(params, cfg, [1, 2, 3]).data
    assert np.array_equal(a, b)


def test_encode_id_out_of_range_rejected() -> None:
    cfg = small_cfg()
    params = init_params(cfg, vocab_size=20, seed=0)
    with pytest.raises(ContractError):
        encode(params, cfg, [1, 25])


def test_encode_too_long_rejected() -> None:
    cfg = small_cfg(max_len=4)
    params = init_params(cfg, vocab_size=20, seed=0)
    with pytest.raises(ContractError):
        encode(params, cfg, [1, 2, 3, 4, 5])


def test_decode_logits_shape_and_bidirectional() -> None:
    cfg = small_cfg()
    vocab = 30
    params = init_params(cfg, vocab_size=vocab, seed=3)
    enc_out = encode(params, cfg, [1, 2, 3])
    left = [8, 9, 4, 10, 11]
    logits_a = decode(params, cfg, left, enc_out).data
    assert logits_a.shape == (5, vocab)
    right_changed = [8, 9, 4, 10, 12]
    logits_b = decode(params, cfg, right_changed, enc_out).data
    assert not np.allclose(logits_a[2], logits_b[2]), "mask-position logits must react to right context"


def test_decode_cross_attention_rows_sum_to_one_over_non_pad() -> None:
    cfg = small_cfg()
    params = init_params(cfg, vocab_size=30, seed=4)
    src = [[1, 2, 3, 0, 0], [4, 5, 6, 7, 8]]
    src_pad = [[True, True, True, False, False], [True] * 5]
    enc_out = encode(params, cfg, src, pad_mask=src_pad)
    capture: list[np.ndarray] = []
    decode(params, cfg, [[9, 4, 10], [11, 4, 12]], enc_out, cross_mask=src_pad, capture=capture)
    assert len(capture) == cfg.layers
    for w in capture:
        assert w.shape == (2, cfg.heads, 3, 5)
        assert np.abs(w.sum(axis=-1) - 1.0).max() < 1e-6
        assert np.all(w[0, :, :, 3:] == 0.0)


def test_sinusoidal_positions_analytic() -> None:
    pe = sinusoidal_positions(10, 8, np.float64)
    assert np.allclose(pe[0], [0, 1, 0, 1, 0, 1, 0, 1])
    assert pe[3, 0] == pytest.approx(math.sin(3.0))
    assert pe[3, 1] == pytest.approx(math.cos(3.0))
    assert pe[3, 2] == pytest.approx(math.sin(3.0 / 10000 ** (2 / 8)))
    assert pe[7, 5] == pytest.approx(math.cos(7.0 / 10000 ** (4 / 8)))


def test_init_params_deterministic() -> None:
    cfg = small_cfg()
    a = init_params(cfg, vocab_size=20, seed=5)
    b = init_params(cfg, vocab_size=20, seed=5)
    c = init_params(cfg, vocab_size=20, seed=6)
    assert sorted(a) == sorted(b)
    assert all(np.array_equal(a[k].data, b[k].data) for k in a)
    assert any(not np.array_equal(a[k].data, c[k].data) for k in a)


def test_config_validation() -> None:
    with pytest.raises(ConfigError):
        TransformerConfig(layers=2, heads=3, d_model=8, d_ff=16)
    with pytest.raises(ConfigError):
        TransformerConfig(layers=0, heads=2, d_model=8, d_ff=16)
    with pytest.raises(ConfigError):
        TransformerConfig(layers=1, heads=2, d_model=8, d_ff=16, dropout=1.0)


def test_config_round_trip() -> None:
    cfg = small_cfg(dropout=0.25)
    assert TransformerConfig.from_dict(cfg.to_dict()) == cfg
