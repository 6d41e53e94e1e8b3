"""Transformer encoder/decoder built on the autodiff ops.

Pre-norm residual blocks, sinusoidal positions, bidirectional decoder
self-attention (conditional-masked decoding has no causal restriction).
Parameters live in a flat name→Tensor dict so checkpoints and the
optimizer can treat them uniformly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ContractError


@dataclass(frozen=True)
class TransformerConfig:
    layers: int = 2
    heads: int = 4
    d_model: int = 64
    d_ff: int = 256
    dropout: float = 0.1
    max_len: int = 256

    def __post_init__(self):
        if self.layers < 1 or self.heads < 1 or self.d_model < 1 or self.d_ff < 1 or self.max_len < 1:
            raise ConfigError("all transformer sizes must be positive")
        if self.d_model % self.heads != 0:
            raise ConfigError(f"d_model {self.d_model} not divisible by heads {self.heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout {self.dropout} outside [0, 1)")

    def to_dict(self):
        return {"layers": self.layers, "heads": self.heads, "d_model": self.d_model,
                "d_ff": self.d_ff, "dropout": self.dropout, "max_len": self.max_len}

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: d[k] for k in ("layers", "heads", "d_model", "d_ff", "dropout", "max_len")})


@dataclass
class AttnWeights:
    wq: Tensor
    bq: Tensor
    wk: Tensor
    bk: Tensor
    wv: Tensor
    bv: Tensor
    wo: Tensor
    bo: Tensor


_POS_CACHE = {}


def sinusoidal_positions(n: int, d_model: int, dtype=np.float32) -> np.ndarray:
    key = (n, d_model, np.dtype(dtype).str)
    hit = _POS_CACHE.get(key)
    if hit is not None:
        return hit
    pos = np.arange(n, dtype=np.float64)[:, None]
    dim = np.arange(0, d_model, 2, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, dim / d_model)
    pe = np.zeros((n, d_model), dtype=np.float64)
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle[:, : d_model // 2])
    pe = pe.astype(dtype)
    _POS_CACHE[key] = pe
    return pe


def init_params(cfg: TransformerConfig, vocab_size: int, seed: int = 0, dtype=np.float32) -> dict[str, Tensor]:
    if vocab_size < 1:
        raise ConfigError("vocab_size must be positive")
    rng = np.random.Generator(np.random.PCG64(seed))
    d, f = cfg.d_model, cfg.d_ff
    params: dict[str, Tensor] = {}

    def mat(name, fan_in, fan_out):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        params[name] = Tensor(rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype), requires_grad=True)

    def vec(name, n, value=0.0):
        params[name] = Tensor(np.full(n, value, dtype=dtype), requires_grad=True)

    params["embed"] = Tensor((rng.standard_normal((vocab_size, d)) * d ** -0.5).astype(dtype), requires_grad=True)
    for side in ("enc", "dec"):
        for i in range(cfg.layers):
            p = f"{side}{i}"
            vec(f"{p}.ln1.g", d, 1.0)
            vec(f"{p}.ln1.b", d)
            for w in ("wq", "wk", "wv", "wo"):
                mat(f"{p}.self.{w}", d, d)
            for b in ("bq", "bk", "bv", "bo"):
                vec(f"{p}.self.{b}", d)
            if side == "dec":
                vec(f"{p}.ln2.g", d, 1.0)
                vec(f"{p}.ln2.b", d)
                for w in ("wq", "wk", "wv", "wo"):
                    mat(f"{p}.cross.{w}", d, d)
                for b in ("bq", "bk", "bv", "bo"):
                    vec(f"{p}.cross.{b}", d)
                vec(f"{p}.ln3.g", d, 1.0)
                vec(f"{p}.ln3.b", d)
            else:
                vec(f"{p}.ln2.g", d, 1.0)
                vec(f"{p}.ln2.b", d)
            mat(f"{p}.ff.w1", d, f)
            vec(f"{p}.ff.b1", f)
            mat(f"{p}.ff.w2", f, d)
            vec(f"{p}.ff.b2", d)
        vec(f"{side}.ln.g", d, 1.0)
        vec(f"{side}.ln.b", d)
    mat("out.w", d, vocab_size)
    vec("out.b", vocab_size)
    return params


def _as_batched_ids(ids):
    arr = np.asarray(ids, dtype=np.int64)
    if arr.ndim == 1:
        return arr[None, :], True
    if arr.ndim == 2:
        return arr, False
    raise ContractError(f"ids must be 1-D or 2-D, got shape {arr.shape}")


def _as_mask4(mask):
    """Normalize an attention mask to broadcastable [*, *, Lq or 1, Lk] booleans.

    2-D input means a (len_q, len_k) attention mask, never a pad mask;
    callers with per-sequence pad masks use _key_mask4 instead.
    """
    if mask is None:
        return None
    arr = np.asarray(mask, dtype=bool)
    if arr.ndim == 1:
        arr = arr[None, None, None, :]
    elif arr.ndim == 2:
        arr = arr[None, None, :, :]
    elif arr.ndim == 3:
        arr = arr[:, None, :, :]
    elif arr.ndim != 4:
        raise ContractError(f"mask has bad rank {arr.ndim}")
    return arr


def _key_mask4(pad_mask, batch: int):
    """[B, Lk] True-means-real pad mask → [B, 1, 1, Lk] attend-to-keys mask."""
    if pad_mask is None:
        return None
    arr = np.asarray(pad_mask, dtype=bool)
    if arr.ndim == 1 and batch == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[0] != batch:
        raise ContractError(f"pad mask shape {arr.shape} does not match batch {batch}")
    return arr[:, None, None, :]


def multi_head_attention(q: Tensor, k: Tensor, v: Tensor, weights: AttnWeights, heads: int,
                         attn_mask=None, capture=None) -> Tensor:
    """Scaled dot-product attention; masked positions get exactly zero weight."""
    squeeze = q.data.ndim == 2
    qt = ad.reshape(q, (1,) + q.data.shape) if squeeze else q
    kt = ad.reshape(k, (1,) + k.data.shape) if k.data.ndim == 2 else k
    vt = ad.reshape(v, (1,) + v.data.shape) if v.data.ndim == 2 else v
    b, lq, d = qt.data.shape
    lk = kt.data.shape[1]
    if kt.data.shape[0] != b or vt.data.shape[:2] != (b, lk) or kt.data.shape[2] != d or vt.data.shape[2] != d:
        raise ContractError(f"attention shapes do not conform: q {qt.data.shape}, k {kt.data.shape}, v {vt.data.shape}")
    if d % heads != 0:
        raise ContractError("d_model not divisible by heads")
    dh = d // heads

    def split(x, w, bias, length):
        proj = ad.add(ad.matmul(x, w), bias)
        return ad.permute(ad.reshape(proj, (b, length, heads, dh)), (0, 2, 1, 3))

    qh = split(qt, weights.wq, weights.bq, lq)
    kh = split(kt, weights.wk, weights.bk, lk)
    vh = split(vt, weights.wv, weights.bv, lk)
    scores = ad.scale(ad.matmul(qh, ad.permute(kh, (0, 1, 3, 2))), 1.0 / math.sqrt(dh))
    mask4 = _as_mask4(attn_mask)
    if mask4 is not None and (mask4.shape[-1] != lk or mask4.shape[2] not in (1, lq)):
        raise ContractError(f"attention mask shape {mask4.shape} does not match (lq={lq}, lk={lk})")
    attn = ad.masked_softmax(scores, mask4)
    if capture is not None:
        capture.append(attn.data)
    ctx = ad.reshape(ad.permute(ad.matmul(attn, vh), (0, 2, 1, 3)), (b, lq, d))
    out = ad.add(ad.matmul(ctx, weights.wo), weights.bo)
    return ad.reshape(out, (lq, d)) if squeeze else out


def _attn_weights(params, prefix) -> AttnWeights:
    return AttnWeights(*(params[f"{prefix}.{n}"] for n in ("wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo")))


def _maybe_dropout(x, cfg, rng, train):
    if train and cfg.dropout > 0.0:
        if rng is None:
            raise ContractError("train-mode forward needs an rng for dropout")
        return ad.dropout(x, cfg.dropout, rng)
    return x


def _embed(params, cfg, ids_2d):
    b, length = ids_2d.shape
    if length > cfg.max_len:
        raise ContractError(f"sequence length {length} exceeds max_len {cfg.max_len}")
    x = ad.scale(ad.embedding(params["embed"], ids_2d), math.sqrt(cfg.d_model))
    pos = Tensor(sinusoidal_positions(length, cfg.d_model, params["embed"].data.dtype))
    return ad.add(x, pos)


def _ffn(params, prefix, x):
    h = ad.relu(ad.add(ad.matmul(x, params[f"{prefix}.ff.w1"]), params[f"{prefix}.ff.b1"]))
    return ad.add(ad.matmul(h, params[f"{prefix}.ff.w2"]), params[f"{prefix}.ff.b2"])


def encode(params, cfg: TransformerConfig, src_ids, pad_mask=None, *, rng=None, train=False) -> Tensor:
    """Embed source ids and run the self-attention stack; pads never attended."""
    ids, squeeze = _as_batched_ids(src_ids)
    b, _ = ids.shape
    key_mask = _key_mask4(pad_mask, b)
    x = _maybe_dropout(_embed(params, cfg, ids), cfg, rng, train)
    for i in range(cfg.layers):
        p = f"enc{i}"
        h = ad.layer_norm(x, params[f"{p}.ln1.g"], params[f"{p}.ln1.b"])
        a = multi_head_attention(h, h, h, _attn_weights(params, f"{p}.self"), cfg.heads, key_mask)
        x = ad.add(x, _maybe_dropout(a, cfg, rng, train))
        h = ad.layer_norm(x, params[f"{p}.ln2.g"], params[f"{p}.ln2.b"])
        x = ad.add(x, _maybe_dropout(_ffn(params, p, h), cfg, rng, train))
    x = ad.layer_norm(x, params["enc.ln.g"], params["enc.ln.b"])
    return ad.reshape(x, x.data.shape[1:]) if squeeze else x


def decode(params, cfg: TransformerConfig, dec_ids, enc_out: Tensor, self_mask=None, cross_mask=None,
           *, rng=None, train=False, capture=None) -> Tensor:
    """Bidirectional decoder over dec_ids with cross-attention into enc_out.

    Returns logits over the full symbol table. capture, when given, receives
    each layer's cross-attention weights (post-softmax, one array per layer).
    """
    ids, squeeze = _as_batched_ids(dec_ids)
    b, _ = ids.shape
    eo = ad.reshape(enc_out, (1,) + enc_out.data.shape) if enc_out.data.ndim == 2 else enc_out
    if eo.data.shape[0] != b:
        raise ContractError(f"enc_out batch {eo.data.shape[0]} != dec batch {b}")
    self4 = _key_mask4(self_mask, b)
    cross4 = _key_mask4(cross_mask, b)
    x = _maybe_dropout(_embed(params, cfg, ids), cfg, rng, train)
    for i in range(cfg.layers):
        p = f"dec{i}"
        h = ad.layer_norm(x, params[f"{p}.ln1.g"], params[f"{p}.ln1.b"])
        a = multi_head_attention(h, h, h, _attn_weights(params, f"{p}.self"), cfg.heads, self4)
        x = ad.add(x, _maybe_dropout(a, cfg, rng, train))
        h = ad.layer_norm(x, params[f"{p}.ln2.g"], params[f"{p}.ln2.b"])
        a = multi_head_attention(h, eo, eo, _attn_weights(params, f"{p}.cross"), cfg.heads, cross4,
                                 capture=capture)
        x = ad.add(x, _maybe_dropout(a, cfg, rng, train))
        h = ad.layer_norm(x, params[f"{p}.ln3.g"], params[f"{p}.ln3.b"])
        x = ad.add(x, _maybe_dropout(_ffn(params, p, h), cfg, rng, train))
    x = ad.layer_norm(x, params["dec.ln.g"], params["dec.ln.b"])
    logits = ad.add(ad.matmul(x, params["out.w"]), params["out.b"])
    return ad.reshape(logits, logits.data.shape[1:]) if squeeze else logits
