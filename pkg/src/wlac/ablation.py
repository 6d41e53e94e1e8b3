"""Reduced baselines the full system is measured against.

Two cut-down systems share the full model's trunk:

- The no-typed-input variant hides typed characters from the instruction
  segment and applies them only as a post-hoc prefix filter. It is reached
  through the ``use_typed=False`` switches on the loss functions, the
  trainer, and DecodeConfig; nothing here duplicates that path.
- The word-level head keeps the trunk but replaces the output projection
  with a closed vocabulary of whole training words and predicts in one
  shot at the anchor. Words outside that vocabulary are unreachable, which
  is the point of the comparison.
"""

from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from . import transformer as tf
from .autodiff import Tape, Tensor, backward
from .errors import ConfigError, ContractError
from .model import InstructionUnit, ModelParams, assemble_decoder_input, batched_logits, \
    source_ids
from .optim import AdamState, adam_update
from .symbols import SymbolTable
from .tokenizer import SubwordModel
from .training import TrainPlan, lr_at
from .transformer import TransformerConfig


def word_vocabulary(words) -> tuple[str, ...]:
    vocab = tuple(sorted(set(words)))
    if not vocab:
        raise ConfigError("word head needs a non-empty vocabulary")
    return vocab


def _fresh_head(config: TransformerConfig, n_words: int, seed: int, dtype):
    rng = np.random.Generator(np.random.PCG64(seed + 101))
    d = config.d_model
    limit = math.sqrt(6.0 / (d + n_words))
    w = Tensor(rng.uniform(-limit, limit, size=(d, n_words)).astype(dtype),
               requires_grad=True)
    b = Tensor(np.zeros(n_words, dtype=dtype), requires_grad=True)
    return w, b


def new_word_head_model(config: TransformerConfig, table_size: int, words,
                        seed: int = 0, dtype=np.float32) -> ModelParams:
    """Trunk identical to new_model(seed); only the output layer is resized."""
    words = word_vocabulary(words)
    tensors = tf.init_params(config, table_size, seed=seed, dtype=dtype)
    tensors["out.w"], tensors["out.b"] = _fresh_head(config, len(words), seed, dtype)
    return ModelParams(tensors, config)


def word_head_from_trunk(trunk: ModelParams, words, seed: int = 0) -> ModelParams:
    """Copy an existing (e.g. pre-trained) trunk and attach a fresh word head."""
    words = word_vocabulary(words)
    tensors = {name: Tensor(t.data.copy(), requires_grad=True)
               for name, t in trunk.tensors.items()}
    dtype = trunk.tensors["out.w"].data.dtype
    tensors["out.w"], tensors["out.b"] = _fresh_head(trunk.config, len(words), seed, dtype)
    return ModelParams(tensors, trunk.config)


def _anchor_logits(params: ModelParams, samples, table: SymbolTable,
                   subwords: SubwordModel, rng=None, train=False) -> Tensor:
    srcs, decs, anchors = [], [], []
    for s in samples:
        d = assemble_decoder_input(s.left_context, s.right_context,
                                   InstructionUnit(tuple(s.typed)), table, subwords)
        srcs.append(source_ids(s.src_tokens, table, subwords))
        decs.append(list(d.ids))
        anchors.append(d.mask_position)
    logits, _ = batched_logits(params, srcs, decs, rng=rng, train=train)
    return ad.take_rows(logits, np.arange(len(samples)), np.asarray(anchors))


def word_head_loss(params: ModelParams, samples, words, table: SymbolTable,
                   subwords: SubwordModel, *, rng=None, train=False) -> Tensor:
    """Mean cross-entropy of the gold word index at the anchor."""
    samples = list(samples)
    if not samples:
        raise ContractError("word-head loss over an empty batch")
    index = {w: i for i, w in enumerate(words)}
    try:
        targets = np.asarray([index[s.target_word] for s in samples], dtype=np.int64)
    except KeyError as err:
        raise ContractError(f"target word {err.args[0]!r} outside the head vocabulary")
    picked = _anchor_logits(params, samples, table, subwords, rng=rng, train=train)
    return ad.cross_entropy(picked, targets)


def word_head_predictions(params: ModelParams, samples, words, table: SymbolTable,
                          subwords: SubwordModel, batch_size: int = 64):
    """(word, logprob) per sample: argmax preferring words that extend the
    typed prefix, falling back to the global argmax when none does."""
    words = tuple(words)
    samples = list(samples)
    out = []
    for start in range(0, len(samples), batch_size):
        chunk = samples[start: start + batch_size]
        rows = _anchor_logits(params, chunk, table, subwords).data.astype(np.float64)
        z = rows - rows.max(axis=1, keepdims=True)
        lsm = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        for s, lp in zip(chunk, lsm):
            cand = [i for i, w in enumerate(words) if w.startswith(s.typed)]
            pool = cand if cand else range(len(words))
            best = max(pool, key=lambda i: (lp[i], -i))
            out.append((words[best], float(lp[best])))
    return out


def word_head_predict(params: ModelParams, sample, words, table: SymbolTable,
                      subwords: SubwordModel):
    return word_head_predictions(params, [sample], words, table, subwords)[0]


def train_word_head(plan: TrainPlan, samples, words, table: SymbolTable,
                    subwords: SubwordModel, config: TransformerConfig | None = None,
                    init: ModelParams | None = None, dtype=np.float32):
    """Adam loop over single-shot samples; returns (params, log rows)."""
    samples = list(samples)
    if not samples:
        raise ConfigError("word-head training needs samples")
    words = word_vocabulary(words)
    if init is None:
        if config is None:
            raise ConfigError("train_word_head needs either an init model or a config")
        init = new_word_head_model(config, table.size, words, seed=plan.seed, dtype=dtype)
    else:
        init = init.clone()
    costs = [len(s.src_tokens) + len(s.left_context) + len(s.right_context) + 4
             for s in samples]
    per_batch = max(1, int(plan.batch_tokens // max(1, sum(costs) / len(costs))))
    rng = np.random.default_rng(plan.seed)
    drop_rng = np.random.default_rng(plan.seed + 1)
    state = AdamState()
    queue: list[int] = []
    log = []
    for step in range(1, plan.steps + 1):
        while len(queue) < per_batch:
            queue.extend(int(i) for i in rng.permutation(len(samples)))
        batch = [samples[queue.pop()] for _ in range(per_batch)]
        lr = lr_at(step, plan)
        with Tape() as tape:
            loss = word_head_loss(init, batch, words, table, subwords,
                                  rng=drop_rng, train=True)
        grads = backward(tape, loss, params=list(init.tensors.values()))
        named = {name: grads[t] for name, t in init.tensors.items()}
        adam_update(init.tensors, named, state, lr)
        if step == 1 or step == plan.steps or step % plan.log_every == 0:
            log.append({"step": step, "lr": lr, "loss": float(loss.data)})
    return init, log
