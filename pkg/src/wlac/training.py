"""Training phases: masked-LM pretraining, multitask finetuning, the
inverse-square-root learning-rate schedule, and run bookkeeping.

Pretraining is always a masked-LM run over parallel pairs; the "mt" phase is
its fully-masked limit (every target position hidden), so all parameters
transfer unchanged into finetuning. Finetuning mixes completion batches with
masked-LM batches at a configurable ratio; ratio 1:0 degenerates to
completion-only training.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, fields

import numpy as np

from .autodiff import Tape, backward
from .checkpoint import load_checkpoint, save_checkpoint
from .data import CodeSwitch, Dataset, build_cmlm_dataset, mix_datasets
from .errors import ConfigError, ContractError
from .model import ModelParams, cmlm_loss, new_model, wlac_loss
from .optim import AdamState, adam_update
from .symbols import SymbolTable
from .tokenizer import SubwordModel
from .transformer import TransformerConfig

PHASES = ("pretrain_mt", "pretrain_cmlm", "multitask", "wlac_only")


@dataclass(frozen=True)
class TrainPlan:
    phase: str
    steps: int
    batch_tokens: int
    lr_peak: float = 5e-4
    warmup_steps: int = 400
    mask_range: tuple[float, float] = (0.15, 0.5)
    cmlm_mask: float = 0.2
    mix_ratio: tuple[float, float] = (1.0, 1.0)
    checkpoint_every: int = 200
    log_every: int = 50
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mask_range", tuple(float(v) for v in self.mask_range))
        object.__setattr__(self, "mix_ratio", tuple(float(v) for v in self.mix_ratio))
        if self.phase not in PHASES:
            raise ConfigError(f"unknown phase {self.phase!r}")
        if self.steps < 1 or self.batch_tokens < 1:
            raise ConfigError("steps and batch_tokens must be positive")
        if self.warmup_steps < 1:
            raise ConfigError("warmup_steps must be at least 1")
        if self.lr_peak <= 0:
            raise ConfigError("lr_peak must be positive")
        lo, hi = self.mask_range
        if not 0.0 < lo <= hi <= 1.0:
            raise ConfigError(f"mask_range {self.mask_range} violates 0 < lo <= hi <= 1")
        if not 0.0 < self.cmlm_mask <= 1.0:
            raise ConfigError(f"cmlm_mask {self.cmlm_mask} outside (0, 1]")
        if len(self.mix_ratio) != 2 or min(self.mix_ratio) < 0 or sum(self.mix_ratio) <= 0:
            raise ConfigError(f"bad mix_ratio {self.mix_ratio}")
        if self.checkpoint_every < 1 or self.log_every < 1:
            raise ConfigError("checkpoint_every and log_every must be positive")


def write_plan(plan: TrainPlan, path) -> None:
    doc = {f.name: getattr(plan, f.name) for f in fields(TrainPlan)}
    doc["mask_range"] = list(plan.mask_range)
    doc["mix_ratio"] = list(plan.mix_ratio)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_plan(path) -> TrainPlan:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    names = {f.name for f in fields(TrainPlan)}
    unknown = set(doc) - names
    if unknown:
        raise ConfigError(f"{path}: unknown plan fields {sorted(unknown)}")
    missing = {"phase", "steps", "batch_tokens"} - set(doc)
    if missing:
        raise ConfigError(f"{path}: plan lacks required fields {sorted(missing)}")
    return TrainPlan(**doc)


def lr_at(step: int, plan: TrainPlan) -> float:
    """Linear warmup to lr_peak, then inverse-square-root decay."""
    if step < 0:
        raise ContractError(f"negative step {step}")
    if step == 0:
        return 0.0
    w = plan.warmup_steps
    return plan.lr_peak * min(step / w, math.sqrt(w / step))


@dataclass
class TrainResult:
    params: ModelParams
    checkpoints: list[str] = field(default_factory=list)
    log: list[dict] = field(default_factory=list)
    log_path: str = ""


def run_training(plan: TrainPlan, batches, params: ModelParams, table: SymbolTable,
                 subwords: SubwordModel, out_dir, use_typed: bool = True) -> TrainResult:
    """Step loop shared by every phase: one batch, one Adam step, bookkeeping.

    batches is an infinite iterator of homogeneous Batch objects. Dropout
    noise comes from a stream seeded by plan.seed, so identical plans and
    inputs reproduce identical loss sequences. use_typed=False trains the
    no-typed-input ablation. Training runs on a private copy, so the params
    passed in stay untouched and can seed several runs.
    """
    os.makedirs(out_dir, exist_ok=True)
    params = params.clone()
    drop_rng = np.random.default_rng(plan.seed + 1)
    state = AdamState()
    result = TrainResult(params, log_path=os.path.join(out_dir, "train_log.jsonl"))
    with open(result.log_path, "w", encoding="utf-8") as log_fh:
        for step in range(1, plan.steps + 1):
            batch = next(batches)
            lr = lr_at(step, plan)
            with Tape() as tape:
                if batch.kind == "wlac":
                    loss = wlac_loss(params, batch.rows, table, subwords,
                                     rng=drop_rng, train=True, use_typed=use_typed)
                else:
                    loss = cmlm_loss(params, batch.rows, table, subwords,
                                     rng=drop_rng, train=True)
            grads = backward(tape, loss, params=list(params.tensors.values()))
            named = {name: grads[t] for name, t in params.tensors.items()}
            adam_update(params.tensors, named, state, lr)
            val = float(loss.data)
            if step == 1 or step == plan.steps or step % plan.log_every == 0:
                row = {"step": step, "lr": lr,
                       "loss_wlac": val if batch.kind == "wlac" else None,
                       "loss_cmlm": val if batch.kind == "cmlm" else None}
                result.log.append(row)
                log_fh.write(json.dumps(row) + "\n")
            if step % plan.checkpoint_every == 0 or step == plan.steps:
                path = os.path.join(out_dir, f"ckpt-{step:06d}.bin")
                if not result.checkpoints or result.checkpoints[-1] != path:
                    save_checkpoint(path, params, step)
                    result.checkpoints.append(path)
    return result


def make_pretrain_dataset(plan: TrainPlan, pairs, subwords: SubwordModel, table: SymbolTable,
                          rng: np.random.Generator, code_switch: CodeSwitch | None = None,
                          switch_frac: float = 0.5) -> Dataset:
    """Masked-LM rows for pretraining; the mt phase masks every position."""
    mask_range = (1.0, 1.0) if plan.phase == "pretrain_mt" else plan.mask_range
    return build_cmlm_dataset(pairs, mask_range, rng, subwords, table,
                              code_switch, switch_frac)


def pretrain(plan: TrainPlan, pairs, subwords: SubwordModel, table: SymbolTable, out_dir,
             *, config: TransformerConfig | None = None, init: ModelParams | None = None,
             code_switch: CodeSwitch | None = None, switch_frac: float = 0.5,
             dtype=np.float32) -> TrainResult:
    if plan.phase not in ("pretrain_mt", "pretrain_cmlm"):
        raise ContractError(f"pretrain called with phase {plan.phase!r}")
    pairs = list(pairs)
    if not pairs:
        raise ConfigError("pretraining needs a non-empty pair list")
    if init is None:
        if config is None:
            raise ConfigError("pretrain needs either an init model or a config")
        init = new_model(config, table.size, seed=plan.seed, dtype=dtype)
    rng = np.random.default_rng(plan.seed)
    dataset = make_pretrain_dataset(plan, pairs, subwords, table, rng, code_switch, switch_frac)
    batches = mix_datasets(None, dataset, (0.0, 1.0), plan.batch_tokens, rng)
    return run_training(plan, batches, init, table, subwords, out_dir)


def multitask_finetune(plan: TrainPlan, init: ModelParams, d_wlac: Dataset | None,
                       d_cmlm: Dataset | None, table: SymbolTable, subwords: SubwordModel,
                       out_dir, use_typed: bool = True) -> TrainResult:
    if plan.phase not in ("multitask", "wlac_only"):
        raise ContractError(f"multitask_finetune called with phase {plan.phase!r}")
    ratio = (1.0, 0.0) if plan.phase == "wlac_only" else plan.mix_ratio
    rng = np.random.default_rng(plan.seed)
    batches = mix_datasets(d_wlac, d_cmlm, ratio, plan.batch_tokens, rng)
    return run_training(plan, batches, init, table, subwords, out_dir, use_typed=use_typed)


def dataset_loss(params: ModelParams, dataset: Dataset, table: SymbolTable,
                 subwords: SubwordModel, batch_tokens: int = 2000,
                 use_typed: bool = True) -> float:
    """Eval-mode mean loss over a whole dataset, exact across batch splits."""
    if len(dataset) == 0:
        raise ContractError("loss over an empty dataset")
    total = 0.0
    weight = 0
    i = 0
    while i < len(dataset):
        rows = []
        spent = 0
        while i < len(dataset):
            cost = dataset.costs[i]
            if rows and spent + cost > batch_tokens:
                break
            rows.append(dataset.rows[i])
            spent += cost
            i += 1
            if spent >= batch_tokens:
                break
        if dataset.kind == "wlac":
            loss = wlac_loss(params, rows, table, subwords, use_typed=use_typed)
            n = len(rows)
        else:
            loss = cmlm_loss(params, rows, table, subwords)
            n = sum(len(r.gold_at_masks) for r in rows)
        total += float(loss.data) * n
        weight += n
    return total / weight


def select_checkpoint(paths, dev_set: Dataset, table: SymbolTable,
                      subwords: SubwordModel, batch_tokens: int = 2000) -> str:
    """Path with the lowest completion dev loss; earlier wins ties."""
    paths = list(paths)
    if not paths:
        raise ContractError("no checkpoints to select from")
    best_path, best_loss = None, math.inf
    for p in paths:
        params, _ = load_checkpoint(p)
        loss = dataset_loss(params, dev_set, table, subwords, batch_tokens)
        if loss < best_loss:
            best_path, best_loss = p, loss
    return best_path
