"""Versioned binary checkpoints and the on-disk model bundle.

A checkpoint is one JSON header line {format_version, config, step, tensors}
followed by each tensor's raw little-endian bytes in sorted-name order.
No timestamps or other ambient state go into the file, so saving identical
parameters twice produces byte-identical output.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .errors import ContractError, InputError
from .model import ModelParams
from .symbols import SymbolTable, load_table, save_table
from .tokenizer import SubwordModel, load_model, save_model
from .transformer import TransformerConfig

FORMAT_VERSION = 1

TOKENIZER_FILE = "tokenizer.txt"
SYMBOLS_FILE = "symbols.txt"
CHECKPOINT_FILE = "model.ckpt"


def _le_dtype(dtype) -> np.dtype:
    dt = np.dtype(dtype)
    return dt.newbyteorder("<") if dt.byteorder == ">" else dt


def save_checkpoint(path, params: ModelParams, step: int) -> None:
    names = sorted(params.tensors)
    header = {
        "format_version": FORMAT_VERSION,
        "config": params.config.to_dict(),
        "step": int(step),
        "tensors": [
            {"name": n, "dtype": params.tensors[n].data.dtype.name,
             "shape": list(params.tensors[n].data.shape)}
            for n in names
        ],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8"))
        fh.write(b"\n")
        for n in names:
            arr = params.tensors[n].data
            fh.write(np.ascontiguousarray(arr, dtype=_le_dtype(arr.dtype)).tobytes())


def load_checkpoint(path) -> tuple[ModelParams, int]:
    with open(path, "rb") as fh:
        line = fh.readline()
        try:
            header = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise InputError(f"{path}: not a checkpoint file") from exc
        if header.get("format_version") != FORMAT_VERSION:
            raise InputError(f"{path}: unsupported format_version {header.get('format_version')!r}")
        config = TransformerConfig.from_dict(header["config"])
        tensors: dict[str, Tensor] = {}
        for entry in header["tensors"]:
            dt = _le_dtype(entry["dtype"])
            shape = tuple(entry["shape"])
            n_bytes = dt.itemsize * int(np.prod(shape, dtype=np.int64)) if shape else dt.itemsize
            raw = fh.read(n_bytes)
            if len(raw) != n_bytes:
                raise InputError(f"{path}: truncated payload for {entry['name']!r}")
            arr = np.frombuffer(raw, dtype=dt).reshape(shape).copy()
            tensors[entry["name"]] = Tensor(arr, requires_grad=True)
        if fh.read(1):
            raise InputError(f"{path}: trailing bytes after declared tensors")
    return ModelParams(tensors, config), int(header["step"])


def average_checkpoints(paths) -> ModelParams:
    """Element-wise mean of the parameter tensors across checkpoints.

    Values are sorted per element before summing, so the result is exactly
    independent of the order the paths are given in.
    """
    paths = list(paths)
    if not paths:
        raise ContractError("no checkpoints to average")
    first, _ = load_checkpoint(paths[0])
    stacks = {n: [t.data.astype(np.float64)] for n, t in first.tensors.items()}
    for p in paths[1:]:
        other, _ = load_checkpoint(p)
        if other.config != first.config:
            raise ContractError(f"{p}: config differs from {paths[0]}")
        if set(other.tensors) != set(stacks):
            raise ContractError(f"{p}: parameter names differ from {paths[0]}")
        for n, t in other.tensors.items():
            if t.data.shape != first.tensors[n].data.shape:
                raise ContractError(f"{p}: shape mismatch on {n!r}")
            stacks[n].append(t.data.astype(np.float64))
    k = len(paths)
    tensors = {}
    for n, arrays in stacks.items():
        ordered = np.sort(np.stack(arrays, axis=0), axis=0)
        mean = np.add.reduce(ordered, axis=0) / k
        tensors[n] = Tensor(mean.astype(first.tensors[n].data.dtype), requires_grad=True)
    return ModelParams(tensors, first.config)


@dataclass
class ModelBundle:
    """Everything inference needs: parameters, symbol table, and tokenizer."""

    params: ModelParams
    step: int
    table: SymbolTable
    subwords: SubwordModel
    model_id: str = "unnamed"


def save_bundle(directory, params: ModelParams, step: int, table: SymbolTable,
                subwords: SubwordModel) -> None:
    os.makedirs(directory, exist_ok=True)
    save_checkpoint(os.path.join(directory, CHECKPOINT_FILE), params, step)
    save_table(table, os.path.join(directory, SYMBOLS_FILE))
    save_model(subwords, os.path.join(directory, TOKENIZER_FILE))


def load_bundle(directory=None, *, checkpoint=None, tokenizer=None, symbols=None) -> ModelBundle:
    """Load from a bundle directory, or from explicit file paths.

    When only a checkpoint path is given, the tokenizer and symbol table are
    looked up by their standard names next to it.
    """
    if directory is not None:
        checkpoint = checkpoint or os.path.join(directory, CHECKPOINT_FILE)
        tokenizer = tokenizer or os.path.join(directory, TOKENIZER_FILE)
        symbols = symbols or os.path.join(directory, SYMBOLS_FILE)
        model_id = os.path.basename(os.path.abspath(directory))
    else:
        if checkpoint is None:
            raise ContractError("need a bundle directory or a checkpoint path")
        base = os.path.dirname(os.path.abspath(checkpoint))
        tokenizer = tokenizer or os.path.join(base, TOKENIZER_FILE)
        symbols = symbols or os.path.join(base, SYMBOLS_FILE)
        model_id = os.path.basename(base)
    params, step = load_checkpoint(checkpoint)
    table = load_table(symbols)
    subwords = load_model(tokenizer)
    if params.vocab_size != table.size:
        raise ContractError(f"checkpoint vocab {params.vocab_size} != symbol table {table.size}")
    return ModelBundle(params, step, table, subwords, model_id)
