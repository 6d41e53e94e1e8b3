"""Word-level auto-completion: tokenizer, data, model, training, decoding, service."""

from .checkpoint import ModelBundle, average_checkpoints, load_bundle, load_checkpoint, \
    save_bundle, save_checkpoint
from .data import CmlmSample, Dataset, GenConfig, WlacSample, build_cmlm_dataset, \
    build_wlac_dataset, generate_wlac_sample
from .decoding import DecodeConfig, DecodeResult, decode_word
from .errors import ConfigError, ContractError, InputError, WlacError
from .evaluation import compute_accuracy, run_eval
from .model import DecoderInput, InstructionUnit, ModelParams, assemble_decoder_input, \
    cmlm_loss, joint_loss, new_model, wlac_loss
from .service import create_app
from .symbols import SPECIALS, SymbolTable, build_symbol_table
from .tokenizer import SubwordModel, load_model, save_model, train_subword_model
from .toy import build_toy_corpus, desk_config
from .training import TrainPlan, multitask_finetune, pretrain, run_training
from .transformer import TransformerConfig

__version__ = "0.1.0"

__all__ = [
    "CmlmSample", "ConfigError", "ContractError", "Dataset", "DecodeConfig",
    "DecodeResult", "DecoderInput", "GenConfig", "InputError", "InstructionUnit",
    "ModelBundle", "ModelParams", "SPECIALS", "SubwordModel", "SymbolTable",
    "TrainPlan", "TransformerConfig", "WlacError", "WlacSample",
    "assemble_decoder_input", "average_checkpoints", "build_cmlm_dataset",
    "build_symbol_table", "build_toy_corpus", "build_wlac_dataset", "cmlm_loss",
    "compute_accuracy", "create_app", "decode_word", "desk_config",
    "generate_wlac_sample", "joint_loss", "load_bundle", "load_checkpoint",
    "load_model", "multitask_finetune", "new_model", "pretrain", "run_eval",
    "run_training", "save_bundle", "save_checkpoint", "save_model",
    "train_subword_model", "wlac_loss",
]
