"""Joint symbol table: fixed specials, then subword ids, then character ids.

Characters get their own ids, distinct from any identical single-character
subword piece. Canonical char symbol strings are wrapped ("⟨a⟩") so the
id↔symbol mapping stays a bijection even when both kinds share a surface.
"""

from __future__ import annotations

from .errors import ContractError, InputError
from .tokenizer import UNK_PIECE, SubwordModel

SPECIALS = ("[PAD]", "[UNK]", "[BOS]", "[EOS]", "[MASK]", "[TIP]", "[SEP]", "[EOW]")
PAD, UNK, BOS, EOS, MASK, TIP, SEP, EOW = range(8)


class SymbolTable:
    __slots__ = ("subwords", "chars", "_piece_to_id", "_char_to_id", "_symbol_to_id", "_symbols")

    def __init__(self, subwords, chars):
        self.subwords = tuple(subwords)
        self.chars = tuple(chars)
        symbols = list(SPECIALS)
        self._piece_to_id = {}
        for piece in self.subwords:
            self._piece_to_id[piece] = len(symbols)
            symbols.append(piece)
        self._char_to_id = {}
        for ch in self.chars:
            if len(ch) != 1:
                raise ContractError(f"char entry {ch!r} is not a single character")
            self._char_to_id[ch] = len(symbols)
            symbols.append(f"⟨{ch}⟩")
        self._symbols = tuple(symbols)
        self._symbol_to_id = {}
        for i, sym in enumerate(symbols):
            if sym in self._symbol_to_id:
                raise ContractError(f"symbol collision on {sym!r}")
            self._symbol_to_id[sym] = i

    @property
    def size(self) -> int:
        return len(self._symbols)

    @property
    def subword_offset(self) -> int:
        return len(SPECIALS)

    @property
    def char_offset(self) -> int:
        return len(SPECIALS) + len(self.subwords)

    def id_of(self, symbol: str) -> int:
        sid = self._symbol_to_id.get(symbol)
        if sid is None:
            raise InputError(f"unknown symbol {symbol!r}")
        return sid

    def symbol_of(self, sid: int) -> str:
        if not 0 <= sid < len(self._symbols):
            raise InputError(f"id {sid} out of range")
        return self._symbols[sid]

    def kind_of(self, sid: int) -> str:
        if not 0 <= sid < len(self._symbols):
            raise InputError(f"id {sid} out of range")
        if sid < len(SPECIALS):
            return "special"
        if sid < self.char_offset:
            return "subword"
        return "char"

    def subword_id(self, piece: str) -> int:
        if piece == UNK_PIECE:
            return UNK
        sid = self._piece_to_id.get(piece)
        if sid is None:
            raise InputError(f"piece {piece!r} not in symbol table")
        return sid

    def piece_of(self, sid: int) -> str:
        if not self.subword_offset <= sid < self.char_offset:
            raise InputError(f"id {sid} is not a subword id")
        return self.subwords[sid - self.subword_offset]

    def char_id(self, ch: str):
        """Id for a typed character, or None when outside the alphabet."""
        return self._char_to_id.get(ch)

    def char_of(self, sid: int) -> str:
        if not self.char_offset <= sid < self.size:
            raise InputError(f"id {sid} is not a char id")
        return self.chars[sid - self.char_offset]

    def subword_id_range(self):
        return range(self.subword_offset, self.char_offset)


def build_symbol_table(model: SubwordModel, char_alphabet) -> SymbolTable:
    """Table over the model's pieces plus every typed-input character."""
    return SymbolTable(model.pieces, sorted(set(char_alphabet)))


def save_table(table: SymbolTable, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"symbol-table v1 {len(table.subwords)} {len(table.chars)}\n")
        for piece in table.subwords:
            fh.write(f"subword\t{piece}\n")
        for ch in table.chars:
            fh.write(f"char\t{ch}\n")


def load_table(path) -> SymbolTable:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split(" ")
        if len(header) != 4 or header[0] != "symbol-table" or header[1] != "v1":
            raise InputError(f"{path}: not a symbol table file")
        n_sub, n_char = int(header[2]), int(header[3])
        subwords, chars = [], []
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            kind, _, payload = line.partition("\t")
            if kind == "subword":
                subwords.append(payload)
            elif kind == "char":
                chars.append(payload)
            else:
                raise InputError(f"{path}: bad row kind {kind!r}")
    if len(subwords) != n_sub or len(chars) != n_char:
        raise InputError(f"{path}: header counts do not match rows")
    return SymbolTable(subwords, chars)
