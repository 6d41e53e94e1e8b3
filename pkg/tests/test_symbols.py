import pytest

from wlac.errors import ContractError, InputError
from wlac.symbols import (
    BOS,
    EOS,
    EOW,
    MASK,
    PAD,
    SEP,
    SPECIALS,
    TIP,
    UNK,
    SymbolTable,
    build_symbol_table,
    load_table,
    save_table,
)
from wlac.tokenizer import SubwordModel


def small_table() -> SymbolTable:
    return SymbolTable(["ab", "cd", "a"], ["a", "b", "x"])


def test_special_ids_are_fixed() -> None:
    t = small_table()
    assert (PAD, UNK, BOS, EOS, MASK, TIP, SEP, EOW) == (0, 1, 2, 3, 4, 5, 6, 7)
    assert t.id_of("[MASK]") == 4
    assert t.id_of("[PAD]") == 0
    assert t.id_of("[EOW]") == 7
    for i, name in enumerate(SPECIALS):
        assert t.symbol_of(i) == name


def test_size_arithmetic() -> None:
    model = SubwordModel([(f"p{i:03d}", -1.0) for i in range(300)])
    table = build_symbol_table(model, [chr(ord("a") + i) for i in range(40)])
    assert table.size == 348


def test_id_ranges_contiguous_and_disjoint() -> None:
    t = small_table()
    kinds = [t.kind_of(i) for i in range(t.size)]
    assert kinds == ["special"] * 8 + ["subword"] * 3 + ["char"] * 3
    assert t.subword_offset == 8
    assert t.char_offset == 11


def test_bijection() -> None:
    t = small_table()
    for i in range(t.size):
        assert t.id_of(t.symbol_of(i)) == i
    seen = {t.symbol_of(i) for i in range(t.size)}
    assert len(seen) == t.size


def test_char_and_subword_lookups_are_distinct() -> None:
    t = small_table()
    assert t.subword_id("a") != t.char_id("a")
    assert t.kind_of(t.subword_id("a")) == "subword"
    assert t.kind_of(t.char_id("a")) == "char"
    assert t.piece_of(t.subword_id("ab")) == "ab"
    assert t.char_of(t.char_id("b")) == "b"


def test_unknown_lookups() -> None:
    t = small_table()
    assert t.char_id("Z") is None
    assert t.subword_id("[UNK]") == UNK
    with pytest.raises(InputError):
        t.subword_id("zz")
    with pytest.raises(InputError):
        t.id_of("nope")
    with pytest.raises(InputError):
        t.symbol_of(t.size)
    with pytest.raises(InputError):
        t.symbol_of(-1)


def test_piece_colliding_with_special_rejected() -> None:
    with pytest.raises(ContractError):
        SymbolTable(["[MASK]"], ["a"])


def test_subword_id_range_covers_pieces() -> None:
    t = small_table()
    r = t.subword_id_range()
    assert list(r) == [8, 9, 10]
    assert [t.piece_of(i) for i in r] == ["ab", "cd", "a"]


def test_table_file_round_trip(tmp_path) -> None:
    t = small_table()
    path = tmp_path / "symbols.tsv"
    save_table(t, path)
    loaded = load_table(path)
    assert loaded.subwords == t.subwords
    assert loaded.chars == t.chars
    assert loaded.size == t.size


def test_table_file_bad_header(tmp_path) -> None:
    path = tmp_path / "bad.tsv"
    path.write_text("nope v1 0 0\n", encoding="utf-8")
    with pytest.raises(InputError):
        load_table(path)
    path.write_text("symbol-table v1 2 0\nsubword\tab\n", encoding="utf-8")
    with pytest.raises(InputError):
        load_table(path)
