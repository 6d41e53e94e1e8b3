import random
from collections import Counter

import pytest

from wlac.errors import ConfigError, InputError
from wlac.tokenizer import (
    SubwordModel,
    decode_subwords,
    encode_word,
    load_model,
    save_model,
    train_subword_model,
)

SYLLABLES = ["ba", "de", "ki", "lo", "mu", "na", "po", "ri", "su", "ta", "ve", "zo"]


def make_words(n: int, seed: int = 7) -> list[str]:
    rng = random.Random(seed)
    words = []
    seen = set()
    while len(words) < n:
        w = "".join(rng.choice(SYLLABLES) for _ in range(rng.randint(2, 4)))
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words


def make_corpus(n_lines: int = 2000, n_words: int = 80, seed: int = 7) -> list[str]:
    rng = random.Random(seed + 1)
    words = make_words(n_words, seed)
    weights = [1.0 / (rank + 1) for rank in range(n_words)]
    lines = []
    for _ in range(n_lines):
        count = rng.randint(5, 9)
        lines.append(" ".join(rng.choices(words, weights=weights, k=count)))
    return lines


def all_segmentations(word: str, pieces: set[str]):
    if not word:
        yield []
        return
    for j in range(1, len(word) + 1):
        head = word[:j]
        if head in pieces:
            for rest in all_segmentations(word[j:], pieces):
                yield [head] + rest


def oracle_encode(logprob: dict[str, float], word: str) -> list[str]:
    segs = list(all_segmentations(word, set(logprob)))
    assert segs, f"oracle found no segmentation for {word!r}"
    return min(segs, key=lambda seg: (-sum(logprob[p] for p in reversed(seg)), len(seg), seg))


def dyadic(rng: random.Random) -> float:
    return -rng.randint(1, 64) / 16.0


def test_train_exact_vocab_size() -> None:
    model = train_subword_model(make_corpus(), vocab_size=300)
    assert model.trained_vocab_size == 300
    assert len(model.pieces) == 300


def test_train_includes_every_corpus_char() -> None:
    corpus = make_corpus()
    model = train_subword_model(corpus, vocab_size=300)
    alphabet = {ch for line in corpus for ch in line if not ch.isspace()}
    for ch in alphabet:
        assert ch in model.logprob


def test_train_keeps_frequent_whole_words() -> None:
    corpus = make_corpus()
    freqs = Counter(tok for line in corpus for tok in line.split())
    model = train_subword_model(corpus, vocab_size=300)
    frequent = [w for w, n in freqs.items() if n >= 100]
    assert frequent, "corpus should have words above the frequency threshold"
    for w in frequent:
        assert w in model.logprob, f"high-frequency word {w!r} missing from pieces"


def test_train_empty_corpus_rejected() -> None:
    with pytest.raises(InputError):
        train_subword_model([], vocab_size=50)
    with pytest.raises(InputError):
        train_subword_model(["   ", ""], vocab_size=50)


def test_train_vocab_size_below_alphabet_rejected() -> None:
    with pytest.raises(ConfigError):
        train_subword_model(make_corpus(n_lines=50), vocab_size=10)


def test_train_deterministic_and_order_independent() -> None:
    corpus = make_corpus(n_lines=400)
    a = train_subword_model(corpus, vocab_size=200)
    b = train_subword_model(corpus, vocab_size=200)
    shuffled = list(corpus)
    random.Random(99).shuffle(shuffled)
    c = train_subword_model(shuffled, vocab_size=200)
    assert a.pieces == b.pieces == c.pieces
    assert all(a.logprob[p] == b.logprob[p] == c.logprob[p] for p in a.pieces)


def test_encode_single_piece_identity() -> None:
    model = SubwordModel([("a", -1.0), ("b", -1.0)])
    assert encode_word(model, "a") == ["a"]


def test_encode_prefers_likely_segmentation() -> None:
    entries = [(ch, -8.0) for ch in "spaciou"] + [
        ("spa", -1.0),
        ("cious", -1.25),
        ("spac", -2.0),
        ("ious", -2.0),
        ("us", -3.0),
        ("cio", -3.0),
    ]
    model = SubwordModel(entries)
    got = encode_word(model, "spacious")
    assert got == ["spa", "cious"]
    assert got == oracle_encode(model.logprob, "spacious")


def test_encode_matches_bruteforce_oracle_on_random_models() -> None:
    rng = random.Random(123)
    for trial in range(60):
        word = "".join(rng.choice("abcd") for _ in range(rng.randint(3, 9)))
        pieces = {ch: dyadic(rng) for ch in set(word)}
        for _ in range(10):
            i = rng.randrange(len(word) - 1)
            j = rng.randint(i + 2, min(len(word), i + 5))
            pieces[word[i:j]] = dyadic(rng)
        model = SubwordModel(sorted(pieces.items()))
        assert encode_word(model, word) == oracle_encode(pieces, word), f"trial {trial}, word {word!r}"


def test_encode_tie_prefers_fewer_pieces() -> None:
    model = SubwordModel([("a", -8.0), ("b", -8.0), ("c", -8.0), ("d", -8.0),
                          ("ab", -1.0), ("cd", -1.0), ("abcd", -2.0)])
    assert encode_word(model, "abcd") == ["abcd"]


def test_encode_tie_prefers_lexicographic_sequence() -> None:
    model = SubwordModel([("a", -8.0), ("b", -0.5), ("ab", -1.0), ("aba", -1.5)])
    # "ab"+"ab" and "aba"+"b" both score -2.0 with two pieces.
    assert encode_word(model, "abab") == ["ab", "ab"]


def test_encode_oov_char_uses_placeholder() -> None:
    model = SubwordModel([("a", -1.0), ("b", -1.5), ("ab", -1.0)])
    assert encode_word(model, "aXb") == ["a", "[UNK]", "b"]
    assert encode_word(model, "X") == ["[UNK]"]


def test_encode_empty_word_rejected() -> None:
    model = SubwordModel([("a", -1.0)])
    with pytest.raises(InputError):
        encode_word(model, "")


def test_decode_is_concatenation() -> None:
    model = SubwordModel([("spa", -1.0), ("cious", -1.0), ("a", -2.0)])
    assert decode_subwords(model, ["spa", "cious"]) == "spacious"
    assert decode_subwords(model, ["a"]) == "a"


def test_decode_unknown_piece_rejected() -> None:
    model = SubwordModel([("a", -1.0)])
    with pytest.raises(InputError):
        decode_subwords(model, ["zz"])
    with pytest.raises(InputError):
        decode_subwords(model, [])


def test_round_trip_on_corpus_words() -> None:
    corpus = make_corpus()
    model = train_subword_model(corpus, vocab_size=300)
    words = sorted({tok for line in corpus for tok in line.split()})
    sample = random.Random(5).sample(words, min(1000, len(words)))
    for w in sample:
        assert decode_subwords(model, encode_word(model, w)) == w


def test_model_file_round_trip(tmp_path) -> None:
    model = train_subword_model(make_corpus(n_lines=300), vocab_size=150)
    path = tmp_path / "tok.model"
    save_model(model, path)
    header = path.read_text(encoding="utf-8").splitlines()[0]
    assert header == "subword-model v1 150"
    loaded = load_model(path)
    assert loaded.pieces == model.pieces
    assert all(loaded.logprob[p] == model.logprob[p] for p in model.pieces)
    path2 = tmp_path / "tok2.model"
    save_model(loaded, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_model_file_bad_header_rejected(tmp_path) -> None:
    path = tmp_path / "bad.model"
    path.write_text("subword-model v9 2\na\t-1.0\nb\t-1.0\n", encoding="utf-8")
    with pytest.raises(InputError):
        load_model(path)
    path.write_text("something else\n", encoding="utf-8")
    with pytest.raises(InputError):
        load_model(path)


def test_model_rejects_bad_entries() -> None:
    with pytest.raises(InputError):
        SubwordModel([("a", -1.0), ("a", -2.0)])
    with pytest.raises(InputError):
        SubwordModel([("a", 0.5)])
    with pytest.raises(InputError):
        SubwordModel([("a", float("nan"))])
    with pytest.raises(InputError):
        SubwordModel([])
