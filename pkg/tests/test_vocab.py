"""Vocabulary: tokenization, strict/UNK encoding, JSON round-trip, closure."""

import json

import pytest

from logicdiff.core import InvalidInputError
from logicdiff.corpus import CorpusConfig, generate_corpus
from logicdiff.vocab import (
    MASK_TOKEN,
    PAD_TOKEN,
    UNK_TOKEN,
    Vocab,
    build_default_vocab,
    tokenize_text,
)


@pytest.mark.parametrize(
    "text,expected",
    [
        ("tom has 3 apples .", ["tom", "has", "3", "apples", "."]),
        ("so 3 + 4 = 7 .", ["so", "3", "+", "4", "=", "7", "."]),
        ("the answer is #### 7", ["the", "answer", "is", "####", "7"]),
        ("how many?", ["how", "many", "?"]),
        ("wait, what?!", ["wait", ",", "what", "?", "!"]),
        ("", []),
        ("   ", []),
        ("1.5 stays whole", ["1.5", "stays", "whole"]),
    ],
)
def test_tokenize_text(text, expected):
    assert tokenize_text(text) == expected


def test_default_vocab_sentinels():
    v = build_default_vocab()
    assert v.decode(v.mask_id) == MASK_TOKEN
    assert v.decode(v.pad_id) == PAD_TOKEN
    assert v.decode(v.unk_id) == UNK_TOKEN
    assert (v.mask_id, v.pad_id, v.unk_id) == (0, 1, 2)


def test_encode_decode_round_trip():
    v = build_default_vocab()
    for tok in ("so", "####", "=", "0", "99", ".", "apples"):
        assert v.decode(v.encode(tok)) == tok


def test_strict_encode_rejects_unknown():
    v = build_default_vocab()
    with pytest.raises(InvalidInputError):
        v.encode("zebra")
    assert v.encode_or_unk("zebra") == v.unk_id


def test_all_two_digit_numbers_present():
    v = build_default_vocab()
    for n in range(100):
        assert v.contains(str(n)), f"{n} missing from the vocabulary"
    assert not v.contains("100")


def test_vocab_json_round_trip():
    v = build_default_vocab()
    blob = v.to_json()
    again = Vocab.from_json(blob)
    assert again.tokens == v.tokens
    assert again.mask_id == v.mask_id
    # stable serialization
    assert Vocab.from_json(blob).to_json() == blob
    json.loads(blob)  # must be plain JSON


def test_vocabulary_closed_over_generated_corpus():
    """Every token the generator can emit must encode strictly."""
    v = build_default_vocab()
    problems = generate_corpus(CorpusConfig(n_problems=80, rng_seed=923))
    for p in problems:
        for tok in tokenize_text(p.question) + tokenize_text(p.solution):
            v.encode(tok)
