"""Closed word/number-level vocabulary with fixed MASK/PAD sentinels."""

from __future__ import annotations

import json
from dataclasses import dataclass

from .core import MASK_ID, PAD_ID, UNK_ID, InvalidInputError

MASK_TOKEN = "[MASK]"
PAD_TOKEN = "[PAD]"
UNK_TOKEN = "[UNK]"
ANSWER_MARKER = "####"

PUNCTUATION = (".", "!", "?", ",", ":")
OPERATORS = ("+", "-", "*")
EQUALS = "="
ARTICLES = ("a", "an", "the")

# Words the override pass relabels unconditionally.
CONNECTIVE_LEXICON = ("so", "therefore", "thus", "because", "since", "then", "hence")

NAMES = ("tom", "mia", "sam", "ava", "ben", "zoe", "max", "ivy", "leo", "ana")
PRONOUNS = ("he", "she")
NOUNS = ("apples", "pens", "books", "coins", "cards", "stars", "shells", "cups", "rocks", "seeds")

_TEMPLATE_WORDS = (
    "has", "starts", "with", "counts", "owns", "holds", "keeps",
    "buys", "gets", "finds", "more",
    "eats", "loses", "gives", "away", "drops",
    "count", "is", "multiplied", "by", "doubled", "them",
    "how", "many", "now", "left",
    "answer", "final",
)


@dataclass(frozen=True)
class Vocab:
    """Ordered token table plus sentinel indices; immutable after construction."""

    tokens: tuple[str, ...]
    mask_id: int = MASK_ID
    pad_id: int = PAD_ID
    unk_id: int = UNK_ID

    def __post_init__(self):
        if len(set(self.tokens)) != len(self.tokens):
            raise InvalidInputError("vocab token strings must be unique")
        if self.mask_id == self.pad_id:
            raise InvalidInputError("mask_id and pad_id must differ")
        for sentinel in (self.mask_id, self.pad_id, self.unk_id):
            if not 0 <= sentinel < len(self.tokens):
                raise InvalidInputError(f"sentinel index {sentinel} outside vocab")
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.tokens)})

    @property
    def size(self) -> int:
        return len(self.tokens)

    def encode(self, token: str) -> int:
        idx = self._index.get(token)
        if idx is None:
            raise InvalidInputError(f"token {token!r} not in vocab")
        return idx

    def encode_or_unk(self, token: str) -> int:
        return self._index.get(token, self.unk_id)

    def decode(self, token_id: int) -> str:
        if not 0 <= token_id < len(self.tokens):
            raise InvalidInputError(f"token id {token_id} outside vocab of size {self.size}")
        return self.tokens[token_id]

    def encode_text(self, text: str, strict: bool = False) -> list[int]:
        words = tokenize_text(text)
        if strict:
            return [self.encode(w) for w in words]
        return [self.encode_or_unk(w) for w in words]

    def decode_ids(self, ids) -> str:
        return " ".join(self.tokens[int(i)] for i in ids)

    def contains(self, token: str) -> bool:
        return token in self._index

    def to_json(self) -> str:
        payload = {
            "tokens": list(self.tokens),
            "mask_id": self.mask_id,
            "pad_id": self.pad_id,
            "unk_id": self.unk_id,
        }
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "Vocab":
        payload = json.loads(text)
        return cls(
            tokens=tuple(payload["tokens"]),
            mask_id=payload["mask_id"],
            pad_id=payload["pad_id"],
            unk_id=payload["unk_id"],
        )


def tokenize_text(text: str) -> list[str]:
    """Whitespace tokenization that splits off edge punctuation.

    Interior characters are never split, so decimals like "1.5" in ingested
    text survive as single (out-of-vocab) tokens.
    """
    out: list[str] = []
    for word in text.split():
        out.extend(_split_punct(word))
    return out


def _split_punct(word: str) -> list[str]:
    prefix: list[str] = []
    suffix: list[str] = []
    while len(word) > 1 and word[0] in PUNCTUATION:
        prefix.append(word[0])
        word = word[1:]
    while len(word) > 1 and word[-1] in PUNCTUATION:
        suffix.append(word[-1])
        word = word[:-1]
    suffix.reverse()
    return prefix + [word] + suffix


def build_default_vocab() -> Vocab:
    """The closed corpus vocabulary; sentinels first so their ids are fixed."""
    tokens: list[str] = [MASK_TOKEN, PAD_TOKEN, UNK_TOKEN, ANSWER_MARKER]
    tokens.extend(PUNCTUATION)
    tokens.extend(OPERATORS)
    tokens.append(EQUALS)
    tokens.extend(str(n) for n in range(100))

    words: set[str] = set()
    words.update(ARTICLES)
    words.update(CONNECTIVE_LEXICON)
    words.update(NAMES)
    words.update(PRONOUNS)
    words.update(NOUNS)
    words.update(_TEMPLATE_WORDS)
    tokens.extend(sorted(words))
    return Vocab(tokens=tuple(tokens))
