"""Two-pass role labeling: sentence-level classification, then token-level connective override."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

from .core import InvalidInputError, Role
from .vocab import (
    ANSWER_MARKER,
    ARTICLES,
    CONNECTIVE_LEXICON,
    PUNCTUATION,
    Vocab,
    tokenize_text,
)

_SENTENCE_DELIMS = {".", "!", "?", "\n"}
_NUMBER_RE = re.compile(r"\d[\d,]*(?:\.\d+)?")
_EQUATION_RE = re.compile(r"\d[\d,]*(?:\.\d+)?\s*[-+*/x×]\s*\d[\d,]*(?:\.\d+)?\s*=\s*\d")

# Fixed class weights; CONNECTIVE is upweighted 10x against its rarity.
PAPER_CLASS_WEIGHTS = {
    Role.PREMISE: 1.0,
    Role.CONNECTIVE: 10.0,
    Role.DERIVED: 1.0,
    Role.CONCLUSION: 2.0,
    Role.FILLER: 0.5,
}


@dataclass(frozen=True)
class LabeledToken:
    token_id: int
    role: Role


@dataclass(frozen=True)
class ClassWeights:
    premise: float = 1.0
    connective: float = 10.0
    derived: float = 1.0
    conclusion: float = 2.0
    filler: float = 0.5

    def __getitem__(self, role: Role) -> float:
        return (self.premise, self.connective, self.derived, self.conclusion, self.filler)[int(role)]

    def as_vector(self) -> list[float]:
        return [self[Role(i)] for i in range(5)]


def segment_sentences(text: str) -> list[tuple[int, int]]:
    """Contiguous character spans split after {., !, ?, newline}.

    A '.' with digits immediately on both sides is decimal-internal and does
    not split. Spans cover the text; a whitespace-only tail is dropped.
    """
    spans: list[tuple[int, int]] = []
    start = 0
    for i, ch in enumerate(text):
        if ch not in _SENTENCE_DELIMS:
            continue
        if (
            ch == "."
            and 0 < i < len(text) - 1
            and text[i - 1].isdigit()
            and text[i + 1].isdigit()
        ):
            continue
        spans.append((start, i + 1))
        start = i + 1
    if start < len(text) and text[start:].strip():
        spans.append((start, len(text)))
    return spans


def _numbers(text: str) -> set[str]:
    return {m.group(0).replace(",", "") for m in _NUMBER_RE.finditer(text)}


def classify_sentence_role(sentence: str, question: str, is_last: bool) -> Role:
    """Pass-1 sentence heuristic over the role taxonomy.

    The conclusion rule wins outright: a final sentence or one carrying the
    answer marker is never premise material even if its numbers all appear
    in the question.
    """
    if is_last or ANSWER_MARKER in sentence:
        return Role.CONCLUSION
    nums = _numbers(sentence)
    question_nums = _numbers(question)
    if _EQUATION_RE.search(sentence) or (nums - question_nums):
        return Role.DERIVED
    if nums and nums <= question_nums:
        return Role.PREMISE
    return Role.FILLER


def connective_override(labeled: list[LabeledToken], vocab: Vocab) -> list[LabeledToken]:
    """Pass 2: any lexicon connective is relabeled CONNECTIVE, unconditionally."""
    out = []
    for lt in labeled:
        if vocab.decode(lt.token_id) in CONNECTIVE_LEXICON:
            out.append(LabeledToken(lt.token_id, Role.CONNECTIVE))
        else:
            out.append(lt)
    return out


def _token_role(token: str, token_id: int, sentence_role: Role, vocab: Vocab) -> Role:
    if token in PUNCTUATION or token in ARTICLES or token_id == vocab.unk_id:
        return Role.FILLER
    return sentence_role


def label_solution(question: str, solution: str, vocab: Vocab) -> list[LabeledToken]:
    """Segment, classify per sentence, broadcast to tokens, then override connectives."""
    spans = segment_sentences(solution)
    labeled: list[LabeledToken] = []
    for i, (s, e) in enumerate(spans):
        sentence = solution[s:e]
        sentence_role = classify_sentence_role(sentence, question, is_last=(i == len(spans) - 1))
        for token in tokenize_text(sentence):
            token_id = vocab.encode_or_unk(token)
            labeled.append(LabeledToken(token_id, _token_role(token, token_id, sentence_role, vocab)))
    return connective_override(labeled, vocab)


def compute_class_weights(labels) -> tuple[ClassWeights, dict[int, float]]:
    """Fixed training weights plus the empirical distribution for reporting."""
    counts = {int(r): 0 for r in Role}
    total = 0
    for label in labels:
        counts[int(label)] += 1
        total += 1
    if total == 0:
        raise InvalidInputError("label multiset is empty")
    distribution = {r: counts[r] / total for r in counts}
    return ClassWeights(), distribution


@dataclass(frozen=True)
class LabeledRecord:
    """One labeled solution; question ids kept so backends can rebuild the full sequence."""

    question_ids: tuple[int, ...]
    token_ids: tuple[int, ...]
    roles: tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "question_ids": list(self.question_ids),
            "token_ids": list(self.token_ids),
            "roles": list(self.roles),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LabeledRecord":
        return cls(tuple(d["question_ids"]), tuple(d["token_ids"]), tuple(d["roles"]))


def label_record(question: str, solution: str, vocab: Vocab) -> LabeledRecord:
    labeled = label_solution(question, solution, vocab)
    return LabeledRecord(
        question_ids=tuple(vocab.encode_or_unk(t) for t in tokenize_text(question)),
        token_ids=tuple(lt.token_id for lt in labeled),
        roles=tuple(int(lt.role) for lt in labeled),
    )


def save_labeled(records: list[LabeledRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")


def load_labeled(path) -> list[LabeledRecord]:
    records = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                records.append(LabeledRecord.from_dict(json.loads(line)))
    return records
