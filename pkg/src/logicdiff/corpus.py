"""Synthetic arithmetic-chain corpus with gold role labels, plus GSM8K-format ingestion."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .core import InvalidConfigError, InvalidInputError, Role
from .vocab import ANSWER_MARKER, ARTICLES, NAMES, NOUNS, PUNCTUATION, Vocab, build_default_vocab

# Chain values must stay token-representable (integers 0..99).
MAX_TOKEN_VALUE = 99

GENERATION_CONNECTIVES = ("so", "therefore", "then", "thus")

_PRONOUN = {
    "tom": "he", "mia": "she", "sam": "he", "ava": "she", "ben": "he",
    "zoe": "she", "max": "he", "ivy": "she", "leo": "he", "ana": "she",
}

_PREMISE_VERBS = ("has", "starts with", "counts", "owns", "holds", "keeps")

_ADD_ACTIONS = ("buys {a} more", "gets {a} more", "finds {a} more")
_SUB_ACTIONS = ("eats {a}", "loses {a}", "gives {a} away", "drops {a}")
_MUL_ACTION = "the count is multiplied by {a}"

_CONCLUSIONS = ("the answer is", "the final answer is")


def apply_op(left: int, op: str, right: int) -> int:
    if op == "+":
        return left + right
    if op == "-":
        return left - right
    if op == "*":
        return left * right
    raise InvalidInputError(f"unknown operator {op!r}")


@dataclass(frozen=True)
class StepSpec:
    """One reasoning step: the correct branch and its distractor."""

    op: str
    distractor_op: str
    operand: int
    result: int
    distractor_result: int

    def to_dict(self) -> dict:
        return {
            "op": self.op,
            "distractor_op": self.distractor_op,
            "operand": self.operand,
            "result": self.result,
            "distractor_result": self.distractor_result,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StepSpec":
        return cls(d["op"], d["distractor_op"], d["operand"], d["result"], d["distractor_result"])


@dataclass(frozen=True)
class BranchSpec:
    start: int
    steps: tuple[StepSpec, ...]

    def to_dict(self) -> dict:
        return {"start": self.start, "steps": [s.to_dict() for s in self.steps]}

    @classmethod
    def from_dict(cls, d: dict) -> "BranchSpec":
        return cls(d["start"], tuple(StepSpec.from_dict(s) for s in d["steps"]))


@dataclass(frozen=True)
class Problem:
    question: str
    solution: str
    answer: int
    gold_roles: tuple[int, ...]
    branch_spec: BranchSpec

    def __post_init__(self):
        if len(self.gold_roles) != len(self.solution.split()):
            raise InvalidInputError("gold_roles must align with solution tokens")

    def solution_tokens(self) -> list[str]:
        return self.solution.split()

    def question_tokens(self) -> list[str]:
        return self.question.split()

    def to_dict(self) -> dict:
        return {
            "question": self.question,
            "solution": self.solution,
            "answer": self.answer,
            "roles": list(self.gold_roles),
            "branch_spec": self.branch_spec.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Problem":
        return cls(
            question=d["question"],
            solution=d["solution"],
            answer=d["answer"],
            gold_roles=tuple(d["roles"]),
            branch_spec=BranchSpec.from_dict(d["branch_spec"]),
        )


@dataclass(frozen=True)
class CorpusConfig:
    n_problems: int
    steps_min: int = 2
    steps_max: int = 5
    value_max: int = 20
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_problems < 1:
            raise InvalidConfigError("n_problems must be positive")
        if self.steps_min < 1 or self.steps_max < self.steps_min:
            raise InvalidConfigError(
                f"bad chain bounds steps_min={self.steps_min} steps_max={self.steps_max}"
            )
        if not 1 <= self.value_max <= MAX_TOKEN_VALUE:
            raise InvalidConfigError(f"value_max must be in [1, {MAX_TOKEN_VALUE}]")


def _problem_rng(seed: int, index: int) -> np.random.Generator:
    ss = np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, index])
    return np.random.Generator(np.random.PCG64(ss))


def _draw_chain(cfg: CorpusConfig, rng: np.random.Generator, n_steps: int):
    """Sample start + steps so every branch value stays in [0, 99] and the
    distractor result differs from the correct one at each step."""
    for _ in range(200):
        start = int(rng.integers(1, cfg.value_max + 1))
        value = start
        steps: list[StepSpec] = []
        ok = True
        for _ in range(n_steps):
            for _ in range(50):
                op = str(rng.choice(["+", "-", "*"]))
                others = [o for o in ("+", "-", "*") if o != op]
                distractor_op = str(rng.choice(others))
                operand = int(rng.integers(1, cfg.value_max + 1))
                result = apply_op(value, op, operand)
                d_result = apply_op(value, distractor_op, operand)
                if (
                    0 <= result <= MAX_TOKEN_VALUE
                    and 0 <= d_result <= MAX_TOKEN_VALUE
                    and result != d_result
                ):
                    steps.append(StepSpec(op, distractor_op, operand, result, d_result))
                    value = result
                    break
            else:
                ok = False
                break
        if not ok:
            continue
        # The fully wrong chain must land elsewhere, or the trap is toothless.
        wrong = start
        for s in steps:
            wrong = min(max(apply_op(wrong, s.distractor_op, s.operand), 0), MAX_TOKEN_VALUE)
        if wrong == value:
            continue
        return start, steps
    raise InvalidConfigError(f"could not sample a valid {n_steps}-step chain (value_max={cfg.value_max})")


def _roles_for_sentence(tokens: list[str], role: Role) -> list[int]:
    """Broadcast a sentence role; punctuation and articles are always filler."""
    out = []
    for t in tokens:
        if t in PUNCTUATION or t in ARTICLES:
            out.append(int(Role.FILLER))
        else:
            out.append(int(role))
    return out


def generate_problem(cfg: CorpusConfig, rng: np.random.Generator) -> Problem:
    n_steps = int(rng.integers(cfg.steps_min, cfg.steps_max + 1))
    start, steps = _draw_chain(cfg, rng, n_steps)

    name = str(rng.choice(list(NAMES)))
    noun = str(rng.choice(list(NOUNS)))
    pron = _PRONOUN[name]
    verb = str(rng.choice(list(_PREMISE_VERBS)))

    fact = f"{name} {verb} {start} {noun} ."
    q_parts = [fact]
    for s in steps:
        if s.op == "+":
            action = str(rng.choice(list(_ADD_ACTIONS)))
        elif s.op == "-":
            action = str(rng.choice(list(_SUB_ACTIONS)))
        else:
            action = _MUL_ACTION
        sentence = action.format(a=s.operand)
        if not sentence.startswith("the"):
            sentence = f"{pron} {sentence}"
        q_parts.append(sentence + " .")
    if int(rng.integers(0, 2)) == 0:
        q_parts.append("how many ?")
    else:
        q_parts.append(f"how many {noun} now ?")
    question = " ".join(q_parts)

    sol_tokens: list[str] = []
    roles: list[int] = []

    fact_tokens = fact.split()
    sol_tokens.extend(fact_tokens)
    roles.extend(_roles_for_sentence(fact_tokens, Role.PREMISE))

    value = start
    for s in steps:
        conn = str(rng.choice(list(GENERATION_CONNECTIVES)))
        sol_tokens.append(conn)
        roles.append(int(Role.CONNECTIVE))
        eq = [str(value), s.op, str(s.operand), "=", str(s.result)]
        sol_tokens.extend(eq)
        roles.extend([int(Role.DERIVED)] * 5)
        sol_tokens.append(".")
        roles.append(int(Role.FILLER))
        value = s.result

    conclusion = str(rng.choice(list(_CONCLUSIONS)))
    tail = conclusion.split() + [ANSWER_MARKER, str(value)]
    sol_tokens.extend(tail)
    roles.extend(_roles_for_sentence(tail, Role.CONCLUSION))

    return Problem(
        question=question,
        solution=" ".join(sol_tokens),
        answer=value,
        gold_roles=tuple(roles),
        branch_spec=BranchSpec(start=start, steps=tuple(steps)),
    )


def generate_corpus(cfg: CorpusConfig) -> list[Problem]:
    return [generate_problem(cfg, _problem_rng(cfg.rng_seed, i)) for i in range(cfg.n_problems)]


def save_corpus(problems: list[Problem], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for p in problems:
            f.write(json.dumps(p.to_dict(), sort_keys=True) + "\n")


def load_corpus(path) -> list[Problem]:
    problems = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                problems.append(Problem.from_dict(json.loads(line)))
    return problems


def role_histogram(problems: list[Problem]) -> dict[int, int]:
    counts = {int(r): 0 for r in Role}
    for p in problems:
        for r in p.gold_roles:
            counts[int(r)] += 1
    return counts


def ingest_solutions(path) -> tuple[list[tuple[str, str]], list[str]]:
    """Parse a GSM8K-format JSONL file into (question, answer-text) records.

    Malformed lines are collected as diagnostics naming the line number;
    an unreadable file raises the underlying OSError.
    """
    records: list[tuple[str, str]] = []
    diagnostics: list[str] = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                diagnostics.append(f"line {lineno}: invalid JSON ({e.msg})")
                continue
            missing = [k for k in ("question", "answer") if k not in obj]
            if missing:
                diagnostics.append(f"line {lineno}: missing field {missing[0]!r}")
                continue
            records.append((obj["question"], obj["answer"]))
    return records, diagnostics


def default_vocab() -> Vocab:
    return build_default_vocab()
