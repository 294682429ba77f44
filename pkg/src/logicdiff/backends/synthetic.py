"""Synthetic denoiser with a controllable flexibility trap.

The backend serves one template-corpus problem. Predictions are rule-based
and conditional on which positions the sequence state has revealed:

* premise / structural tokens (equation scaffolding, operands): 0.95 on gold;
* filler tokens: 0.98 on gold;
* operator slots: 0.95 on gold once the step's connective is revealed,
  otherwise beta on the distractor operator and 1-beta on gold;
* chain-number slots (a step's left value and result): evaluated by walking
  the arithmetic chain under *effective* operators, with already-revealed
  numbers overriding computation; a correct evaluation scores 0.95 on gold,
  a trapped one puts beta on the trapped value;
* connective slots: 0.9 on gold only after the step's full equation is
  revealed; before that the mass is split between the gold connective
  (conn_entropy_split) and a distractor connective;
* conclusion words: 0.9 on gold; the answer slot evaluates the chain the
  same way the number slots do.

The effective operator of a step is the gold one if the connective is
revealed, the written one if the operator slot is revealed, and otherwise
the distractor (for beta >= 0.5) or gold (beta < 0.5) operator. This makes
the connective the commitment point: revealing it early locks the correct
branch, while committing numbers first freezes the trap.

Hidden states are D_syn-dimensional deterministic features of the *gold*
sequence (role one-hot with fixed per-position gaussian noise, position
bucket, local lexical flags). They do not depend on the reveal state, so a
role head sees stable inputs across unmasking steps.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from ..core import InvalidConfigError, InvalidInputError, Role, SequenceState
from ..corpus import GENERATION_CONNECTIVES, MAX_TOKEN_VALUE, Problem, apply_op, default_vocab
from ..vocab import ARTICLES, CONNECTIVE_LEXICON, EQUALS, OPERATORS, PUNCTUATION, Vocab
from . import DenoiserBackend, DenoiserOutput

P_FILLER = 0.98
P_STRUCTURAL = 0.95
P_CONCLUSION = 0.9
P_CONNECTIVE_RESOLVED = 0.9

MIN_D_SYN = 32
_SENTENCE_DELIMS = (".", "!", "?")

KIND_PREMISE = "premise"
KIND_FILLER = "filler"
KIND_CONNECTIVE = "connective"
KIND_CHAIN_LEFT = "chain_left"
KIND_OP = "op"
KIND_OPERAND = "operand"
KIND_EQUALS = "equals"
KIND_CHAIN_RESULT = "chain_result"
KIND_CONCLUSION = "conclusion_word"
KIND_ANSWER = "answer"

_EQ_KINDS = (KIND_CHAIN_LEFT, KIND_OP, KIND_OPERAND, KIND_EQUALS, KIND_CHAIN_RESULT)


@dataclass(frozen=True)
class TrapConfig:
    """Trap strength and feature parameters for the synthetic backend."""

    beta: float = 0.9
    conn_entropy_split: float = 0.5
    noise_sigma: float = 0.25
    d_syn: int = 32
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise InvalidConfigError(f"beta {self.beta} outside [0, 1]")
        if not 0.0 < self.conn_entropy_split < 1.0:
            raise InvalidConfigError(
                f"conn_entropy_split {self.conn_entropy_split} outside (0, 1)"
            )
        if self.noise_sigma < 0.0:
            raise InvalidConfigError(f"noise_sigma {self.noise_sigma} must be >= 0")
        if self.d_syn < MIN_D_SYN:
            raise InvalidConfigError(f"d_syn {self.d_syn} must be >= {MIN_D_SYN}")


@dataclass(frozen=True)
class Slot:
    kind: str
    step: int
    gold_id: int


def _build_slots(problem: Problem, vocab: Vocab) -> list[Slot]:
    tokens = problem.solution_tokens()
    roles = problem.gold_roles
    n_steps = len(problem.branch_spec.steps)
    conn_offsets = [i for i, r in enumerate(roles) if r == Role.CONNECTIVE]
    if len(conn_offsets) != n_steps:
        raise InvalidInputError(
            f"expected {n_steps} connective slots, found {len(conn_offsets)}"
        )
    eq_map: dict[int, tuple[str, int]] = {}
    for s, co in enumerate(conn_offsets):
        for j, kind in enumerate(_EQ_KINDS):
            eq_map[co + 1 + j] = (kind, s)
    try:
        answer_off = tokens.index("####") + 1
    except ValueError as exc:
        raise InvalidInputError("solution has no answer marker") from exc

    slots: list[Slot] = []
    for i, (tok, role) in enumerate(zip(tokens, roles)):
        gold_id = vocab.encode(tok)
        role = Role(role)
        if role == Role.FILLER:
            slots.append(Slot(KIND_FILLER, -1, gold_id))
        elif role == Role.PREMISE:
            slots.append(Slot(KIND_PREMISE, -1, gold_id))
        elif role == Role.CONNECTIVE:
            slots.append(Slot(KIND_CONNECTIVE, conn_offsets.index(i), gold_id))
        elif role == Role.DERIVED:
            if i not in eq_map:
                raise InvalidInputError(f"derived token at offset {i} is not in an equation")
            kind, s = eq_map[i]
            slots.append(Slot(kind, s, gold_id))
        else:
            kind = KIND_ANSWER if i == answer_off else KIND_CONCLUSION
            slots.append(Slot(kind, -1, gold_id))
    return slots


def _bimodal_top(token_a: int, prob_a: float, token_b: int) -> tuple[int, float]:
    """Argmax of a two-token distribution; exact ties go to the lower token id."""
    prob_b = 1.0 - prob_a
    if prob_a > prob_b:
        return token_a, prob_a
    if prob_b > prob_a:
        return token_b, prob_b
    return min(token_a, token_b), prob_a


class SyntheticBackend(DenoiserBackend):
    """Deterministic oracle denoiser for a single template problem."""

    def __init__(
        self,
        problem: Problem,
        trap: TrapConfig | None = None,
        vocab: Vocab | None = None,
        gen_len: int | None = None,
    ):
        self.problem = problem
        self.trap = trap if trap is not None else TrapConfig()
        self.vocab = vocab if vocab is not None else default_vocab()
        sol_tokens = problem.solution_tokens()
        if gen_len is None:
            gen_len = len(sol_tokens)
        if gen_len != len(sol_tokens):
            raise InvalidConfigError(
                f"gen_len {gen_len} must equal the solution length {len(sol_tokens)}"
            )
        self.gen_len = gen_len
        self.question_ids = np.array(
            [self.vocab.encode(t) for t in problem.question_tokens()], dtype=np.int64
        )
        self.prompt_len = len(self.question_ids)
        self._slots = _build_slots(problem, self.vocab)
        self._conn_off = [i for i, s in enumerate(self._slots) if s.kind == KIND_CONNECTIVE]
        self._eq_off = [
            {kind: None for kind in _EQ_KINDS} for _ in range(len(self._conn_off))
        ]
        for i, slot in enumerate(self._slots):
            if slot.kind in _EQ_KINDS:
                self._eq_off[slot.step][slot.kind] = i
        self._distractor_conn = []
        for off in self._conn_off:
            gold_tok = self.vocab.decode(self._slots[off].gold_id)
            alt = next(c for c in GENERATION_CONNECTIVES if c != gold_tok)
            self._distractor_conn.append(self.vocab.encode(alt))
        self._hidden = self._build_hidden()

    @property
    def d(self) -> int:
        return self.trap.d_syn

    def _value_of(self, token_id: int) -> int | None:
        tok = self.vocab.decode(int(token_id))
        return int(tok) if tok.isdigit() else None

    def _build_hidden(self) -> np.ndarray:
        tokens = self.problem.question_tokens() + self.problem.solution_tokens()
        length = len(tokens)
        roles: list[Role | None] = [None] * self.prompt_len + [
            Role(r) for r in self.problem.gold_roles
        ]
        delims = [i for i, t in enumerate(tokens) if t in _SENTENCE_DELIMS]
        first_delim = delims[0] if delims else length - 1
        solution_str = " ".join(self.problem.solution_tokens())
        hidden = np.zeros((length, self.trap.d_syn), dtype=np.float64)
        for i, tok in enumerate(tokens):
            vec = hidden[i]
            if roles[i] is not None:
                vec[int(roles[i])] = 1.0
            key = f"{self.trap.rng_seed}|{solution_str}|{i}".encode()
            digest = hashlib.blake2b(key, digest_size=8).digest()
            rng = np.random.Generator(np.random.PCG64(int.from_bytes(digest, "big")))
            vec[0:5] += self.trap.noise_sigma * rng.standard_normal(5)
            bucket = min(7, (8 * i) // length)
            vec[5 + bucket] = 1.0
            base = 13
            for j, neighbor in enumerate((i - 1, i + 1)):
                if 0 <= neighbor < length:
                    n_tok = tokens[neighbor]
                    flags = (
                        n_tok.isdigit(),
                        n_tok in OPERATORS or n_tok == EQUALS,
                        n_tok in CONNECTIVE_LEXICON,
                        n_tok in PUNCTUATION,
                        n_tok in ARTICLES,
                    )
                    for k, flag in enumerate(flags):
                        if flag:
                            vec[base + 5 * j + k] = 1.0
            start = 0
            for dpos in delims:
                if dpos < i:
                    start = dpos + 1
                else:
                    break
            dist_start = i - start
            nxt = next((dpos for dpos in delims if dpos >= i), length - 1)
            dist_end = nxt - i
            vec[base + 10 + min(3, dist_start)] = 1.0
            vec[base + 14 + min(3, dist_end)] = 1.0
            if i <= first_delim:
                vec[base + 18] = 1.0
        return hidden

    def _chain_predictions(self, window_ids: np.ndarray, revealed: np.ndarray):
        """Predicted left/result value per step under effective operators.

        Revealed number tokens override computed values so predictions stay
        consistent with whatever the sequence has already committed to.
        """
        steps = self.problem.branch_spec.steps
        beta = self.trap.beta
        value = float(self.problem.branch_spec.start)
        left0 = self._eq_off[0][KIND_CHAIN_LEFT] if self._eq_off else None
        if left0 is not None and revealed[left0]:
            v = self._value_of(window_ids[left0])
            if v is not None:
                value = float(v)
        lefts: list[float] = []
        results: list[float] = []
        for s, step in enumerate(steps):
            lefts.append(value)
            eq = self._eq_off[s]
            if revealed[self._conn_off[s]]:
                op = step.op
            elif revealed[eq[KIND_OP]]:
                written = self.vocab.decode(int(window_ids[eq[KIND_OP]]))
                op = written if written in OPERATORS else step.op
            else:
                op = step.distractor_op if beta >= 0.5 else step.op
            operand = float(step.operand)
            if revealed[eq[KIND_OPERAND]]:
                v = self._value_of(window_ids[eq[KIND_OPERAND]])
                if v is not None:
                    operand = float(v)
            nxt = min(max(apply_op(value, op, operand), 0), MAX_TOKEN_VALUE)
            if revealed[eq[KIND_CHAIN_RESULT]]:
                v = self._value_of(window_ids[eq[KIND_CHAIN_RESULT]])
                if v is not None:
                    nxt = float(v)
            results.append(nxt)
            value = nxt
        return lefts, results, value

    def forward(self, state: SequenceState) -> DenoiserOutput:
        if state.prompt_len != self.prompt_len or state.length != self.prompt_len + self.gen_len:
            raise InvalidInputError(
                f"state shape ({state.prompt_len}, {state.length}) does not match "
                f"backend problem ({self.prompt_len}, {self.prompt_len + self.gen_len})"
            )
        if not np.array_equal(state.ids[: self.prompt_len], self.question_ids):
            raise InvalidInputError("state prompt does not match the backend problem")

        window = state.ids[self.prompt_len :]
        revealed = window != state.mask_id
        lefts, results, final_value = self._chain_predictions(window, revealed)
        beta = self.trap.beta
        split = self.trap.conn_entropy_split

        length = state.length
        top_token = np.empty(length, dtype=np.int64)
        top_prob = np.empty(length, dtype=np.float64)
        top_token[: self.prompt_len] = state.ids[: self.prompt_len]
        top_prob[: self.prompt_len] = 1.0

        def number_top(predicted: float, gold_id: int) -> tuple[int, float]:
            pred_id = self.vocab.encode(str(int(predicted)))
            if pred_id == gold_id:
                return gold_id, P_STRUCTURAL
            return _bimodal_top(pred_id, beta, gold_id)

        for off, slot in enumerate(self._slots):
            pos = self.prompt_len + off
            if revealed[off]:
                top_token[pos] = window[off]
                top_prob[pos] = 1.0
                continue
            if slot.kind == KIND_FILLER:
                tok, prob = slot.gold_id, P_FILLER
            elif slot.kind in (KIND_PREMISE, KIND_OPERAND, KIND_EQUALS):
                tok, prob = slot.gold_id, P_STRUCTURAL
            elif slot.kind == KIND_OP:
                if revealed[self._conn_off[slot.step]]:
                    tok, prob = slot.gold_id, P_STRUCTURAL
                else:
                    distractor = self.vocab.encode(
                        self.problem.branch_spec.steps[slot.step].distractor_op
                    )
                    tok, prob = _bimodal_top(distractor, beta, slot.gold_id)
            elif slot.kind == KIND_CHAIN_LEFT:
                tok, prob = number_top(lefts[slot.step], slot.gold_id)
            elif slot.kind == KIND_CHAIN_RESULT:
                tok, prob = number_top(results[slot.step], slot.gold_id)
            elif slot.kind == KIND_CONNECTIVE:
                eq = self._eq_off[slot.step]
                if all(revealed[eq[k]] for k in _EQ_KINDS):
                    tok, prob = slot.gold_id, P_CONNECTIVE_RESOLVED
                else:
                    tok, prob = _bimodal_top(
                        slot.gold_id, split, self._distractor_conn[slot.step]
                    )
            elif slot.kind == KIND_CONCLUSION:
                tok, prob = slot.gold_id, P_CONCLUSION
            else:  # answer
                pred_id = self.vocab.encode(str(int(final_value)))
                if pred_id == slot.gold_id:
                    tok, prob = slot.gold_id, P_CONCLUSION
                else:
                    tok, prob = _bimodal_top(pred_id, beta, slot.gold_id)
            top_token[pos] = tok
            top_prob[pos] = prob

        return DenoiserOutput(self._hidden.copy(), top_token, top_prob)
