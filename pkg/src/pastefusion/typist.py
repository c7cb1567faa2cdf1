"""Semantic type learning and recognition over token-pattern distributions.

Values are segmented into generalized tokens (capitalized word, 5-digit
number, ...). A type model is the distribution of token patterns seen in
training data; a column is recognized as a type when its own pattern
distribution is close to the trained one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

TYPE_SCORE_THRESHOLD = 0.5  # tau_type: minimum score for a confident label
CONST_PROMOTION_SHARE = 0.8  # literal kept verbatim when this common

_WORD_CLASSES = {"CAPWORD", "UPPERWORD", "LOWERWORD", "MIXEDWORD", "NUM", "ALNUM"}


class TypistError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class Token:
    """One generalized token; ``arg`` carries the literal for CONST/PUNCT
    and the digit count for NUM."""

    cls: str
    arg: str = ""

    def encode(self) -> str:
        return f"{self.cls}:{self.arg}" if self.arg or self.cls in ("CONST", "PUNCT") else self.cls

    @staticmethod
    def decode(tag: str) -> "Token":
        cls, sep, arg = tag.partition(":")
        return Token(cls, arg) if sep else Token(cls)


Pattern = tuple[Token, ...]


def _classify_word(run: str) -> Token:
    if run.isdigit():
        return Token("NUM", str(len(run)))
    if run.isalpha():
        if len(run) > 1 and run.isupper():
            return Token("UPPERWORD")
        if run[0].isupper() and run[1:].islower():
            return Token("CAPWORD")
        if run.islower():
            return Token("LOWERWORD")
        return Token("MIXEDWORD")
    return Token("ALNUM")


def segment(value: str) -> list[tuple[Token, str]]:
    """Split a value into (token, raw text) pairs.

    Maximal alphanumeric runs become word/number tokens, whitespace runs
    collapse to a single token, and every other character is punctuation.
    The empty string maps to a single empty-constant marker.
    """
    if value == "":
        return [(Token("CONST", ""), "")]
    out: list[tuple[Token, str]] = []
    i, n = 0, len(value)
    while i < n:
        ch = value[i]
        if ch.isalnum():
            j = i
            while j < n and value[j].isalnum():
                j += 1
            run = value[i:j]
            out.append((_classify_word(run), run))
            i = j
        elif ch.isspace():
            j = i
            while j < n and value[j].isspace():
                j += 1
            out.append((Token("WHITESPACE"), value[i:j]))
            i = j
        else:
            out.append((Token("PUNCT", ch), ch))
            i += 1
    return out


def tokenize(value: str) -> Pattern:
    """Generalized token pattern of a value (deterministic and total)."""
    return tuple(tok for tok, _ in segment(value))


@dataclass(frozen=True)
class TypeModel:
    """Learned pattern distribution for one semantic type.

    ``samples`` keeps the raw training values so refinement recomputes the
    distribution over the full history.
    """

    type_id: str
    pattern_counts: dict[Pattern, int] = field(default_factory=dict)
    n_train: int = 0
    samples: tuple[str, ...] = ()

    @property
    def patterns(self) -> set[Pattern]:
        return set(self.pattern_counts)

    @property
    def train_dist(self) -> dict[Pattern, float]:
        return {p: c / self.n_train for p, c in self.pattern_counts.items()}

    def to_payload(self) -> dict:
        return {
            "type_id": self.type_id,
            "patterns": {
                json.dumps([t.encode() for t in pat]): count
                for pat, count in sorted(
                    self.pattern_counts.items(), key=lambda kv: tuple(t.encode() for t in kv[0])
                )
            },
            "n_train": self.n_train,
            "samples": list(self.samples),
        }

    @staticmethod
    def from_payload(payload: dict) -> "TypeModel":
        counts = {
            tuple(Token.decode(tag) for tag in json.loads(key)): count
            for key, count in payload["patterns"].items()
        }
        return TypeModel(
            type_id=payload["type_id"],
            pattern_counts=counts,
            n_train=payload["n_train"],
            samples=tuple(payload["samples"]),
        )


def _canonical_pattern(value: str, const_slots: dict[tuple[Pattern, int], str]) -> Pattern:
    """Pattern of a value with promoted slots replaced by constants."""
    pieces = segment(value)
    gen = tuple(tok for tok, _ in pieces)
    out = []
    for idx, (tok, raw) in enumerate(pieces):
        literal = const_slots.get((gen, idx))
        if literal is not None and raw == literal:
            out.append(Token("CONST", raw))
        else:
            out.append(tok)
    return tuple(out)


def _promoted_slots(values: list[str]) -> dict[tuple[Pattern, int], str]:
    """Find (pattern, slot) positions where one literal dominates training."""
    by_slot: dict[tuple[Pattern, int], dict[str, int]] = {}
    for value in values:
        pieces = segment(value)
        gen = tuple(tok for tok, _ in pieces)
        for idx, (tok, raw) in enumerate(pieces):
            if tok.cls in _WORD_CLASSES:
                by_slot.setdefault((gen, idx), {}).setdefault(raw, 0)
                by_slot[(gen, idx)][raw] += 1
    slots = {}
    threshold = CONST_PROMOTION_SHARE * len(values)
    for key, literals in by_slot.items():
        literal, count = max(literals.items(), key=lambda kv: (kv[1], kv[0]))
        if count >= threshold:
            slots[key] = literal
    return slots


def learn_type(name: str, values: list[str]) -> TypeModel:
    if not values:
        raise TypistError("cannot learn a type from an empty training set")
    slots = _promoted_slots(values)
    counts: dict[Pattern, int] = {}
    for value in values:
        pat = _canonical_pattern(value, slots)
        counts[pat] = counts.get(pat, 0) + 1
    return TypeModel(type_id=name, pattern_counts=counts, n_train=len(values), samples=tuple(values))


def update_type(model: TypeModel, new_values: list[str]) -> TypeModel:
    if not new_values:
        raise TypistError("update requires at least one value")
    merged = learn_type(model.type_id, list(model.samples) + list(new_values))
    return merged


def _match_pattern(value: str, model: TypeModel) -> Pattern | None:
    """Most specific model pattern compatible with the value, if any."""
    pieces = segment(value)
    best: tuple[int, tuple[str, ...], Pattern] | None = None
    for pat in model.pattern_counts:
        if len(pat) != len(pieces):
            continue
        consts = 0
        ok = True
        for model_tok, (tok, raw) in zip(pat, pieces):
            if model_tok.cls == "CONST":
                if raw != model_tok.arg:
                    ok = False
                    break
                consts += 1
            elif model_tok != tok:
                ok = False
                break
        if ok:
            key = (consts, tuple(t.encode() for t in pat), pat)
            if best is None or key > best:
                best = key
    return best[2] if best else None


@dataclass(frozen=True)
class RecognitionEntry:
    type_id: str
    score: float
    confident: bool


@dataclass(frozen=True)
class RecognitionResult:
    entries: tuple[RecognitionEntry, ...]

    @property
    def top(self) -> RecognitionEntry | None:
        return self.entries[0] if self.entries else None


def score_column(values: list[str], model: TypeModel) -> float:
    """1 - total-variation distance between observed and trained pattern
    distributions; values matching no pattern count as distance-1 mass."""
    observed: dict[Pattern, float] = {}
    unmatched = 0.0
    w = 1.0 / len(values)
    for value in values:
        pat = _match_pattern(value, model)
        if pat is None:
            unmatched += w
        else:
            observed[pat] = observed.get(pat, 0.0) + w
    dist = model.train_dist
    tv = 0.5 * (unmatched + sum(abs(observed.get(p, 0.0) - dist.get(p, 0.0)) for p in set(observed) | set(dist)))
    return max(0.0, min(1.0, 1.0 - tv))


def recognize_column(values: list[str], known: dict[str, TypeModel]) -> RecognitionResult:
    if not values:
        raise TypistError("cannot recognize an empty column")
    if not known:
        raise TypistError("no known types to recognize against")
    scored = [
        RecognitionEntry(type_id, score, score >= TYPE_SCORE_THRESHOLD)
        for type_id, score in ((tid, score_column(values, m)) for tid, m in known.items())
    ]
    scored.sort(key=lambda e: (-e.score, e.type_id))
    return RecognitionResult(entries=tuple(scored))


def match_source_function(
    candidate_id: str,
    known_id: str,
    probe_rows: list[tuple],
    signatures: dict[str, "object"],
    call,
    link_threshold: float = 0.8,
) -> float:
    """Fraction of probe inputs on which two services produce linkable output.

    ``call(service_id, inputs) -> list of output tuples``; services must
    agree on input and output semantic types.
    """
    from .text import mean_similarity

    cand, ref = signatures[candidate_id], signatures[known_id]

    def types(attrs):
        return sorted((a.semantic_type or "") for a in attrs)

    if types(cand.inputs) != types(ref.inputs):
        raise TypistError("service inputs are not type-compatible")
    if types(cand.outputs) != types(ref.outputs):
        raise TypistError("service outputs are not type-compatible")
    agreements = 0
    attempted = 0
    failures = 0
    for row in probe_rows:
        try:
            cand_out = call(candidate_id, row)
            ref_out = call(known_id, row)
        except Exception:
            failures += 1
            continue
        attempted += 1
        if any(
            mean_similarity(c, r) >= link_threshold
            for c in cand_out
            for r in ref_out
        ):
            agreements += 1
    if attempted == 0:
        raise TypistError("both services failed on every probe")
    return agreements / (attempted + failures)
