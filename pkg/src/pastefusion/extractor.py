"""Structure learning: document modeling, rule induction, and refinement.

A document is analyzed by a fixed roster of experts, each proposing a
segmentation into records. Segmentations are clustered by exact record
equality and the winning cluster becomes the document model; the runners-up
stay available as alternative hypotheses for refinement.

Pasted examples are generalized into projection rules (a filter predicate
over record fields plus projected field indices), ordered most-general
first. When examples cannot be aligned to the model, a landmark rule over
token contexts in the raw text is induced instead.
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field, replace
from html.parser import HTMLParser

from .catalog import MaterializedTable, assign_row_ids
from .typist import tokenize

CONTEXT_TOKENS = 4  # landmark context width on each side


class ExtractionError(ValueError):
    pass


class NoConsistentRule(ExtractionError):
    pass


# -- document experts ------------------------------------------------------


@dataclass(frozen=True)
class Segmentation:
    """One hypothesis about the document's records."""

    records: tuple[tuple[str, ...], ...]
    experts: tuple[str, ...]
    confidence: float


class _TableParser(HTMLParser):
    def __init__(self):
        super().__init__()
        self.rows: list[list[str]] = []
        self._row: list[str] | None = None
        self._cell: list[str] | None = None

    def handle_starttag(self, tag, attrs):
        if tag == "tr":
            self._row = []
        elif tag in ("td", "th") and self._row is not None:
            self._cell = []

    def handle_endtag(self, tag):
        if tag in ("td", "th") and self._cell is not None:
            self._row.append(" ".join("".join(self._cell).split()))
            self._cell = None
        elif tag == "tr" and self._row is not None:
            if self._row:
                self.rows.append(self._row)
            self._row = None

    def handle_data(self, data):
        if self._cell is not None:
            self._cell.append(data)


class _ListParser(HTMLParser):
    def __init__(self):
        super().__init__()
        self.items: list[list[str]] = []
        self._item: list[str] | None = None
        self._chunk: list[str] = []

    def _flush(self):
        if self._item is not None:
            text = " ".join("".join(self._chunk).split())
            if text:
                self._item.append(text)
            self._chunk = []

    def handle_starttag(self, tag, attrs):
        if tag == "li":
            self._item = []
            self._chunk = []
        elif self._item is not None:
            self._flush()

    def handle_endtag(self, tag):
        if tag == "li" and self._item is not None:
            self._flush()
            if self._item:
                self.items.append(self._item)
            self._item = None
        elif self._item is not None:
            self._flush()

    def handle_data(self, data):
        if self._item is not None:
            self._chunk.append(data)


def _expert_delimited(text: str, fmt: str) -> list[tuple[str, float, list[list[str]]]]:
    if fmt not in ("csv", "tsv"):
        return []
    delim = "\t" if fmt == "tsv" else ","
    rows = [row for row in csv.reader(io.StringIO(text), delimiter=delim) if any(c.strip() for c in row)]
    rows = [[c.strip() for c in row] for row in rows]
    return [("delimited", 1.0, rows)] if rows else []


def _expert_html_table(text: str, fmt: str) -> list[tuple[str, float, list[list[str]]]]:
    if fmt != "html":
        return []
    parser = _TableParser()
    parser.feed(text)
    return [("html-table", 1.0, parser.rows)] if parser.rows else []


def _expert_repeated_tags(text: str, fmt: str) -> list[tuple[str, float, list[list[str]]]]:
    if fmt != "html":
        return []
    parser = _ListParser()
    parser.feed(text)
    return [("repeated-tags", 0.7, parser.items)] if parser.items else []


def _majority_pattern(column: list[str]):
    counts: dict[tuple, int] = {}
    for value in column:
        pat = tokenize(value)
        counts[pat] = counts.get(pat, 0) + 1
    return max(counts.items(), key=lambda kv: kv[1])[0]


def _expert_data_type(base: list[list[str]]) -> list[tuple[str, float, list[list[str]]]]:
    """Drop rows whose field patterns disagree with the per-column majority.

    Catches header rows and other artifacts inside an otherwise regular
    structural segmentation.
    """
    if len(base) < 3:
        return []
    arity = max(len(r) for r in base)
    padded = [list(r) + [""] * (arity - len(r)) for r in base]
    majorities = [_majority_pattern([row[c] for row in padded]) for c in range(arity)]
    kept = []
    for row in padded:
        matches = sum(1 for c in range(arity) if tokenize(row[c]) == majorities[c])
        if matches * 2 >= arity:
            kept.append(row)
    if kept and kept != padded:
        return [("data-type", 0.6, kept)]
    return []


_EXPERT_ORDER = ("delimited", "html-table", "repeated-tags", "data-type")


@dataclass(frozen=True)
class DocumentModel:
    """Ranked segmentation hypotheses; ``candidates[0]`` is the model."""

    candidates: tuple[Segmentation, ...]
    raw_text: str
    format: str

    @property
    def records(self) -> tuple[tuple[str, ...], ...]:
        return self.candidates[0].records

    @property
    def arity(self) -> int:
        return len(self.records[0]) if self.records else 0

    @property
    def expert_votes(self) -> list[tuple[str, float]]:
        return [(name, seg.confidence / len(seg.experts)) for seg in self.candidates for name in seg.experts]


def _pad(records: list[list[str]]) -> tuple[tuple[str, ...], ...]:
    arity = max(len(r) for r in records)
    return tuple(tuple(r + [""] * (arity - len(r))) for r in records)


def infer_document_model(raw: bytes, fmt: str) -> DocumentModel:
    if fmt not in ("csv", "tsv", "html"):
        raise ExtractionError(f"unsupported format {fmt!r}")
    text = raw.decode("utf-8", errors="replace")
    if not text.strip():
        raise ExtractionError("empty document")

    proposals = []
    proposals += _expert_delimited(text, fmt)
    proposals += _expert_html_table(text, fmt)
    proposals += _expert_repeated_tags(text, fmt)
    if proposals:
        best_structural = max(proposals, key=lambda p: p[1])
        proposals += _expert_data_type(best_structural[2])
    if not any(p[2] for p in proposals):
        raise ExtractionError("no records found in document")

    # Cluster proposals by exact record-boundary equality.
    clusters: dict[tuple, dict] = {}
    for name, conf, records in proposals:
        key = _pad(records)
        entry = clusters.setdefault(key, {"experts": [], "confidence": 0.0})
        entry["experts"].append(name)
        entry["confidence"] += conf

    def order_key(item):
        records, entry = item
        first = min(_EXPERT_ORDER.index(e) for e in entry["experts"])
        return (-entry["confidence"], -len(records), first)

    ordered = sorted(clusters.items(), key=order_key)
    candidates = tuple(
        Segmentation(records=records, experts=tuple(entry["experts"]), confidence=entry["confidence"])
        for records, entry in ordered
    )
    return DocumentModel(candidates=candidates, raw_text=text, format=fmt)


# -- example selections ----------------------------------------------------


@dataclass(frozen=True)
class ExampleSelection:
    rows: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        if not self.rows:
            raise ExtractionError("example selection is empty")


# -- rules -----------------------------------------------------------------


@dataclass(frozen=True)
class FieldLandmark:
    prefix: tuple[str, ...]
    suffix: tuple[str, ...]
    fallback_values: tuple[str, ...] = ()


@dataclass(frozen=True)
class ExtractionRule:
    form: str  # projection | landmark
    generality_rank: int
    field_indices: tuple[int, ...] = ()
    predicate: tuple[tuple[int, str], ...] = ()  # conjunction of field = const
    candidate_index: int = 0
    landmarks: tuple[FieldLandmark, ...] = ()
    examples: tuple[tuple[str, ...], ...] = ()


def _locate_examples(seg: Segmentation, examples: ExampleSelection):
    """Common field alignment of all example rows within a segmentation.

    Returns (field_indices, matched record indices) or None.
    """

    def alignments(row: tuple[str, ...]) -> dict[tuple[int, ...], int]:
        found: dict[tuple[int, ...], int] = {}
        for ridx, record in enumerate(seg.records):
            for combo in _ordered_positions(record, row):
                found.setdefault(combo, ridx)
        return found

    per_row = [alignments(row) for row in examples.rows]
    common = set(per_row[0])
    for found in per_row[1:]:
        common &= set(found)
    if not common:
        return None
    indices = min(common)
    return indices, [found[indices] for found in per_row]


def _ordered_positions(record: tuple[str, ...], row: tuple[str, ...]):
    """All strictly-increasing field index tuples matching the row values."""

    def rec(value_idx: int, start: int):
        if value_idx == len(row):
            yield ()
            return
        for fidx in range(start, len(record)):
            if record[fidx] == row[value_idx]:
                for rest in rec(value_idx + 1, fidx + 1):
                    yield (fidx,) + rest

    yield from rec(0, 0)


def _projection_output(seg: Segmentation, rule: ExtractionRule) -> list[tuple[str, ...]]:
    out = []
    for record in seg.records:
        if all(record[fidx] == const for fidx, const in rule.predicate):
            out.append(tuple(record[f] for f in rule.field_indices))
    return out


def _projection_lattice(
    model: DocumentModel,
    candidate_index: int,
    field_indices: tuple[int, ...],
    matched: list[int],
    examples: ExampleSelection,
) -> list[ExtractionRule]:
    seg = model.candidates[candidate_index]
    arity = len(seg.records[0])
    shared = [
        f
        for f in range(arity)
        if len({seg.records[r][f] for r in matched}) == 1
    ]
    rules = []
    seen_outputs = set()
    subsets = sorted(_subsets(shared), key=lambda s: (len(s), s))
    for subset in subsets:
        predicate = tuple((f, seg.records[matched[0]][f]) for f in subset)
        rule = ExtractionRule(
            form="projection",
            generality_rank=len(rules),
            field_indices=field_indices,
            predicate=predicate,
            candidate_index=candidate_index,
            examples=examples.rows,
        )
        output = tuple(_projection_output(seg, rule))
        if output in seen_outputs:
            continue
        seen_outputs.add(output)
        rules.append(rule)
    return rules


def _subsets(items: list[int]):
    out = [()]
    for item in items:
        out += [s + (item,) for s in out]
    return out


_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


def _context_of(text: str, value: str) -> list[tuple[tuple[str, ...], tuple[str, ...]]]:
    contexts = []
    start = 0
    while True:
        pos = text.find(value, start)
        if pos < 0:
            break
        before = _TOKEN_RE.findall(text[:pos])
        after = _TOKEN_RE.findall(text[pos + len(value):])
        contexts.append((tuple(before[-CONTEXT_TOKENS:]), tuple(after[:CONTEXT_TOKENS])))
        start = pos + 1
    return contexts


def _common_suffix(seqs: list[tuple[str, ...]]) -> tuple[str, ...]:
    return tuple(reversed(_common_prefix([tuple(reversed(s)) for s in seqs])))


def _common_prefix(seqs: list[tuple[str, ...]]) -> tuple[str, ...]:
    if not seqs:
        return ()
    out = []
    for items in zip(*seqs):
        if len(set(items)) == 1:
            out.append(items[0])
        else:
            break
    return tuple(out)


def _landmark_matches(text: str, lm: FieldLandmark) -> list[str]:
    if not lm.prefix and not lm.suffix:
        hits = []
        for value in lm.fallback_values:
            hits += [value] * text.count(value)
        return hits
    prefix_re = r"\s*".join(re.escape(t) for t in lm.prefix)
    suffix_re = r"\s*".join(re.escape(t) for t in lm.suffix)
    if lm.suffix:
        pattern = f"{prefix_re}\\s*(.*?)\\s*{suffix_re}" if lm.prefix else f"(.*?)\\s*{suffix_re}"
    else:
        pattern = f"{prefix_re}\\s*([^\\n<]*)"
    return [m.group(1).strip() for m in re.finditer(pattern, text, re.S)]


def _induce_landmarks(model: DocumentModel, examples: ExampleSelection) -> ExtractionRule | None:
    arity = len(examples.rows[0])
    if any(len(r) != arity for r in examples.rows):
        return None
    landmarks = []
    for f in range(arity):
        values = [row[f] for row in examples.rows]
        contexts = []
        for value in values:
            found = _context_of(model.raw_text, value)
            if not found:
                return None
            contexts.append(found)
        # One context per example: take the first occurrence of each.
        prefixes = [ctx[0][0] for ctx in contexts]
        suffixes = [ctx[0][1] for ctx in contexts]
        prefix = _common_suffix(prefixes)
        suffix = _common_prefix(suffixes)
        lm = FieldLandmark(prefix=prefix, suffix=suffix, fallback_values=tuple(values))
        # Shrink until the rule re-extracts every example value.
        while True:
            matches = _landmark_matches(model.raw_text, lm)
            if all(v in matches for v in values):
                break
            if lm.prefix:
                lm = replace(lm, prefix=lm.prefix[1:])
            elif lm.suffix:
                lm = replace(lm, suffix=lm.suffix[:-1])
            else:
                break
        matches = _landmark_matches(model.raw_text, lm)
        if not all(v in matches for v in values):
            return None
        landmarks.append(lm)
    return ExtractionRule(
        form="landmark",
        generality_rank=0,
        landmarks=tuple(landmarks),
        examples=examples.rows,
    )


def induce_rule(model: DocumentModel, examples: ExampleSelection) -> list[ExtractionRule]:
    located = _locate_examples(model.candidates[0], examples)
    if located is not None:
        field_indices, matched = located
        rules = _projection_lattice(model, 0, field_indices, matched, examples)
        if rules:
            return rules
    landmark = _induce_landmarks(model, examples)
    if landmark is not None:
        return [landmark]
    raise NoConsistentRule("no consistent hypothesis for the pasted examples")


def _landmark_output(model: DocumentModel, rule: ExtractionRule) -> list[tuple[str, ...]]:
    per_field = [_landmark_matches(model.raw_text, lm) for lm in rule.landmarks]
    count = min(len(m) for m in per_field) if per_field else 0
    return [tuple(per_field[f][i] for f in range(len(per_field))) for i in range(count)]


def apply_rule(rule: ExtractionRule, raw: bytes, fmt: str, source_id: str = "") -> MaterializedTable:
    model = infer_document_model(raw, fmt)
    return apply_rule_to_model(rule, model, source_id)


def apply_rule_to_model(rule: ExtractionRule, model: DocumentModel, source_id: str = "") -> MaterializedTable:
    if rule.form == "projection":
        if rule.candidate_index >= len(model.candidates):
            raise ExtractionError("rule does not match this document's structure")
        rows = _projection_output(model.candidates[rule.candidate_index], rule)
    else:
        rows = _landmark_output(model, rule)
    return assign_row_ids(source_id, rows)


def refine_rule(
    model: DocumentModel,
    rule: ExtractionRule,
    kept_rows: list[tuple[str, ...]],
    removed_rows: list[tuple[str, ...]],
) -> ExtractionRule:
    kept = {tuple(r) for r in kept_rows}
    removed = {tuple(r) for r in removed_rows}
    if kept & removed:
        raise ExtractionError("contradictory feedback: row both kept and removed")
    positives = kept | set(rule.examples)
    current = set(apply_rule_to_model(rule, model).rows)
    if positives <= current and not (removed & current):
        return rule
    if rule.form != "projection":
        raise NoConsistentRule("landmark rules cannot currently be refined from row feedback")

    for cidx, seg in enumerate(model.candidates):
        matched = []
        ok = True
        for pos in sorted(positives):
            hit = None
            for ridx, record in enumerate(seg.records):
                if tuple(record[f] for f in rule.field_indices if f < len(record)) == pos:
                    hit = ridx
                    break
            if hit is None:
                ok = False
                break
            matched.append(hit)
        if not ok:
            continue
        lattice = _projection_lattice(
            model, cidx, rule.field_indices, matched, ExampleSelection(rows=tuple(sorted(positives)))
        )
        for candidate in lattice:
            output = set(_projection_output(seg, candidate))
            if positives <= output and not (removed & output):
                return replace(candidate, examples=rule.examples)
    raise NoConsistentRule("no hypothesis separates kept rows from removed rows")
