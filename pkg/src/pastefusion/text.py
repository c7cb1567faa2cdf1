"""String similarity used by record linking and source-function comparison."""

from __future__ import annotations

import re

_WS = re.compile(r"\s+")

LINK_SIMILARITY_THRESHOLD = 0.8


def normalize(value: str) -> str:
    """Case-fold and collapse internal whitespace."""
    return _WS.sub(" ", value.strip()).casefold()


def levenshtein(a: str, b: str) -> int:
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def similarity(a: str | None, b: str | None) -> float:
    """Normalized edit similarity in [0, 1]; nulls never match anything."""
    if a is None or b is None:
        return 0.0
    na, nb = normalize(a), normalize(b)
    if not na and not nb:
        return 1.0
    longest = max(len(na), len(nb))
    return 1.0 - levenshtein(na, nb) / longest


def mean_similarity(left: tuple, right: tuple) -> float:
    """Mean per-field similarity over paired values."""
    if not left:
        return 0.0
    return sum(similarity(a, b) for a, b in zip(left, right)) / len(left)
