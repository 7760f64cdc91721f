"""Independent brute-force oracles used to pin expected values.

These deliberately avoid the package's own implementations: normalization is
re-derived character by character, n-grams are collected with plain loops,
and set arithmetic is done by counting. Tests compare the production path
against these.
"""

from __future__ import annotations


def oracle_normalize(raw: str) -> str:
    out = []
    for ch in raw.lower():
        out.append(ch if ("a" <= ch <= "z" or "0" <= ch <= "9") else " ")
    return " ".join("".join(out).split())


def oracle_fourgrams(text: str) -> list[tuple[str, ...]]:
    words = oracle_normalize(text).split()
    grams = []
    for i in range(len(words) - 3):
        grams.append((words[i], words[i + 1], words[i + 2], words[i + 3]))
    return grams


def oracle_jaccard(a: list[tuple[str, ...]], b: list[tuple[str, ...]]) -> float:
    unique_a = []
    for g in a:
        if g not in unique_a:
            unique_a.append(g)
    unique_b = []
    for g in b:
        if g not in unique_b:
            unique_b.append(g)
    if not unique_a and not unique_b:
        return 0.0
    shared = 0
    for g in unique_a:
        if g in unique_b:
            shared += 1
    union = len(unique_a) + len(unique_b) - shared
    return shared / union


def oracle_repetition_score(candidate: str, history: list[str], k: int = 10) -> float:
    """Max 4-gram Jaccard against the last k replies; short replies compare
    by exact normalized equality."""
    best = 0.0
    cand_words = oracle_normalize(candidate).split()
    for prior in history[-k:]:
        prior_words = oracle_normalize(prior).split()
        if len(cand_words) < 4 or len(prior_words) < 4:
            score = 1.0 if oracle_normalize(candidate) == oracle_normalize(prior) else 0.0
        else:
            score = oracle_jaccard(oracle_fourgrams(candidate), oracle_fourgrams(prior))
        if score > best:
            best = score
    return best
