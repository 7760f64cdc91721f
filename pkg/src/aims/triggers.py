"""Keyword trigger detection and per-turn animation selection.

Matching is done on normalized text and respects token boundaries, so the
phrase "fever" does not fire on "feverish". Every turn resolves to exactly
one clip: an output-side negation rule wins over input matches (configurable
per pack), input matches rank by rule priority, and the scene fallback clip
covers everything else.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional, Sequence

if TYPE_CHECKING:
    from .scenario import SceneSpec, ScenarioPack

DEFAULT_NEGATION_TOKENS = (
    "no",
    "nope",
    "not really",
    "i haven't",
    "i have not",
    "i don't",
    "i do not",
    "never",
)

_NON_ALNUM = re.compile(r"[^a-z0-9]+")
_SENTENCE_BREAK = re.compile(r"[.!?]")


def normalize_text(raw: str) -> str:
    """Lowercase, fold punctuation to spaces, collapse whitespace. Idempotent."""
    return _NON_ALNUM.sub(" ", raw.lower()).strip()


@dataclass(frozen=True)
class TriggerMatch:
    rule_id: str
    clip_id: str
    matched_phrase: str
    side: str
    start: int  # char offsets into the normalized utterance
    end: int


@dataclass(frozen=True)
class AnimationChoice:
    clip_id: str
    expression_tag: str
    rule_id: Optional[str] = None
    source: str = "fallback"  # "output" | "input" | "fallback"


def _token_spans(normalized: str) -> list[tuple[str, int, int]]:
    spans = []
    pos = 0
    for tok in normalized.split():
        spans.append((tok, pos, pos + len(tok)))
        pos += len(tok) + 1
    return spans


def _find_run(tokens: Sequence[str], phrase: Sequence[str]) -> Optional[int]:
    """Index of the first occurrence of `phrase` as a contiguous token run."""
    n, m = len(tokens), len(phrase)
    for i in range(n - m + 1):
        if list(tokens[i : i + m]) == list(phrase):
            return i
    return None


def detect_input_triggers(utterance: str, scene: "SceneSpec") -> list[TriggerMatch]:
    """All input-side rules whose any phrase occurs in the utterance.

    One match per rule (earliest occurrence across its phrases), ordered by
    rule priority then match position.
    """
    norm = normalize_text(utterance)
    spans = _token_spans(norm)
    tokens = [t for t, _, _ in spans]
    found: list[tuple[int, TriggerMatch]] = []
    for rule in scene.trigger_rules:
        if rule.side != "input":
            continue
        best: Optional[TriggerMatch] = None
        for phrase in rule.phrases:
            ptoks = normalize_text(phrase).split()
            if not ptoks:
                continue
            at = _find_run(tokens, ptoks)
            if at is None:
                continue
            start = spans[at][1]
            end = spans[at + len(ptoks) - 1][2]
            if best is None or start < best.start:
                best = TriggerMatch(rule.id, rule.clip_id, " ".join(ptoks), rule.side, start, end)
        if best is not None:
            found.append((rule.priority, best))
    found.sort(key=lambda pair: (pair[0], pair[1].start))
    return [m for _, m in found]


def detect_output_negation(
    reply: str, negation_tokens: Sequence[str] = DEFAULT_NEGATION_TOKENS
) -> bool:
    """True when the reply's first sentence opens with a rejection token."""
    first = _SENTENCE_BREAK.split(reply, maxsplit=1)[0]
    norm = normalize_text(first)
    for token in negation_tokens:
        ntok = normalize_text(token)
        if ntok and (norm == ntok or norm.startswith(ntok + " ")):
            return True
    return False


def select_animation(
    input_matches: Sequence[TriggerMatch],
    output_negation: bool,
    scene: "SceneSpec",
    pack: "ScenarioPack",
) -> AnimationChoice:
    """Resolve the turn's single clip. Never fails on a validated pack."""
    negation_rule = None
    if output_negation:
        output_rules = [r for r in scene.trigger_rules if r.side == "output"]
        if output_rules:
            negation_rule = min(output_rules, key=lambda r: r.priority)
    input_match = input_matches[0] if input_matches else None

    clip_id = scene.fallback_clip_id
    rule_id: Optional[str] = None
    source = "fallback"
    if pack.prefer_output_negation:
        if negation_rule is not None:
            clip_id, rule_id, source = negation_rule.clip_id, negation_rule.id, "output"
        elif input_match is not None:
            clip_id, rule_id, source = input_match.clip_id, input_match.rule_id, "input"
    else:
        if input_match is not None:
            clip_id, rule_id, source = input_match.clip_id, input_match.rule_id, "input"
        elif negation_rule is not None:
            clip_id, rule_id, source = negation_rule.clip_id, negation_rule.id, "output"
    return AnimationChoice(clip_id, pack.clip(clip_id).expression_tag, rule_id, source)
