"""Per-session turn-taking: the push-to-talk gate machine, the utterance
buffer, and repetition suppression over patient replies.

One speaker at a time, both directions: the gate refuses to open while the
patient is generating or speaking, and the responder is only ever invoked
after the gate has closed and the utterance is finalized.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

from .triggers import normalize_text


class Phase(str, Enum):
    IDLE = "idle"
    LISTENING = "listening"
    FINALIZING = "finalizing"
    GENERATING = "generating"
    SPEAKING = "speaking"


# The only admissible phase changes. Empty input and transcription failure
# return Listening->Idle (Finalizing is entered only once non-empty text
# exists); a responder failure returns Generating->Idle.
LEGAL_TRANSITIONS = frozenset(
    {
        (Phase.IDLE, Phase.LISTENING),
        (Phase.LISTENING, Phase.FINALIZING),
        (Phase.FINALIZING, Phase.GENERATING),
        (Phase.GENERATING, Phase.SPEAKING),
        (Phase.SPEAKING, Phase.IDLE),
        (Phase.LISTENING, Phase.IDLE),
        (Phase.GENERATING, Phase.IDLE),
    }
)

# Late chunks are refused with gate_closed anyway; the window only documents
# how long after close stragglers are still expected in practice.
POST_GATE_COOLDOWN_MS = 500

REJECT_PATIENT_SPEAKING = "patient_speaking"
DISCARD_GATE_CLOSED = "gate_closed"
DISCARD_STALE_TURN = "stale_turn"


class IllegalTransition(RuntimeError):
    pass


@dataclass
class TurnState:
    phase: Phase = Phase.IDLE
    turn_id: int = 0

    @property
    def gate_open(self) -> bool:
        return self.phase is Phase.LISTENING


@dataclass
class UtteranceBuffer:
    turn_id: int
    source: str = "voice"  # "voice" | "text"
    chunks: list[bytes] = field(default_factory=list)
    finalized_text: Optional[str] = None


def transition(state: TurnState, phase: Phase) -> None:
    """Move the machine one legal step; raise on anything else."""
    if (state.phase, phase) not in LEGAL_TRANSITIONS:
        raise IllegalTransition(f"illegal transition {state.phase.value} -> {phase.value}")
    state.phase = phase


def classify_gate_open(state: TurnState) -> Optional[str]:
    """None = open a fresh turn, "hold" = already listening, else a rejection reason."""
    if state.phase is Phase.IDLE:
        return None
    if state.phase is Phase.LISTENING:
        return "hold"
    return REJECT_PATIENT_SPEAKING


def classify_chunk(state: TurnState, chunk_turn_id: Optional[int]) -> Optional[str]:
    """None = accept; otherwise the discard reason."""
    if state.phase is not Phase.LISTENING:
        return DISCARD_GATE_CLOSED
    if chunk_turn_id is not None and chunk_turn_id != state.turn_id:
        return DISCARD_STALE_TURN
    return None


# ---------------------------------------------------------------------------
# Transcription adapter
# ---------------------------------------------------------------------------


class TranscriberError(RuntimeError):
    pass


class EchoTranscriber:
    """Reference test adapter: chunks are UTF-8 text fragments, concatenated.

    Keeps the whole voice pipeline deterministic offline; a real speech-to-
    text adapter drops in behind the same one-method surface.
    """

    def transcribe(self, chunks: Sequence[bytes]) -> str:
        return b"".join(chunks).decode("utf-8", errors="replace")


# ---------------------------------------------------------------------------
# Repetition suppression
# ---------------------------------------------------------------------------

REPETITION_THRESHOLD = 0.6
REPETITION_WINDOW = 10
NGRAM_SIZE = 4

# Rotated when suppression has nothing left to emit. More lines than the
# comparison window, pairwise-disjoint word 4-grams, so consecutive fallback
# turns never trip the threshold against each other.
DEFAULT_REPETITION_FALLBACKS = (
    "Could we talk about something else for a bit?",
    "I feel like I already answered that.",
    "Sorry, nothing new comes to mind there.",
    "Maybe ask me that a different way?",
    "I'm not sure what else I can tell you.",
    "Can we move on, please?",
    "That's really all I know about it.",
    "I've said everything I remember on that.",
    "Is there something different you wanted to ask?",
    "My mind's gone a bit blank, honestly.",
    "Honestly I keep coming back to the same answer.",
    "Let's leave that one for now, okay?",
)

_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")


def word_ngrams(text: str, n: int = NGRAM_SIZE) -> set[tuple[str, ...]]:
    tokens = normalize_text(text).split()
    return {tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)}


def repetition_score(
    candidate: str,
    history: Sequence[str],
    k: int = REPETITION_WINDOW,
    n: int = NGRAM_SIZE,
) -> float:
    """Max word-n-gram Jaccard similarity against the last k patient replies.

    Replies shorter than n words fall back to exact comparison of normalized
    text (1.0 on identity, 0.0 otherwise).
    """
    cand_norm = normalize_text(candidate)
    cand_tokens = cand_norm.split()
    cand_grams = {tuple(cand_tokens[i : i + n]) for i in range(len(cand_tokens) - n + 1)}
    best = 0.0
    for prior in list(history)[-k:]:
        prior_norm = normalize_text(prior)
        prior_tokens = prior_norm.split()
        if len(cand_tokens) < n or len(prior_tokens) < n:
            score = 1.0 if cand_norm == prior_norm else 0.0
        else:
            prior_grams = {tuple(prior_tokens[i : i + n]) for i in range(len(prior_tokens) - n + 1)}
            union = cand_grams | prior_grams
            score = len(cand_grams & prior_grams) / len(union) if union else 0.0
        best = max(best, score)
    return best


@dataclass(frozen=True)
class SuppressionResult:
    text: str
    engaged: bool = False
    regenerated: bool = False
    used_fallback: bool = False
    final_score: float = 0.0


def suppress_repetition(
    candidate: str,
    history: Sequence[str],
    regenerate: Optional[Callable[[str], str]] = None,
    *,
    fallback_lines: Sequence[str] = DEFAULT_REPETITION_FALLBACKS,
    fallback_uses: int = 0,
    threshold: float = REPETITION_THRESHOLD,
    k: int = REPETITION_WINDOW,
) -> SuppressionResult:
    """Keep the patient from parroting her recent replies.

    Fresh candidates pass through. A repeated one gets one regeneration with
    a do-not-repeat directive; if that still repeats, offending sentences are
    dropped; if nothing usable remains, a rotating fallback line is emitted.
    The result is always non-empty.
    """
    score = repetition_score(candidate, history, k)
    if score <= threshold:
        return SuppressionResult(candidate, final_score=score)

    text = candidate
    regenerated = False
    if regenerate is not None:
        try:
            text = regenerate("Do not repeat your earlier answers; say something new or say it differently.")
            regenerated = True
        except Exception:
            text = candidate
        score = repetition_score(text, history, k)
        if score <= threshold:
            return SuppressionResult(text, engaged=True, regenerated=regenerated, final_score=score)

    kept = [
        s
        for s in _SENTENCE_SPLIT.split(text)
        if s.strip() and repetition_score(s, history, k) <= threshold
    ]
    if kept:
        joined = " ".join(s.strip() for s in kept)
        score = repetition_score(joined, history, k)
        if score <= threshold:
            return SuppressionResult(joined, engaged=True, regenerated=regenerated, final_score=score)

    lines = tuple(fallback_lines) or DEFAULT_REPETITION_FALLBACKS
    fallback = lines[fallback_uses % len(lines)]
    return SuppressionResult(
        fallback,
        engaged=True,
        regenerated=regenerated,
        used_fallback=True,
        final_score=repetition_score(fallback, history, k),
    )
