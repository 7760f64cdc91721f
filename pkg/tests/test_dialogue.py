from __future__ import annotations

import itertools

import pytest

from aims.dialogue import (
    DEFAULT_REPETITION_FALLBACKS,
    DISCARD_GATE_CLOSED,
    DISCARD_STALE_TURN,
    LEGAL_TRANSITIONS,
    REJECT_PATIENT_SPEAKING,
    IllegalTransition,
    Phase,
    TurnState,
    classify_chunk,
    classify_gate_open,
    repetition_score,
    suppress_repetition,
    transition,
    word_ngrams,
)

from oracles import oracle_repetition_score


class TestGateMachine:
    def test_idle_opens_listening(self):
        state = TurnState()
        assert classify_gate_open(state) is None
        transition(state, Phase.LISTENING)
        assert state.gate_open

    def test_listening_holds_without_new_turn(self):
        state = TurnState(phase=Phase.LISTENING, turn_id=4)
        assert classify_gate_open(state) == "hold"
        assert state.turn_id == 4

    @pytest.mark.parametrize("phase", [Phase.SPEAKING, Phase.GENERATING, Phase.FINALIZING])
    def test_busy_phases_reject(self, phase):
        assert classify_gate_open(TurnState(phase=phase)) == REJECT_PATIENT_SPEAKING

    def test_gate_open_iff_listening(self):
        for phase in Phase:
            assert TurnState(phase=phase).gate_open is (phase is Phase.LISTENING)

    def test_illegal_transition_raises(self):
        with pytest.raises(IllegalTransition):
            transition(TurnState(), Phase.SPEAKING)
        with pytest.raises(IllegalTransition):
            transition(TurnState(phase=Phase.SPEAKING), Phase.LISTENING)

    def test_legal_set_is_exactly_the_contract(self):
        expected = {
            ("idle", "listening"),
            ("listening", "finalizing"),
            ("finalizing", "generating"),
            ("generating", "speaking"),
            ("speaking", "idle"),
            ("listening", "idle"),
            ("generating", "idle"),
        }
        assert {(a.value, b.value) for a, b in LEGAL_TRANSITIONS} == expected


class TestChunkGate:
    def test_accepted_while_listening(self):
        state = TurnState(phase=Phase.LISTENING, turn_id=2)
        assert classify_chunk(state, 2) is None
        assert classify_chunk(state, None) is None  # untagged trusts the gate

    @pytest.mark.parametrize("phase", [Phase.IDLE, Phase.SPEAKING, Phase.GENERATING])
    def test_closed_gate_discards(self, phase):
        assert classify_chunk(TurnState(phase=phase, turn_id=2), 2) == DISCARD_GATE_CLOSED

    def test_stale_turn_discarded_even_while_listening(self):
        state = TurnState(phase=Phase.LISTENING, turn_id=5)
        assert classify_chunk(state, 4) == DISCARD_STALE_TURN

    def test_interleaving_keeps_exactly_in_gate_chunks(self):
        # N in-gate and M out-of-gate chunks in every relative order: the
        # buffer only ever sees the N.
        for in_gate, out_gate in itertools.product(range(4), range(4)):
            accepted = 0
            state = TurnState(phase=Phase.LISTENING, turn_id=1)
            schedule = ["in"] * in_gate + ["out"] * out_gate
            for kind in schedule:
                if kind == "in":
                    if classify_chunk(state, 1) is None:
                        accepted += 1
                else:
                    assert classify_chunk(TurnState(phase=Phase.IDLE), 1) is not None
            assert accepted == in_gate


class TestRepetitionScore:
    def test_identical_reply_scores_one(self):
        prior = "I already told you about the burning and the urgency yesterday."
        assert repetition_score(prior, [prior]) == 1.0

    def test_no_shared_fourgram_scores_zero(self):
        assert repetition_score(
            "The weather was lovely this morning near the lake.",
            ["My back hurts when I sit for too long at work."],
        ) == 0.0

    def test_half_overlap_matches_brute_force_oracle(self):
        prior = " ".join(f"w{i}" for i in range(20))
        candidate = " ".join(f"w{i}" for i in range(10)) + " " + " ".join(f"n{i}" for i in range(10))
        expected = oracle_repetition_score(candidate, [prior])
        got = repetition_score(candidate, [prior])
        assert got == pytest.approx(expected)
        # 7 shared 4-grams of 17 candidate + 17 prior grams -> 7 / 27.
        assert expected == pytest.approx(7 / 27)
        assert got <= 0.6  # suppression would not engage here

    def test_short_replies_compare_exactly(self):
        assert repetition_score("No.", ["No."]) == 1.0
        assert repetition_score("No.", ["Nope."]) == 0.0
        assert repetition_score("A much longer reply than four words.", ["No."]) == 0.0

    def test_window_limits_lookback(self):
        prior = "the exact same sentence repeated here for the test"
        history = [prior] + [f"filler sentence number {i} about something else entirely" for i in range(10)]
        assert repetition_score(prior, history, k=10) == 0.0
        assert repetition_score(prior, history, k=11) == 1.0

    def test_agrees_with_oracle_on_fixture_corpus(self):
        corpus = [
            "It burns when I go and I cannot stop going.",
            "It burns when I go, and honestly I cannot sleep.",
            "No fever or chills that I noticed.",
            "My husband Mark helps with the kids at home.",
            "It burns when I go and I cannot stop going.",
        ]
        for i, candidate in enumerate(corpus):
            history = corpus[:i]
            assert repetition_score(candidate, history) == pytest.approx(
                oracle_repetition_score(candidate, history)
            )


class TestSuppressRepetition:
    HISTORY = ["I have been taking ibuprofen for my back pain every day this week."]

    def test_fresh_candidate_unchanged(self):
        result = suppress_repetition("The burning started two days ago.", self.HISTORY)
        assert result.text == "The burning started two days ago."
        assert not result.engaged

    def test_boundary_score_passes_through(self):
        # engagement requires strictly greater than the threshold
        result = suppress_repetition("totally novel words here", ["unrelated prior text for the window"])
        assert not result.engaged

    def test_regeneration_resolves_repeat(self):
        candidate = self.HISTORY[0]
        result = suppress_repetition(
            candidate, self.HISTORY, regenerate=lambda directive: "Something different to say instead."
        )
        assert result.engaged and result.regenerated
        assert result.text == "Something different to say instead."

    def test_sentence_drop_keeps_novel_half(self):
        # Repeated sentence (10 shared 4-grams of 16) scores 0.625 > 0.6.
        candidate = self.HISTORY[0] + " But the pain moved somewhere new."
        assert oracle_repetition_score(candidate, self.HISTORY) == pytest.approx(10 / 16)
        result = suppress_repetition(candidate, self.HISTORY, regenerate=lambda d: candidate)
        assert result.engaged
        assert "somewhere new" in result.text
        assert "ibuprofen" not in result.text

    def test_fallback_rotates_and_is_nonempty(self):
        candidate = self.HISTORY[0]
        seen = set()
        for uses in range(4):
            result = suppress_repetition(
                candidate, self.HISTORY, regenerate=lambda d: candidate, fallback_uses=uses
            )
            assert result.used_fallback and result.text
            seen.add(result.text)
        assert len(seen) == 4

    def test_regenerate_failure_falls_back_gracefully(self):
        def boom(directive):
            raise RuntimeError("no responder")

        result = suppress_repetition(self.HISTORY[0], self.HISTORY, regenerate=boom)
        assert result.text  # never empty
        assert result.used_fallback

    def test_default_fallbacks_cover_the_window(self):
        assert len(DEFAULT_REPETITION_FALLBACKS) > 10
        assert len(set(DEFAULT_REPETITION_FALLBACKS)) == len(DEFAULT_REPETITION_FALLBACKS)
        for a in DEFAULT_REPETITION_FALLBACKS:
            for b in DEFAULT_REPETITION_FALLBACKS:
                if a != b:
                    assert repetition_score(a, [b]) <= 0.6

    def test_word_ngrams_on_short_text(self):
        assert word_ngrams("one two three") == set()
        assert word_ngrams("one two three four") == {("one", "two", "three", "four")}
