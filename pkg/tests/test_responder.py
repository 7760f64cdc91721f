from __future__ import annotations

import httpx
import pytest

from aims.responder import (
    REDACTION_TEXT,
    LlmConfig,
    LlmResponder,
    ResponderContext,
    ResponderError,
    ScriptedResponder,
    record_ask,
)
from aims.scenario import load_scenario


def ctx(scene="ed", role="physician", history=None, counters=None, seed=0):
    return ResponderContext(
        scene_id=scene,
        active_role=role,
        history=history or [],
        disclosure_counters=counters or {},
        seed=seed,
    )


class TestRecordAsk:
    def test_medication_probe_increments(self, pack):
        counters: dict[str, int] = {}
        matched = record_ask(counters, "are you taking any medications", pack.disclosure_rules)
        assert matched == ["vicodin_use"]
        assert counters == {"vicodin_use": 1}

    def test_unrelated_question_leaves_counters(self, pack):
        counters = {"vicodin_use": 1}
        assert record_ask(counters, "how are the kids doing", pack.disclosure_rules) == []
        assert counters == {"vicodin_use": 1}

    def test_two_patterns_count_once(self, pack):
        counters: dict[str, int] = {}
        # "medications" and "pain medication" both match this utterance.
        record_ask(counters, "any medications, like a pain medication?", pack.disclosure_rules)
        assert counters == {"vicodin_use": 1}

    def test_counters_monotonic(self, pack):
        counters: dict[str, int] = {}
        for _ in range(5):
            before = dict(counters)
            record_ask(counters, "medications?", pack.disclosure_rules)
            assert all(counters[k] >= before.get(k, 0) for k in counters)
        assert counters == {"vicodin_use": 5}


class TestScriptedResponder:
    def test_deterministic(self, pack):
        responder = ScriptedResponder(pack)
        a = responder.respond(ctx(seed=9), "Any fever or chills?")
        b = responder.respond(ctx(seed=9), "Any fever or chills?")
        assert a == b

    def test_seed_rotates_variants(self, pack):
        responder = ScriptedResponder(pack)
        texts = {responder.respond(ctx(seed=s), "Any fever or chills?").text for s in range(2)}
        assert len(texts) == 2

    def test_whole_phrase_beats_token_noise(self, pack):
        responder = ScriptedResponder(pack)
        reply = responder.respond(ctx(), "Are you taking anything for the pain?")
        assert reply.intent_id == "ed_medications"

    def test_fallback_when_nothing_matches(self, pack):
        responder = ScriptedResponder(pack)
        reply = responder.respond(ctx(), "zephyr quux flibbertigibbet")
        assert reply.used_fallback_line
        assert reply.text == pack.scene("ed").fallback_line

    def test_role_affinity_breaks_ties(self):
        tie_pack = load_scenario(
            """
version: "t"
persona: {name: P, age: 30}
scenes:
  - id: s
    title: S
    fallback_clip: talk
    intents:
      - id: a_generic
        patterns: [routine]
        variants: [generic answer]
      - id: z_for_pharmacist
        patterns: [routine]
        variants: [pharmacist answer]
        role_affinity: pharmacist
clips:
  - {id: talk, display_label: T, total_frames: 60, fps: 30, loopable: true}
"""
        )
        responder = ScriptedResponder(tie_pack)
        # Equal overlap both ways; affinity wins for the pharmacist...
        assert responder.respond(ctx(scene="s", role="pharmacist"), "your routine?").intent_id == "z_for_pharmacist"
        # ...and the lowest id wins for everyone else.
        assert responder.respond(ctx(scene="s", role="physician"), "your routine?").intent_id == "a_generic"

    def test_first_ask_withholds_second_may_disclose(self, pack):
        responder = ScriptedResponder(pack)
        # Ask 1: no prior asks recorded -> withholding variant.
        first = responder.respond(ctx(), "what medications are you taking?")
        assert first.intent_id == "ed_medications"
        assert "vicodin" not in first.text.lower()
        # Ask 2: one completed ask -> disclosing variant eligible (and chosen).
        second = responder.respond(ctx(counters={"vicodin_use": 1}), "what medications are you taking?")
        assert "vicodin" in second.text.lower()

    def test_regenerate_moves_rotation(self, pack):
        responder = ScriptedResponder(pack)
        base = responder.respond(ctx(seed=0), "Any fever or chills?")
        regen = responder.regenerate(ctx(seed=0), "Any fever or chills?", "do not repeat")
        assert base.text != regen.text

    def test_pre_threshold_secrecy_exhaustive(self, pack):
        """No reply from any intent, asked fresh, may name the withheld term."""
        responder = ScriptedResponder(pack)
        for scene in pack.scenes:
            for intent in scene.scripted_intents:
                for pattern in intent.patterns:
                    for seed in range(4):
                        reply = responder.respond(
                            ctx(scene=scene.id, seed=seed), f"Could you tell me about {pattern}?"
                        )
                        assert "vicodin" not in reply.text.lower(), (scene.id, intent.id, pattern)


def canned_llm(replies):
    """Mock chat-completion endpoint cycling through canned replies."""
    replies = list(replies)
    calls = []

    def handler(request: httpx.Request) -> httpx.Response:
        calls.append(request)
        text = replies.pop(0) if len(replies) > 1 else replies[0]
        return httpx.Response(200, json={"choices": [{"message": {"content": text}}]})

    return httpx.MockTransport(handler), calls


class TestLlmResponder:
    CONFIG = LlmConfig(endpoint="http://llm.test/v1/chat", api_key="sekret", model="patient-1")

    def test_pass_through_when_not_gated(self, pack):
        transport, calls = canned_llm(["I take Vicodin every day, more than I should."])
        responder = LlmResponder(pack, self.CONFIG, transport=transport)
        reply = responder.respond(ctx(counters={"vicodin_use": 1}), "medications?")
        assert "Vicodin" in reply.text
        assert len(calls) == 1

    def test_gated_violation_regenerates_then_redacts(self, pack):
        transport, calls = canned_llm(["It's the Vicodin, mostly."])  # keeps violating
        responder = LlmResponder(pack, self.CONFIG, transport=transport)
        reply = responder.respond(ctx(), "what medications are you taking?")
        assert len(calls) == 2  # one regeneration attempt
        assert "vicodin" not in reply.text.lower()
        assert REDACTION_TEXT in reply.text

    def test_gated_regeneration_can_succeed(self, pack):
        transport, calls = canned_llm(["I take Vicodin.", "Just ibuprofen now and then."])
        responder = LlmResponder(pack, self.CONFIG, transport=transport)
        reply = responder.respond(ctx(), "medications?")
        assert reply.text == "Just ibuprofen now and then."
        assert len(calls) == 2

    def test_timeout_raises_responder_error(self, pack):
        def handler(request):
            raise httpx.ConnectTimeout("slow endpoint")

        responder = LlmResponder(pack, self.CONFIG, transport=httpx.MockTransport(handler))
        with pytest.raises(ResponderError, match="timed out"):
            responder.respond(ctx(), "hello?")

    def test_malformed_reply_raises_responder_error(self, pack):
        transport = httpx.MockTransport(lambda r: httpx.Response(200, json={"nope": 1}))
        responder = LlmResponder(pack, self.CONFIG, transport=transport)
        with pytest.raises(ResponderError, match="malformed"):
            responder.respond(ctx(), "hello?")

    def test_http_error_raises_responder_error(self, pack):
        transport = httpx.MockTransport(lambda r: httpx.Response(500, text="boom"))
        responder = LlmResponder(pack, self.CONFIG, transport=transport)
        with pytest.raises(ResponderError):
            responder.respond(ctx(), "hello?")

    def test_exchange_log_elides_secrets(self, pack):
        exchanges = []
        transport, _ = canned_llm(["Fine, thanks."])
        responder = LlmResponder(pack, self.CONFIG, transport=transport, exchange_log=exchanges.append)
        responder.respond(ctx(), "hello")
        assert len(exchanges) == 1
        assert "sekret" not in repr(exchanges[0])
        assert exchanges[0]["response"] == "Fine, thanks."

    def test_request_carries_prompt_history_and_auth(self, pack):
        seen = {}

        def handler(request: httpx.Request) -> httpx.Response:
            seen["auth"] = request.headers.get("authorization")
            import json as _json

            seen["body"] = _json.loads(request.content)
            return httpx.Response(200, json={"choices": [{"message": {"content": "ok sure"}}]})

        responder = LlmResponder(pack, self.CONFIG, transport=httpx.MockTransport(handler))
        history = [("Healthcare Provider", "Hi"), ("Jane Ryan", "Hello.")]
        responder.respond(ctx(history=history), "How are you?")
        assert seen["auth"] == "Bearer sekret"
        body = seen["body"]
        assert body["model"] == "patient-1"
        assert body["messages"][0]["role"] == "system"
        assert "Jane Ryan" in body["messages"][0]["content"]
        assert [m["role"] for m in body["messages"][1:]] == ["user", "assistant", "user"]

    def test_from_env(self, pack, monkeypatch):
        monkeypatch.setenv("AIMS_LLM_ENDPOINT", "http://env.test/chat")
        monkeypatch.setenv("AIMS_LLM_API_KEY", "k")
        monkeypatch.setenv("AIMS_LLM_TIMEOUT_MS", "1234")
        config = LlmConfig.from_env()
        assert config.endpoint == "http://env.test/chat"
        assert config.timeout_ms == 1234

    def test_missing_endpoint_env_gives_none(self, monkeypatch):
        monkeypatch.delenv("AIMS_LLM_ENDPOINT", raising=False)
        assert LlmConfig.from_env() is None
