"""Patient reply generation behind one interface.

Two implementations: a deterministic scripted responder driven by the pack's
intent tables (the test/reference oracle), and an adapter for an external
chat-completion endpoint. Both are subject to disclosure gating — facts like
the Vicodin use stay withheld until the topic has been asked often enough,
and on the external path that guarantee is enforced mechanically by a
post-filter, not just by the prompt.
"""

from __future__ import annotations

import json
import logging
import os
import re
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import httpx

from .scenario import DisclosureRule, ScenarioPack, assemble_system_prompt, canonical_role
from .triggers import normalize_text

logger = logging.getLogger(__name__)

USER_SPEAKER = "Healthcare Provider"

# Stands in for a withheld term when the external model will not stop naming it.
REDACTION_TEXT = "some pain medication"

ENV_ENDPOINT = "AIMS_LLM_ENDPOINT"
ENV_API_KEY = "AIMS_LLM_API_KEY"
ENV_TIMEOUT_MS = "AIMS_LLM_TIMEOUT_MS"
ENV_MODEL = "AIMS_LLM_MODEL"


class ResponderError(RuntimeError):
    """Transport failure, timeout, or malformed endpoint reply."""


@dataclass
class ResponderContext:
    scene_id: str
    active_role: str
    history: list[tuple[str, str]] = field(default_factory=list)  # (speaker, text)
    disclosure_counters: dict[str, int] = field(default_factory=dict)
    seed: int = 0


@dataclass(frozen=True)
class Reply:
    text: str
    intent_id: Optional[str] = None
    used_fallback_line: bool = False


def _contains_term(text: str, term: str) -> bool:
    tokens = normalize_text(text).split()
    ttoks = normalize_text(term).split()
    if not ttoks:
        return False
    return any(tokens[i : i + len(ttoks)] == ttoks for i in range(len(tokens) - len(ttoks) + 1))


def _gated_rules(pack: ScenarioPack, counters: dict[str, int]) -> list[DisclosureRule]:
    """Rules whose topic has not yet been asked often enough to disclose."""
    return [r for r in pack.disclosure_rules if counters.get(r.id, 0) < r.reveal_after_asks]


def record_ask(
    counters: dict[str, int],
    utterance: str,
    rules: Sequence[DisclosureRule],
) -> list[str]:
    """Bump the ask counter of every rule the utterance probes.

    A rule counts at most once per utterance however many of its patterns
    match. Returns the ids bumped this turn; counters only ever grow.
    """
    matched: list[str] = []
    tokens = normalize_text(utterance).split()
    for rule in rules:
        for pattern in rule.topic_patterns:
            ptoks = normalize_text(pattern).split()
            if ptoks and any(tokens[i : i + len(ptoks)] == ptoks for i in range(len(tokens) - len(ptoks) + 1)):
                counters[rule.id] = counters.get(rule.id, 0) + 1
                matched.append(rule.id)
                break
    return matched


class ScriptedResponder:
    """Intent-table oracle: auditable, seed-deterministic, offline.

    Intent selection is by pattern overlap with the normalized utterance:
    patterns occurring whole (as contiguous token runs) rank first, then
    shared-token count breaks it down; ties prefer an intent whose role
    affinity matches the active role, then the lowest intent id. Variants
    rotate with the seed and the number of prior patient turns so repeated
    asks cycle phrasings.
    """

    default_budget_ms = 1000

    def __init__(self, pack: ScenarioPack):
        self.pack = pack

    @staticmethod
    def _overlap(utterance_tokens: list[str], patterns) -> tuple[int, int]:
        token_set = set(utterance_tokens)
        whole = 0
        shared: set[str] = set()
        for pattern in patterns:
            ptoks = normalize_text(pattern).split()
            if not ptoks:
                continue
            shared.update(token_set & set(ptoks))
            if any(
                utterance_tokens[i : i + len(ptoks)] == ptoks
                for i in range(len(utterance_tokens) - len(ptoks) + 1)
            ):
                whole += 1
        return whole, len(shared)

    def respond(self, ctx: ResponderContext, utterance: str, attempt: int = 0) -> Reply:
        scene = self.pack.scene(ctx.scene_id)
        role = canonical_role(ctx.active_role)
        tokens = normalize_text(utterance).split()

        scored: list[tuple[tuple[int, int], object]] = []
        for intent in scene.scripted_intents:
            overlap = self._overlap(tokens, intent.patterns)
            if overlap[1] > 0:
                scored.append((overlap, intent))
        if not scored:
            return Reply(scene.fallback_line, None, used_fallback_line=True)

        best = max(o for o, _ in scored)
        tied = [i for o, i in scored if o == best]
        preferred = [i for i in tied if i.role_affinity == role]
        intent = min(preferred or tied, key=lambda i: i.id)

        variants = self._eligible_variants(intent, ctx)
        idx = (ctx.seed + self._patient_turns(ctx) + attempt) % len(variants)
        return Reply(variants[idx], intent.id)

    def regenerate(self, ctx: ResponderContext, utterance: str, directive: str) -> Reply:
        # The directive is implicit: move one step along the rotation.
        return self.respond(ctx, utterance, attempt=1)

    def _patient_turns(self, ctx: ResponderContext) -> int:
        return sum(1 for speaker, _ in ctx.history if speaker != USER_SPEAKER)

    def _eligible_variants(self, intent, ctx: ResponderContext) -> list[str]:
        variants = list(intent.response_variants)
        if intent.disclosure_rule_id is None:
            return variants
        rule = self.pack.disclosure_rule(intent.disclosure_rule_id)
        asks = ctx.disclosure_counters.get(rule.id, 0)
        withholding = [v for v in variants if not any(_contains_term(v, t) for t in rule.withheld_terms)]
        disclosing = [v for v in variants if any(_contains_term(v, t) for t in rule.withheld_terms)]
        if asks < rule.reveal_after_asks:
            return withholding or [v for v in variants]  # validator guarantees withholding non-empty
        # Gate open: let the case unfold — prefer the disclosing variants.
        return disclosing or variants


@dataclass
class LlmConfig:
    endpoint: str
    api_key: Optional[str] = None
    timeout_ms: int = 15000
    model: Optional[str] = None

    @classmethod
    def from_env(cls) -> Optional["LlmConfig"]:
        endpoint = os.environ.get(ENV_ENDPOINT)
        if not endpoint:
            return None
        return cls(
            endpoint=endpoint,
            api_key=os.environ.get(ENV_API_KEY),
            timeout_ms=int(os.environ.get(ENV_TIMEOUT_MS, "15000")),
            model=os.environ.get(ENV_MODEL),
        )


class LlmResponder:
    """Chat-completion adapter with a mechanical disclosure post-filter.

    While any disclosure counter is below its threshold, a reply naming a
    withheld term triggers one regeneration with an explicit reminder; if the
    model persists, the term is redacted. Request/response pairs are handed
    to `exchange_log` with secrets elided.
    """

    default_budget_ms = 15000

    def __init__(
        self,
        pack: ScenarioPack,
        config: Optional[LlmConfig] = None,
        transport: Optional[httpx.BaseTransport] = None,
        exchange_log: Optional[Callable[[dict], None]] = None,
    ):
        config = config or LlmConfig.from_env()
        if config is None:
            raise ResponderError(f"no endpoint configured; set {ENV_ENDPOINT}")
        self.pack = pack
        self.config = config
        self.exchange_log = exchange_log
        self._client = httpx.Client(
            transport=transport,
            timeout=config.timeout_ms / 1000.0,
        )

    def close(self) -> None:
        self._client.close()

    def respond(self, ctx: ResponderContext, utterance: str) -> Reply:
        prompt = assemble_system_prompt(self.pack, ctx.scene_id, ctx.active_role)
        text = self._complete(prompt, ctx, utterance)
        text = self._disclosure_filter(ctx, utterance, prompt, text)
        return Reply(text)

    def regenerate(self, ctx: ResponderContext, utterance: str, directive: str) -> Reply:
        prompt = assemble_system_prompt(self.pack, ctx.scene_id, ctx.active_role)
        text = self._complete(prompt + f"\n{directive}\n", ctx, utterance)
        text = self._disclosure_filter(ctx, utterance, prompt, text)
        return Reply(text)

    def _complete(self, prompt: str, ctx: ResponderContext, utterance: str) -> str:
        messages = [{"role": "system", "content": prompt}]
        for speaker, text in ctx.history:
            messages.append(
                {"role": "user" if speaker == USER_SPEAKER else "assistant", "content": text}
            )
        messages.append({"role": "user", "content": utterance})
        body: dict = {"messages": messages}
        if self.config.model:
            body["model"] = self.config.model
        headers = {"content-type": "application/json"}
        if self.config.api_key:
            headers["authorization"] = f"Bearer {self.config.api_key}"
        try:
            response = self._client.post(self.config.endpoint, json=body, headers=headers)
            response.raise_for_status()
            payload = response.json()
            text = payload["choices"][0]["message"]["content"]
            if not isinstance(text, str):
                raise TypeError("content is not text")
        except httpx.TimeoutException as exc:
            raise ResponderError(f"endpoint timed out after {self.config.timeout_ms} ms") from exc
        except httpx.HTTPError as exc:
            raise ResponderError(f"endpoint request failed: {exc}") from exc
        except (KeyError, IndexError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise ResponderError(f"malformed endpoint reply: {exc}") from exc
        if self.exchange_log is not None:
            # Secrets elided: the logged request carries no auth header.
            self.exchange_log({"request": body, "response": text})
        return text

    def _disclosure_filter(self, ctx: ResponderContext, utterance: str, prompt: str, text: str) -> str:
        gated = _gated_rules(self.pack, ctx.disclosure_counters)
        violated = [r for r in gated if any(_contains_term(text, t) for t in r.withheld_terms)]
        if not violated:
            return text
        reminder_terms = ", ".join(t for r in violated for t in r.withheld_terms)
        reminder = f"Reminder: you must not mention {reminder_terms} yet. Rephrase without naming it."
        text = self._complete(prompt + f"\n{reminder}\n", ctx, utterance)
        for rule in violated:
            for term in rule.withheld_terms:
                if _contains_term(text, term):
                    pattern = re.compile(
                        r"\b" + re.escape(term).replace(r"\ ", r"\s+") + r"\b", re.IGNORECASE
                    )
                    text = pattern.sub(REDACTION_TEXT, text)
                    logger.warning("redacted withheld term from reply (rule %s)", rule.id)
        return text
