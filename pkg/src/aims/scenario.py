"""Scenario pack model: the clinical case a session runs against.

A pack bundles the patient persona, per-scene trigger tables, animation clip
metadata, scripted intents, and disclosure rules. Packs load from a single
YAML document, are validated with path-addressed findings, and are frozen:
every session shares the same immutable pack.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import IO, Optional, Union

import yaml

from .triggers import DEFAULT_NEGATION_TOKENS, normalize_text

PROFESSIONS = ("physician", "pharmacist", "nurse_practitioner", "social_worker")

DEFAULT_FALLBACK_LINE = "I'm sorry, I'm not sure what you mean. Could you ask me that another way?"

# Clips that still carry more lead-in frames than this get a sync-risk warning.
LEAD_IN_WARN_FRAMES = 5


class ScenarioError(Exception):
    """Base for everything that can go wrong with a pack."""


class ScenarioParseError(ScenarioError):
    """Malformed document: bad syntax, wrong types, unknown keys."""


class ScenarioReferenceError(ScenarioError):
    """Dangling clip/rule/scene reference."""

    def __init__(self, findings: list["Finding"]):
        self.findings = findings
        super().__init__("; ".join(f"{f.path}: {f.message}" for f in findings))


class ScenarioConstraintError(ScenarioError):
    """Invariant violation reported by the validator."""

    def __init__(self, findings: list["Finding"]):
        self.findings = findings
        super().__init__("; ".join(f"{f.path}: {f.message}" for f in findings))


class UnknownSceneError(ScenarioError):
    pass


class UnknownRoleError(ScenarioError):
    pass


def canonical_role(role: str) -> str:
    """Map 'nurse practitioner' / 'Nurse-Practitioner' etc. onto one tag."""
    tag = str(role).strip().lower().replace("-", "_").replace(" ", "_")
    if tag not in PROFESSIONS:
        raise UnknownRoleError(f"unknown role tag: {role!r} (expected one of {', '.join(PROFESSIONS)})")
    return tag


def display_role(role: str) -> str:
    return canonical_role(role).replace("_", " ")


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Persona:
    name: str
    age: int
    demographic_notes: str = ""
    presenting_complaint: str = ""
    hidden_facts: tuple[str, ...] = ()
    speaking_style_directives: tuple[str, ...] = ()


@dataclass(frozen=True)
class DisclosureRule:
    id: str
    topic_patterns: tuple[str, ...]
    withheld_terms: tuple[str, ...]
    reveal_after_asks: int = 1


@dataclass(frozen=True)
class AnimationClipMeta:
    id: str
    display_label: str
    total_frames: int
    fps: float
    lead_in_frames: int = 0
    loopable: bool = False
    expression_tag: str = "neutral"

    @property
    def effective_duration_ms(self) -> float:
        """Playable duration once the lead-in is skipped."""
        return (self.total_frames - self.lead_in_frames) / self.fps * 1000.0


@dataclass(frozen=True)
class TriggerRule:
    id: str
    scene_id: str
    phrases: tuple[str, ...]
    clip_id: str
    priority: int
    side: str  # "input" | "output"


@dataclass(frozen=True)
class ScriptedIntent:
    id: str
    patterns: tuple[str, ...]
    response_variants: tuple[str, ...]
    role_affinity: Optional[str] = None
    disclosure_rule_id: Optional[str] = None


@dataclass(frozen=True)
class SceneSpec:
    id: str
    title: str
    fallback_clip_id: str
    setting_description: str = ""
    patient_pose: str = ""
    trigger_rules: tuple[TriggerRule, ...] = ()
    scripted_intents: tuple[ScriptedIntent, ...] = ()
    fallback_line: str = DEFAULT_FALLBACK_LINE
    repetition_fallbacks: tuple[str, ...] = ()


@dataclass(frozen=True)
class ScenarioPack:
    version: str
    persona: Persona
    scenes: tuple[SceneSpec, ...]
    clips: tuple[AnimationClipMeta, ...]
    disclosure_rules: tuple[DisclosureRule, ...] = ()
    guidelines: tuple[str, ...] = ()
    negation_tokens: tuple[str, ...] = DEFAULT_NEGATION_TOKENS
    prefer_output_negation: bool = True

    @cached_property
    def _clips_by_id(self) -> dict[str, AnimationClipMeta]:
        return {c.id: c for c in self.clips}

    @cached_property
    def _scenes_by_id(self) -> dict[str, SceneSpec]:
        return {s.id: s for s in self.scenes}

    @cached_property
    def _rules_by_id(self) -> dict[str, DisclosureRule]:
        return {r.id: r for r in self.disclosure_rules}

    def clip(self, clip_id: str) -> AnimationClipMeta:
        try:
            return self._clips_by_id[clip_id]
        except KeyError:
            raise ScenarioError(f"unknown clip id: {clip_id!r}") from None

    def scene(self, scene_id: str) -> SceneSpec:
        try:
            return self._scenes_by_id[scene_id]
        except KeyError:
            raise UnknownSceneError(f"unknown scene id: {scene_id!r}") from None

    def disclosure_rule(self, rule_id: str) -> DisclosureRule:
        try:
            return self._rules_by_id[rule_id]
        except KeyError:
            raise ScenarioError(f"unknown disclosure rule id: {rule_id!r}") from None

    @property
    def first_scene(self) -> SceneSpec:
        return self.scenes[0]


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Finding:
    severity: str  # "warn" | "error"
    code: str
    path: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    findings: tuple[Finding, ...] = ()

    @property
    def errors(self) -> tuple[Finding, ...]:
        return tuple(f for f in self.findings if f.severity == "error")

    @property
    def warnings(self) -> tuple[Finding, ...]:
        return tuple(f for f in self.findings if f.severity == "warn")

    @property
    def ok(self) -> bool:
        return not self.errors


def validate_scenario(pack: ScenarioPack) -> ValidationReport:
    """Check every pack invariant; warn about runtime sync risks.

    Errors cover invariant breaches (including dangling references); warns
    cover clips still carrying lead-in frames and scenes with no output-side
    negation rule.
    """
    out: list[Finding] = []

    def err(code: str, path: str, message: str) -> None:
        out.append(Finding("error", code, path, message))

    def warn(code: str, path: str, message: str) -> None:
        out.append(Finding("warn", code, path, message))

    clip_ids: dict[str, int] = {}
    for i, clip in enumerate(pack.clips):
        path = f"clips[{i}]"
        if clip.id in clip_ids:
            err("duplicate_id", path, f"clip id {clip.id!r} already defined at clips[{clip_ids[clip.id]}]")
        else:
            clip_ids[clip.id] = i
        if clip.fps <= 0:
            err("bad_geometry", path, f"fps must be > 0, got {clip.fps}")
        if not 0 <= clip.lead_in_frames < max(clip.total_frames, 1):
            err("bad_geometry", path, f"lead_in_frames {clip.lead_in_frames} outside [0, total_frames)")
        elif clip.fps > 0 and clip.effective_duration_ms <= 0:
            err("bad_geometry", path, "effective duration must be positive")
        if clip.lead_in_frames > LEAD_IN_WARN_FRAMES:
            warn(
                "sync_risk",
                path,
                f"clip {clip.id!r} carries {clip.lead_in_frames} lead-in frames; trim to avoid visual latency",
            )

    if pack.persona.age <= 0:
        err("bad_persona", "persona.age", f"age must be > 0, got {pack.persona.age}")
    if not pack.persona.name.strip():
        err("bad_persona", "persona.name", "name must be non-empty")
    rule_ids = {r.id for r in pack.disclosure_rules}
    for i, fact in enumerate(pack.persona.hidden_facts):
        if fact not in rule_ids:
            err("dangling_reference", f"persona.hidden_facts[{i}]", f"no disclosure rule {fact!r}")

    seen_rule_ids: dict[str, int] = {}
    for i, rule in enumerate(pack.disclosure_rules):
        path = f"disclosure_rules[{i}]"
        if rule.id in seen_rule_ids:
            err("duplicate_id", path, f"disclosure rule id {rule.id!r} already defined")
        else:
            seen_rule_ids[rule.id] = i
        if rule.reveal_after_asks < 1:
            err("bad_threshold", path, f"reveal_after_asks must be >= 1, got {rule.reveal_after_asks}")
        if not rule.withheld_terms:
            err("empty_terms", path, "withheld_terms must be non-empty")

    if not pack.scenes:
        err("no_scenes", "scenes", "pack must define at least one scene")

    scene_ids: dict[str, int] = {}
    for i, scene in enumerate(pack.scenes):
        spath = f"scenes[{i}]"
        if scene.id in scene_ids:
            err("duplicate_id", spath, f"scene id {scene.id!r} already defined at scenes[{scene_ids[scene.id]}]")
        else:
            scene_ids[scene.id] = i
        if scene.fallback_clip_id not in clip_ids:
            err("dangling_reference", f"{spath}.fallback_clip", f"no clip {scene.fallback_clip_id!r}")

        priorities: dict[tuple[str, int], str] = {}
        has_output_rule = False
        for j, rule in enumerate(scene.trigger_rules):
            rpath = f"{spath}.triggers[{j}]"
            if not rule.phrases or not any(normalize_text(p) for p in rule.phrases):
                err("empty_phrases", rpath, "trigger rule needs at least one non-empty phrase")
            if rule.clip_id not in clip_ids:
                err("dangling_reference", f"{rpath}.clip", f"no clip {rule.clip_id!r}")
            if rule.side not in ("input", "output"):
                err("bad_side", f"{rpath}.side", f"side must be input or output, got {rule.side!r}")
            if rule.side == "output":
                has_output_rule = True
            key = (rule.side, rule.priority)
            if key in priorities:
                err(
                    "duplicate_priority",
                    rpath,
                    f"priority {rule.priority} on side {rule.side!r} already used by rule {priorities[key]!r}",
                )
            else:
                priorities[key] = rule.id
        if not has_output_rule:
            warn(
                "no_negation_rule",
                spath,
                f"scene {scene.id!r} has no output-side negation rule; negative replies will not head-shake",
            )

        for j, intent in enumerate(scene.scripted_intents):
            ipath = f"{spath}.intents[{j}]"
            if not intent.response_variants:
                err("empty_variants", ipath, "intent needs at least one response variant")
            if intent.role_affinity is not None and intent.role_affinity not in PROFESSIONS:
                err("bad_role", f"{ipath}.role_affinity", f"unknown profession tag {intent.role_affinity!r}")
            if intent.disclosure_rule_id is not None:
                if intent.disclosure_rule_id not in rule_ids:
                    err(
                        "dangling_reference",
                        f"{ipath}.disclosure_rule",
                        f"no disclosure rule {intent.disclosure_rule_id!r}",
                    )
                else:
                    rule = next(r for r in pack.disclosure_rules if r.id == intent.disclosure_rule_id)
                    withholding = [v for v in intent.response_variants if not _mentions_any(v, rule.withheld_terms)]
                    disclosing = [v for v in intent.response_variants if _mentions_any(v, rule.withheld_terms)]
                    if not withholding:
                        err("no_withholding_variant", ipath, "disclosure intent needs a variant omitting all withheld terms")
                    if not disclosing:
                        err("no_disclosing_variant", ipath, "disclosure intent needs a variant containing a withheld term")

    return ValidationReport(tuple(out))


def _mentions_any(text: str, terms: tuple[str, ...]) -> bool:
    tokens = normalize_text(text).split()
    for term in terms:
        ttoks = normalize_text(term).split()
        if not ttoks:
            continue
        for i in range(len(tokens) - len(ttoks) + 1):
            if tokens[i : i + len(ttoks)] == ttoks:
                return True
    return False


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

Source = Union[str, Path, IO[str]]


def _read_source(source: Source) -> str:
    if isinstance(source, Path):
        return source.read_text(encoding="utf-8")
    if hasattr(source, "read"):
        return source.read()  # type: ignore[union-attr]
    return str(source)


def _expect_map(value, path: str) -> dict:
    if not isinstance(value, dict):
        raise ScenarioParseError(f"{path}: expected a mapping, got {type(value).__name__}")
    return value


def _take(data: dict, key: str, path: str, *, required: bool = True, default=None):
    if key not in data:
        if required:
            raise ScenarioParseError(f"{path}: missing required key {key!r}")
        return default
    return data.pop(key)

def _no_extras(data: dict, path: str) -> None:
    if data:
        raise ScenarioParseError(f"{path}: unknown key(s): {', '.join(sorted(map(str, data)))}")


def _str_list(value, path: str) -> tuple[str, ...]:
    if value is None:
        return ()
    if not isinstance(value, list) or not all(isinstance(v, (str, int, float)) for v in value):
        raise ScenarioParseError(f"{path}: expected a list of strings")
    return tuple(str(v) for v in value)


def _as_int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ScenarioParseError(f"{path}: expected an integer, got {value!r}")
    return value


def parse_scenario(source: Source) -> ScenarioPack:
    """Structural parse only; invariants are the validator's job."""
    text = _read_source(source)
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioParseError(f"document is not valid YAML: {exc}") from exc
    doc = _expect_map(doc, "$")
    doc = dict(doc)

    version = str(_take(doc, "version", "$"))

    pd = dict(_expect_map(_take(doc, "persona", "$"), "persona"))
    persona = Persona(
        name=str(_take(pd, "name", "persona")),
        age=_as_int(_take(pd, "age", "persona"), "persona.age"),
        demographic_notes=str(_take(pd, "demographic_notes", "persona", required=False, default="")),
        presenting_complaint=str(_take(pd, "presenting_complaint", "persona", required=False, default="")),
        hidden_facts=_str_list(_take(pd, "hidden_facts", "persona", required=False), "persona.hidden_facts"),
        speaking_style_directives=_str_list(
            _take(pd, "speaking_style_directives", "persona", required=False),
            "persona.speaking_style_directives",
        ),
    )
    _no_extras(pd, "persona")

    guidelines = _str_list(_take(doc, "guidelines", "$", required=False), "guidelines")

    rules = []
    for i, item in enumerate(_take(doc, "disclosure_rules", "$", required=False, default=[]) or []):
        path = f"disclosure_rules[{i}]"
        rd = dict(_expect_map(item, path))
        rules.append(
            DisclosureRule(
                id=str(_take(rd, "id", path)),
                topic_patterns=tuple(
                    normalize_text(p) for p in _str_list(_take(rd, "topic_patterns", path), f"{path}.topic_patterns")
                ),
                withheld_terms=_str_list(_take(rd, "withheld_terms", path), f"{path}.withheld_terms"),
                reveal_after_asks=_as_int(
                    _take(rd, "reveal_after_asks", path, required=False, default=1), f"{path}.reveal_after_asks"
                ),
            )
        )
        _no_extras(rd, path)

    clips = []
    for i, item in enumerate(_take(doc, "clips", "$", required=False, default=[]) or []):
        path = f"clips[{i}]"
        cd = dict(_expect_map(item, path))
        fps_raw = _take(cd, "fps", path)
        if isinstance(fps_raw, bool) or not isinstance(fps_raw, (int, float)):
            raise ScenarioParseError(f"{path}.fps: expected a number, got {fps_raw!r}")
        clips.append(
            AnimationClipMeta(
                id=str(_take(cd, "id", path)),
                display_label=str(_take(cd, "display_label", path, required=False, default="")),
                total_frames=_as_int(_take(cd, "total_frames", path), f"{path}.total_frames"),
                fps=float(fps_raw),
                lead_in_frames=_as_int(
                    _take(cd, "lead_in_frames", path, required=False, default=0), f"{path}.lead_in_frames"
                ),
                loopable=bool(_take(cd, "loopable", path, required=False, default=False)),
                expression_tag=str(_take(cd, "expression_tag", path, required=False, default="neutral")),
            )
        )
        _no_extras(cd, path)

    scenes = []
    for i, item in enumerate(_take(doc, "scenes", "$", required=False, default=[]) or []):
        spath = f"scenes[{i}]"
        sd = dict(_expect_map(item, spath))
        scene_id = str(_take(sd, "id", spath))

        triggers = []
        for j, titem in enumerate(_take(sd, "triggers", spath, required=False, default=[]) or []):
            tpath = f"{spath}.triggers[{j}]"
            td = dict(_expect_map(titem, tpath))
            triggers.append(
                TriggerRule(
                    id=str(_take(td, "id", tpath)),
                    scene_id=scene_id,
                    phrases=tuple(
                        normalize_text(p) for p in _str_list(_take(td, "phrases", tpath), f"{tpath}.phrases")
                    ),
                    clip_id=str(_take(td, "clip", tpath)),
                    priority=_as_int(_take(td, "priority", tpath), f"{tpath}.priority"),
                    side=str(_take(td, "side", tpath, required=False, default="input")),
                )
            )
            _no_extras(td, tpath)

        intents = []
        for j, iitem in enumerate(_take(sd, "intents", spath, required=False, default=[]) or []):
            ipath = f"{spath}.intents[{j}]"
            idd = dict(_expect_map(iitem, ipath))
            affinity = _take(idd, "role_affinity", ipath, required=False)
            intents.append(
                ScriptedIntent(
                    id=str(_take(idd, "id", ipath)),
                    patterns=tuple(
                        normalize_text(p) for p in _str_list(_take(idd, "patterns", ipath), f"{ipath}.patterns")
                    ),
                    response_variants=_str_list(_take(idd, "variants", ipath), f"{ipath}.variants"),
                    role_affinity=None if affinity is None else str(affinity),
                    disclosure_rule_id=(
                        lambda v: None if v is None else str(v)
                    )(_take(idd, "disclosure_rule", ipath, required=False)),
                )
            )
            _no_extras(idd, ipath)

        scenes.append(
            SceneSpec(
                id=scene_id,
                title=str(_take(sd, "title", spath)),
                fallback_clip_id=str(_take(sd, "fallback_clip", spath)),
                setting_description=str(_take(sd, "setting_description", spath, required=False, default="")),
                patient_pose=str(_take(sd, "patient_pose", spath, required=False, default="")),
                trigger_rules=tuple(triggers),
                scripted_intents=tuple(intents),
                fallback_line=str(_take(sd, "fallback_line", spath, required=False, default=DEFAULT_FALLBACK_LINE)),
                repetition_fallbacks=_str_list(
                    _take(sd, "repetition_fallbacks", spath, required=False), f"{spath}.repetition_fallbacks"
                ),
            )
        )
        _no_extras(sd, spath)

    negation = _take(doc, "negation_tokens", "$", required=False)
    prefer_output = bool(_take(doc, "prefer_output_negation", "$", required=False, default=True))
    _no_extras(doc, "$")

    return ScenarioPack(
        version=version,
        persona=persona,
        scenes=tuple(scenes),
        clips=tuple(clips),
        disclosure_rules=tuple(rules),
        guidelines=guidelines,
        negation_tokens=(
            DEFAULT_NEGATION_TOKENS
            if negation is None
            else tuple(normalize_text(t) for t in _str_list(negation, "negation_tokens"))
        ),
        prefer_output_negation=prefer_output,
    )


def load_scenario(source: Source) -> ScenarioPack:
    """Parse, resolve references and validate; the returned pack is immutable.

    Raises ScenarioParseError for malformed documents, ScenarioReferenceError
    for dangling ids, ScenarioConstraintError for any other invariant breach.
    Each finding names the path of the offending element.
    """
    pack = parse_scenario(source)
    report = validate_scenario(pack)
    dangling = [f for f in report.errors if f.code == "dangling_reference"]
    if dangling:
        raise ScenarioReferenceError(dangling)
    if report.errors:
        raise ScenarioConstraintError(list(report.errors))
    return pack


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def to_document(pack: ScenarioPack) -> dict:
    """Plain-dict form with canonical field ordering."""
    doc: dict = {"version": pack.version}
    persona: dict = {"name": pack.persona.name, "age": pack.persona.age}
    if pack.persona.demographic_notes:
        persona["demographic_notes"] = pack.persona.demographic_notes
    if pack.persona.presenting_complaint:
        persona["presenting_complaint"] = pack.persona.presenting_complaint
    if pack.persona.hidden_facts:
        persona["hidden_facts"] = list(pack.persona.hidden_facts)
    if pack.persona.speaking_style_directives:
        persona["speaking_style_directives"] = list(pack.persona.speaking_style_directives)
    doc["persona"] = persona
    if pack.guidelines:
        doc["guidelines"] = list(pack.guidelines)
    if pack.negation_tokens != DEFAULT_NEGATION_TOKENS:
        doc["negation_tokens"] = list(pack.negation_tokens)
    if not pack.prefer_output_negation:
        doc["prefer_output_negation"] = False
    if pack.disclosure_rules:
        doc["disclosure_rules"] = [
            {
                "id": r.id,
                "topic_patterns": list(r.topic_patterns),
                "withheld_terms": list(r.withheld_terms),
                "reveal_after_asks": r.reveal_after_asks,
            }
            for r in pack.disclosure_rules
        ]
    doc["clips"] = [
        {
            "id": c.id,
            "display_label": c.display_label,
            "total_frames": c.total_frames,
            "fps": c.fps,
            "lead_in_frames": c.lead_in_frames,
            "loopable": c.loopable,
            "expression_tag": c.expression_tag,
        }
        for c in pack.clips
    ]
    scenes = []
    for s in pack.scenes:
        sd: dict = {"id": s.id, "title": s.title, "fallback_clip": s.fallback_clip_id}
        if s.setting_description:
            sd["setting_description"] = s.setting_description
        if s.patient_pose:
            sd["patient_pose"] = s.patient_pose
        if s.fallback_line != DEFAULT_FALLBACK_LINE:
            sd["fallback_line"] = s.fallback_line
        if s.repetition_fallbacks:
            sd["repetition_fallbacks"] = list(s.repetition_fallbacks)
        if s.trigger_rules:
            sd["triggers"] = [
                {
                    "id": t.id,
                    "phrases": list(t.phrases),
                    "clip": t.clip_id,
                    "priority": t.priority,
                    "side": t.side,
                }
                for t in s.trigger_rules
            ]
        if s.scripted_intents:
            intents = []
            for it in s.scripted_intents:
                idoc: dict = {"id": it.id, "patterns": list(it.patterns), "variants": list(it.response_variants)}
                if it.role_affinity is not None:
                    idoc["role_affinity"] = it.role_affinity
                if it.disclosure_rule_id is not None:
                    idoc["disclosure_rule"] = it.disclosure_rule_id
                intents.append(idoc)
            sd["intents"] = intents
        scenes.append(sd)
    doc["scenes"] = scenes
    return doc


def dump_scenario(pack: ScenarioPack) -> str:
    return yaml.safe_dump(to_document(pack), sort_keys=False, allow_unicode=True, width=100)


def builtin_pack_path(name: str = "jane_ryan") -> Path:
    return Path(__file__).parent / "packs" / f"{name}.yaml"


# ---------------------------------------------------------------------------
# System prompt assembly
# ---------------------------------------------------------------------------


def assemble_system_prompt(pack: ScenarioPack, scene_id: str, active_role: str) -> str:
    """Build the persona system prompt for one scene and one interviewer role.

    Pure function of (pack, scene, role): identical inputs give byte-identical
    output. Sections appear in a fixed order — persona identity, scene
    context, guidelines, role directives, withholding directives — and the
    role block is the only part that varies with `active_role`.
    """
    scene = pack.scene(scene_id)
    role = canonical_role(active_role)
    p = pack.persona

    lines: list[str] = []
    identity = f"You are {p.name}, a {p.age}-year-old patient."
    if p.demographic_notes:
        identity += f" {p.demographic_notes}"
    lines.append(identity)
    if p.presenting_complaint:
        lines.append(f"Presenting concern: {p.presenting_complaint}")
    if p.speaking_style_directives:
        lines.append("How you speak:")
        lines.extend(f"- {d}" for d in p.speaking_style_directives)

    lines.append("")
    lines.append(f"Scene: {scene.title}.")
    if scene.setting_description:
        lines.append(scene.setting_description)
    if scene.patient_pose:
        lines.append(f"You are {scene.patient_pose}.")

    if pack.guidelines:
        lines.append("")
        lines.append("Conversation guidelines:")
        lines.extend(f"- {g}" for g in pack.guidelines)

    lines.append("")
    pretty = display_role(role)
    lines.append(f"Active interviewer: the team's {pretty}.")
    lines.append(f"Weigh your answers toward what a {pretty} would ask about.")
    for intent in scene.scripted_intents:
        if intent.role_affinity == role and intent.patterns:
            lines.append(f"Expect the {pretty} to probe: {', '.join(intent.patterns[:4])}.")

    if pack.disclosure_rules:
        lines.append("")
        lines.append("Information you hold back:")
        for rule in pack.disclosure_rules:
            terms = ", ".join(f'"{t}"' for t in rule.withheld_terms)
            topic = rule.topic_patterns[0] if rule.topic_patterns else "that topic"
            if rule.reveal_after_asks == 1:
                lines.append(
                    f"- Do not reveal {terms} when first asked about {topic}; you may disclose if asked again."
                )
            else:
                lines.append(
                    f"- Do not reveal {terms} during the first {rule.reveal_after_asks} times you are asked"
                    f" about {topic}; you may disclose after that."
                )

    return "\n".join(lines) + "\n"
