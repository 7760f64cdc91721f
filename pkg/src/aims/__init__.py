"""aims: a virtual patient interview service.

Scenario packs turn a clinical case into live, turn-taken, audio/visual
synchronized patient interviews: keyword-triggered animation cues, a
push-to-talk input gate, disclosure gating over hidden facts, and an
append-only transcript with per-turn metrics.
"""

from .scenario import (
    ScenarioPack,
    assemble_system_prompt,
    builtin_pack_path,
    dump_scenario,
    load_scenario,
    validate_scenario,
)
from .session import Session, SessionConfig, collect_metrics, load_record
from .simulate import load_script, run_simulation

__version__ = "0.1.0"

__all__ = [
    "ScenarioPack",
    "Session",
    "SessionConfig",
    "assemble_system_prompt",
    "builtin_pack_path",
    "collect_metrics",
    "dump_scenario",
    "load_record",
    "load_scenario",
    "load_script",
    "run_simulation",
    "validate_scenario",
    "__version__",
]
