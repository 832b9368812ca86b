"""Desk-scale symbolic laboratory for the 5G AKA authentication protocol."""

__version__ = "0.1.0"

from .deduction import KnowledgeBase, derivable, observe, saturate
from .engine import (
    Bounds,
    Reveal,
    ScenarioConfig,
    Trace,
    Verdict,
    explore,
    replay_trace,
    run_honest,
    scripted_run,
)
from .properties import PropertyId, parse_property, run_linkability_distinguisher
from .protocol import FixToggles
from .terms import (
    ZERO,
    App,
    BaseMismatch,
    Const,
    Name,
    Nat,
    Term,
    Xor,
    equal_mod_theory,
    nat_increment,
    nat_less,
    normalize,
    render,
)

__all__ = [
    "App", "BaseMismatch", "Bounds", "Const", "FixToggles", "KnowledgeBase",
    "Name", "Nat", "PropertyId", "Reveal", "ScenarioConfig", "Term", "Trace",
    "Verdict", "Xor", "ZERO", "derivable", "equal_mod_theory", "explore",
    "nat_increment", "nat_less", "normalize", "observe", "parse_property",
    "render", "replay_trace", "run_honest", "run_linkability_distinguisher",
    "saturate", "scripted_run",
]
