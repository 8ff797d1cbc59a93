"""Personalized explanation engine for a defeasible reasoning agent."""

from .kb import (
    Fact,
    KnowledgeBase,
    Literal,
    Rule,
    add_fact,
    retract_fact,
    snapshot,
    upsert_rule,
    validate_kb,
)
from .reasoner import (
    Trace,
    TraceElement,
    collect_trace_elements,
    decide,
    find_defeaters,
    infer_fixpoint,
)
from .memory import (
    MemoryLog,
    SupportEvent,
    SupportRank,
    append_event,
    apply_teaching,
    load_log,
    record_event,
    save_log,
    support_rank,
)
from .explain import Explanation, diagnose_contrastive, explain, select_uncommon_ground
from .scenario import (
    ParseError,
    Scenario,
    Transcript,
    parse_scenario,
    run_scenario,
    serialize_scenario,
)

__version__ = "0.1.0"
