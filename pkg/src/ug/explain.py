"""Explanation strategies over a decision trace.

Three introspective baselines (last step, most specific rule, most used
fact) look only at the agent's own reasoning; the extrospective strategy
consults the user's support memory and surfaces the trace element the
user is least likely to share; the contrastive strategy answers "why not
X?" from the defeaters or unsatisfied premises of the expected outcome.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

from .errors import EmptyTrace, MissingExpected, MissingMemory
from .kb import Fact, KnowledgeBase, Literal
from .memory import MemoryLog, SupportRank, support_rank
from .reasoner import (
    ContrastiveDiagnosis,
    Trace,
    TraceElement,
    collect_trace_elements,
    find_defeaters,
    _statement_text,
)

STRATEGIES = (
    "last_step",
    "most_specific_rule",
    "most_used_fact",
    "extrospective",
    "contrastive",
)

INTROSPECTIVE = ("last_step", "most_specific_rule", "most_used_fact")


@dataclass(frozen=True)
class Explanation:
    strategy: str
    ranked: tuple  # of (TraceElement, SupportRank)
    rendered: str
    decision: Optional[Literal]
    expected: Optional[Literal] = None
    confirmed: bool = False


def _order_key(pair):
    element, rank = pair
    return (
        rank.effective,
        0 if element.kind == "fact" else 1,
        element.depth,
        element.id,
    )


def select_uncommon_ground(elements, memory: MemoryLog, k: int = 1) -> list:
    """Annotate every element with its support rank and sort by
    (rank asc, facts before rules, depth asc, id); return the top-k, never
    cutting into a group of elements sharing the minimal rank."""
    annotated = [(el, support_rank(memory, el.id)) for el in elements]
    annotated.sort(key=_order_key)
    if not annotated:
        return []
    min_rank = annotated[0][1].effective
    n_min = sum(1 for _, r in annotated if r.effective == min_rank)
    return annotated[: max(k, n_min)]


def _no_rank(elements) -> tuple:
    return tuple((el, SupportRank()) for el in elements)


def render_text(explanation: Explanation) -> str:
    """One short paragraph: the decision plus the top-ranked statement,
    nothing else."""
    top, _ = explanation.ranked[0]
    decision = explanation.decision
    decision_text = decision.text() if decision is not None else ""
    if explanation.confirmed and explanation.expected is not None:
        return (
            f"The outcome matches your expectation: {explanation.expected.text()}."
        )
    if explanation.strategy == "contrastive":
        expected = explanation.expected.text() if explanation.expected else "that"
        return (
            f"I concluded {decision_text} instead of {expected}. "
            f"Had {top.text} not held, {expected} would have been chosen."
        )
    if explanation.strategy == "last_step":
        return (
            f"I concluded {decision_text}; the final step applied {top.id}: {top.text}."
        )
    if explanation.strategy == "most_specific_rule":
        return (
            f"I concluded {decision_text}; the most specific rule involved "
            f"is {top.id}: {top.text}."
        )
    if explanation.strategy == "most_used_fact":
        return (
            f"I concluded {decision_text}; the most used fact is {top.id}: {top.text}."
        )
    return (
        f"I concluded {decision_text}. You may not be aware that {top.text} "
        f"({top.id})."
    )


def _finish(explanation: Explanation) -> Explanation:
    return replace(explanation, rendered=render_text(explanation))


def _last_step(trace: Trace, elements) -> tuple:
    final = trace.steps[-1].by_rule if trace.steps else None
    if final is None:
        # Decision is itself a fact; the single element is the last step.
        chosen = [el for el in elements if el.depth == 0]
    else:
        chosen = [el for el in elements if el.id == final and not el.defeated]
    rest = [el for el in elements if el not in chosen]
    return _no_rank(chosen + rest)


def _most_specific_rule(elements) -> tuple:
    rules = [el for el in elements if el.kind == "rule"]
    if not rules:
        raise EmptyTrace("trace contains no rules")
    rules.sort(key=lambda el: (-(el.priority or 0), el.depth, el.id))
    rest = [el for el in elements if el.kind != "rule"]
    return _no_rank(rules + rest)


def _most_used_fact(elements) -> tuple:
    facts = [el for el in elements if el.kind == "fact"]
    if not facts:
        raise EmptyTrace("trace contains no facts")
    facts.sort(key=lambda el: (-el.usage_count, el.depth, el.id))
    rest = [el for el in elements if el.kind != "fact"]
    return _no_rank(facts + rest)


def diagnose_contrastive(
    kb: KnowledgeBase,
    expected: Literal,
    memory: Optional[MemoryLog] = None,
    k: int = 1,
) -> Explanation:
    """Answer "why not `expected`?" by citing what stood in its way."""
    diagnosis = find_defeaters(kb, expected)
    subject, relation = expected.subject, expected.relation
    decision = _actual_decision(kb, subject, relation)
    if diagnosis.confirmed:
        element = TraceElement(
            id="expected", kind="fact", depth=0, usage_count=1, text=expected.text()
        )
        return _finish(
            Explanation(
                strategy="contrastive",
                ranked=_no_rank([element]),
                rendered="",
                decision=decision,
                expected=expected,
                confirmed=True,
            )
        )
    elements = _contrastive_candidates(kb, diagnosis)
    if memory is not None:
        ranked = tuple(select_uncommon_ground(elements, memory, k))
    else:
        elements.sort(key=lambda el: (el.depth, 0 if el.kind == "fact" else 1, el.id))
        ranked = _no_rank(elements)
    return _finish(
        Explanation(
            strategy="contrastive",
            ranked=ranked,
            rendered="",
            decision=decision,
            expected=expected,
        )
    )


def _actual_decision(kb: KnowledgeBase, subject: str, relation: str):
    from .errors import NoDecision
    from .reasoner import decide

    try:
        decision, _ = decide(kb, (subject, relation))
        return decision
    except NoDecision:
        return None


def _contrastive_candidates(kb: KnowledgeBase, diagnosis: ContrastiveDiagnosis) -> list:
    """Defeater rules at depth 0, their body facts at depth 1, and the
    statements blocking missing premises at depth 0."""
    picked = {}

    def put(sid: str, depth: int):
        stmt = kb.statement(sid)
        if stmt is None or sid in picked:
            return
        kind = "fact" if isinstance(stmt, Fact) else "rule"
        picked[sid] = TraceElement(
            id=sid,
            kind=kind,
            depth=depth,
            usage_count=1,
            text=_statement_text(stmt),
            priority=None if kind == "fact" else stmt.priority,
        )

    for entry in diagnosis.entries:
        if entry.status == "defeated":
            for rule_id, body_facts in entry.defeaters:
                put(rule_id, 0)
                for fid in body_facts:
                    put(fid, 1)
            for fid in entry.fact_blockers:
                put(fid, 0)
        else:
            for sid in entry.blockers:
                put(sid, 0)
    return list(picked.values())


def explain(
    kb: KnowledgeBase,
    trace: Optional[Trace],
    strategy: str,
    memory: Optional[MemoryLog] = None,
    expected: Optional[Literal] = None,
    k: int = 1,
) -> Explanation:
    """Produce an explanation of the traced decision under a strategy."""
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    if strategy == "contrastive":
        if expected is None:
            raise MissingExpected("contrastive explanations need an expected literal")
        return diagnose_contrastive(kb, expected, memory, k)
    if trace is None:
        raise EmptyTrace("no decision has been traced yet")
    elements = collect_trace_elements(trace)
    if strategy == "extrospective":
        if memory is None:
            raise MissingMemory("extrospective explanations need a memory log")
        ranked = tuple(select_uncommon_ground(elements, memory, k))
    elif strategy == "last_step":
        ranked = _last_step(trace, elements)
    elif strategy == "most_specific_rule":
        ranked = _most_specific_rule(elements)
    else:
        ranked = _most_used_fact(elements)
    return _finish(
        Explanation(
            strategy=strategy,
            ranked=ranked,
            rendered="",
            decision=trace.decision,
            expected=expected,
        )
    )
