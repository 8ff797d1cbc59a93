"""Priority-aware defeasible inference with full derivation traces.

Evaluation is stratified over the literal dependency groups computed by
``kb.dependency_order``.  Within a group, a rule with a derived body fires
unless a conflicting applicable rule of strictly higher priority defeats
it (facts defeat every rule whose head conflicts with them); two
undefeated conflicting rules of equal priority block each other and are
recorded as an ambiguity.  A defeated rule does not block anything: this
is what lets an exception rule clear the way for an alternative
conclusion of the same priority as the defeated default.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .errors import EmptyTrace, NoCandidateRules, NoDecision
from .kb import Fact, KnowledgeBase, Literal, Rule, conflicts, dependency_order


@dataclass(frozen=True)
class DerivationStep:
    derived: Literal
    by_rule: str
    consumed: tuple
    defeated_rules: tuple  # of (rule id, priority), strictly below by_rule's


@dataclass(frozen=True)
class Ambiguity:
    literal: Literal
    rules: tuple  # pair of rule ids, lexicographic


@dataclass(frozen=True)
class DerivedState:
    derived: frozenset
    steps: tuple
    ambiguities: tuple


@dataclass(frozen=True)
class Trace:
    steps: tuple
    decision: Literal
    used_facts: frozenset
    used_rules: frozenset
    defeated: frozenset
    ambiguities: tuple
    statements: dict = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class TraceElement:
    id: str
    kind: str  # "fact" | "rule"
    depth: int
    usage_count: int
    defeated: bool = False
    text: str = ""
    priority: Optional[int] = None


def infer_fixpoint(kb: KnowledgeBase) -> DerivedState:
    """Derive all defeasible conclusions of a valid KB, deterministically."""
    functional = kb.functional_relations
    component_of, order, _ = dependency_order(kb)
    fact_literals = {f.literal for f in kb.facts}
    derived = set(fact_literals)
    steps = []
    ambiguities = []
    amb_seen = set()
    rules_by_comp = {}
    for r in sorted(kb.rules, key=lambda r: r.id):
        rules_by_comp.setdefault(component_of[r.head], []).append(r)

    def live_rules(comp_rules):
        applicable = [r for r in comp_rules if all(b in derived for b in r.body)]

        def beaten(s: Rule) -> bool:
            if any(conflicts(s.head, f, functional) for f in fact_literals):
                return True
            return any(
                t is not s
                and conflicts(t.head, s.head, functional)
                and t.priority > s.priority
                for t in applicable
            )

        return applicable, [r for r in applicable if not beaten(r)]

    def conflict_pairs(live):
        blocked, pairs = set(), []
        for i, r in enumerate(live):
            for s in live[i + 1 :]:
                if conflicts(r.head, s.head, functional):
                    blocked.add(r.id)
                    blocked.add(s.id)
                    pairs.append((r, s))
        return blocked, pairs

    for comp in order:
        comp_rules = rules_by_comp.get(comp, [])
        if not comp_rules:
            continue
        while True:
            applicable, live = live_rules(comp_rules)
            blocked, _ = conflict_pairs(live)
            fired = False
            for r in live:
                if r.id in blocked or r.head in derived:
                    continue
                # An earlier in-group conclusion is settled; a late arrival
                # whose head conflicts with it simply does not fire.
                if any(
                    conflicts(r.head, d, functional) for d in derived
                ):
                    continue
                defeated = tuple(
                    (s.id, s.priority)
                    for s in applicable
                    if s is not r
                    and conflicts(s.head, r.head, functional)
                    and s.priority < r.priority
                )
                derived.add(r.head)
                steps.append(
                    DerivationStep(r.head, r.id, tuple(r.body), defeated)
                )
                fired = True
            if not fired:
                break
        # Ambiguities are judged only once the stratum has stabilized, so a
        # pair that a later-arriving defeater resolves is not reported.
        _, live = live_rules(comp_rules)
        _, pairs = conflict_pairs(live)
        for r, s in pairs:
            if r.head in derived or s.head in derived:
                continue
            pair = tuple(sorted((r.id, s.id)))
            if pair not in amb_seen:
                amb_seen.add(pair)
                ambiguities.append(Ambiguity(r.head, pair))
    return DerivedState(frozenset(derived), tuple(steps), tuple(ambiguities))


def decide(kb: KnowledgeBase, query: tuple) -> tuple:
    """Answer the decision query, returning the decision literal and the
    derivation trace (defeated on-path rules included)."""
    subject, relation = query
    state = infer_fixpoint(kb)
    matches = [
        lit
        for lit in state.derived
        if lit.positive and lit.subject == subject and lit.relation == relation
    ]
    if not matches:
        related = tuple(
            a
            for a in state.ambiguities
            if a.literal.subject == subject and a.literal.relation == relation
        )
        raise NoDecision(
            f"no positive conclusion for ({subject}, {relation})",
            ambiguities=related or state.ambiguities,
        )
    decision = sorted(matches)[0]

    producer = {s.derived: s for s in state.steps}
    fact_by_literal = {f.literal: f for f in kb.facts}
    used_facts, used_rules, defeated = set(), set(), set()
    on_path = []
    pending = [decision]
    seen = set()
    while pending:
        lit = pending.pop()
        if lit in seen:
            continue
        seen.add(lit)
        if lit in fact_by_literal:
            used_facts.add(fact_by_literal[lit].id)
            continue
        step = producer.get(lit)
        if step is None:
            continue
        on_path.append(step)
        used_rules.add(step.by_rule)
        for rid, _ in step.defeated_rules:
            defeated.add(rid)
        pending.extend(step.consumed)

    order_index = {s: i for i, s in enumerate(state.steps)}
    on_path.sort(key=lambda s: order_index[s])
    statements = {}
    for sid in used_facts | used_rules | defeated:
        statements[sid] = kb.statement(sid)
    trace = Trace(
        steps=tuple(on_path),
        decision=decision,
        used_facts=frozenset(used_facts),
        used_rules=frozenset(used_rules),
        defeated=frozenset(defeated),
        ambiguities=state.ambiguities,
        statements=statements,
    )
    return decision, trace


def _statement_text(stmt) -> str:
    if isinstance(stmt, Fact):
        return stmt.literal.text()
    body = " and ".join(b.text() for b in stmt.body)
    return f"if {body} then {stmt.head.text()} (priority {stmt.priority})"


def collect_trace_elements(trace: Trace) -> list:
    """One element per statement in the trace: depth is the shortest
    rule-hop distance from the decision, usage counts derivation-DAG
    references.  Defeated rules ride along flagged, at the depth of the
    step that recorded their defeat."""
    if not trace.used_facts and not trace.used_rules:
        raise EmptyTrace("trace contains no statements")

    step_for = {s.derived: s for s in trace.steps}
    fact_lit_to_id = {
        stmt.literal: sid
        for sid, stmt in trace.statements.items()
        if isinstance(stmt, Fact) and sid in trace.used_facts
    }
    rule_depth, fact_depth, defeated_depth = {}, {}, {}
    fact_usage, rule_consumers, defeated_usage = {}, {}, {}

    # Usage: one reference per consumption edge / defeat record, counted
    # once per on-path step.
    for step in trace.steps:
        for rid, _prio in step.defeated_rules:
            defeated_usage[rid] = defeated_usage.get(rid, 0) + 1
        for lit in step.consumed:
            if lit in fact_lit_to_id:
                fid = fact_lit_to_id[lit]
                fact_usage[fid] = fact_usage.get(fid, 0) + 1
            elif lit in step_for:
                sub = step_for[lit].by_rule
                rule_consumers[sub] = rule_consumers.get(sub, 0) + 1

    if trace.decision in fact_lit_to_id and trace.decision not in step_for:
        fid = fact_lit_to_id[trace.decision]
        fact_depth[fid] = 0
        fact_usage[fid] = 1
    else:
        root = step_for.get(trace.decision)
        frontier = [(root, 0)] if root is not None else []
        while frontier:
            step, depth = frontier.pop(0)
            if step.by_rule in rule_depth and rule_depth[step.by_rule] <= depth:
                continue
            rule_depth[step.by_rule] = depth
            for rid, _prio in step.defeated_rules:
                defeated_depth[rid] = min(defeated_depth.get(rid, depth), depth)
            for lit in step.consumed:
                if lit in fact_lit_to_id:
                    fid = fact_lit_to_id[lit]
                    fact_depth[fid] = min(fact_depth.get(fid, depth + 1), depth + 1)
                elif lit in step_for:
                    frontier.append((step_for[lit], depth + 1))

    elements = []
    for fid in sorted(trace.used_facts):
        stmt = trace.statements[fid]
        elements.append(
            TraceElement(
                id=fid,
                kind="fact",
                depth=fact_depth.get(fid, 0),
                usage_count=fact_usage.get(fid, 1),
                text=_statement_text(stmt),
            )
        )
    for rid in sorted(trace.used_rules):
        stmt = trace.statements[rid]
        elements.append(
            TraceElement(
                id=rid,
                kind="rule",
                depth=rule_depth.get(rid, 0),
                usage_count=max(1, rule_consumers.get(rid, 0)),
                text=_statement_text(stmt),
                priority=stmt.priority,
            )
        )
    for rid in sorted(trace.defeated):
        stmt = trace.statements[rid]
        elements.append(
            TraceElement(
                id=rid,
                kind="rule",
                depth=defeated_depth.get(rid, 0),
                usage_count=defeated_usage.get(rid, 1),
                defeated=True,
                text=_statement_text(stmt),
                priority=stmt.priority,
            )
        )
    return elements


@dataclass(frozen=True)
class DefeaterEntry:
    rule_id: str
    status: str  # "defeated" | "unsatisfied"
    defeaters: tuple = ()  # (rule id, tuple of body fact ids)
    missing: tuple = ()  # missing body literals
    blockers: tuple = ()  # statement ids deriving literals conflicting a missing one
    fact_blockers: tuple = ()  # fact ids whose literal conflicts the head


@dataclass(frozen=True)
class ContrastiveDiagnosis:
    expected: Literal
    confirmed: bool
    entries: tuple = ()


def find_defeaters(kb: KnowledgeBase, expected: Literal) -> ContrastiveDiagnosis:
    """Explain why ``expected`` was not concluded: for every rule that
    would conclude it, report unsatisfied body literals (with whatever
    derived statements block them) or the higher-priority defeaters."""
    functional = kb.functional_relations
    state = infer_fixpoint(kb)
    if expected in state.derived:
        return ContrastiveDiagnosis(expected, confirmed=True)
    candidates = [r for r in kb.rules if r.head == expected]
    if not candidates:
        raise NoCandidateRules(f"no rule concludes {expected.text()}")

    producer = {s.derived: s for s in state.steps}
    fact_by_literal = {f.literal: f for f in kb.facts}

    def blocking_statements(missing: Literal) -> tuple:
        found = []
        for lit in state.derived:
            if conflicts(lit, missing, functional):
                if lit in fact_by_literal:
                    found.append(fact_by_literal[lit].id)
                elif lit in producer:
                    found.append(producer[lit].by_rule)
        return tuple(sorted(found))

    entries = []
    for r in sorted(candidates, key=lambda r: r.id):
        missing = tuple(b for b in r.body if b not in state.derived)
        if missing:
            blockers = tuple(
                sid for m in missing for sid in blocking_statements(m)
            )
            entries.append(
                DefeaterEntry(r.id, "unsatisfied", missing=missing, blockers=blockers)
            )
            continue
        defeaters = []
        for t in kb.rules:
            if (
                t.id != r.id
                and conflicts(t.head, r.head, functional)
                and t.priority > r.priority
                and all(b in state.derived for b in t.body)
            ):
                body_facts = tuple(
                    fact_by_literal[b].id for b in t.body if b in fact_by_literal
                )
                defeaters.append((t.id, body_facts))
        fact_blockers = tuple(
            f.id for f in kb.facts if conflicts(f.literal, r.head, functional)
        )
        entries.append(
            DefeaterEntry(
                r.id,
                "defeated",
                defeaters=tuple(sorted(defeaters)),
                fact_blockers=fact_blockers,
            )
        )
    return ContrastiveDiagnosis(expected, confirmed=False, entries=tuple(entries))
