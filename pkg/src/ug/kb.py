"""Layered knowledge base: ground literals, strict facts, defeasible rules.

The knowledge base is a persistent value: every update operation returns a
new KB and leaves its input untouched, so snapshots can be shared freely
between the reasoner, the CLI, and service sessions.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Optional, Union

from .errors import (
    DuplicateId,
    FactConflict,
    FixedConflict,
    FixedLayerViolation,
    InvalidKB,
    RetractUnknown,
)

IDENT_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")

LAYER_FIXED = "fixed"
LAYER_PREINSTALLED = "preinstalled"
LAYER_USER = "user"
LAYERS = (LAYER_FIXED, LAYER_PREINSTALLED, LAYER_USER)

ACTOR_SYSTEM = "system"
ACTOR_USER = "user"


def is_identifier(token: str) -> bool:
    return bool(IDENT_RE.match(token))


@dataclass(frozen=True, order=True)
class Literal:
    """Polarity-signed (subject, relation, value) triple."""

    subject: str
    relation: str
    value: str
    positive: bool = True

    def negate(self) -> "Literal":
        return replace(self, positive=not self.positive)

    def text(self) -> str:
        core = f"{self.subject} {self.relation} {self.value}"
        return core if self.positive else f"not {core}"


def conflicts(a: Literal, b: Literal, functional: frozenset) -> bool:
    """Two literals conflict on opposite polarity, or on differing values
    of a functional relation when both are positive."""
    if a.subject != b.subject or a.relation != b.relation:
        return False
    if a.value == b.value:
        return a.positive != b.positive
    return a.positive and b.positive and a.relation in functional


@dataclass(frozen=True)
class Fact:
    id: str
    literal: Literal


@dataclass(frozen=True)
class Rule:
    id: str
    body: tuple
    head: Literal
    priority: int
    layer: str = LAYER_PREINSTALLED


Statement = Union[Fact, Rule]


@dataclass(frozen=True)
class KnowledgeBase:
    facts: tuple = ()
    rules: tuple = ()
    functional_relations: frozenset = frozenset()
    decision_query: tuple = ("", "")

    @cached_property
    def fact_map(self) -> dict:
        return {f.id: f for f in self.facts}

    @cached_property
    def rule_map(self) -> dict:
        return {r.id: r for r in self.rules}

    def statement(self, item: str) -> Optional[Statement]:
        return self.fact_map.get(item) or self.rule_map.get(item)

    def statement_ids(self) -> set:
        return set(self.fact_map) | set(self.rule_map)


def add_fact(kb: KnowledgeBase, fact: Fact) -> KnowledgeBase:
    """Return a KB extended with ``fact``; the input KB is unchanged."""
    if fact.id in kb.fact_map or fact.id in kb.rule_map:
        raise DuplicateId(f"statement id {fact.id!r} already in use")
    for other in kb.facts:
        if conflicts(fact.literal, other.literal, kb.functional_relations):
            raise FactConflict(
                f"fact {fact.id} ({fact.literal.text()}) conflicts with "
                f"{other.id} ({other.literal.text()})"
            )
    return replace(kb, facts=kb.facts + (fact,))


def retract_fact(kb: KnowledgeBase, fact_id: str) -> KnowledgeBase:
    if fact_id not in kb.fact_map:
        raise RetractUnknown(f"no fact with id {fact_id!r}")
    return replace(kb, facts=tuple(f for f in kb.facts if f.id != fact_id))


def upsert_rule(kb: KnowledgeBase, rule: Rule, actor: str) -> KnowledgeBase:
    """Add or replace a rule, enforcing layer permissions for user actors.

    A user may add user-layer rules and modify preinstalled rules (the
    result is re-layered as ``user``); the fixed layer is off limits, and a
    new user rule whose head conflicts with a fixed rule's head is rejected.
    """
    if rule.id in kb.fact_map:
        raise DuplicateId(f"id {rule.id!r} already names a fact")
    existing = kb.rule_map.get(rule.id)
    if actor == ACTOR_USER:
        if existing is not None and existing.layer == LAYER_FIXED:
            raise FixedLayerViolation(
                f"rule {rule.id} is in the fixed layer and cannot be edited"
            )
        if rule.layer == LAYER_FIXED:
            raise FixedLayerViolation("users cannot write to the fixed layer")
        rule = replace(rule, layer=LAYER_USER)
        if existing is None:
            for other in kb.rules:
                if other.layer == LAYER_FIXED and conflicts(
                    rule.head, other.head, kb.functional_relations
                ):
                    raise FixedConflict(
                        f"head of {rule.id} conflicts with fixed rule {other.id}"
                    )
    if existing is None:
        return replace(kb, rules=kb.rules + (rule,))
    return replace(
        kb, rules=tuple(rule if r.id == rule.id else r for r in kb.rules)
    )


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    statements: tuple = ()


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.violations


def _kb_literals(kb: KnowledgeBase) -> list:
    seen = []
    for f in kb.facts:
        seen.append(f.literal)
    for r in kb.rules:
        seen.append(r.head)
        seen.extend(r.body)
    out, dedup = [], set()
    for lit in seen:
        if lit not in dedup:
            dedup.add(lit)
            out.append(lit)
    return out


def dependency_order(kb: KnowledgeBase):
    """Group conflicting literals and order the groups topologically.

    Groups are connected components of the pairwise conflict relation; a
    rule adds an edge from its head's group to each body literal's group.
    Returns ``(component_of, ordered_components, cycle_members)`` where
    ``cycle_members`` is None for acyclic KBs.  Self-edges (a body literal
    in the head's own group) are legal: the in-group fixpoint settles them.
    """
    literals = _kb_literals(kb)
    index = {lit: i for i, lit in enumerate(literals)}
    parent = list(range(len(literals)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(i, j):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)

    for i, a in enumerate(literals):
        for j in range(i + 1, len(literals)):
            if conflicts(a, literals[j], kb.functional_relations):
                union(i, j)

    component_of = {lit: find(index[lit]) for lit in literals}
    comps = sorted(set(component_of.values()))
    edges = {c: set() for c in comps}
    for r in kb.rules:
        head_c = component_of[r.head]
        for b in r.body:
            body_c = component_of[b]
            if body_c != head_c:
                edges[head_c].add(body_c)

    # Kahn over reversed edges: emit groups whose prerequisites are done.
    indeg = {c: 0 for c in comps}
    consumers = {c: [] for c in comps}
    for c, deps in edges.items():
        indeg[c] = len(deps)
        for d in deps:
            consumers[d].append(c)
    ready = sorted(c for c in comps if indeg[c] == 0)
    order = []
    while ready:
        c = ready.pop(0)
        order.append(c)
        changed = False
        for user in consumers[c]:
            indeg[user] -= 1
            if indeg[user] == 0:
                ready.append(user)
                changed = True
        if changed:
            ready.sort()
    if len(order) != len(comps):
        leftover = [c for c in comps if c not in set(order)]
        members = tuple(
            lit.text() for lit in literals if component_of[lit] in leftover
        )
        return component_of, order, members
    return component_of, order, None


def validate_kb(kb: KnowledgeBase) -> ValidationReport:
    """Report every invariant violation; an empty report means the KB is
    ready to snapshot."""
    out = []
    seen_ids = {}
    for stmt in list(kb.facts) + list(kb.rules):
        if stmt.id in seen_ids:
            out.append(
                Violation(
                    "DuplicateId",
                    f"statement id {stmt.id!r} used more than once",
                    (stmt.id,),
                )
            )
        seen_ids[stmt.id] = stmt
        if not is_identifier(stmt.id):
            out.append(
                Violation("BadIdentifier", f"bad statement id {stmt.id!r}", (stmt.id,))
            )

    def check_literal(lit: Literal, owner: str):
        for part in (lit.subject, lit.relation, lit.value):
            if not is_identifier(part):
                out.append(
                    Violation(
                        "BadIdentifier",
                        f"bad identifier {part!r} in statement {owner}",
                        (owner,),
                    )
                )

    for f in kb.facts:
        check_literal(f.literal, f.id)
    facts = list(kb.facts)
    for i, f in enumerate(facts):
        for g in facts[i + 1 :]:
            if conflicts(f.literal, g.literal, kb.functional_relations):
                out.append(
                    Violation(
                        "FactConflict",
                        f"facts {f.id} and {g.id} conflict "
                        f"({f.literal.text()} vs {g.literal.text()})",
                        (f.id, g.id),
                    )
                )
    for r in kb.rules:
        check_literal(r.head, r.id)
        for b in r.body:
            check_literal(b, r.id)
        if not r.body:
            out.append(Violation("EmptyBody", f"rule {r.id} has an empty body", (r.id,)))
        if r.head in r.body:
            out.append(
                Violation(
                    "HeadInBody", f"rule {r.id} repeats its head in its body", (r.id,)
                )
            )
        if r.priority < 0:
            out.append(
                Violation(
                    "NegativePriority", f"rule {r.id} has negative priority", (r.id,)
                )
            )
        if r.layer not in LAYERS:
            out.append(
                Violation("BadLayer", f"rule {r.id} has unknown layer {r.layer!r}", (r.id,))
            )

    _, _, cycle = dependency_order(kb)
    if cycle is not None:
        out.append(
            Violation(
                "DependencyCycle",
                "literal dependency cycle through: " + ", ".join(cycle),
                (),
            )
        )

    subject, relation = kb.decision_query
    if relation:
        if relation not in kb.functional_relations:
            out.append(
                Violation(
                    "NonFunctionalDecision",
                    f"decision relation {relation!r} is not functional",
                    (),
                )
            )
        known = any(
            lit.relation == relation for lit in _kb_literals(kb)
        )
        if not known:
            out.append(
                Violation(
                    "UnknownDecisionRelation",
                    f"decision relation {relation!r} appears in no statement",
                    (),
                )
            )
    else:
        out.append(Violation("MissingDecision", "no decision query declared", ()))
    return ValidationReport(tuple(out))


def snapshot(kb: KnowledgeBase) -> KnowledgeBase:
    """Validate and freeze the KB for concurrent use.

    The KB value is already immutable; snapshot is the validation gate.
    """
    report = validate_kb(kb)
    if not report.ok:
        raise InvalidKB(
            "; ".join(v.message for v in report.violations),
            violations=[v.code for v in report.violations],
        )
    return kb
