"""Scenario text format: KB declarations, personas, and scripted steps.

The grammar is line-oriented (``#`` starts a comment); the only nesting is
the persona block, whose event lines are indented.  ``parse_scenario``
either returns a Scenario or raises ParseError with the line and column
of the first offending token; knowledge-base invariant violations found
after parsing are surfaced the same way, pointing at the statement's line
where attributable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Union

from . import memory as mem
from .errors import EngineError, InvalidKB, EmptyTrace
from .kb import (
    KnowledgeBase,
    Fact,
    Literal,
    Rule,
    LAYERS,
    is_identifier,
    snapshot,
    validate_kb,
)
from .memory import (
    EVENT_KINDS,
    MemoryLog,
    SupportEvent,
    TeachAction,
    append_event,
    apply_teaching,
    support_rank,
)
from .explain import STRATEGIES, explain
from .reasoner import decide


class ParseError(Exception):
    def __init__(self, line: int, column: int, message: str, snippet: str = ""):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column
        self.message = message
        self.snippet = snippet


@dataclass(frozen=True)
class StepDecide:
    kind = "decide"


@dataclass(frozen=True)
class StepWhy:
    strategy: str
    expected_value: Optional[str] = None
    kind = "why"


@dataclass(frozen=True)
class StepTeach:
    action: TeachAction
    kind = "teach"


@dataclass(frozen=True)
class StepEvent:
    event_kind: str
    item: str
    kind = "event"


ScriptStep = Union[StepDecide, StepWhy, StepTeach, StepEvent]


@dataclass(frozen=True)
class Scenario:
    kb: KnowledgeBase
    personas: dict
    script: tuple

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        return (
            self.kb == other.kb
            and self.personas == other.personas
            and self.script == other.script
        )


class _Cursor:
    """Tokenizer over one line; tracks the column of the token it is on."""

    def __init__(self, text: str, lineno: int):
        self.text = text
        self.lineno = lineno
        self.pos = 0

    def _skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos] in " \t":
            self.pos += 1

    def fail(self, message: str):
        raise ParseError(self.lineno, self.pos + 1, message, self.text)

    def at_end(self) -> bool:
        self._skip_ws()
        return self.pos >= len(self.text)

    def peek_token(self) -> Optional[str]:
        saved = self.pos
        token = self.next_token(optional=True)
        self.pos = saved
        return token

    def next_token(self, optional: bool = False) -> Optional[str]:
        self._skip_ws()
        if self.pos >= len(self.text):
            if optional:
                return None
            self.fail("unexpected end of line")
        ch = self.text[self.pos]
        if ch in ":&":
            self.pos += 1
            return ch
        if self.text.startswith("=>", self.pos):
            self.pos += 2
            return "=>"
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos] not in " \t:&":
            if self.text.startswith("=>", self.pos):
                break
            self.pos += 1
        return self.text[start : self.pos]

    def expect(self, token: str):
        self._skip_ws()
        col = self.pos + 1
        got = self.next_token(optional=True)
        if got != token:
            raise ParseError(
                self.lineno, col, f"expected {token!r}, got {got!r}", self.text
            )

    def identifier(self, what: str) -> str:
        self._skip_ws()
        col = self.pos + 1
        token = self.next_token(optional=True)
        if token is None or not is_identifier(token):
            raise ParseError(
                self.lineno, col, f"expected {what}, got {token!r}", self.text
            )
        return token

    def integer(self, what: str) -> int:
        self._skip_ws()
        col = self.pos + 1
        token = self.next_token(optional=True)
        if token is None or not token.isdigit():
            raise ParseError(
                self.lineno,
                col,
                f"expected non-negative integer for {what}, got {token!r}",
                self.text,
            )
        return int(token)

    def end(self):
        if not self.at_end():
            self.fail(f"unexpected trailing input {self.text[self.pos:]!r}")


def _parse_literal(cur: _Cursor) -> Literal:
    positive = True
    if cur.peek_token() == "not":
        cur.next_token()
        positive = False
    subject = cur.identifier("subject")
    relation = cur.identifier("relation")
    value = cur.identifier("value")
    return Literal(subject, relation, value, positive)


def _parse_rule_tail(cur: _Cursor, rule_id: str, priority: int, layer: str) -> Rule:
    body = [_parse_literal(cur)]
    while cur.peek_token() == "&":
        cur.next_token()
        body.append(_parse_literal(cur))
    cur.expect("=>")
    head = _parse_literal(cur)
    cur.end()
    return Rule(rule_id, tuple(body), head, priority, layer)


def _parse_teach(cur: _Cursor) -> TeachAction:
    name = cur.identifier("teach action")
    if name == "assert_fact":
        fact_id = cur.identifier("fact id")
        cur.expect(":")
        lit = _parse_literal(cur)
        cur.end()
        return mem.AssertFact(Fact(fact_id, lit))
    if name == "retract_fact":
        item = cur.identifier("fact id")
        cur.end()
        return mem.RetractFact(item)
    if name == "replace_fact_value":
        item = cur.identifier("fact id")
        value = cur.identifier("new value")
        cur.end()
        return mem.ReplaceFactValue(item, value)
    if name in ("add_user_rule", "edit_preinstalled_rule"):
        rule_id = cur.identifier("rule id")
        cur.expect("prio")
        priority = cur.integer("priority")
        cur.expect(":")
        rule = _parse_rule_tail(cur, rule_id, priority, "user")
        if name == "add_user_rule":
            return mem.AddUserRule(rule)
        return mem.EditPreinstalledRule(rule)
    if name == "set_rule_priority":
        item = cur.identifier("rule id")
        priority = cur.integer("priority")
        cur.end()
        return mem.SetRulePriority(item, priority)
    cur.fail(f"unknown teach action {name!r}")


def parse_scenario(text: str) -> Scenario:
    functional = set()
    facts = {}
    rules = {}
    decision = None
    personas = {}
    persona_lines = {}
    script = []
    script_lines = []
    stmt_line = {}
    current_persona = None

    lines = text.splitlines()
    for lineno, raw in enumerate(lines, start=1):
        hash_pos = raw.find("#")
        line = raw if hash_pos < 0 else raw[:hash_pos]
        if not line.strip():
            continue
        indented = line[0] in " \t"
        cur = _Cursor(line.rstrip(), lineno)
        if indented:
            if current_persona is None:
                cur._skip_ws()
                cur.fail("indented line outside a persona block")
            cur.expect("event")
            kind = cur.identifier("event kind")
            item = cur.identifier("item id")
            cur.end()
            persona_lines[current_persona].append((lineno, kind, item))
            continue
        current_persona = None
        keyword = cur.identifier("directive")
        if keyword == "functional":
            functional.add(cur.identifier("relation"))
            cur.end()
        elif keyword == "fact":
            fact_id = cur.identifier("fact id")
            cur.expect(":")
            lit = _parse_literal(cur)
            cur.end()
            if fact_id in facts or fact_id in rules:
                raise ParseError(lineno, 1, f"duplicate statement id {fact_id!r}", line)
            facts[fact_id] = Fact(fact_id, lit)
            stmt_line[fact_id] = lineno
        elif keyword == "rule":
            rule_id = cur.identifier("rule id")
            cur.expect("prio")
            priority = cur.integer("priority")
            cur.expect("layer")
            layer = cur.identifier("layer")
            if layer not in LAYERS:
                raise ParseError(lineno, 1, f"unknown layer {layer!r}", line)
            cur.expect(":")
            rule = _parse_rule_tail(cur, rule_id, priority, layer)
            if rule_id in facts or rule_id in rules:
                raise ParseError(lineno, 1, f"duplicate statement id {rule_id!r}", line)
            rules[rule_id] = rule
            stmt_line[rule_id] = lineno
        elif keyword == "decision":
            cur.expect(":")
            subject = cur.identifier("subject")
            relation = cur.identifier("relation")
            cur.end()
            if decision is not None:
                raise ParseError(lineno, 1, "decision declared twice", line)
            decision = (subject, relation)
        elif keyword == "persona":
            user = cur.identifier("user id")
            cur.expect(":")
            cur.end()
            if user in persona_lines:
                raise ParseError(lineno, 1, f"persona {user!r} declared twice", line)
            persona_lines[user] = []
            current_persona = user
        elif keyword == "step":
            what = cur.identifier("step kind")
            if what == "decide":
                cur.end()
                script.append(StepDecide())
                script_lines.append(lineno)
            elif what == "why":
                strategy = cur.identifier("strategy")
                if strategy not in STRATEGIES:
                    raise ParseError(lineno, 1, f"unknown strategy {strategy!r}", line)
                expected_value = None
                if cur.peek_token() == "expecting":
                    cur.next_token()
                    expected_value = cur.identifier("expected value")
                cur.end()
                script.append(StepWhy(strategy, expected_value))
                script_lines.append(lineno)
            elif what == "teach":
                script.append(StepTeach(_parse_teach(cur)))
                script_lines.append(lineno)
            elif what == "event":
                kind = cur.identifier("event kind")
                item = cur.identifier("item id")
                cur.end()
                script.append(StepEvent(kind, item))
                script_lines.append(lineno)
            else:
                cur.fail(f"unknown step kind {what!r}")
        else:
            cur.fail(f"unknown directive {keyword!r}")

    if decision is None:
        raise ParseError(len(lines) + 1, 1, "no decision declared", "")
    kb = KnowledgeBase(
        facts=tuple(facts[k] for k in sorted(facts)),
        rules=tuple(rules[k] for k in sorted(rules)),
        functional_relations=frozenset(functional),
        decision_query=decision,
    )
    report = validate_kb(kb)
    if not report.ok:
        v = report.violations[0]
        line = 1
        for sid in v.statements:
            if sid in stmt_line:
                line = stmt_line[sid]
                break
        raise ParseError(line, 1, f"{v.code}: {v.message}")

    kinds = {fid: "fact" for fid in facts}
    kinds.update({rid: "rule" for rid in rules})

    def check_event(lineno: int, kind: str, item: str, known: dict):
        if kind not in EVENT_KINDS:
            raise ParseError(lineno, 1, f"unknown event kind {kind!r}")
        if item not in known:
            raise ParseError(lineno, 1, f"UnknownItem: no statement with id {item!r}")
        if kind in mem.FACT_KINDS and known[item] != "fact":
            raise ParseError(lineno, 1, f"KindMismatch: {kind} cannot attach to rule {item!r}")
        if kind in mem.RULE_KINDS and known[item] != "rule":
            raise ParseError(lineno, 1, f"KindMismatch: {kind} cannot attach to fact {item!r}")

    for user, events in persona_lines.items():
        log_events = []
        for seq, (lineno, kind, item) in enumerate(events, start=1):
            check_event(lineno, kind, item, kinds)
            log_events.append(SupportEvent(seq, user, item, kind))
        personas[user] = MemoryLog(user=user, events=tuple(log_events))

    live = dict(kinds)
    for step, step_line in zip(script, script_lines):
        if isinstance(step, StepTeach):
            action = step.action
            if isinstance(action, mem.AssertFact):
                live[action.fact.id] = "fact"
            elif isinstance(action, mem.AddUserRule):
                live[action.rule.id] = "rule"
            elif isinstance(action, mem.RetractFact):
                live.pop(action.item, None)
        elif isinstance(step, StepEvent):
            check_event(step_line, step.event_kind, step.item, live)

    return Scenario(kb=kb, personas=personas, script=tuple(script))


def parse_scenario_bytes(data: bytes) -> Scenario:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        line = data[: exc.start].count(b"\n") + 1
        raise ParseError(line, 1, "input is not valid UTF-8")
    return parse_scenario(text)


# --- serialization --------------------------------------------------------


def _literal_src(lit: Literal) -> str:
    core = f"{lit.subject} {lit.relation} {lit.value}"
    return core if lit.positive else f"not {core}"


def _rule_src(rule: Rule) -> str:
    body = " & ".join(_literal_src(b) for b in rule.body)
    return (
        f"rule {rule.id} prio {rule.priority} layer {rule.layer}: "
        f"{body} => {_literal_src(rule.head)}"
    )


def _teach_src(action: TeachAction) -> str:
    if isinstance(action, mem.AssertFact):
        return f"teach assert_fact {action.fact.id}: {_literal_src(action.fact.literal)}"
    if isinstance(action, mem.RetractFact):
        return f"teach retract_fact {action.item}"
    if isinstance(action, mem.ReplaceFactValue):
        return f"teach replace_fact_value {action.item} {action.value}"
    if isinstance(action, (mem.AddUserRule, mem.EditPreinstalledRule)):
        r = action.rule
        body = " & ".join(_literal_src(b) for b in r.body)
        return (
            f"teach {action.kind} {r.id} prio {r.priority}: "
            f"{body} => {_literal_src(r.head)}"
        )
    if isinstance(action, mem.SetRulePriority):
        return f"teach set_rule_priority {action.item} {action.priority}"
    raise TypeError(f"unknown teach action {action!r}")


def serialize_scenario(s: Scenario) -> str:
    """Canonical text form; parse(serialize(s)) structurally equals s and
    serialization is idempotent (comments are not preserved)."""
    out = []
    for rel in sorted(s.kb.functional_relations):
        out.append(f"functional {rel}")
    for f in sorted(s.kb.facts, key=lambda f: f.id):
        out.append(f"fact {f.id}: {_literal_src(f.literal)}")
    for r in sorted(s.kb.rules, key=lambda r: r.id):
        out.append(_rule_src(r))
    subject, relation = s.kb.decision_query
    out.append(f"decision: {subject} {relation}")
    for user in sorted(s.personas):
        out.append(f"persona {user}:")
        for ev in s.personas[user].events:
            out.append(f"  event {ev.kind} {ev.item}")
    for step in s.script:
        if isinstance(step, StepDecide):
            out.append("step decide")
        elif isinstance(step, StepWhy):
            suffix = f" expecting {step.expected_value}" if step.expected_value else ""
            out.append(f"step why {step.strategy}{suffix}")
        elif isinstance(step, StepTeach):
            out.append(f"step {_teach_src(step.action)}")
        elif isinstance(step, StepEvent):
            out.append(f"step event {step.event_kind} {step.item}")
    return "\n".join(out) + "\n"


# --- execution ------------------------------------------------------------


@dataclass(frozen=True)
class Transcript:
    records: tuple

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records)


def _literal_json(lit: Literal) -> dict:
    return {
        "subject": lit.subject,
        "relation": lit.relation,
        "value": lit.value,
        "positive": lit.positive,
    }


def explanation_json(explanation) -> dict:
    payload = {
        "strategy": explanation.strategy,
        "confirmed": explanation.confirmed,
        "rendered": explanation.rendered,
        "top": [
            {
                "id": el.id,
                "kind": el.kind,
                "depth": el.depth,
                "defeated": el.defeated,
                "rank": rank.effective,
                "contested": rank.contested,
            }
            for el, rank in explanation.ranked
        ],
    }
    if explanation.decision is not None:
        payload["decision"] = _literal_json(explanation.decision)
    if explanation.expected is not None:
        payload["expected"] = _literal_json(explanation.expected)
    return payload


def run_step(kb, log, trace, step):
    """Execute one script step; returns (kb, log, trace, kind, payload)."""
    if isinstance(step, StepDecide):
        decision, trace = decide(kb, kb.decision_query)
        payload = {
            "decision": _literal_json(decision),
            "used_facts": sorted(trace.used_facts),
            "used_rules": sorted(trace.used_rules),
            "defeated": sorted(trace.defeated),
        }
        return kb, log, trace, "decide", payload
    if isinstance(step, StepWhy):
        if trace is None:
            raise EmptyTrace("no decision has been traced yet")
        expected = None
        if step.expected_value is not None:
            subject, relation = kb.decision_query
            expected = Literal(subject, relation, step.expected_value, True)
        result = explain(kb, trace, step.strategy, memory=log, expected=expected)
        return kb, log, trace, "why", explanation_json(result)
    if isinstance(step, StepTeach):
        kb, log = apply_teaching(kb, log, step.action)
        report = validate_kb(kb)
        if not report.ok:
            raise InvalidKB("; ".join(v.message for v in report.violations))
        kb = snapshot(kb)
        item = log.events[-1].item
        rank = support_rank(log, item)
        payload = {"item": item, "rank": rank.effective, "contested": rank.contested}
        return kb, log, trace, "teach", payload
    if isinstance(step, StepEvent):
        log = append_event(log, step.item, step.event_kind, kb)
        rank = support_rank(log, step.item)
        payload = {
            "item": step.item,
            "kind": step.event_kind,
            "rank": rank.effective,
            "contested": rank.contested,
        }
        return kb, log, trace, "event", payload
    raise TypeError(f"unknown step {step!r}")


def run_scenario(s: Scenario, persona: str) -> Transcript:
    """Run the script against a snapshot of the KB and the persona's log.

    Step errors are recorded, not fatal; the run stops early only if the
    KB itself becomes invalid.
    """
    if persona not in s.personas:
        raise UnknownPersona(f"no persona {persona!r} in scenario")
    kb = snapshot(s.kb)
    log = s.personas[persona]
    trace = None
    records = []
    for index, step in enumerate(s.script):
        try:
            kb, log, trace, kind, payload = run_step(kb, log, trace, step)
            records.append({"step": index, "kind": kind, "payload": payload})
        except EngineError as exc:
            records.append(
                {
                    "step": index,
                    "kind": step.kind,
                    "payload": {"error": exc.code, "message": exc.message},
                }
            )
            if exc.code == "InvalidKB":
                break
    return Transcript(tuple(records))


class UnknownPersona(EngineError):
    code = "UnknownPersona"
