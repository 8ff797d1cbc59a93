"""Per-user support memory: an append-only event log and the rank model.

The log is the machine form of the user and discourse contexts: every
interaction that bears on whether the user shares a fact or rule is
recorded as an event, and the support rank of an item is the strongest
kind of evidence on record (an explicit later objection contests the item
and drops its effective rank to zero).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Union

from .errors import (
    CorruptRecord,
    DuplicateId,
    IoFailure,
    KindMismatch,
    RetractUnknown,
    SeqGap,
    UnknownItem,
)
from .kb import (
    ACTOR_USER,
    Fact,
    KnowledgeBase,
    Rule,
    add_fact,
    retract_fact,
    upsert_rule,
)

USER_ASSERTED_FACT = "UserAssertedFact"
USER_PERCEIVED_FACT = "UserPerceivedFact"
PRIOR_AGREEMENT_FACT = "PriorAgreementFact"
USER_ENDORSED_RULE = "UserEndorsedRule"
USER_EMPLOYED_RULE = "UserEmployedRule"
SUCCESSFUL_USE_NO_OBJECTION = "SuccessfulUseNoObjection"
USER_OBJECTED = "UserObjected"
USER_TAUGHT = "UserTaught"

FACT_KINDS = frozenset({USER_ASSERTED_FACT, USER_PERCEIVED_FACT, PRIOR_AGREEMENT_FACT})
RULE_KINDS = frozenset({USER_ENDORSED_RULE, USER_EMPLOYED_RULE})
EITHER_KINDS = frozenset({SUCCESSFUL_USE_NO_OBJECTION, USER_OBJECTED, USER_TAUGHT})
EVENT_KINDS = FACT_KINDS | RULE_KINDS | EITHER_KINDS

KIND_RANK = {
    USER_ASSERTED_FACT: 3,
    USER_ENDORSED_RULE: 3,
    USER_TAUGHT: 3,
    USER_PERCEIVED_FACT: 2,
    USER_EMPLOYED_RULE: 2,
    PRIOR_AGREEMENT_FACT: 1,
    SUCCESSFUL_USE_NO_OBJECTION: 1,
}


@dataclass(frozen=True)
class SupportEvent:
    seq: int
    user: str
    item: str
    kind: str
    note: Optional[str] = None


@dataclass(frozen=True)
class SupportRank:
    rank: int = 0
    source_event: Optional[int] = None
    contested: bool = False

    @property
    def effective(self) -> int:
        return 0 if self.contested else self.rank


@dataclass(frozen=True)
class MemoryLog:
    user: str
    events: tuple = ()
    # Free-form user-context annotations (mood, abilities, ...): recorded,
    # never interpreted by ranking.
    attributes: dict = field(default_factory=dict, compare=False)

    @property
    def last_seq(self) -> int:
        return self.events[-1].seq if self.events else 0


def _check_kind_compat(kind: str, item: str, kb: KnowledgeBase):
    stmt = kb.statement(item)
    if stmt is None:
        raise UnknownItem(f"no statement with id {item!r}")
    if kind in FACT_KINDS and not isinstance(stmt, Fact):
        raise KindMismatch(f"{kind} events attach to facts, {item!r} is a rule")
    if kind in RULE_KINDS and not isinstance(stmt, Rule):
        raise KindMismatch(f"{kind} events attach to rules, {item!r} is a fact")


def record_event(
    log: MemoryLog, event: SupportEvent, kb: Optional[KnowledgeBase] = None
) -> MemoryLog:
    """Append an event; ranks of every other item are untouched."""
    if event.kind not in EVENT_KINDS:
        raise KindMismatch(f"unknown event kind {event.kind!r}")
    if event.seq != log.last_seq + 1:
        raise SeqGap(f"expected seq {log.last_seq + 1}, got {event.seq}")
    if kb is not None:
        _check_kind_compat(event.kind, event.item, kb)
    return replace(log, events=log.events + (event,))


def append_event(
    log: MemoryLog, item: str, kind: str, kb: Optional[KnowledgeBase] = None,
    note: Optional[str] = None,
) -> MemoryLog:
    """Convenience wrapper that assigns the next sequence number."""
    return record_event(
        log, SupportEvent(log.last_seq + 1, log.user, item, kind, note), kb
    )


def support_rank(log: MemoryLog, item: str) -> SupportRank:
    """Max evidence level over the item's events; contested when an
    objection postdates every rank-contributing event."""
    best, source = 0, None
    last_support_seq, last_objection_seq = None, None
    for ev in log.events:
        if ev.item != item:
            continue
        if ev.kind == USER_OBJECTED:
            last_objection_seq = ev.seq
            continue
        contribution = KIND_RANK.get(ev.kind, 0)
        if contribution:
            last_support_seq = ev.seq
            if contribution > best:
                best, source = contribution, ev.seq
    contested = last_objection_seq is not None and (
        last_support_seq is None or last_objection_seq > last_support_seq
    )
    return SupportRank(rank=best, source_event=source, contested=contested)


# --- teaching -------------------------------------------------------------


@dataclass(frozen=True)
class AssertFact:
    fact: Fact
    kind = "assert_fact"


@dataclass(frozen=True)
class RetractFact:
    item: str
    kind = "retract_fact"


@dataclass(frozen=True)
class ReplaceFactValue:
    item: str
    value: str
    kind = "replace_fact_value"


@dataclass(frozen=True)
class AddUserRule:
    rule: Rule
    kind = "add_user_rule"


@dataclass(frozen=True)
class EditPreinstalledRule:
    rule: Rule
    kind = "edit_preinstalled_rule"


@dataclass(frozen=True)
class SetRulePriority:
    item: str
    priority: int
    kind = "set_rule_priority"


TeachAction = Union[
    AssertFact, RetractFact, ReplaceFactValue, AddUserRule, EditPreinstalledRule,
    SetRulePriority,
]


def apply_teach_to_kb(kb: KnowledgeBase, action: TeachAction) -> tuple:
    """Apply the KB side of a teach action; returns (kb, touched item id).

    Kept separate from the event append so persisted action journals can
    be replayed against a KB without duplicating memory events.
    """
    if isinstance(action, AssertFact):
        existing = kb.fact_map.get(action.fact.id)
        if existing is not None:
            if existing.literal == action.fact.literal:
                return kb, action.fact.id  # re-assertion: support only
            raise DuplicateId(
                f"fact id {action.fact.id!r} already holds a different literal"
            )
        return add_fact(kb, action.fact), action.fact.id
    if isinstance(action, RetractFact):
        return retract_fact(kb, action.item), action.item
    if isinstance(action, ReplaceFactValue):
        old = kb.fact_map.get(action.item)
        if old is None:
            raise RetractUnknown(f"no fact with id {action.item!r}")
        kb = retract_fact(kb, action.item)
        new = Fact(old.id, replace(old.literal, value=action.value))
        return add_fact(kb, new), old.id
    if isinstance(action, AddUserRule):
        return upsert_rule(kb, action.rule, ACTOR_USER), action.rule.id
    if isinstance(action, EditPreinstalledRule):
        if action.rule.id not in kb.rule_map:
            raise UnknownItem(f"no rule with id {action.rule.id!r}")
        return upsert_rule(kb, action.rule, ACTOR_USER), action.rule.id
    if isinstance(action, SetRulePriority):
        old = kb.rule_map.get(action.item)
        if old is None:
            raise UnknownItem(f"no rule with id {action.item!r}")
        return (
            upsert_rule(kb, replace(old, priority=action.priority), ACTOR_USER),
            action.item,
        )
    raise TypeError(f"unknown teach action {action!r}")


def apply_teaching(kb: KnowledgeBase, log: MemoryLog, action: TeachAction) -> tuple:
    """Teach the agent: update the KB and credit the touched item with the
    strongest support (the user told us, so it is common knowledge now)."""
    kb, item = apply_teach_to_kb(kb, action)
    kind = USER_ASSERTED_FACT if isinstance(action, (AssertFact, ReplaceFactValue)) else USER_TAUGHT
    # Retracted items no longer resolve in the KB; append without lookup.
    log = record_event(log, SupportEvent(log.last_seq + 1, log.user, item, kind))
    return kb, log


def teach_action_to_json(action: TeachAction) -> dict:
    if isinstance(action, AssertFact):
        lit = action.fact.literal
        return {
            "action": "assert_fact",
            "id": action.fact.id,
            "subject": lit.subject,
            "relation": lit.relation,
            "value": lit.value,
            "positive": lit.positive,
        }
    if isinstance(action, RetractFact):
        return {"action": "retract_fact", "id": action.item}
    if isinstance(action, ReplaceFactValue):
        return {"action": "replace_fact_value", "id": action.item, "value": action.value}
    if isinstance(action, (AddUserRule, EditPreinstalledRule)):
        r = action.rule
        return {
            "action": action.kind,
            "id": r.id,
            "priority": r.priority,
            "body": [
                {"subject": b.subject, "relation": b.relation, "value": b.value,
                 "positive": b.positive}
                for b in r.body
            ],
            "head": {"subject": r.head.subject, "relation": r.head.relation,
                     "value": r.head.value, "positive": r.head.positive},
        }
    if isinstance(action, SetRulePriority):
        return {"action": "set_rule_priority", "id": action.item,
                "priority": action.priority}
    raise TypeError(f"unknown teach action {action!r}")


def teach_action_from_json(payload: dict) -> TeachAction:
    from .kb import LAYER_USER, Literal

    name = payload.get("action")
    if name == "assert_fact":
        lit = Literal(
            payload["subject"], payload["relation"], payload["value"],
            bool(payload.get("positive", True)),
        )
        return AssertFact(Fact(payload["id"], lit))
    if name == "retract_fact":
        return RetractFact(payload["id"])
    if name == "replace_fact_value":
        return ReplaceFactValue(payload["id"], payload["value"])
    if name in ("add_user_rule", "edit_preinstalled_rule"):
        body = tuple(
            Literal(b["subject"], b["relation"], b["value"], bool(b.get("positive", True)))
            for b in payload["body"]
        )
        h = payload["head"]
        head = Literal(h["subject"], h["relation"], h["value"], bool(h.get("positive", True)))
        rule = Rule(payload["id"], body, head, int(payload["priority"]), LAYER_USER)
        return AddUserRule(rule) if name == "add_user_rule" else EditPreinstalledRule(rule)
    if name == "set_rule_priority":
        return SetRulePriority(payload["id"], int(payload["priority"]))
    raise KeyError(f"unknown teach action name {name!r}")


# --- persistence ----------------------------------------------------------

LOG_SUFFIX = ".mem.jsonl"


def _event_line(ev: SupportEvent) -> str:
    record = {"seq": ev.seq, "user": ev.user, "kind": ev.kind, "item": ev.item}
    if ev.note is not None:
        record["note"] = ev.note
    return json.dumps(record)


def save_log(log: MemoryLog, destination) -> None:
    """Write the log as line-delimited JSON; deterministic byte-for-byte."""
    path = Path(destination)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for ev in log.events:
                fh.write(_event_line(ev) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def append_events(path, events) -> None:
    """Append new events to an existing log file (crash-safe repl flush)."""
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "a", encoding="utf-8", newline="\n") as fh:
            for ev in events:
                fh.write(_event_line(ev) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot append to {path}: {exc}") from exc


def default_user_for(path) -> str:
    name = Path(path).name
    if name.endswith(LOG_SUFFIX):
        return name[: -len(LOG_SUFFIX)]
    return Path(path).stem


def load_log(source, user: Optional[str] = None) -> MemoryLog:
    """Load a log; an empty file yields an empty log for the named user."""
    path = Path(source)
    if user is None:
        user = default_user_for(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    events = []
    expected_seq = 1
    for lineno, line in enumerate(raw.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError:
            raise CorruptRecord(f"line {lineno}: not valid JSON", line=lineno)
        if not isinstance(record, dict):
            raise CorruptRecord(f"line {lineno}: not a JSON object", line=lineno)
        try:
            ev = SupportEvent(
                seq=int(record["seq"]),
                user=str(record["user"]),
                item=str(record["item"]),
                kind=str(record["kind"]),
                note=record.get("note"),
            )
        except (KeyError, TypeError, ValueError):
            raise CorruptRecord(f"line {lineno}: missing or malformed field", line=lineno)
        if ev.kind not in EVENT_KINDS:
            raise CorruptRecord(f"line {lineno}: unknown kind {ev.kind!r}", line=lineno)
        if ev.seq != expected_seq:
            raise CorruptRecord(
                f"line {lineno}: expected seq {expected_seq}, got {ev.seq}",
                line=lineno,
            )
        expected_seq += 1
        events.append(ev)
        user = ev.user
    return MemoryLog(user=user, events=tuple(events))
