"""Session-oriented HTTP API over the scenario engine.

Each session binds one scenario and one persona; mutations within a
session are serialized under a per-session lock and bump a monotonically
increasing ``state_version`` (optimistic concurrency: a mutating request
carrying a stale version gets 409).  Memory logs and teach actions are
flushed to disk after every mutation so a restarted server can rehydrate
a persona to identical explanation output.
"""

from __future__ import annotations

import json
import threading
import uuid
from pathlib import Path
from typing import Optional

from fastapi import Body, FastAPI, HTTPException

from . import memory as mem
from .errors import EngineError
from .kb import Fact, KnowledgeBase, Literal, snapshot
from .memory import (
    MemoryLog,
    append_event,
    apply_teach_to_kb,
    load_log,
    record_event,
    save_log,
    support_rank,
    teach_action_from_json,
    teach_action_to_json,
)
from .reasoner import decide
from .explain import explain
from .scenario import Scenario, explanation_json, parse_scenario, _literal_json


class Session:
    def __init__(self, session_id, scenario_name, persona, kb, log):
        self.id = session_id
        self.scenario_name = scenario_name
        self.persona = persona
        self.kb = kb
        self.log = log
        self.trace = None
        self.transcript = []
        self.state_version = 0
        self.lock = threading.Lock()

    def bump(self):
        self.state_version += 1

    def record(self, kind, payload):
        self.transcript.append(
            {"step": len(self.transcript), "kind": kind, "payload": payload}
        )


def _memory_dir(scenario_dir: Path, scenario_name: str) -> Path:
    return Path(scenario_dir) / ".memory" / scenario_name


def _journal_path(scenario_dir, scenario_name, persona) -> Path:
    return _memory_dir(scenario_dir, scenario_name) / f"{persona}.teach.jsonl"


def _log_path(scenario_dir, scenario_name, persona) -> Path:
    return _memory_dir(scenario_dir, scenario_name) / f"{persona}{mem.LOG_SUFFIX}"


def create_app(scenario_dir) -> FastAPI:
    scenario_dir = Path(scenario_dir)
    app = FastAPI(title="uncommon-ground service")
    sessions = {}
    scenario_cache = {}

    def load_scenario(name: str) -> Scenario:
        if name not in scenario_cache:
            path = scenario_dir / f"{name}.ug"
            if not path.is_file():
                raise HTTPException(404, detail={"code": "UnknownScenario",
                                                 "message": f"no scenario {name!r}"})
            scenario_cache[name] = parse_scenario(path.read_text(encoding="utf-8"))
        return scenario_cache[name]

    def get_session(session_id: str) -> Session:
        session = sessions.get(session_id)
        if session is None:
            raise HTTPException(404, detail={"code": "UnknownSession",
                                             "message": f"no session {session_id!r}"})
        return session

    def check_version(session: Session, payload: dict):
        version = payload.get("state_version")
        if version is not None and int(version) != session.state_version:
            raise HTTPException(
                409,
                detail={
                    "code": "StaleStateVersion",
                    "message": f"expected {session.state_version}, got {version}",
                    "state_version": session.state_version,
                },
            )

    def domain_error(exc: EngineError):
        detail = {"code": exc.code, "message": exc.message}
        if "ambiguities" in exc.details:
            detail["ambiguities"] = [
                {"literal": _literal_json(a.literal), "rules": list(a.rules)}
                for a in exc.details["ambiguities"]
            ]
        return HTTPException(422, detail=detail)

    def flush(session: Session):
        save_log(
            session.log,
            _log_path(scenario_dir, session.scenario_name, session.persona),
        )

    def append_journal(session: Session, action):
        path = _journal_path(scenario_dir, session.scenario_name, session.persona)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "a", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps(teach_action_to_json(action), sort_keys=True) + "\n")

    def expected_literal(kb: KnowledgeBase, payload) -> Optional[Literal]:
        raw = payload.get("expected")
        if raw is None:
            return None
        if isinstance(raw, str):
            subject, relation = kb.decision_query
            return Literal(subject, relation, raw, True)
        return Literal(
            raw["subject"], raw["relation"], raw["value"],
            bool(raw.get("positive", True)),
        )

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.get("/scenarios")
    def list_scenarios():
        names = sorted(p.stem for p in scenario_dir.glob("*.ug"))
        return {"scenarios": names}

    @app.post("/sessions")
    def create_session(payload: dict = Body(...)):
        name = payload.get("scenario_name")
        persona = payload.get("persona")
        if not name or not persona:
            raise HTTPException(
                422,
                detail={"code": "MissingField",
                        "message": "scenario_name and persona are required"},
            )
        scenario = load_scenario(name)
        if persona not in scenario.personas:
            raise HTTPException(404, detail={"code": "UnknownPersona",
                                             "message": f"no persona {persona!r}"})
        kb = snapshot(scenario.kb)
        log_path = _log_path(scenario_dir, name, persona)
        if log_path.is_file():
            log = load_log(log_path, user=persona)
        else:
            log = scenario.personas[persona]
        journal = _journal_path(scenario_dir, name, persona)
        if journal.is_file():
            for line in journal.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    action = teach_action_from_json(json.loads(line))
                    kb, _ = apply_teach_to_kb(kb, action)
        session = Session(uuid.uuid4().hex, name, persona, kb, log)
        sessions[session.id] = session
        flush(session)
        return {"session_id": session.id, "state_version": session.state_version}

    @app.get("/sessions/{session_id}/kb")
    def get_kb(session_id: str):
        session = get_session(session_id)
        items = []
        for f in session.kb.facts:
            rank = support_rank(session.log, f.id)
            items.append(
                {
                    "id": f.id,
                    "kind": "fact",
                    "text": f.literal.text(),
                    "literal": _literal_json(f.literal),
                    "rank": rank.effective,
                    "contested": rank.contested,
                }
            )
        for r in session.kb.rules:
            rank = support_rank(session.log, r.id)
            body = " and ".join(b.text() for b in r.body)
            items.append(
                {
                    "id": r.id,
                    "kind": "rule",
                    "text": f"if {body} then {r.head.text()}",
                    "layer": r.layer,
                    "priority": r.priority,
                    "rank": rank.effective,
                    "contested": rank.contested,
                }
            )
        items.sort(key=lambda item: item["id"])
        return {
            "items": items,
            "decision_query": list(session.kb.decision_query),
            "state_version": session.state_version,
        }

    @app.post("/sessions/{session_id}/decide")
    def post_decide(session_id: str, payload: dict = Body(default={})):
        session = get_session(session_id)
        with session.lock:
            check_version(session, payload)
            subject = payload.get("subject") or session.kb.decision_query[0]
            relation = payload.get("relation") or session.kb.decision_query[1]
            try:
                decision, trace = decide(session.kb, (subject, relation))
            except EngineError as exc:
                raise domain_error(exc)
            session.trace = trace
            result = {
                "decision": _literal_json(decision),
                "used_facts": sorted(trace.used_facts),
                "used_rules": sorted(trace.used_rules),
                "defeated": sorted(trace.defeated),
            }
            session.bump()
            session.record("decide", result)
            return {**result, "state_version": session.state_version}

    @app.post("/sessions/{session_id}/explain")
    def post_explain(session_id: str, payload: dict = Body(default={})):
        session = get_session(session_id)
        with session.lock:
            check_version(session, payload)
            strategy = payload.get("strategy")
            expected = expected_literal(session.kb, payload)
            top_k = int(payload.get("top_k", 1))
            try:
                result = explain(
                    session.kb,
                    session.trace,
                    strategy,
                    memory=session.log,
                    expected=expected,
                    k=top_k,
                )
            except ValueError as exc:
                raise HTTPException(422, detail={"code": "BadStrategy",
                                                 "message": str(exc)})
            except EngineError as exc:
                raise domain_error(exc)
            body = explanation_json(result)
            session.bump()
            session.record("why", body)
            return {**body, "state_version": session.state_version}

    @app.post("/sessions/{session_id}/teach")
    def post_teach(session_id: str, payload: dict = Body(...)):
        session = get_session(session_id)
        with session.lock:
            check_version(session, payload)
            try:
                action = teach_action_from_json(payload)
            except KeyError as exc:
                raise HTTPException(422, detail={"code": "BadTeachAction",
                                                 "message": str(exc)})
            try:
                kb, log = mem.apply_teaching(session.kb, session.log, action)
                kb = snapshot(kb)
            except EngineError as exc:
                raise domain_error(exc)
            session.kb, session.log = kb, log
            item = log.events[-1].item
            rank = support_rank(log, item)
            session.bump()
            result = {
                "item": item,
                "rank": rank.effective,
                "contested": rank.contested,
            }
            session.record("teach", result)
            flush(session)
            append_journal(session, action)
            return {**result, "state_version": session.state_version}

    @app.post("/sessions/{session_id}/events")
    def post_event(session_id: str, payload: dict = Body(...)):
        session = get_session(session_id)
        with session.lock:
            check_version(session, payload)
            kind = payload.get("kind")
            item = payload.get("item")
            try:
                session.log = append_event(session.log, item, kind, session.kb)
            except EngineError as exc:
                raise domain_error(exc)
            rank = support_rank(session.log, item)
            session.bump()
            result = {
                "item": item,
                "kind": kind,
                "rank": rank.effective,
                "contested": rank.contested,
            }
            session.record("event", result)
            flush(session)
            return {**result, "state_version": session.state_version}

    @app.get("/sessions/{session_id}/transcript")
    def get_transcript(session_id: str):
        session = get_session(session_id)
        return {
            "records": session.transcript,
            "state_version": session.state_version,
        }

    return app


def serve(scenario_dir, port: int, host: str = "127.0.0.1"):
    import uvicorn

    uvicorn.run(create_app(scenario_dir), host=host, port=port, log_level="warning")
