"""Acceptance gate: one test per criterion, one printed pass line each.

Run with ``pytest tests/test_acceptance.py -s`` to see the per-criterion
lines.  Every test here is an exact-match or zero-violation check; there
are no tolerances.
"""

import json
import random
import time

from click.testing import CliRunner

from genkb import random_decided_kb, random_kb, random_log
from oracle import min_support_scan, oracle_state

import ug.memory as mem
from ug.cli import cli
from ug.errors import FixedConflict, FixedLayerViolation
from ug.explain import explain, select_uncommon_ground
from ug.kb import (
    ACTOR_USER,
    Fact,
    KnowledgeBase,
    LAYER_FIXED,
    LAYER_USER,
    Literal,
    Rule,
    snapshot,
    upsert_rule,
)
from ug.memory import MemoryLog, append_event, save_log, load_log, support_rank
from ug.reasoner import collect_trace_elements, decide, infer_fixpoint
from ug.scenario import ParseError, Scenario, parse_scenario, parse_scenario_bytes, serialize_scenario

from test_scenario import ROUND_TRIP_SCENARIOS

CAKE = "scenarios/birthday_cake.ug"


def ok(label):
    print(f"PASS {label}")


def test_cake_scenario_reproduction(cake_kb, cake_trace):
    start = time.perf_counter()
    decision, trace = decide(cake_kb, ("cakeA", "storage_location"))
    assert decision == Literal("cakeA", "storage_location", "patio")
    last = explain(cake_kb, trace, "last_step")
    assert last.ranked[0][0].id == "r4"
    specific = explain(cake_kb, trace, "most_specific_rule")
    assert specific.ranked[0][0].id == "r3"
    elapsed = time.perf_counter() - start
    assert elapsed < 1.0
    ok(f"cake reproduction: patio, last_step=r4, most_specific_rule=r3 "
       f"({elapsed * 1000:.0f} ms)")


def test_persona_divergence(cake_kb, cake_scenario):
    decisions = {}
    tops = {}
    for persona in ("A", "B", "C"):
        decision, trace = decide(cake_kb, cake_kb.decision_query)
        decisions[persona] = decision
        result = explain(
            cake_kb, trace, "extrospective",
            memory=cake_scenario.personas[persona],
        )
        tops[persona] = result.ranked[0][0].id
    assert tops == {"A": "f5", "B": "r3", "C": "r4"}
    assert len(set(decisions.values())) == 1
    ok("persona divergence: A->f5 B->r3 C->r4, identical decision")


def test_reasoner_oracle_equivalence():
    rng = random.Random(101)
    for _ in range(100):
        kb = random_kb(rng)
        state = infer_fixpoint(kb)
        derived, ambiguous = oracle_state(kb)
        assert state.derived == frozenset(derived)
        flagged = {
            kb.rule_map[rid].head
            for amb in state.ambiguities
            for rid in amb.rules
        }
        assert flagged == ambiguous
    ok("reasoner oracle equivalence: 100/100 KBs exact, ambiguity flags included")


def test_min_support_oracle():
    rng = random.Random(202)
    for _ in range(200):
        kb, trace = random_decided_kb(rng)
        log = random_log(rng, kb)
        elements = collect_trace_elements(trace)
        ranked = select_uncommon_ground(elements, log, k=len(elements))
        min_ids, min_rank = min_support_scan(elements, log)
        assert ranked[0][1].effective == min_rank
        assert ranked[0][0].id in min_ids
        keys = [
            (r.effective, 0 if e.kind == "fact" else 1, e.depth, e.id)
            for e, r in ranked
        ]
        assert keys == sorted(keys)
    ok("min-support oracle: 200/200 top-1 exact, tie-break ordering verified")


def test_support_monotonicity():
    rng = random.Random(303)
    for _ in range(200):
        kb, trace = random_decided_kb(rng)
        log = random_log(rng, kb)
        elements = collect_trace_elements(trace)
        target = rng.choice(elements)
        kinds = sorted(
            (mem.FACT_KINDS if target.kind == "fact" else mem.RULE_KINDS)
            | (mem.EITHER_KINDS - {mem.USER_OBJECTED})
        )
        kind = rng.choice(kinds)
        before_rank = support_rank(log, target.id).effective
        ranked_before = select_uncommon_ground(elements, log)
        min_before = ranked_before[0][1].effective
        was_minimal = before_rank == min_before

        log2 = append_event(log, target.id, kind, kb)
        after_rank = support_rank(log2, target.id).effective
        assert after_rank >= before_rank
        if not was_minimal:
            ranked_after = select_uncommon_ground(elements, log2)
            assert ranked_after[0][0].id != target.id
    ok("support monotonicity: 200/200 no rank decrease, no non-minimal promotion")


def test_layer_enforcement():
    kb = KnowledgeBase(
        facts=(Fact("f1", Literal("s", "a", "x")),),
        rules=(
            Rule("rf", (Literal("s", "a", "x"),), Literal("s", "dq", "y"), 2, LAYER_FIXED),
        ),
        functional_relations=frozenset({"dq"}),
        decision_query=("s", "dq"),
    )
    edited = Rule("rf", (Literal("s", "a", "x"),), Literal("s", "dq", "z"), 2)
    try:
        upsert_rule(kb, edited, ACTOR_USER)
        raise AssertionError("fixed-layer edit accepted")
    except FixedLayerViolation:
        pass
    conflicting = Rule(
        "ru", (Literal("s", "a", "x"),), Literal("s", "dq", "z"), 1, LAYER_USER
    )
    try:
        upsert_rule(kb, conflicting, ACTOR_USER)
        raise AssertionError("conflicting user rule accepted")
    except FixedConflict:
        pass
    ok("layer enforcement: FixedLayerViolation and FixedConflict raised exactly")


def test_parser_round_trip_and_fuzz():
    assert len(ROUND_TRIP_SCENARIOS) == 20
    for text in ROUND_TRIP_SCENARIOS:
        scenario = parse_scenario(text)
        assert parse_scenario(serialize_scenario(scenario)) == scenario
    rng = random.Random(404)
    outcomes = {"scenario": 0, "parse_error": 0}
    for _ in range(10_000):
        data = bytes(rng.randrange(256) for _ in range(rng.randrange(0, 200)))
        try:
            result = parse_scenario_bytes(data)
            assert isinstance(result, Scenario)
            outcomes["scenario"] += 1
        except ParseError:
            outcomes["parse_error"] += 1
    assert sum(outcomes.values()) == 10_000
    ok(f"parser: 20/20 round-trips, 10k fuzz inputs -> "
       f"{outcomes['parse_error']} ParseError / {outcomes['scenario']} Scenario, no crash")


def test_persistence_round_trip_and_restart(tmp_path, cake_scenario):
    rng = random.Random(505)
    for i in range(20):
        kb = random_kb(rng)
        log = random_log(rng, kb)
        path = tmp_path / f"u{i}.mem.jsonl"
        save_log(log, path)
        loaded = load_log(path)
        for item in kb.statement_ids():
            assert support_rank(loaded, item) == support_rank(log, item)

    import shutil
    from pathlib import Path
    from fastapi.testclient import TestClient
    from ug.service import create_app

    service_dir = tmp_path / "svc"
    service_dir.mkdir()
    shutil.copy(Path(CAKE), service_dir / "birthday_cake.ug")

    def explain_a(client, sid):
        client.post(f"/sessions/{sid}/decide", json={})
        return client.post(
            f"/sessions/{sid}/explain", json={"strategy": "extrospective"}
        ).json()

    with TestClient(create_app(service_dir)) as client:
        sid = client.post(
            "/sessions", json={"scenario_name": "birthday_cake", "persona": "A"}
        ).json()["session_id"]
        client.post(
            f"/sessions/{sid}/events", json={"kind": "UserPerceivedFact", "item": "f5"}
        )
        first = explain_a(client, sid)
    with TestClient(create_app(service_dir)) as client:
        sid = client.post(
            "/sessions", json={"scenario_name": "birthday_cake", "persona": "A"}
        ).json()["session_id"]
        second = explain_a(client, sid)
    first.pop("state_version")
    second.pop("state_version")
    assert second == first
    ok("persistence: 20/20 log round-trips preserve ranks; "
       "restarted service explains identically")


def test_cli_compare_records():
    result = CliRunner().invoke(cli, ["compare", CAKE, "--output", "records"])
    assert result.exit_code == 0
    rows = [json.loads(line) for line in result.output.splitlines()]
    table = {
        row["persona"]: row["top1"]
        for row in rows
        if row["strategy"] == "extrospective"
    }
    assert table == {"A": "f5", "B": "r3", "C": "r4"}
    assert {row["decision"] for row in rows} == {"cakeA storage_location patio"}
    ok("CLI compare: records parse to the persona-divergence table")
