import pytest

from ug.errors import (
    DuplicateId,
    FactConflict,
    FixedConflict,
    FixedLayerViolation,
    InvalidKB,
)
from ug.kb import (
    ACTOR_SYSTEM,
    ACTOR_USER,
    Fact,
    KnowledgeBase,
    LAYER_FIXED,
    LAYER_PREINSTALLED,
    LAYER_USER,
    Literal,
    Rule,
    add_fact,
    conflicts,
    retract_fact,
    snapshot,
    upsert_rule,
    validate_kb,
)


def lit(s, r, v, positive=True):
    return Literal(s, r, v, positive)


def small_kb(**overrides):
    base = dict(
        facts=(Fact("f1", lit("fridge", "temp", "cool")),),
        rules=(
            Rule("r1", (lit("fridge", "temp", "cool"),), lit("cakeA", "loc", "fridge"), 1),
        ),
        functional_relations=frozenset({"temp", "loc"}),
        decision_query=("cakeA", "loc"),
    )
    base.update(overrides)
    return KnowledgeBase(**base)


class TestConflicts:
    def test_opposite_polarity(self):
        assert conflicts(lit("a", "r", "v"), lit("a", "r", "v", False), frozenset())

    def test_functional_value_clash(self):
        assert conflicts(lit("a", "r", "v"), lit("a", "r", "w"), frozenset({"r"}))

    def test_non_functional_values_coexist(self):
        assert not conflicts(lit("a", "r", "v"), lit("a", "r", "w"), frozenset())

    def test_negative_different_values_do_not_conflict(self):
        assert not conflicts(
            lit("a", "r", "v", False), lit("a", "r", "w"), frozenset({"r"})
        )


class TestAddFact:
    def test_adds_and_leaves_input_unchanged(self, cake_scenario):
        kb = cake_scenario.kb
        before = kb.facts
        out = add_fact(kb, Fact("f9", lit("cellar", "temp", "cool")))
        assert len(out.facts) == len(before) + 1
        assert kb.facts == before

    def test_cake_kb_has_seven_facts_including_patio_temp(self, cake_scenario):
        kb = cake_scenario.kb
        assert len(kb.facts) == 7
        assert kb.fact_map["f5"].literal == lit("patio", "temp", "cool")

    def test_duplicate_id(self):
        kb = small_kb()
        with pytest.raises(DuplicateId):
            add_fact(kb, Fact("f1", lit("patio", "temp", "cool")))

    def test_functional_conflict(self):
        kb = small_kb()
        with pytest.raises(FactConflict):
            add_fact(kb, Fact("f2", lit("fridge", "temp", "warm")))


class TestRetractFact:
    def test_retract(self):
        kb = small_kb()
        out = retract_fact(kb, "f1")
        assert "f1" not in out.fact_map
        assert "f1" in kb.fact_map

    def test_retract_unknown(self):
        from ug.errors import RetractUnknown

        with pytest.raises(RetractUnknown):
            retract_fact(small_kb(), "nope")


class TestUpsertRule:
    def fixed_kb(self):
        return small_kb(
            rules=(
                Rule("r1", (lit("fridge", "temp", "cool"),), lit("cakeA", "loc", "fridge"), 1),
                Rule(
                    "rs",
                    (lit("cakeA", "kind", "food"),),
                    lit("cakeA", "loc", "oven", False),
                    3,
                    LAYER_FIXED,
                ),
            )
        )

    def test_user_edit_of_preinstalled_relayers_to_user(self):
        kb = self.fixed_kb()
        edited = Rule(
            "r1", (lit("fridge", "temp", "cool"),), lit("cakeA", "loc", "hallway"), 1
        )
        out = upsert_rule(kb, edited, ACTOR_USER)
        assert out.rule_map["r1"].layer == LAYER_USER
        assert out.rule_map["r1"].head.value == "hallway"
        assert kb.rule_map["r1"].head.value == "fridge"

    def test_user_edit_of_fixed_rule_rejected(self):
        kb = self.fixed_kb()
        edited = Rule("rs", (lit("x", "y", "z"),), lit("cakeA", "loc", "oven"), 3)
        with pytest.raises(FixedLayerViolation):
            upsert_rule(kb, edited, ACTOR_USER)

    def test_user_rule_conflicting_fixed_head_rejected(self):
        kb = self.fixed_kb()
        # Fixed rule concludes not-oven; a new user rule concluding oven
        # conflicts with it.
        new = Rule("r9", (lit("x", "y", "z"),), lit("cakeA", "loc", "oven"), 1, LAYER_USER)
        with pytest.raises(FixedConflict):
            upsert_rule(kb, new, ACTOR_USER)

    def test_user_cannot_write_fixed_layer(self):
        kb = self.fixed_kb()
        new = Rule("r9", (lit("x", "y", "z"),), lit("a", "b", "c"), 1, LAYER_FIXED)
        with pytest.raises(FixedLayerViolation):
            upsert_rule(kb, new, ACTOR_USER)

    def test_system_writes_any_layer(self):
        kb = self.fixed_kb()
        new = Rule("r9", (lit("x", "y", "z"),), lit("a", "b", "c"), 1, LAYER_FIXED)
        out = upsert_rule(kb, new, ACTOR_SYSTEM)
        assert out.rule_map["r9"].layer == LAYER_FIXED

    def test_rule_id_colliding_with_fact(self):
        kb = small_kb()
        with pytest.raises(DuplicateId):
            upsert_rule(kb, Rule("f1", (lit("x", "y", "z"),), lit("a", "b", "c"), 1), ACTOR_SYSTEM)

    def test_user_upsert_never_touches_fixed_rules(self):
        kb = self.fixed_kb()
        out = upsert_rule(
            kb,
            Rule("r7", (lit("x", "y", "z"),), lit("q", "w", "e"), 1, LAYER_USER),
            ACTOR_USER,
        )
        fixed_before = [r for r in kb.rules if r.layer == LAYER_FIXED]
        fixed_after = [r for r in out.rules if r.layer == LAYER_FIXED]
        assert fixed_before == fixed_after


class TestValidate:
    def test_cake_kb_valid(self, cake_scenario):
        assert validate_kb(cake_scenario.kb).ok

    def test_two_rule_cycle_reported(self):
        kb = KnowledgeBase(
            facts=(),
            rules=(
                Rule("r1", (lit("s", "a", "t"),), lit("s", "b", "t"), 1),
                Rule("r2", (lit("s", "b", "t"),), lit("s", "a", "t", False), 1),
            ),
            functional_relations=frozenset({"a"}),
            decision_query=("s", "a"),
        )
        report = validate_kb(kb)
        assert any(v.code == "DependencyCycle" for v in report.violations)

    def test_non_functional_decision_reported(self):
        kb = small_kb(functional_relations=frozenset({"temp"}))
        report = validate_kb(kb)
        assert any(v.code == "NonFunctionalDecision" for v in report.violations)

    def test_unknown_decision_relation_reported(self):
        kb = small_kb(decision_query=("cakeA", "elsewhere"),
                      functional_relations=frozenset({"temp", "loc", "elsewhere"}))
        report = validate_kb(kb)
        assert any(v.code == "UnknownDecisionRelation" for v in report.violations)

    def test_conflicting_facts_reported(self):
        kb = small_kb(
            facts=(
                Fact("f1", lit("fridge", "temp", "cool")),
                Fact("f2", lit("fridge", "temp", "warm")),
            )
        )
        report = validate_kb(kb)
        assert any(v.code == "FactConflict" for v in report.violations)

    def test_head_in_body_reported(self):
        kb = small_kb(
            rules=(
                Rule("r1", (lit("cakeA", "loc", "fridge"),), lit("cakeA", "loc", "fridge"), 1),
            )
        )
        report = validate_kb(kb)
        assert any(v.code == "HeadInBody" for v in report.violations)


class TestSnapshot:
    def test_snapshot_preserves_ids(self, cake_scenario):
        snap = snapshot(cake_scenario.kb)
        assert snap.statement_ids() == cake_scenario.kb.statement_ids()

    def test_snapshot_twice_equal(self, cake_scenario):
        assert snapshot(cake_scenario.kb) == snapshot(cake_scenario.kb)

    def test_invalid_kb_rejected(self):
        kb = small_kb(
            facts=(
                Fact("f1", lit("fridge", "temp", "cool")),
                Fact("f2", lit("fridge", "temp", "warm")),
            )
        )
        with pytest.raises(InvalidKB):
            snapshot(kb)
