"""Independent recursive proof-condition oracle for the reasoner tests.

A literal is defeasibly provable iff it is a fact, or no fact conflicts
with it and some rule for it is applicable (all body literals provable)
and undefeated, while every applicable attacking rule is defeated.  A
rule is defeated when a conflicting applicable rule of strictly higher
priority exists, or a fact conflicts with its head.  Deliberately written
as plain recursion, independent of the stratified fixpoint it checks.
"""

from ug.kb import conflicts


def _universe(kb):
    seen = []
    for f in kb.facts:
        seen.append(f.literal)
    for r in kb.rules:
        seen.append(r.head)
        seen.extend(r.body)
    out = []
    for lit in seen:
        if lit not in out:
            out.append(lit)
    return out


def oracle_state(kb):
    """Return (derived literal set, ambiguous literal set)."""
    functional = kb.functional_relations
    facts = {f.literal for f in kb.facts}
    memo = {}

    def applicable(rule):
        return all(provable(b) for b in rule.body)

    def fact_blocked(rule):
        return any(conflicts(rule.head, f, functional) for f in facts)

    def beaten(rule):
        if fact_blocked(rule):
            return True
        return any(
            t.id != rule.id
            and conflicts(t.head, rule.head, functional)
            and t.priority > rule.priority
            and applicable(t)
            for t in kb.rules
        )

    def provable(lit):
        if lit in memo:
            return memo[lit]
        if lit in facts:
            memo[lit] = True
            return True
        if any(conflicts(lit, f, functional) for f in facts):
            memo[lit] = False
            return False
        memo[lit] = False  # re-entry guard; acyclic KBs never hit it
        supporters = [r for r in kb.rules if r.head == lit]
        attackers = [r for r in kb.rules if conflicts(r.head, lit, functional)]
        ok = any(applicable(r) and not beaten(r) for r in supporters) and not any(
            applicable(s) and not beaten(s) for s in attackers
        )
        memo[lit] = ok
        return ok

    derived = {lit for lit in _universe(kb) if provable(lit)}

    ambiguous = set()
    for lit in _universe(kb):
        if lit in derived or lit in facts:
            continue
        supporters = [r for r in kb.rules if r.head == lit]
        attackers = [r for r in kb.rules if conflicts(r.head, lit, functional)]
        has_live_supporter = any(applicable(r) and not beaten(r) for r in supporters)
        has_live_attacker = any(applicable(s) and not beaten(s) for s in attackers)
        if has_live_supporter and has_live_attacker:
            ambiguous.add(lit)
    return derived, ambiguous


def min_support_scan(elements, log):
    """Exhaustive minimum-support scan used against the extrospective
    selection: returns (ids at the minimal effective rank, that rank)."""
    from ug.memory import support_rank

    ranks = {el.id: support_rank(log, el.id).effective for el in elements}
    min_rank = min(ranks.values())
    return {i for i, r in ranks.items() if r == min_rank}, min_rank
