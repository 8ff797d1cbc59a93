"""Command-line frontend.

Exit codes: 0 success, 1 parse/validation failure, 2 runtime error,
64 usage error.  Data goes to stdout, diagnostics to stderr; with
``--output records`` commands emit the same line-delimited JSON records a
Transcript carries, so scripts can scrape results without text parsing.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import memory as mem
from .errors import EngineError
from .explain import INTROSPECTIVE, STRATEGIES, explain
from .kb import Literal, snapshot, validate_kb
from .memory import append_events, load_log, save_log, support_rank
from .reasoner import decide
from .scenario import (
    ParseError,
    Scenario,
    StepDecide,
    StepEvent,
    StepTeach,
    StepWhy,
    _Cursor,
    _parse_teach,
    explanation_json,
    parse_scenario,
    run_step,
)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_RUNTIME = 2
EXIT_USAGE = 64

COMPARE_STRATEGIES = ("last_step", "most_specific_rule", "most_used_fact", "extrospective")


def _load(path: str) -> Scenario:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise click.ClickException(f"cannot read {path}: {exc}")
    return parse_scenario(text)


def _emit(record: dict, output: str):
    if output == "records":
        click.echo(json.dumps(record, sort_keys=True))
    else:
        click.echo(record.get("rendered") or json.dumps(record, sort_keys=True))


@click.group()
def cli():
    """Personalized explanations for a defeasible reasoning agent."""


@cli.command()
@click.argument("file", type=click.Path())
def check(file):
    """Validate a scenario file; exit 0 when it is well formed."""
    scenario = _load(file)
    report = validate_kb(scenario.kb)
    if report.ok:
        click.echo("ok")
        return
    for violation in report.violations:
        click.echo(f"{violation.code}: {violation.message}", err=True)
    raise SystemExit(EXIT_INVALID)


@cli.command("decide")
@click.argument("file", type=click.Path())
@click.option("--persona", default=None, help="Persona to run as (informational).")
@click.option("--output", type=click.Choice(["text", "records"]), default="text")
def decide_cmd(file, persona, output):
    """Run the decision query and print the outcome."""
    scenario = _load(file)
    kb = snapshot(scenario.kb)
    decision, trace = decide(kb, kb.decision_query)
    record = {
        "decision": decision.text(),
        "used_facts": sorted(trace.used_facts),
        "used_rules": sorted(trace.used_rules),
        "defeated": sorted(trace.defeated),
        "rendered": f"I concluded {decision.text()}.",
    }
    _emit(record, output)


@cli.command("why")
@click.argument("file", type=click.Path())
@click.option("--persona", default=None)
@click.option("--strategy", type=click.Choice(list(STRATEGIES)), required=True)
@click.option("--expecting", default=None, help="Expected decision value.")
@click.option("--top", "top_k", default=1, type=int, show_default=True)
@click.option("--output", type=click.Choice(["text", "records"]), default="text")
def why_cmd(file, persona, strategy, expecting, top_k, output):
    """Decide, then explain the decision under a strategy."""
    if strategy == "extrospective" and persona is None:
        raise click.UsageError("--persona is required for the extrospective strategy")
    scenario = _load(file)
    if persona is not None and persona not in scenario.personas:
        raise click.UsageError(f"unknown persona {persona!r}")
    kb = snapshot(scenario.kb)
    memory = scenario.personas.get(persona) if persona else None
    _, trace = decide(kb, kb.decision_query)
    expected = None
    if expecting is not None:
        subject, relation = kb.decision_query
        expected = Literal(subject, relation, expecting, True)
    result = explain(kb, trace, strategy, memory=memory, expected=expected, k=top_k)
    _emit(explanation_json(result), output)


@cli.command("compare")
@click.argument("file", type=click.Path())
@click.option("--output", type=click.Choice(["text", "records"]), default="text")
def compare_cmd(file, output):
    """All personas crossed with all strategies."""
    scenario = _load(file)
    kb = snapshot(scenario.kb)
    decision, trace = decide(kb, kb.decision_query)
    rows = []
    for persona in sorted(scenario.personas):
        memory = scenario.personas[persona]
        for strategy in COMPARE_STRATEGIES:
            result = explain(kb, trace, strategy, memory=memory)
            top, rank = result.ranked[0]
            rows.append(
                {
                    "persona": persona,
                    "strategy": strategy,
                    "decision": decision.text(),
                    "top1": top.id,
                    "rank": rank.effective,
                }
            )
    if output == "records":
        for row in rows:
            click.echo(json.dumps(row, sort_keys=True))
        return
    header = f"{'persona':<10} {'strategy':<20} {'top1':<8} decision"
    click.echo(header)
    click.echo("-" * len(header))
    for row in rows:
        click.echo(
            f"{row['persona']:<10} {row['strategy']:<20} {row['top1']:<8} "
            f"{row['decision']}"
        )


@cli.command("repl")
@click.argument("file", type=click.Path())
@click.option("--persona", required=True)
@click.option("--memory", "memory_path", type=click.Path(), required=True)
def repl_cmd(file, persona, memory_path):
    """Interactive loop: decide / why / teach / event / quit.

    The memory file is appended after every step that adds events.
    """
    scenario = _load(file)
    if persona not in scenario.personas:
        raise click.UsageError(f"unknown persona {persona!r}")
    kb = snapshot(scenario.kb)
    memory_path = Path(memory_path)
    if memory_path.is_file():
        log = load_log(memory_path, user=persona)
    else:
        log = scenario.personas[persona]
        save_log(log, memory_path)
    trace = None
    click.echo("commands: decide | why <strategy> [expecting <v>] | "
               "teach <action> | event <kind> <item> | quit", err=True)
    for raw in sys.stdin:
        line = raw.strip()
        if not line:
            continue
        if line in ("quit", "exit"):
            break
        try:
            step = _parse_repl_step(line)
            flushed = log.last_seq
            kb, log, trace, kind, payload = run_step(kb, log, trace, step)
            if log.last_seq > flushed:
                append_events(memory_path, log.events[flushed:])
            click.echo(json.dumps({"kind": kind, "payload": payload}, sort_keys=True))
        except ParseError as exc:
            click.echo(f"parse error: {exc}", err=True)
        except EngineError as exc:
            click.echo(f"error {exc.code}: {exc.message}", err=True)


def _parse_repl_step(line: str):
    cur = _Cursor(line, 1)
    word = cur.identifier("command")
    if word == "decide":
        cur.end()
        return StepDecide()
    if word == "why":
        strategy = cur.identifier("strategy")
        if strategy not in STRATEGIES:
            cur.fail(f"unknown strategy {strategy!r}")
        expected = None
        if cur.peek_token() == "expecting":
            cur.next_token()
            expected = cur.identifier("expected value")
        cur.end()
        return StepWhy(strategy, expected)
    if word == "teach":
        return StepTeach(_parse_teach(cur))
    if word == "event":
        kind = cur.identifier("event kind")
        item = cur.identifier("item id")
        cur.end()
        return StepEvent(kind, item)
    cur.fail(f"unknown command {word!r}")


@cli.command("serve")
@click.option("--port", default=8000, type=int, show_default=True)
@click.option(
    "--scenario-dir",
    envvar="UG_SCENARIO_DIR",
    type=click.Path(),
    required=True,
)
@click.option("--host", default="127.0.0.1", show_default=True)
def serve_cmd(port, scenario_dir, host):
    """Serve the session HTTP API over a directory of .ug scenarios."""
    from .service import serve

    serve(scenario_dir, port, host)


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return EXIT_OK
    except SystemExit as exc:
        return int(exc.code or 0)
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        return EXIT_USAGE
    except click.ClickException as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        return EXIT_RUNTIME
    except ParseError as exc:
        click.echo(f"parse error: {exc}", err=True)
        return EXIT_INVALID
    except EngineError as exc:
        if exc.code in ("InvalidKB",):
            click.echo(f"invalid: {exc.message}", err=True)
            return EXIT_INVALID
        click.echo(f"error {exc.code}: {exc.message}", err=True)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
