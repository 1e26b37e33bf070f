"""Command line entry points: run episodes, inspect inference, serve HTTP."""

from __future__ import annotations

import json
import sys
from typing import Optional

import click

from . import dsl, trace, worlds
from .governor import Session
from .reasons import FactBase, ground_theory, permissible_mats

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_BREACH = 2


@click.group()
def main():
    """Reason-governed agent runner."""


def _build_session(scenario: Optional[str], config: Optional[str],
                   theory: Optional[str], seed: int,
                   interactive_advisor: bool) -> Session:
    if config:
        with open(config) as fh:
            cfg = json.load(fh)
        scenario = cfg.get("scenario", scenario)
        theory = cfg.get("theory", theory)
        seed = cfg.get("seed", seed)
    doc = None
    if theory:
        with open(theory) as fh:
            doc = dsl.parse_theory(fh.read())
    advisor = None
    if interactive_advisor:
        advisor = worlds.InteractiveAdvisor(_prompt_feedback, on_error=_print_err)
    if scenario == "therapy1":
        return worlds.therapy_scenario_1(theory_doc=doc, advisor=advisor)
    if scenario == "therapy2":
        return worlds.therapy_scenario_2(theory_doc=doc, advisor=advisor)
    if scenario == "grid":
        return worlds.gridworld_scenario(seed=seed)
    raise click.ClickException("unknown scenario %r" % scenario)


def _prompt_feedback(record):
    click.echo("step %d executed %r; enter feedback as" % (record.step, record.executed))
    click.echo("  <criticized action> ; <expected MAT> ; <reason>  (empty line: none)")
    line = click.prompt("feedback", default="", show_default=False)
    if not line.strip():
        return None
    parts = [p.strip() for p in line.split(";")]
    if len(parts) != 3:
        _print_err("expected three ';'-separated fields")
        return None
    return tuple(parts)


def _print_err(message: str) -> None:
    click.echo("error: %s" % message, err=True)


@main.command()
@click.option("--scenario", default=None, help="therapy1 | therapy2 | grid")
@click.option("--config", default=None, type=click.Path(), help="session config JSON")
@click.option("--theory", default=None, type=click.Path(), help=".grt theory override")
@click.option("--steps", default=None, type=int, help="maximum steps")
@click.option("--trace", "trace_path", default=None, type=click.Path(), help="trace output file")
@click.option("--interactive-advisor", is_flag=True, default=False)
@click.option("--seed", default=0, type=int)
@click.option("--print-justification", is_flag=True, default=False)
def run(scenario, config, theory, steps, trace_path, interactive_advisor, seed,
        print_justification):
    """Run an episode through the governed pipeline."""
    try:
        session = _build_session(scenario, config, theory, seed, interactive_advisor)
    except (OSError, dsl.DslError, json.JSONDecodeError, click.ClickException) as exc:
        _print_err(str(exc))
        sys.exit(EXIT_CONFIG)
    records = session.run(max_steps=steps)
    if trace_path:
        trace.write_trace(records, trace_path)
    for record in records:
        click.echo("step %d: phi=%s executed=%s" % (
            record.step, record.phi_perm, record.executed))
        if print_justification:
            click.echo(json.dumps(trace.record_payload(record)["justification"], indent=2))
    if session.halted:
        _print_err("containment breach: no proposal passed the guard")
        sys.exit(EXIT_BREACH)
    sys.exit(EXIT_OK)


@main.command()
@click.option("--theory", required=True, type=click.Path())
@click.option("--facts", default="", help="comma-separated ground atoms, e.g. \"D(l),F(h)\"")
def infer(theory, facts):
    """Ground a theory on facts and print the inference outcome."""
    try:
        with open(theory) as fh:
            doc = dsl.parse_theory(fh.read())
        atoms = [dsl.parse_fact_atom(part.strip())
                 for part in facts.split(",") if part.strip()]
    except (OSError, dsl.DslError) as exc:
        _print_err(str(exc))
        sys.exit(EXIT_CONFIG)
    rt = dsl.theory_from_document(doc)
    oracle_defs = dsl.mat_definitions_from_document(doc)
    from .ltlf import ConflictOracle
    oracle = ConflictOracle(declared=dsl.conflict_pairs_from_document(doc),
                            definitions=oracle_defs)
    model = ground_theory(rt, FactBase(frozenset(atoms)))
    phi, justification = permissible_mats(model, oracle)
    for g in model.grounded:
        click.echo("grounded: %s" % g)
    for i, j in sorted(justification.conflicts):
        click.echo("conflict: %s <> %s" % (
            model.grounded[i].conclusion, model.grounded[j].conclusion))
    defeated_bits = [
        "%s by %s" % (model.grounded[i].source_id, model.grounded[j].source_id)
        for i, j in sorted(justification.defeats)
    ]
    line = "perm: %s" % phi
    if defeated_bits:
        line += "; defeated: " + ", ".join(defeated_bits)
    click.echo(line)
    sys.exit(EXIT_OK)


@main.command()
@click.option("--port", default=8760, type=int)
@click.option("--host", default="127.0.0.1")
def serve(port, host):
    """Run the session service (HTTP + SSE)."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
