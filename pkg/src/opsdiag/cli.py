"""Command-line interface: headless scenario runs, the HTTP gateway, knowledge
index operations, and scenario discovery/validation.

Exit codes: 0 success/completed, 2 failed run, 3 scenario validation errors.
"""

from __future__ import annotations

import json
import sys

import click

from .errors import ScenarioValidationError
from .knowledge import build_index, load_corpus, retrieve
from .runner import list_scenarios, resolve_scenario, run_headless
from .session import PRESETS


@click.group()
def main() -> None:
    """Multi-agent incident diagnosis toolkit."""


@main.command()
@click.option("--scenario", "scenario_name", required=True,
              help="Scenario name (from the bundled set) or a directory path.")
@click.option("--preset", default="v1_basic_react", show_default=True,
              type=click.Choice(PRESETS))
@click.option("--out", "out_dir", default=None,
              help="Directory for report.json and events.ndjson.")
@click.option("--session-id", default=None)
@click.option("--scenario-dir", default=None,
              help="Override the bundled scenario directory.")
def run(scenario_name, preset, out_dir, session_id, scenario_dir) -> None:
    """Run one scenario headlessly and print the diagnostic report."""
    try:
        scenario = resolve_scenario(scenario_name, scenario_dir)
    except ScenarioValidationError as exc:
        for problem in exc.problems:
            click.echo(f"invalid scenario: {problem}", err=True)
        sys.exit(3)
    _runtime, report = run_headless(scenario, preset, out_dir=out_dir,
                                    session_id=session_id)
    click.echo(json.dumps(report, indent=2, ensure_ascii=False, sort_keys=True))
    if report.get("status") in ("failed", "cancelled") or "error" in report:
        sys.exit(2)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8400, show_default=True, type=int)
@click.option("--scenario-dir", default=None)
@click.option("--step-delay", default=0.0, show_default=True, type=float,
              help="Seconds to pace each scripted completion; keeps short "
                   "scenario runs observable by interactive clients.")
@click.option("--config", "config_path", default=None,
              help="JSON config file; keys host, port, scenario_dir, "
                   "heartbeat_interval, step_delay.")
def serve(host, port, scenario_dir, step_delay, config_path) -> None:
    """Start the HTTP gateway."""
    import uvicorn

    from .service import create_app, load_config

    heartbeat = 10.0
    if config_path:
        config = load_config(config_path)
        host = config.get("host", host)
        port = config.get("port", port)
        scenario_dir = config.get("scenario_dir", scenario_dir)
        heartbeat = config.get("heartbeat_interval", heartbeat)
        step_delay = config.get("step_delay", step_delay)
    app = create_app(scenario_directory=scenario_dir, heartbeat_interval=heartbeat,
                     step_delay=step_delay)
    uvicorn.run(app, host=host, port=port)


@main.group()
def scenarios() -> None:
    """Inspect the scenario catalog."""


@scenarios.command("list")
@click.option("--scenario-dir", default=None)
def scenarios_list(scenario_dir) -> None:
    for name in list_scenarios(scenario_dir):
        click.echo(name)


@scenarios.command("validate")
@click.argument("name_or_path")
@click.option("--scenario-dir", default=None)
def scenarios_validate(name_or_path, scenario_dir) -> None:
    try:
        scenario = resolve_scenario(name_or_path, scenario_dir)
    except ScenarioValidationError as exc:
        for problem in exc.problems:
            click.echo(problem, err=True)
        sys.exit(3)
    click.echo(f"ok: {scenario.scenario_id}")


@main.group()
def index() -> None:
    """Build and query the hybrid knowledge index."""


@index.command("build")
@click.option("--corpus", "corpus_dir", required=True,
              help="Directory of source documents (with optional .meta.json sidecars).")
@click.option("--strategy", default="semantic", show_default=True,
              type=click.Choice(["sentence", "structural", "semantic"]))
@click.option("--out", "out_path", default=None,
              help="Write the index dump as JSON (stdout when omitted).")
def index_build(corpus_dir, strategy, out_path) -> None:
    documents = load_corpus(corpus_dir)
    idx = build_index(documents, strategy=strategy)
    dump = json.dumps(idx.to_dict(), indent=2, ensure_ascii=False, sort_keys=True)
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(dump + "\n")
        click.echo(f"indexed {len(idx.chunks)} chunks from {len(documents)} documents")
    else:
        click.echo(dump)


@index.command("query")
@click.option("--corpus", "corpus_dir", required=True)
@click.option("--query", "query_text", required=True)
@click.option("-k", "top_k", default=5, show_default=True, type=int)
@click.option("--strategy", default="semantic", show_default=True,
              type=click.Choice(["sentence", "structural", "semantic"]))
def index_query(corpus_dir, query_text, top_k, strategy) -> None:
    documents = load_corpus(corpus_dir)
    idx = build_index(documents, strategy=strategy)
    result = retrieve(idx, query_text, top_k)
    for chunk_id, score, ranks in result.ranked:
        click.echo(json.dumps(
            {"chunk_id": chunk_id, "score": round(score, 6), "ranks": ranks},
            sort_keys=True))


if __name__ == "__main__":
    main()
