"""Wiring layer: default agent profiles, scenario-to-runtime assembly, and
headless scenario execution with report + event-log output."""

from __future__ import annotations

import json
import os
from importlib import resources

from .context import ContextPolicy, load_policies
from .llm import ScriptedProvider, load_script
from .mcp.client import InProcessEndpoint, ToolClient
from .mcp.monitor import build_monitor_server
from .orchestrator import SessionRuntime, load_workflow, run_preset
from .reasoning import SopPlan, load_plan
from .session import AgentProfile, AgentRegistry
from .simulator import Scenario, fire_trigger, load_scenario, score_report


def default_registry() -> AgentRegistry:
    """The default specialist roster."""
    registry = AgentRegistry()
    registry.register(AgentProfile(
        agent_id="sre-agent",
        display_name="SRE Agent",
        role_description="Site reliability engineering and incident orchestration.",
        expertise_tags={"incident-coordination", "monitoring", "orchestration"},
        allowed_tools={"get_app_metric"},
        reasoning_engine="react",
        sub_agents=["data-agent", "code-agent", "report-agent"],
        system_prompt=(
            "You are the supervising SRE agent. Coordinate the diagnosis, "
            "delegate specialist work, and keep the investigation on task."
        ),
    ))
    registry.register(AgentProfile(
        agent_id="code-agent",
        display_name="Code Agent",
        role_description="Dynamic code generation and analysis.",
        expertise_tags={"static-analysis", "code-diagnostics"},
        allowed_tools=set(),
        reasoning_engine="react",
        system_prompt="You analyze code and configuration changes for defects.",
    ))
    registry.register(AgentProfile(
        agent_id="data-agent",
        display_name="Data Agent",
        role_description="Log, trace, and metrics analysis.",
        expertise_tags={"log-analysis", "metrics"},
        allowed_tools={"get_app_metric"},
        reasoning_engine="react",
        system_prompt="You fetch and interpret operational data.",
    ))
    registry.register(AgentProfile(
        agent_id="vis-agent",
        display_name="Visualization Agent",
        role_description="Evidence chain visualization and diagnostic flow rendering.",
        expertise_tags={"visualization"},
        allowed_tools=set(),
        reasoning_engine="react",
        system_prompt="You render evidence chains for human review.",
    ))
    registry.register(AgentProfile(
        agent_id="report-agent",
        display_name="Report Agent",
        role_description="Report generation and findings summarization.",
        expertise_tags={"reporting"},
        allowed_tools=set(),
        reasoning_engine="summarizer",
        system_prompt="You digest context and produce clear diagnostic reports.",
    ))
    return registry


def data_path(*parts: str) -> str:
    root = resources.files("opsdiag").joinpath("data")
    return str(root.joinpath(*parts))


def default_policies() -> dict[str, ContextPolicy]:
    return load_policies(data_path("policies", "default.json"))


def default_sop_plan() -> SopPlan:
    return load_plan(data_path("plans", "rca_phased.plan"))


def scenario_dir() -> str:
    return data_path("scenarios")


def list_scenarios(directory: str | None = None) -> list[str]:
    directory = directory or scenario_dir()
    names = []
    for name in sorted(os.listdir(directory)):
        if os.path.isfile(os.path.join(directory, name, "manifest.json")):
            names.append(name)
    return names


def resolve_scenario(name_or_path: str, directory: str | None = None) -> Scenario:
    if os.path.isdir(name_or_path):
        return load_scenario(name_or_path)
    directory = directory or scenario_dir()
    return load_scenario(os.path.join(directory, name_or_path))


def build_runtime(
    scenario: Scenario,
    preset: str,
    session_id: str,
    provider=None,
    policy: ContextPolicy | None = None,
    registry: AgentRegistry | None = None,
) -> SessionRuntime:
    """Assemble the full stack for one scenario run: registry, monitor tool
    server, scripted provider, workflows, SOP plan, and the session itself."""
    registry = registry or default_registry()
    client = ToolClient()
    if scenario.series:
        client.register_endpoint(InProcessEndpoint(build_monitor_server(scenario.series)))

    if provider is None:
        script_path = scenario.scripts.get(preset)
        if script_path is None:
            raise ValueError(f"scenario {scenario.scenario_id!r} ships no script for {preset!r}")
        provider = ScriptedProvider(load_script(script_path))

    workflows = {}
    for path in scenario.workflows:
        wf = load_workflow(path)
        workflows[wf.workflow_id] = wf

    sop_plan = load_plan(scenario.sop_plan) if scenario.sop_plan else default_sop_plan()

    session = fire_trigger(scenario, preset, registry, session_id)
    # allowed_tools must resolve against the registered tool servers
    for agent_id in registry.all_ids():
        for tool in registry.get(agent_id).allowed_tools:
            if not client.has_tool(tool):
                raise ValueError(
                    f"agent {agent_id!r} allows unregistered tool {tool!r}")
    if policy is None:
        policy = default_policies()["default"]
    return SessionRuntime(
        session=session,
        registry=registry,
        provider=provider,
        tool_client=client,
        policy=policy,
        scenario=scenario,
        workflows=workflows,
        sop_plan=sop_plan,
    )


def run_headless(
    scenario: Scenario,
    preset: str,
    out_dir: str | None = None,
    session_id: str | None = None,
) -> tuple[SessionRuntime, dict]:
    """Run one scenario to completion; optionally write the diagnostic report
    and the full event log."""
    session_id = session_id or f"{scenario.scenario_id}-{preset}-1"
    runtime = build_runtime(scenario, preset, session_id)
    try:
        report = run_preset(runtime)
    except Exception as exc:
        report = {"status": runtime.session.status, "error": f"{type(exc).__name__}: {exc}"}
    if scenario.expected_findings and "root_cause" in report:
        scored_text = report["root_cause"] + "\n" + report.get("summary", "")
        report["score"] = score_report(scored_text, scenario.expected_findings)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2, ensure_ascii=False, sort_keys=True)
            fh.write("\n")
        with open(os.path.join(out_dir, "events.ndjson"), "w", encoding="utf-8") as fh:
            for event in runtime.bus.events():
                fh.write(json.dumps(event.to_dict(), ensure_ascii=False, sort_keys=True))
                fh.write("\n")
    return runtime, report
