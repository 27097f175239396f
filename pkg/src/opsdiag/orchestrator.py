"""Orchestration: the session runtime (event emission, HITL, scoped appends),
plan decomposition and execution, the deterministic workflow engine, the
dual-run blind-validation pattern, and the v1/v2/v3 architecture presets."""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass, field

from .context import ContextPolicy, DistilledReport, distill
from .errors import (
    IllegalTransition,
    PlanGrammarError,
    PlanTooLarge,
    SanitizationLeak,
    StepFailed,
    SubtaskFailed,
    UnresolvedPath,
)
from .events import EventBus
from .llm import ChatMessage
from .mcp.client import ToolClient
from .mcp.monitor import TimeSeries
from .reasoning import SopPlan, run_react, run_sop, summarize_run
from .session import (
    AgentRegistry,
    Message,
    TaskSession,
    append_message,
    transition,
    visible_messages,
)
from .simulator import Scenario, trend_verdict

PLAN_SIZE_CAP = 8

_VERDICT_WORDS = ("worsening", "recovering", "stable")

# message kinds that fan out to the event stream
_KIND_TO_EVENT = {
    "thought": "thought",
    "tool_call": "tool_call",
    "tool_result": "tool_result",
    "handoff": "handoff",
    "report": "report_distilled",
}


class _RunAborted(Exception):
    pass


# ---------------------------------------------------------------------------
# plan and workflow definitions


@dataclass(frozen=True)
class Assignee:
    kind: str  # sub_agent | workflow
    agent_id: str | None = None
    mode: str = "team"  # team | group
    workflow_id: str | None = None


@dataclass(frozen=True)
class Subtask:
    subtask_id: str
    description: str
    assignee: Assignee
    depends_on: tuple[str, ...] = ()


@dataclass
class OrchestrationPlan:
    subtasks: list[Subtask]

    def validate(self, registry: AgentRegistry, workflows: dict[str, "WorkflowDef"]) -> None:
        ids = [s.subtask_id for s in self.subtasks]
        if len(set(ids)) != len(ids):
            raise PlanGrammarError("duplicate subtask ids")
        known = set(ids)
        for s in self.subtasks:
            for dep in s.depends_on:
                if dep not in known:
                    raise PlanGrammarError(f"subtask {s.subtask_id} depends on unknown {dep}")
            if s.assignee.kind == "sub_agent":
                if not registry.known(s.assignee.agent_id or ""):
                    raise PlanGrammarError(f"unresolvable sub_agent {s.assignee.agent_id!r}")
            elif s.assignee.kind == "workflow":
                if s.assignee.workflow_id not in workflows:
                    raise PlanGrammarError(f"unresolvable workflow {s.assignee.workflow_id!r}")
            else:
                raise PlanGrammarError(f"unknown assignee kind {s.assignee.kind!r}")
        self._topological_order()  # raises on cycles

    def _topological_order(self) -> list[Subtask]:
        by_id = {s.subtask_id: s for s in self.subtasks}
        done: set[str] = set()
        order: list[Subtask] = []
        remaining = dict(by_id)
        while remaining:
            ready = sorted(
                sid for sid, s in remaining.items() if set(s.depends_on) <= done
            )
            if not ready:
                raise PlanGrammarError("dependency cycle in plan")
            for sid in ready:
                order.append(remaining.pop(sid))
                done.add(sid)
        return order

    @classmethod
    def from_obj(cls, obj: dict) -> "OrchestrationPlan":
        try:
            subtasks = []
            for rec in obj["subtasks"]:
                a = rec["assignee"]
                if a["type"] == "sub_agent":
                    assignee = Assignee(kind="sub_agent", agent_id=a["agent_id"],
                                        mode=a.get("mode", "team"))
                elif a["type"] == "workflow":
                    assignee = Assignee(kind="workflow", workflow_id=a["workflow_id"])
                else:
                    raise PlanGrammarError(f"unknown assignee type {a['type']!r}")
                subtasks.append(
                    Subtask(
                        subtask_id=rec["id"],
                        description=rec["description"],
                        assignee=assignee,
                        depends_on=tuple(rec.get("depends_on", [])),
                    )
                )
        except (KeyError, TypeError) as exc:
            raise PlanGrammarError(f"plan object malformed: {exc}") from exc
        if not subtasks:
            raise PlanGrammarError("plan has no subtasks")
        return cls(subtasks=subtasks)


@dataclass(frozen=True)
class WorkflowStep:
    step_id: str
    tool: str
    arguments: dict


_PATH_REF = re.compile(r"^\$(steps|task)\.(.+)$")


@dataclass
class WorkflowDef:
    workflow_id: str
    steps: list[WorkflowStep]

    def __post_init__(self):
        seen: set[str] = set()
        for step in self.steps:
            for value in step.arguments.values():
                ref = _parse_ref(value)
                if ref and ref[0] == "steps":
                    target = ref[1].split(".", 1)[0]
                    if target not in seen:
                        raise UnresolvedPath(
                            f"step {step.step_id} references {value!r} before it exists")
            seen.add(step.step_id)

    @classmethod
    def from_dict(cls, obj: dict) -> "WorkflowDef":
        return cls(
            workflow_id=obj["workflow_id"],
            steps=[
                WorkflowStep(step_id=s["step_id"], tool=s["tool"],
                             arguments=dict(s.get("arguments", {})))
                for s in obj["steps"]
            ],
        )


def load_workflow(path) -> WorkflowDef:
    with open(path, "r", encoding="utf-8") as fh:
        return WorkflowDef.from_dict(json.load(fh))


def _parse_ref(value) -> tuple[str, str] | None:
    if isinstance(value, str):
        m = _PATH_REF.match(value)
        if m:
            return m.group(1), m.group(2)
    return None


def _walk_path(root, path: str):
    node = root
    for part in path.split("."):
        if isinstance(node, dict) and part in node:
            node = node[part]
        elif isinstance(node, list) and part.isdigit() and int(part) < len(node):
            node = node[int(part)]
        else:
            raise UnresolvedPath(f"path {path!r} does not resolve")
    return node


# ---------------------------------------------------------------------------
# session runtime


class SessionRuntime:
    """Owns one session: serializes mutations, emits visualization events,
    and services HITL interventions at step boundaries."""

    def __init__(
        self,
        session: TaskSession,
        registry: AgentRegistry,
        provider,
        tool_client: ToolClient,
        policy: ContextPolicy | None = None,
        scenario: Scenario | None = None,
        workflows: dict[str, WorkflowDef] | None = None,
        sop_plan: SopPlan | None = None,
    ):
        self.session = session
        self.registry = registry
        self.provider = provider
        self.tool_client = tool_client
        self.policy = policy or ContextPolicy(budget_tokens=8192, output_reserve_tokens=1024)
        self.scenario = scenario
        self.workflows = workflows or {}
        self.sop_plan = sop_plan
        self.bus = EventBus(session.session_id,
                            message_exists=lambda mid: session.get_message(mid) is not None)
        self._hitl_lock = threading.Lock()
        self._hitl_changed = threading.Condition(self._hitl_lock)
        self._pause_requested = False
        self._abort_requested = False
        self._pending_guidance: list[str] = []

    # -- transcript / events --

    def append(self, sender: str, kind: str, content, parent=None, recipient=None) -> Message:
        message = append_message(self.session, sender, kind, content,
                                 parent=parent, recipient=recipient)
        event_kind = _KIND_TO_EVENT.get(kind)
        if event_kind is not None:
            payload = {"message_id": message.message_id, "content": content}
            self.bus.emit(event_kind, payload, agent_id=sender)
        return message

    def transition(self, new_status: str) -> None:
        previous = self.session.status
        transition(self.session, new_status)
        self.bus.emit("status_changed", {"from": previous, "to": new_status})

    def visible(self, scope_id: str) -> list[Message]:
        return visible_messages(self.session, scope_id)

    # -- HITL --

    def intervene(self, kind: str, text: str | None = None) -> None:
        """pause | resume | inject_guidance | abort; legality checked against
        the current status, effects applied at the next step boundary."""
        status = self.session.status
        with self._hitl_changed:
            if kind == "pause":
                if status not in ("running", "awaiting_human"):
                    raise IllegalTransition(f"illegal transition from {status}")
                self._pause_requested = True
            elif kind == "resume":
                if status != "awaiting_human":
                    raise IllegalTransition(f"illegal transition from {status}")
                self._pause_requested = False
            elif kind == "inject_guidance":
                if status not in ("running", "awaiting_human"):
                    raise IllegalTransition(f"illegal transition from {status}")
                self._pending_guidance.append(text or "")
            elif kind == "abort":
                if status not in ("running", "awaiting_human"):
                    raise IllegalTransition(f"illegal transition from {status}")
                self._abort_requested = True
            else:
                raise ValueError(f"unknown intervention {kind!r}")
            self.bus.emit("hitl_received", {"intervention": kind, "text": text or ""})
            self._hitl_changed.notify_all()

    def step_boundary(self) -> None:
        """Engines call this between steps; interventions take effect here."""
        with self._hitl_changed:
            if self._abort_requested:
                raise _RunAborted()
            for guidance in self._pending_guidance:
                self.append("user", "hitl_intervention", guidance)
            self._pending_guidance.clear()
            if self._pause_requested:
                self.transition("awaiting_human")
                while self._pause_requested and not self._abort_requested:
                    self._hitl_changed.wait(timeout=0.05)
                if self._abort_requested:
                    raise _RunAborted()
                # guidance that arrived while paused lands before work resumes
                for guidance in self._pending_guidance:
                    self.append("user", "hitl_intervention", guidance)
                self._pending_guidance.clear()
                self.transition("running")


# ---------------------------------------------------------------------------
# orchestrator operations


def decompose(runtime: SessionRuntime) -> OrchestrationPlan:
    """Supervisor call constrained to the plan grammar (one repair retry)."""
    session = runtime.session
    if session.architecture_preset != "v3_multi_specialist":
        raise ValueError("decompose requires the v3 preset")
    supervisor = runtime.registry.get(session.supervisor)
    from .context import assemble, window_to_chat

    window = assemble(runtime.visible("group"), runtime.policy,
                      system_prompt=supervisor.system_prompt)
    request = window_to_chat(window)
    plan = None
    last_error = None
    for attempt in range(2):
        response = runtime.provider.complete(request)
        try:
            plan = _parse_plan(response.text)
            break
        except PlanGrammarError as exc:
            last_error = exc
            request.messages = list(request.messages) + [
                ChatMessage(role="user", content=(
                    'Respond with one JSON object {"thought": "...", "plan": '
                    '{"subtasks": [...]}} following the plan grammar.'))]
    if plan is None:
        raise PlanGrammarError(str(last_error))
    if len(plan.subtasks) > PLAN_SIZE_CAP:
        raise PlanTooLarge(f"plan has {len(plan.subtasks)} subtasks (cap {PLAN_SIZE_CAP})")
    plan.validate(runtime.registry, runtime.workflows)
    runtime.append(session.supervisor, "thought",
                   {"thought": "task decomposed", "plan": _plan_to_obj(plan)})
    runtime.bus.emit("plan_created",
                     {"subtasks": [s.subtask_id for s in plan.subtasks]},
                     agent_id=session.supervisor)
    return plan


def _parse_plan(text: str) -> OrchestrationPlan:
    decoder = json.JSONDecoder()
    idx = text.find("{")
    while idx != -1:
        try:
            obj, _ = decoder.raw_decode(text[idx:])
        except json.JSONDecodeError:
            idx = text.find("{", idx + 1)
            continue
        if isinstance(obj, dict) and isinstance(obj.get("plan"), dict):
            return OrchestrationPlan.from_obj(obj["plan"])
        idx = text.find("{", idx + 1)
    raise PlanGrammarError("no plan object in supervisor output")


def _plan_to_obj(plan: OrchestrationPlan) -> dict:
    return {
        "subtasks": [
            {
                "id": s.subtask_id,
                "description": s.description,
                "assignee": (
                    {"type": "sub_agent", "agent_id": s.assignee.agent_id, "mode": s.assignee.mode}
                    if s.assignee.kind == "sub_agent"
                    else {"type": "workflow", "workflow_id": s.assignee.workflow_id}
                ),
                "depends_on": list(s.depends_on),
            }
            for s in plan.subtasks
        ]
    }


def execute_plan(runtime: SessionRuntime, plan: OrchestrationPlan) -> list[tuple[str, DistilledReport]]:
    """Execute subtasks in dependency order (deterministically, by subtask_id
    within each ready set); sub-agent results cross the boundary only as
    DistilledReports."""
    order = plan._topological_order()
    reports: dict[str, DistilledReport] = {}
    failed: str | None = None
    failed_ids: set[str] = set()
    for subtask in order:
        if any(dep in failed_ids for dep in subtask.depends_on):
            failed_ids.add(subtask.subtask_id)
            continue
        runtime.step_boundary()
        try:
            if subtask.assignee.kind == "workflow":
                report = run_workflow(
                    runtime,
                    runtime.workflows[subtask.assignee.workflow_id],
                    _task_fields(runtime),
                    subtask_id=subtask.subtask_id,
                )
            else:
                report = _run_subagent(runtime, subtask, reports)
            reports[subtask.subtask_id] = report
        except _RunAborted:
            raise
        except Exception as exc:
            failed = failed or subtask.subtask_id
            failed_ids.add(subtask.subtask_id)
            runtime.bus.emit("warning",
                             {"subtask_id": subtask.subtask_id, "error": str(exc)})
    if failed is not None:
        raise SubtaskFailed(failed)
    return sorted(reports.items(), key=lambda t: t[0])


def _task_fields(runtime: SessionRuntime) -> dict:
    fields: dict = {"task": runtime.session.root_task}
    scenario = runtime.scenario
    if scenario is not None:
        fields["app"] = scenario.trigger.app
        if scenario.series:
            fields["metric"] = scenario.series[0].metric
        if scenario.window:
            fields["start"] = scenario.window.get("start")
            fields["end"] = scenario.window.get("end")
    return fields


def _run_subagent(
    runtime: SessionRuntime,
    subtask: Subtask,
    prior: dict[str, DistilledReport],
) -> DistilledReport:
    session = runtime.session
    target = runtime.registry.get(subtask.assignee.agent_id)
    task_text = subtask.description
    for dep in subtask.depends_on:
        dep_report = prior.get(dep)
        if dep_report is not None:
            task_text += (
                f"\nContext from subtask {dep}: "
                + " ".join(dep_report.key_findings)
            )
    if subtask.assignee.mode == "team":
        members = {target.agent_id, *target.sub_agents}
        scope = session.add_scope("team", members)
    else:
        scope = session.group_scope()
        scope.members.add(target.agent_id)
    runtime.append(session.supervisor, "handoff",
                   {"task": task_text, "subtask_id": subtask.subtask_id,
                    "mode": subtask.assignee.mode},
                   recipient=target.agent_id)
    runtime.bus.emit("agent_started", {"scope_id": scope.scope_id}, agent_id=target.agent_id)
    action = run_react(
        target,
        get_visible=lambda: runtime.visible(scope.scope_id),
        policy=runtime.policy,
        provider=runtime.provider,
        tool_client=runtime.tool_client,
        append=runtime.append,
        step_boundary=runtime.step_boundary,
    )
    if action.variant != "final":
        raise SubtaskFailed(subtask.subtask_id, "sub-agent ended without a final answer")
    labels = runtime.scenario.expected_findings if runtime.scenario else []
    report = distill(action.answer or "", runtime.visible(scope.scope_id), labels)
    runtime.append(target.agent_id, "report",
                   {**report.to_dict(), "subtask_id": subtask.subtask_id},
                   recipient=session.supervisor)
    return report


def run_workflow(
    runtime: SessionRuntime,
    workflow: WorkflowDef,
    task_fields: dict,
    subtask_id: str | None = None,
) -> DistilledReport:
    """Deterministic step-by-step tool execution; no model calls anywhere."""
    session = runtime.session
    actor = f"wf-{workflow.workflow_id}"
    scope = session.add_scope("private", {actor})
    outputs: dict[str, object] = {}
    for step in workflow.steps:
        arguments = {}
        for name, value in step.arguments.items():
            ref = _parse_ref(value)
            if ref is None:
                arguments[name] = value
            elif ref[0] == "task":
                arguments[name] = _walk_path(task_fields, ref[1])
            else:
                arguments[name] = _walk_path(outputs, ref[1])
        call_msg = runtime.append(actor, "tool_call",
                                  {"tool": step.tool, "arguments": arguments,
                                   "step_id": step.step_id})
        result = runtime.tool_client.call_tool(step.tool, arguments)
        runtime.append(actor, "tool_result",
                       {"content": result.content, "is_error": result.is_error},
                       parent=call_msg.message_id)
        if result.is_error:
            raise StepFailed(step.step_id, result.first_text())
        outputs[step.step_id] = result.first_data() if result.first_data() is not None \
            else result.first_text()
    transcript = runtime.visible(scope.scope_id)
    labels = runtime.scenario.expected_findings if runtime.scenario else []
    summary = summarize_run(transcript) if transcript else f"workflow {workflow.workflow_id} ran"
    report = distill(summary or f"workflow {workflow.workflow_id} completed",
                     transcript, labels)
    report.conclusion = report.conclusion or f"workflow {workflow.workflow_id} completed"
    runtime.append(actor, "report",
                   {**report.to_dict(), "subtask_id": subtask_id or workflow.workflow_id},
                   recipient=session.supervisor)
    return report


# ---------------------------------------------------------------------------
# dual-run blind validation


def extract_verdict(text: str) -> str | None:
    lowered = text.lower()
    for word in _VERDICT_WORDS:
        if word in lowered:
            return word
    return None


def sanitize_task(task: str, blind_fields: list[str]) -> str:
    sanitized = task
    for blind in blind_fields:
        if blind:
            sanitized = sanitized.replace(blind, "")
    sanitized = re.sub(r"[ \t]{2,}", " ", sanitized).strip()
    for blind in blind_fields:
        if blind and blind in sanitized:
            raise SanitizationLeak(f"blind field still present after sanitization: {blind!r}")
    return sanitized


def dual_run(
    runtime: SessionRuntime,
    task: str,
    legacy_conclusion: str,
    analysis_agent: str,
    critic_agent: str,
    blind_fields: list[str],
    analysis_provider=None,
    critic_provider=None,
) -> dict:
    """Blind validation: an analysis agent re-solves the sanitized task in an
    isolated team scope; a critic in group scope then sees both conclusions
    and produces the comparison report."""
    if not legacy_conclusion:
        raise ValueError("legacy_conclusion must be non-empty")
    session = runtime.session
    fields = list(blind_fields) + [legacy_conclusion]
    sanitized = sanitize_task(task, fields)

    analysis = runtime.registry.get(analysis_agent)
    team = session.add_scope("team", {analysis.agent_id, *analysis.sub_agents})
    runtime.append(session.supervisor, "handoff",
                   {"task": sanitized, "mode": "team", "blind": True},
                   recipient=analysis.agent_id)
    runtime.bus.emit("agent_started", {"scope_id": team.scope_id}, agent_id=analysis.agent_id)
    action = run_react(
        analysis,
        get_visible=lambda: runtime.visible(team.scope_id),
        policy=runtime.policy,
        provider=analysis_provider or runtime.provider,
        tool_client=runtime.tool_client,
        append=runtime.append,
        step_boundary=runtime.step_boundary,
    )
    if action.variant != "final":
        raise SubtaskFailed("dual-analysis", "analysis agent ended without a final answer")
    labels = runtime.scenario.expected_findings if runtime.scenario else []
    analysis_report = distill(action.answer or "", runtime.visible(team.scope_id), labels)
    runtime.append(analysis.agent_id, "report",
                   {**analysis_report.to_dict(), "subtask_id": "dual-analysis"},
                   recipient=session.supervisor)

    # the critic gains the full context: absorb the team scope, then add the
    # legacy conclusion
    group = session.group_scope()
    team_ids = set(team.visible)
    absorbed = set(group.visible)
    for m in session.transcript:
        if m.message_id in team_ids and m.message_id not in absorbed:
            group.visible.append(m.message_id)
            absorbed.add(m.message_id)
    legacy_msg = runtime.append("system", "observation",
                                {"legacy_conclusion": legacy_conclusion})
    if legacy_msg.message_id not in set(group.visible):
        group.visible.append(legacy_msg.message_id)

    critic = runtime.registry.get(critic_agent)
    group.members.add(critic.agent_id)
    runtime.bus.emit("agent_started", {"scope_id": group.scope_id}, agent_id=critic.agent_id)
    critic_action = run_react(
        critic,
        get_visible=lambda: runtime.visible(group.scope_id),
        policy=runtime.policy,
        provider=critic_provider or runtime.provider,
        tool_client=runtime.tool_client,
        append=runtime.append,
        step_boundary=runtime.step_boundary,
    )
    if critic_action.variant != "final":
        raise SubtaskFailed("dual-critic", "critic ended without a final answer")

    legacy_verdict = extract_verdict(legacy_conclusion)
    analysis_verdict = extract_verdict(analysis_report.conclusion) or extract_verdict(
        action.answer or "")
    comparison = {
        "agreement": legacy_verdict is not None and legacy_verdict == analysis_verdict,
        "legacy_conclusion": legacy_conclusion,
        "analysis_conclusion": analysis_report.conclusion,
        "narrative": critic_action.answer or "",
    }
    runtime.append(critic.agent_id, "report",
                   {**comparison, "subtask_id": "dual-comparison"},
                   recipient=session.supervisor)
    return comparison


# ---------------------------------------------------------------------------
# presets


def run_preset(runtime: SessionRuntime) -> dict:
    """Run the session to completion under its architecture preset and return
    the diagnostic report artifact."""
    session = runtime.session
    if session.status != "pending":
        raise IllegalTransition("run_preset requires a pending session")
    runtime.transition("running")
    supervisor = runtime.registry.get(session.supervisor)
    runtime.bus.emit("agent_started", {"scope_id": "group"}, agent_id=supervisor.agent_id)
    try:
        if session.architecture_preset == "v1_basic_react":
            action = run_react(
                supervisor,
                get_visible=lambda: runtime.visible("group"),
                policy=runtime.policy,
                provider=runtime.provider,
                tool_client=runtime.tool_client,
                append=runtime.append,
                step_boundary=runtime.step_boundary,
            )
            final_text = action.answer or ""
        elif session.architecture_preset == "v2_phased":
            if runtime.sop_plan is None:
                raise ValueError("v2 preset requires an SOP plan")

            def on_phase(index, phase):
                runtime.bus.emit("agent_started",
                                 {"phase": phase.name, "phase_index": index},
                                 agent_id=supervisor.agent_id)

            action = run_sop(
                supervisor,
                runtime.sop_plan,
                get_visible=lambda: runtime.visible("group"),
                policy=runtime.policy,
                provider=runtime.provider,
                tool_client=runtime.tool_client,
                append=runtime.append,
                on_phase=on_phase,
                step_boundary=runtime.step_boundary,
            )
            final_text = action.answer or ""
        else:
            plan = decompose(runtime)
            reports = execute_plan(runtime, plan)
            conclusions = [f"[{sid}] {r.conclusion}" for sid, r in reports]
            final_text = "Aggregate conclusion: " + " ".join(conclusions)
    except _RunAborted:
        runtime.transition("cancelled")
        return {"status": "cancelled"}
    except Exception:
        if session.status == "running":
            runtime.transition("failed")
        elif session.status == "awaiting_human":
            runtime.transition("cancelled")
        raise

    runtime.append(session.supervisor, "final_answer", final_text)
    report = build_report(runtime, final_text)
    session.artifacts.append(report)
    runtime.bus.emit("final_report", {"report": report}, agent_id=session.supervisor)
    runtime.transition("completed")
    return report


def build_report(runtime: SessionRuntime, final_text: str) -> dict:
    """Diagnostic report artifact: root cause statement, handling opinion,
    evidence pointers, and the engine-computed trend verdict when the run
    fetched a time-series."""
    session = runtime.session
    evidence: list[str] = []
    for m in session.transcript:
        if m.kind == "report" and isinstance(m.content, dict):
            for pointer in m.content.get("evidence_pointers", []):
                if pointer not in evidence:
                    evidence.append(pointer)
    if not evidence:
        evidence = [m.message_id for m in session.transcript if m.kind == "tool_result"]

    verdict = None
    threshold = runtime.scenario.drift_threshold if runtime.scenario else 0.05
    for m in session.transcript:
        if m.kind != "tool_result" or not isinstance(m.content, dict):
            continue
        for block in m.content.get("content", []):
            data = block.get("data") if isinstance(block, dict) else None
            if isinstance(data, dict) and "points" in data and len(data["points"]) >= 2:
                series = TimeSeries.from_wire(data)
                verdict = trend_verdict(series, threshold=threshold)
                break
        if verdict is not None:
            break

    handling = "See root cause statement."
    marker = "Recommended action:"
    if marker in final_text:
        handling = final_text.split(marker, 1)[1].strip()

    report = {
        "session_id": session.session_id,
        "preset": session.architecture_preset,
        "root_cause": final_text,
        "handling_opinion": handling,
        "evidence_pointers": evidence,
        "drift_threshold": threshold,
        "summary": summarize_run(session.transcript),
    }
    if verdict is not None:
        report["verdict"] = verdict
    return report


def intervene(runtime: SessionRuntime, kind: str, text: str | None = None) -> TaskSession:
    runtime.intervene(kind, text)
    return runtime.session
