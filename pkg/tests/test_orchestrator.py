import json
import threading
import time

import pytest

from opsdiag.errors import (
    IllegalTransition,
    PlanGrammarError,
    SanitizationLeak,
    StepFailed,
    SubtaskFailed,
    UnresolvedPath,
)
from opsdiag.llm import ScriptBook, ScriptedProvider
from opsdiag.orchestrator import (
    OrchestrationPlan,
    WorkflowDef,
    WorkflowStep,
    decompose,
    dual_run,
    execute_plan,
    extract_verdict,
    run_preset,
    run_workflow,
    sanitize_task,
)
from opsdiag.runner import build_runtime, resolve_scenario, run_headless

from conftest import make_registry


def plan_obj(subtasks):
    return OrchestrationPlan.from_obj({"subtasks": subtasks})


def sub(sid, deps=(), agent="worker"):
    return {"id": sid, "description": f"do {sid}",
            "assignee": {"type": "sub_agent", "agent_id": agent, "mode": "team"},
            "depends_on": list(deps)}


class TestPlan:
    def test_topological_order_deterministic(self):
        plan = plan_obj([sub("b"), sub("a"), sub("c", deps=["b"])])
        order = [s.subtask_id for s in plan._topological_order()]
        assert order == ["a", "b", "c"]

    def test_cycle_detected(self):
        plan = plan_obj([sub("a", deps=["b"]), sub("b", deps=["a"])])
        with pytest.raises(PlanGrammarError):
            plan.validate(make_registry(), {})

    def test_duplicate_ids(self):
        with pytest.raises(PlanGrammarError):
            plan_obj([sub("a"), sub("a")]).validate(make_registry(), {})

    def test_unknown_dependency(self):
        with pytest.raises(PlanGrammarError):
            plan_obj([sub("a", deps=["ghost"])]).validate(make_registry(), {})

    def test_unresolvable_assignee(self):
        with pytest.raises(PlanGrammarError):
            plan_obj([sub("a", agent="nobody")]).validate(make_registry(), {})

    def test_workflow_assignee_must_exist(self):
        plan = OrchestrationPlan.from_obj({"subtasks": [
            {"id": "w", "description": "run wf",
             "assignee": {"type": "workflow", "workflow_id": "missing"},
             "depends_on": []}]})
        with pytest.raises(PlanGrammarError):
            plan.validate(make_registry(), {})

    def test_empty_plan_rejected(self):
        with pytest.raises(PlanGrammarError):
            OrchestrationPlan.from_obj({"subtasks": []})


class TestWorkflowDef:
    def test_forward_reference_rejected(self):
        with pytest.raises(UnresolvedPath):
            WorkflowDef(workflow_id="w", steps=[
                WorkflowStep("s1", "tool", {"arg": "$steps.s2.value"}),
                WorkflowStep("s2", "tool", {}),
            ])

    def test_backward_reference_allowed(self):
        WorkflowDef(workflow_id="w", steps=[
            WorkflowStep("s1", "tool", {}),
            WorkflowStep("s2", "tool", {"arg": "$steps.s1.value"}),
        ])


def trend_runtime(preset="v3_multi_specialist", session_id=None):
    scenario = resolve_scenario("trend_anonymousapp")
    session_id = session_id or f"test-{preset}"
    return build_runtime(scenario, preset, session_id)


class TestWorkflowExecution:
    def test_template_resolution_and_report(self):
        runtime = trend_runtime()
        runtime.transition("running")
        workflow = runtime.workflows["trend_fetch"]
        fields = {"task": "t", "app": "anonymousapp", "metric": "error_rate",
                  "start": "2025-08-19T15:21:00Z", "end": "2025-08-19T15:26:00Z"}
        report = run_workflow(runtime, workflow, fields)
        assert report.evidence_pointers
        results = [m for m in runtime.session.transcript if m.kind == "tool_result"]
        assert len(results) == 1
        data = results[0].content["content"][0]["data"]
        assert len(data["points"]) == 21

    def test_deterministic_payload_bytes(self):
        payloads = []
        for run_id in ("wf-a", "wf-b"):
            runtime = trend_runtime(session_id=run_id)
            runtime.transition("running")
            fields = {"app": "anonymousapp", "metric": "error_rate",
                      "start": "2025-08-19T15:21:00Z", "end": "2025-08-19T15:26:00Z"}
            run_workflow(runtime, runtime.workflows["trend_fetch"], fields)
            result = [m for m in runtime.session.transcript if m.kind == "tool_result"][0]
            payloads.append(json.dumps(result.content, sort_keys=True))
        assert payloads[0] == payloads[1]

    def test_step_failure_raises(self):
        runtime = trend_runtime()
        runtime.transition("running")
        workflow = WorkflowDef(workflow_id="bad", steps=[
            WorkflowStep("fetch", "get_app_metric",
                         {"app": "ghostapp", "metric": "m",
                          "start": "2025-08-19T15:21:00Z", "end": "2025-08-19T15:26:00Z"})])
        with pytest.raises(StepFailed):
            run_workflow(runtime, workflow, {})


class TestDecomposeAndExecute:
    def test_v3_plan_from_script(self):
        runtime = trend_runtime()
        runtime.transition("running")
        plan = decompose(runtime)
        assert [s.subtask_id for s in plan.subtasks] == ["t1", "t2"]
        kinds = [e.kind for e in runtime.bus.events()]
        assert "plan_created" in kinds

    def test_execute_skips_dependents_of_failures(self):
        runtime = trend_runtime()
        runtime.transition("running")
        plan = OrchestrationPlan.from_obj({"subtasks": [
            {"id": "bad", "description": "run wf",
             "assignee": {"type": "workflow", "workflow_id": "missing-wf"},
             "depends_on": []},
            {"id": "child", "description": "after bad",
             "assignee": {"type": "sub_agent", "agent_id": "data-agent", "mode": "team"},
             "depends_on": ["bad"]},
        ]})
        with pytest.raises(SubtaskFailed) as exc:
            execute_plan(runtime, plan)
        assert exc.value.subtask_id == "bad"
        # the dependent never started: no handoff to data-agent
        assert not any(m.kind == "handoff" for m in runtime.session.transcript)

    def test_supervisor_never_sees_raw_subagent_thoughts(self):
        runtime, _report = run_headless(resolve_scenario("checkout_multi"),
                                        "v3_multi_specialist", session_id="iso-1")
        session = runtime.session
        group_visible = {m.message_id for m in runtime.visible("group")}
        sub_thoughts = [m for m in session.transcript
                        if m.kind in ("thought", "tool_call", "tool_result")
                        and m.sender in ("data-agent", "code-agent")]
        assert sub_thoughts
        assert not (group_visible & {m.message_id for m in sub_thoughts})
        reports = [m for m in session.transcript if m.kind == "report"]
        assert len(reports) >= 2
        for m in reports:
            assert set(m.content) >= {"key_findings", "confidence",
                                      "evidence_pointers", "conclusion"}


class TestDualRun:
    def run_dual(self):
        scenario = resolve_scenario("trend_anonymousapp")
        runtime = build_runtime(scenario, "v1_basic_react", "dual-1")
        runtime.transition("running")
        from opsdiag.llm import load_script

        analysis = ScriptedProvider(load_script(scenario.scripts["dual_analysis"]))
        critic = ScriptedProvider(load_script(scenario.scripts["dual_critic"]))
        comparison = dual_run(
            runtime,
            task=scenario.render_task(),
            legacy_conclusion=scenario.legacy_conclusion,
            analysis_agent="data-agent",
            critic_agent="vis-agent",
            blind_fields=scenario.blind_fields,
            analysis_provider=analysis,
            critic_provider=critic,
        )
        return runtime, scenario, comparison

    def test_agreement_and_narrative(self):
        _runtime, _scenario, comparison = self.run_dual()
        assert comparison["agreement"] is True
        assert "worsening" in comparison["analysis_conclusion"]
        assert comparison["narrative"]

    def test_blind_fields_absent_from_analysis_scope(self):
        runtime, scenario, _ = self.run_dual()
        team_scopes = [s for s in runtime.session.scopes.values() if s.mode == "team"]
        assert team_scopes
        analysis_scope = team_scopes[0]
        from opsdiag.session import visible_messages

        for m in visible_messages(runtime.session, analysis_scope.scope_id):
            text = m.text()
            for blind in scenario.blind_fields:
                assert blind not in text
            assert scenario.legacy_conclusion not in text

    def test_critic_sees_both_conclusions(self):
        runtime, scenario, _ = self.run_dual()
        group_text = "\n".join(m.text() for m in runtime.visible("group"))
        assert scenario.legacy_conclusion in group_text
        assert "Blind analysis" in group_text

    def test_sanitization_leak_detected(self):
        # removal that reassembles the blind string must be caught
        with pytest.raises(SanitizationLeak):
            sanitize_task("aXXYYb", ["XY"])

    def test_sanitize_removes_fields(self):
        out = sanitize_task("Legacy LGC-4471 concluded worsening", ["LGC-4471"])
        assert "LGC-4471" not in out
        assert "  " not in out

    def test_extract_verdict(self):
        assert extract_verdict("trend is Worsening today") == "worsening"
        assert extract_verdict("nothing conclusive") is None


class TestPresetsAndEvents:
    def test_v1_zero_handoffs(self):
        runtime, report = run_headless(resolve_scenario("checkout_multi"),
                                       "v1_basic_react", session_id="p1")
        kinds = [e.kind for e in runtime.bus.events()]
        assert kinds.count("handoff") == 0
        assert report["verdict"] == "worsening"

    def test_v2_phases_no_handoffs(self):
        runtime, _ = run_headless(resolve_scenario("checkout_multi"),
                                  "v2_phased", session_id="p2")
        events = runtime.bus.events()
        assert [e.kind for e in events].count("handoff") == 0
        phases = [e.payload["phase"] for e in events
                  if e.kind == "agent_started" and "phase" in e.payload]
        assert len(phases) >= 2

    def test_v3_handoffs_and_distilled_reports(self):
        runtime, _ = run_headless(resolve_scenario("checkout_multi"),
                                  "v3_multi_specialist", session_id="p3")
        kinds = [e.kind for e in runtime.bus.events()]
        assert kinds.count("handoff") >= 2
        assert kinds.count("report_distilled") >= 2

    def test_event_stream_closes_after_completion(self):
        runtime, _ = run_headless(resolve_scenario("trend_anonymousapp"),
                                  "v1_basic_react", session_id="p4")
        assert runtime.bus.closed
        assert runtime.session.status == "completed"
        final = [e for e in runtime.bus.events() if e.kind == "final_report"]
        assert len(final) == 1

    def test_run_preset_requires_pending(self):
        runtime = trend_runtime(preset="v1_basic_react", session_id="p5")
        runtime.transition("running")
        with pytest.raises(IllegalTransition):
            run_preset(runtime)

    def test_report_evidence_resolves(self):
        runtime, report = run_headless(resolve_scenario("trend_anonymousapp"),
                                       "v1_basic_react", session_id="p6")
        for pointer in report["evidence_pointers"]:
            message = runtime.session.get_message(pointer)
            assert message is not None and message.kind == "tool_result"


class _GatedProvider:
    """Wraps a provider; the first completion signals `reached` and blocks
    until `release`, giving the test a window while the run is live."""

    def __init__(self, inner):
        self.inner = inner
        self.reached = threading.Event()
        self.release = threading.Event()
        self.requests = []

    def complete(self, request):
        self.requests.append("\n".join(m.content for m in request.messages))
        if not self.reached.is_set():
            self.reached.set()
            assert self.release.wait(timeout=5)
        return self.inner.complete(request)


class TestHitl:
    def gated_runtime(self, session_id):
        scenario = resolve_scenario("trend_anonymousapp")
        from opsdiag.llm import load_script

        inner = ScriptedProvider(load_script(scenario.scripts["v1_basic_react"]))
        gate = _GatedProvider(inner)
        runtime = build_runtime(scenario, "v1_basic_react", session_id, provider=gate)
        result = {}

        def work():
            try:
                result["report"] = run_preset(runtime)
            except Exception as exc:
                result["error"] = exc

        thread = threading.Thread(target=work, daemon=True)
        thread.start()
        assert gate.reached.wait(timeout=5)
        return runtime, gate, thread, result

    def test_pause_resume_and_guidance(self):
        runtime, gate, thread, result = self.gated_runtime("h1")
        runtime.intervene("pause")
        gate.release.set()
        deadline = time.monotonic() + 2
        while runtime.session.status != "awaiting_human":
            assert time.monotonic() < deadline
            time.sleep(0.01)
        runtime.intervene("inject_guidance", "check the rollback history")
        runtime.intervene("resume")
        thread.join(timeout=5)
        assert runtime.session.status == "completed"
        guidance = [m for m in runtime.session.transcript
                    if m.kind == "hitl_intervention"]
        assert guidance and "rollback history" in guidance[0].content
        assert any(e.kind == "hitl_received" for e in runtime.bus.events())
        # the next assembled supervisor context carries the guidance
        assert "check the rollback history" in gate.requests[-1]

    def test_pause_halts_event_emission(self):
        runtime, gate, thread, result = self.gated_runtime("h3")
        runtime.intervene("pause")
        gate.release.set()
        deadline = time.monotonic() + 2
        while runtime.session.status != "awaiting_human":
            assert time.monotonic() < deadline
            time.sleep(0.01)
        frozen = len(runtime.bus.events())
        time.sleep(0.2)
        assert len(runtime.bus.events()) == frozen
        runtime.intervene("resume")
        thread.join(timeout=5)
        assert runtime.session.status == "completed"

    def test_abort_cancels(self):
        runtime, gate, thread, result = self.gated_runtime("h4")
        runtime.intervene("abort")
        gate.release.set()
        thread.join(timeout=5)
        assert runtime.session.status == "cancelled"
        assert result["report"]["status"] == "cancelled"

    def test_illegal_interventions(self):
        runtime = trend_runtime(preset="v1_basic_react", session_id="h2")
        with pytest.raises(IllegalTransition):
            runtime.intervene("resume")  # pending, not awaiting_human
        with pytest.raises(IllegalTransition):
            runtime.intervene("pause")  # pending
        runtime.transition("running")
        with pytest.raises(IllegalTransition):
            runtime.intervene("resume")  # running, not paused
        with pytest.raises(ValueError):
            runtime.intervene("teleport")
