"""HTTP gateway: session lifecycle, resumable ndjson event streaming, HITL
interventions, and scenario discovery over the headless runner."""

from __future__ import annotations

import json
import threading
import time

from fastapi import FastAPI, HTTPException
from fastapi.responses import StreamingResponse
from pydantic import BaseModel

from .errors import IllegalTransition, ScenarioValidationError
from .orchestrator import SessionRuntime, run_preset
from .runner import build_runtime, list_scenarios, resolve_scenario
from .session import PRESETS
from .simulator import score_report


class SessionRequest(BaseModel):
    scenario: str
    preset: str
    session_id: str | None = None


class InterventionRequest(BaseModel):
    kind: str
    text: str | None = None


class _Run:
    """One live session: its runtime, the worker thread, and the report once
    the run finishes."""

    def __init__(self, runtime: SessionRuntime):
        self.runtime = runtime
        self.report: dict | None = None
        self.thread: threading.Thread | None = None

    def start(self, expected_findings: list[str]) -> None:
        def work():
            try:
                report = run_preset(self.runtime)
            except Exception as exc:
                report = {
                    "status": self.runtime.session.status,
                    "error": f"{type(exc).__name__}: {exc}",
                }
            if expected_findings and "root_cause" in report:
                scored = report["root_cause"] + "\n" + report.get("summary", "")
                report["score"] = score_report(scored, expected_findings)
            self.report = report

        self.thread = threading.Thread(target=work, daemon=True)
        self.thread.start()


class _PacedProvider:
    """Sleeps before each completion so millisecond-scale scripted runs stay
    observable (and interruptible) by interactive HTTP clients."""

    def __init__(self, inner, delay: float):
        self.inner = inner
        self.delay = delay

    def complete(self, request):
        time.sleep(self.delay)
        return self.inner.complete(request)


def create_app(
    scenario_directory: str | None = None,
    heartbeat_interval: float = 10.0,
    step_delay: float = 0.0,
) -> FastAPI:
    app = FastAPI(title="opsdiag gateway")
    runs: dict[str, _Run] = {}
    lock = threading.Lock()

    def get_run(session_id: str) -> _Run:
        with lock:
            run = runs.get(session_id)
        if run is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id!r}")
        return run

    @app.get("/scenarios")
    def scenarios() -> list[dict]:
        out = []
        for name in list_scenarios(scenario_directory):
            try:
                scenario = resolve_scenario(name, scenario_directory)
            except ScenarioValidationError:
                continue
            out.append({
                "scenario_id": scenario.scenario_id,
                "description": scenario.description,
                "presets": [p for p in PRESETS if p in scenario.scripts],
            })
        return out

    @app.post("/sessions", status_code=201)
    def create(request: SessionRequest) -> dict:
        if request.preset not in PRESETS:
            raise HTTPException(status_code=400, detail=f"unknown preset {request.preset!r}")
        try:
            scenario = resolve_scenario(request.scenario, scenario_directory)
        except (ScenarioValidationError, FileNotFoundError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        session_id = request.session_id or f"{scenario.scenario_id}-{request.preset}-1"
        with lock:
            if session_id in runs:
                raise HTTPException(status_code=409,
                                    detail=f"session {session_id!r} already exists")
            try:
                runtime = build_runtime(scenario, request.preset, session_id)
            except ValueError as exc:
                raise HTTPException(status_code=400, detail=str(exc)) from exc
            if step_delay > 0:
                runtime.provider = _PacedProvider(runtime.provider, step_delay)
            run = _Run(runtime)
            runs[session_id] = run
        run.start(scenario.expected_findings)
        return {"session_id": session_id, "status": runtime.session.status}

    @app.get("/sessions/{session_id}/events")
    def events(session_id: str, after: int = 0) -> StreamingResponse:
        run = get_run(session_id)

        def lines():
            for event in run.runtime.bus.stream(
                after_seq=after, heartbeat_interval=heartbeat_interval
            ):
                if event is None:
                    yield json.dumps({"kind": "heartbeat"}) + "\n"
                else:
                    yield json.dumps(event.to_dict(), ensure_ascii=False) + "\n"

        return StreamingResponse(lines(), media_type="application/x-ndjson")

    @app.post("/sessions/{session_id}/intervene")
    def intervene(session_id: str, request: InterventionRequest) -> dict:
        run = get_run(session_id)
        try:
            run.runtime.intervene(request.kind, request.text)
        except IllegalTransition as exc:
            raise HTTPException(
                status_code=409,
                detail={"error": str(exc), "status": run.runtime.session.status},
            ) from exc
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return {"session_id": session_id, "status": run.runtime.session.status}

    @app.get("/sessions/{session_id}/report")
    def report(session_id: str) -> dict:
        run = get_run(session_id)
        if run.report is None:
            raise HTTPException(
                status_code=409,
                detail={"error": "run still in progress",
                        "status": run.runtime.session.status},
            )
        return run.report

    @app.get("/sessions/{session_id}")
    def status(session_id: str) -> dict:
        run = get_run(session_id)
        return {
            "session_id": session_id,
            "status": run.runtime.session.status,
            "preset": run.runtime.session.architecture_preset,
        }

    return app


def load_config(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
