"""Incident simulation: scenario fixtures, trigger firing, the least-squares
trend verdict, and the substring scoring rubric standing in for human grading.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from .errors import InsufficientPoints, ScenarioValidationError
from .mcp.monitor import TimeSeries, parse_ts
from .session import AgentRegistry, TaskSession, create_session

ALARM_SOURCES = ("log_alarm", "app_behavior", "env_change", "code_change")
SEVERITIES = ("P1", "P2", "P3", "P4")

DEFAULT_DRIFT_THRESHOLD = 0.05


@dataclass
class AlarmEvent:
    source: str
    app: str
    severity: str
    fired_at: str
    payload: str = ""

    def __post_init__(self):
        if self.source not in ALARM_SOURCES:
            raise ValueError(f"unknown alarm source {self.source!r}")
        if self.severity not in SEVERITIES:
            raise ValueError(f"unknown severity {self.severity!r}")


@dataclass
class Scenario:
    scenario_id: str
    directory: str
    description: str
    task_template: str
    trigger: AlarmEvent
    series: list[TimeSeries]
    log_files: list[str] = field(default_factory=list)
    corpus_dir: str | None = None
    expected_findings: list[str] = field(default_factory=list)
    blind_fields: list[str] = field(default_factory=list)
    legacy_conclusion: str = ""
    scripts: dict[str, str] = field(default_factory=dict)  # role/preset -> path
    sop_plan: str | None = None
    workflows: list[str] = field(default_factory=list)
    drift_threshold: float = DEFAULT_DRIFT_THRESHOLD
    supervisor: str = "sre-agent"
    window: dict | None = None  # {"start": ..., "end": ...}

    def render_task(self) -> str:
        class _Fields(dict):
            def __missing__(self, key):
                return "{" + key + "}"

        return self.task_template.format_map(
            _Fields(
                app=self.trigger.app,
                payload=self.trigger.payload,
                severity=self.trigger.severity,
                fired_at=self.trigger.fired_at,
                source=self.trigger.source,
            )
        )


def load_series_csv(path: str, app: str, metric: str, polarity: str) -> TimeSeries:
    points = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("timestamp"):
                continue
            ts, value = line.split(",", 1)
            points.append((ts.strip(), float(value)))
    return TimeSeries(app=app, metric=metric, points=points, polarity=polarity)


def load_scenario(path: str | os.PathLike) -> Scenario:
    """Load and cross-check a scenario directory; every broken reference is
    reported."""
    directory = os.fspath(path)
    problems: list[str] = []
    manifest_path = os.path.join(directory, "manifest.json")
    if not os.path.isfile(manifest_path):
        raise ScenarioValidationError([f"missing manifest: {manifest_path}"])
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)

    series: list[TimeSeries] = []
    for rec in manifest.get("fixtures", {}).get("series", []):
        file_path = os.path.join(directory, rec["file"])
        if not os.path.isfile(file_path):
            problems.append(f"missing series fixture: {rec['file']}")
            continue
        try:
            series.append(
                load_series_csv(file_path, rec["app"], rec["metric"],
                                rec.get("polarity", "higher_is_worse"))
            )
        except (ValueError, KeyError) as exc:
            problems.append(f"bad series fixture {rec['file']}: {exc}")

    log_files = []
    for rel in manifest.get("fixtures", {}).get("logs", []):
        file_path = os.path.join(directory, rel)
        if not os.path.isfile(file_path):
            problems.append(f"missing log fixture: {rel}")
        else:
            log_files.append(file_path)

    corpus_dir = None
    corpus_rel = manifest.get("fixtures", {}).get("corpus")
    if corpus_rel:
        corpus_dir = os.path.join(directory, corpus_rel)
        if not os.path.isdir(corpus_dir):
            problems.append(f"missing corpus directory: {corpus_rel}")
            corpus_dir = None

    scripts = {}
    for role, rel in manifest.get("scripts", {}).items():
        file_path = os.path.join(directory, rel)
        if not os.path.isfile(file_path):
            problems.append(f"missing script: {rel}")
        else:
            scripts[role] = file_path

    sop_plan = manifest.get("sop_plan")
    if sop_plan:
        sop_path = os.path.join(directory, sop_plan)
        if not os.path.isfile(sop_path):
            problems.append(f"missing SOP plan: {sop_plan}")
            sop_plan = None
        else:
            sop_plan = sop_path

    workflows = []
    for rel in manifest.get("workflows", []):
        file_path = os.path.join(directory, rel)
        if not os.path.isfile(file_path):
            problems.append(f"missing workflow: {rel}")
        else:
            workflows.append(file_path)

    try:
        trigger = AlarmEvent(**manifest["trigger"])
    except (KeyError, TypeError, ValueError) as exc:
        problems.append(f"bad trigger: {exc}")
        trigger = None

    if trigger is not None and series:
        fired = parse_ts(trigger.fired_at)
        lo = min(parse_ts(s.points[0][0]) for s in series)
        hi = max(parse_ts(s.points[-1][0]) for s in series)
        if not (lo <= fired <= hi):
            problems.append("trigger fired_at outside fixture time range")

    scenario = None
    if trigger is not None:
        scenario = Scenario(
            scenario_id=manifest.get("scenario_id", os.path.basename(directory)),
            directory=directory,
            description=manifest.get("description", ""),
            task_template=manifest.get("task_template", ""),
            trigger=trigger,
            series=series,
            log_files=log_files,
            corpus_dir=corpus_dir,
            expected_findings=list(manifest.get("expected_findings", [])),
            blind_fields=list(manifest.get("blind_fields", [])),
            legacy_conclusion=manifest.get("legacy_conclusion", ""),
            scripts=scripts,
            sop_plan=sop_plan,
            workflows=workflows,
            drift_threshold=manifest.get("drift_threshold", DEFAULT_DRIFT_THRESHOLD),
            supervisor=manifest.get("supervisor", "sre-agent"),
            window=manifest.get("window"),
        )
        if not scenario.render_task().strip():
            problems.append("task_template renders empty")
    if problems:
        raise ScenarioValidationError(problems)
    assert scenario is not None
    return scenario


def fire_trigger(
    scenario: Scenario,
    preset: str,
    registry: AgentRegistry,
    session_id: str,
) -> TaskSession:
    """Render the trigger into a task and open a session; fixtures are never
    mutated, so firing is idempotent on the scenario."""
    task = scenario.render_task()
    return create_session(registry, task, preset, scenario.supervisor, session_id)


def trend_verdict(
    series: TimeSeries,
    window: tuple[str, str] | None = None,
    threshold: float = DEFAULT_DRIFT_THRESHOLD,
) -> str:
    """Least-squares trend over the window: relative drift r = slope * span /
    max(|mean|, 1e-9); beyond +/- threshold the verdict is worsening or
    recovering (flipped for higher_is_better metrics), else stable."""
    windowed = series.window(*window) if window else series
    points = windowed.points
    if len(points) < 2:
        raise InsufficientPoints("trend analysis needs at least 2 points in the window")
    t0 = parse_ts(points[0][0])
    xs = [parse_ts(ts) - t0 for ts, _ in points]
    ys = [value for _, value in points]
    n = len(points)
    mean_x = sum(xs) / n
    mean_y = sum(ys) / n
    sxx = sum((x - mean_x) ** 2 for x in xs)
    sxy = sum((x - mean_x) * (y - mean_y) for x, y in zip(xs, ys))
    slope = sxy / sxx if sxx else 0.0
    duration = xs[-1] - xs[0]
    drift = slope * duration / max(abs(mean_y), 1e-9)
    if series.polarity == "higher_is_better":
        drift = -drift
    if drift > threshold:
        return "worsening"
    if drift < -threshold:
        return "recovering"
    return "stable"


def score_report(report_text: str, expected_findings: list[str]) -> int:
    """100-point substring rubric, rounded half-up."""
    if not expected_findings:
        raise ValueError("expected_findings must be nonempty")
    text = report_text.lower()
    matched = sum(1 for label in expected_findings if label.lower() in text)
    score = 100.0 * matched / len(expected_findings)
    return int(score + 0.5)
