#!/usr/bin/env python3
"""Regenerate the shipped scenario fixtures under src/opsdiag/data/scenarios.

The fixtures are deterministic; rerunning this script reproduces them
byte-for-byte.
"""

import json
import os
import shutil

ROOT = os.path.join(os.path.dirname(__file__), "..", "src", "opsdiag", "data", "scenarios")


def tool_call(app, metric, start, end, thought="fetch the monitoring series"):
    return {
        "thought": thought,
        "action": {
            "type": "tool_call",
            "tool": "get_app_metric",
            "arguments": {"app": app, "metric": metric, "start": start, "end": end},
        },
    }


def final(answer, thought="conclude"):
    return {"thought": thought, "action": {"type": "final", "answer": answer}}


def phase_complete(thought="phase done"):
    return {"thought": thought, "action": {"type": "phase_complete", "flag": True}}


def entry(matcher, response, max_uses=None):
    rec = {"matcher": matcher, "response": json.dumps(response, ensure_ascii=False)}
    if max_uses is not None:
        rec["max_uses"] = max_uses
    return rec


def series_csv(start_epoch_iso, count, step_s, value_fn):
    # start given as "YYYY-MM-DDTHH:MM:SSZ"
    from datetime import datetime, timedelta, timezone

    base = datetime.strptime(start_epoch_iso, "%Y-%m-%dT%H:%M:%SZ").replace(tzinfo=timezone.utc)
    lines = ["timestamp,value"]
    for i in range(count):
        ts = (base + timedelta(seconds=step_s * i)).strftime("%Y-%m-%dT%H:%M:%SZ")
        lines.append(f"{ts},{value_fn(i)}")
    return "\n".join(lines) + "\n"


def write(path, content):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        if isinstance(content, (dict, list)):
            json.dump(content, fh, indent=2, ensure_ascii=False)
            fh.write("\n")
        else:
            fh.write(content)


def plan_response(subtasks, thought="decompose the task"):
    return {"thought": thought, "plan": {"subtasks": subtasks}}


def standard_scenario(
    name,
    app,
    metric,
    window_start,
    window_end,
    value_fn,
    trigger,
    task_template,
    task_matcher,
    findings,
    final_answer,
    data_task,
    data_final,
    code_task,
    code_final,
    extra_manifest=None,
    extra_scripts=None,
):
    base = os.path.join(ROOT, name)
    if os.path.isdir(base):
        shutil.rmtree(base)
    write(os.path.join(base, "fixtures", f"{metric}.csv"),
          series_csv(window_start, 21, 15, value_fn))

    call = tool_call(app, metric, window_start, window_end)
    write(os.path.join(base, "scripts", "v1.json"), [
        entry(task_matcher, call, max_uses=1),
        entry(task_matcher, final(final_answer)),
    ])
    write(os.path.join(base, "scripts", "v2.json"), [
        entry(task_matcher, call, max_uses=1),
        entry(task_matcher, phase_complete("root cause located"), max_uses=1),
        entry(task_matcher, final(final_answer)),
    ])
    subtasks = [
        {"id": "t1", "description": data_task,
         "assignee": {"type": "sub_agent", "agent_id": "data-agent", "mode": "team"},
         "depends_on": []},
        {"id": "t2", "description": code_task,
         "assignee": {"type": "sub_agent", "agent_id": "code-agent", "mode": "team"},
         "depends_on": []},
    ]
    write(os.path.join(base, "scripts", "v3.json"), [
        entry(task_matcher, plan_response(subtasks), max_uses=1),
        entry(data_task[:48], call, max_uses=1),
        entry(data_task[:48], final(data_final)),
        entry(code_task[:48], final(code_final)),
    ])
    for fname, content in (extra_scripts or {}).items():
        write(os.path.join(base, "scripts", fname), content)

    manifest = {
        "scenario_id": name,
        "description": f"Simulated incident on {app} ({metric}).",
        "task_template": task_template,
        "trigger": trigger,
        "window": {"start": window_start, "end": window_end},
        "fixtures": {
            "series": [{
                "file": f"fixtures/{metric}.csv",
                "app": app,
                "metric": metric,
                "polarity": "higher_is_worse",
            }],
        },
        "expected_findings": findings,
        "scripts": {
            "v1_basic_react": "scripts/v1.json",
            "v2_phased": "scripts/v2.json",
            "v3_multi_specialist": "scripts/v3.json",
        },
        "supervisor": "sre-agent",
    }
    manifest.update(extra_manifest or {})
    for fname in (extra_scripts or {}):
        manifest["scripts"][fname.removesuffix(".json")] = f"scripts/{fname}"
    write(os.path.join(base, "manifest.json"), manifest)


def gen_trend():
    name = "trend_anonymousapp"
    app, metric = "anonymousapp", "error_rate"
    ws, we = "2025-08-19T15:21:00Z", "2025-08-19T15:26:00Z"
    task = ("Alert on anonymousapp for 'error rate'. Start time: 2025-08-19 15:21:00. "
            "Analyze the monitoring curve trend as of 15:26:00. "
            "Is it worsening or recovering?")
    matcher = "Is it worsening or recovering?"
    legacy = "Legacy detector LGC-4471 concluded the curve is worsening."
    data_task = ("Analyze the fetched error rate trend for anonymousapp and decide "
                 "whether it is worsening or recovering")
    base = os.path.join(ROOT, name)

    dual_analysis = [
        entry("Analyze the monitoring curve trend",
              tool_call(app, metric, ws, we, thought="blind fetch of the series"),
              max_uses=1),
        entry("Analyze the monitoring curve trend",
              final("Blind analysis: the error rate series rises steadily across the window; "
                    "the trend is worsening.")),
    ]
    dual_critic = [
        entry("legacy_conclusion",
              final("Comparison: the blind analysis and the legacy conclusion agree; "
                    "both report a worsening error rate trend.")),
    ]

    standard_scenario(
        name=name,
        app=app,
        metric=metric,
        window_start=ws,
        window_end=we,
        value_fn=lambda i: round(0.031 + 0.003 * i, 3),
        trigger={"source": "log_alarm", "app": app, "severity": "P2",
                 "fired_at": "2025-08-19T15:26:00Z", "payload": "error rate spike"},
        task_template=task,
        task_matcher=matcher,
        findings=["worsening", "error rate"],
        final_answer=("The error rate trend for anonymousapp is worsening over the "
                      "15:21-15:26 window. Recommended action: page the service owner "
                      "and roll back the most recent release."),
        data_task=data_task,
        data_final=("The fetched error rate series rises steadily; the anonymousapp "
                    "error rate trend is worsening."),
        code_task="placeholder",
        code_final="placeholder",
        extra_manifest={
            "blind_fields": ["LGC-4471"],
            "legacy_conclusion": legacy,
            "workflows": ["workflows/trend_fetch.workflow"],
            "fixtures": {
                "series": [{
                    "file": "fixtures/error_rate.csv",
                    "app": app,
                    "metric": metric,
                    "polarity": "higher_is_worse",
                }],
                "logs": ["fixtures/app.log"],
                "corpus": "corpus",
            },
        },
        extra_scripts={"dual_analysis.json": dual_analysis, "dual_critic.json": dual_critic},
    )

    # v3 for the trend case routes the fetch through the workflow engine
    subtasks = [
        {"id": "t1", "description": "Fetch the error rate series for the alert window",
         "assignee": {"type": "workflow", "workflow_id": "trend_fetch"}, "depends_on": []},
        {"id": "t2", "description": data_task,
         "assignee": {"type": "sub_agent", "agent_id": "data-agent", "mode": "team"},
         "depends_on": ["t1"]},
    ]
    write(os.path.join(base, "scripts", "v3.json"), [
        entry(matcher, plan_response(subtasks), max_uses=1),
        entry(data_task[:48],
              tool_call(app, metric, ws, we, thought="inspect the series directly"),
              max_uses=1),
        entry(data_task[:48],
              final("The fetched error rate series rises steadily; the anonymousapp "
                    "error rate trend is worsening.")),
    ])

    write(os.path.join(base, "workflows", "trend_fetch.workflow"), {
        "workflow_id": "trend_fetch",
        "steps": [{
            "step_id": "fetch",
            "tool": "get_app_metric",
            "arguments": {"app": "$task.app", "metric": "$task.metric",
                          "start": "$task.start", "end": "$task.end"},
        }],
    })

    write(os.path.join(base, "fixtures", "app.log"), "".join(
        f"2025-08-19T15:2{1 + i // 4}:{(i % 4) * 15:02d}Z ERROR upstream call failed "
        f"code=502 attempt={i}\n" for i in range(12)
    ))

    write(os.path.join(base, "corpus", "runbook.md"), RUNBOOK_MD)
    write(os.path.join(base, "corpus", "runbook.md.meta.json"),
          {"ttl_hours": 24, "glossary": ["error rate", "anonymousapp"]})


RUNBOOK_MD = """# anonymousapp error rate runbook

## Check the monitoring curve

Fetch the error rate series before paging anyone.

```
get_app_metric app=anonymousapp metric=error_rate
```

## Mitigation

RollbackService handles automated rollbacks. PaymentGateway calls RiskEngine
for every settlement, so a spike there cascades quickly.

```
rollback --app anonymousapp --to last-good
```

## Escalation

Escalate to the owning team when the trend keeps worsening.

```
page oncall anonymousapp
```
"""


def gen_checkout_multi():
    standard_scenario(
        name="checkout_multi",
        app="checkoutapp",
        metric="latency_p99",
        window_start="2025-08-19T10:00:00Z",
        window_end="2025-08-19T10:05:00Z",
        value_fn=lambda i: round(120.0 + 13.0 * i, 1),
        trigger={"source": "app_behavior", "app": "checkoutapp", "severity": "P2",
                 "fired_at": "2025-08-19T10:05:00Z",
                 "payload": "p99 latency climbing on checkout"},
        task_template=("P2 alert on {app}: {payload}. Investigate across the data and "
                       "code domains and state the root cause."),
        task_matcher="Investigate across the data and code domains",
        findings=["connection pool", "timeout", "configuration"],
        final_answer=("checkoutapp latency is worsening because the database connection "
                      "pool is exhausted and requests hit the client timeout; a "
                      "configuration change shrank the pool. Recommended action: restore "
                      "the previous pool size configuration."),
        data_task=("Check checkoutapp latency metrics for the alert window and "
                   "characterize the trend"),
        data_final=("Latency p99 rises monotonically; connection pool wait time dominates "
                    "and requests exceed the timeout."),
        code_task=("Review recent checkoutapp code and configuration changes for a "
                   "plausible cause"),
        code_final=("Change CFG-221 reduced the connection pool size in configuration; "
                    "rolling it back should clear the timeout errors."),
    )


def gen_currency_null():
    standard_scenario(
        name="currency_null",
        app="payapp",
        metric="null_currency_rate",
        window_start="2025-08-19T08:00:00Z",
        window_end="2025-08-19T08:05:00Z",
        value_fn=lambda i: round(0.002 + 0.0015 * i, 4),
        trigger={"source": "log_alarm", "app": "payapp", "severity": "P1",
                 "fired_at": "2025-08-19T08:04:00Z",
                 "payload": "Currency is null in settlement records"},
        task_template="P1 alert on {app}: {payload}. Locate the root cause.",
        task_matcher="Currency is null",
        findings=["null", "currency", "upstream"],
        final_answer=("Settlement records carry a null currency because an upstream "
                      "exchange-rate feed omits the field for new merchants. Recommended "
                      "action: backfill the currency column and add a feed validation."),
        data_task="Quantify how many payapp settlement records have a null currency",
        data_final=("The null currency rate grows through the window; every affected "
                    "record originates from the upstream exchange-rate feed."),
        code_task="Inspect payapp settlement ingestion code for missing currency handling",
        code_final=("Ingestion drops the currency when the upstream feed omits it instead "
                    "of rejecting the record."),
    )


def gen_policy_reject():
    standard_scenario(
        name="policy_reject",
        app="riskapp",
        metric="reject_rate",
        window_start="2025-08-19T09:00:00Z",
        window_end="2025-08-19T09:05:00Z",
        value_fn=lambda i: round(0.01 + 0.004 * i, 3),
        trigger={"source": "app_behavior", "app": "riskapp", "severity": "P2",
                 "fired_at": "2025-08-19T09:03:00Z",
                 "payload": "policy engine returned anti-fraud flag with REJECT"},
        task_template="Alert on {app}: {payload}. Why are transactions rejected?",
        task_matcher="Why are transactions rejected?",
        findings=["REJECT", "policy", "anti-fraud"],
        final_answer=("The riskapp policy engine returns REJECT because a new anti-fraud "
                      "rule misclassifies repeat customers. Recommended action: disable "
                      "rule AF-17 and replay the rejected transactions."),
        data_task="Measure the riskapp reject rate trend over the alert window",
        data_final=("The reject rate climbs across the window; every REJECT carries the "
                    "anti-fraud flag."),
        code_task="Audit recent riskapp policy rule changes",
        code_final=("Policy rule AF-17 shipped yesterday and fires on repeat customers; "
                    "it drives the REJECT decisions."),
    )


def gen_config_mapping():
    standard_scenario(
        name="config_mapping",
        app="dataapp",
        metric="mapping_error_rate",
        window_start="2025-08-19T11:00:00Z",
        window_end="2025-08-19T11:05:00Z",
        value_fn=lambda i: round(0.005 + 0.002 * i, 4),
        trigger={"source": "code_change", "app": "dataapp", "severity": "P3",
                 "fired_at": "2025-08-19T11:02:00Z",
                 "payload": "error code mapping changed for DATA_ITEM_NAME"},
        task_template="Change alert on {app}: {payload}. Assess the impact.",
        task_matcher="Assess the impact.",
        findings=["mapping", "DATA_ITEM_NAME", "configuration"],
        final_answer=("The dataapp error code mapping for DATA_ITEM_NAME was changed by a "
                      "configuration update, so queries resolve to the wrong field. "
                      "Recommended action: revert the mapping configuration entry."),
        data_task="Trace dataapp query failures mentioning DATA_ITEM_NAME",
        data_final=("Mapping errors rise right after the change; failures pinpoint "
                    "DATA_ITEM_NAME in the query flow."),
        code_task="Diff the dataapp mapping configuration before and after the change",
        code_final=("The configuration diff renames the DATA_ITEM_NAME mapping target; "
                    "the old consumers were never migrated."),
    )


def gen_page_oversize():
    standard_scenario(
        name="page_oversize",
        app="webapp",
        metric="page_bytes",
        window_start="2025-08-19T12:00:00Z",
        window_end="2025-08-19T12:05:00Z",
        value_fn=lambda i: round(900_000 + 45_000 * i, 1),
        trigger={"source": "app_behavior", "app": "webapp", "severity": "P3",
                 "fired_at": "2025-08-19T12:05:00Z", "payload": "Page is oversize"},
        task_template="Alert on {app}: {payload}. Find what bloats the page.",
        task_matcher="Find what bloats the page.",
        findings=["oversize", "asset", "bundle"],
        final_answer=("The webapp page is oversize because an uncompressed image asset "
                      "was added to the main bundle. Recommended action: compress the "
                      "asset and split the bundle."),
        data_task="Track the webapp page weight trend across the alert window",
        data_final=("Page bytes grow steadily; the oversize payload correlates with the "
                    "latest deploy."),
        code_task="Identify which webapp asset or bundle grew in the latest deploy",
        code_final=("The deploy added a 4 MB uncompressed hero image to the main bundle; "
                    "that asset alone explains the oversize page."),
    )


def main():
    gen_trend()
    gen_checkout_multi()
    gen_currency_null()
    gen_policy_reject()
    gen_config_mapping()
    gen_page_oversize()
    print(f"scenarios written under {os.path.abspath(ROOT)}")


if __name__ == "__main__":
    main()
