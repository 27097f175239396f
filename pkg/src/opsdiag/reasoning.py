"""Pluggable reasoning engines: the ReAct loop, the phased (SOP) mode, the
summarizer, and the strict JSON action grammar every model output must satisfy.

Model outputs carry exactly one embedded JSON object of the shape
{"thought": ..., "action": {"type": ..., ...}}; the first well-formed
occurrence wins.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Sequence

from .context import ContextPolicy, assemble, window_to_chat
from .errors import (
    DisallowedTool,
    DisallowedVariant,
    MalformedAction,
    PhaseStepLimit,
    StepLimitExceeded,
)
from .llm import ChatMessage
from .session import AgentProfile, Message

ACTION_VARIANTS = ("tool_call", "handoff", "phase_complete", "final")

DEFAULT_MAX_STEPS = 25
DEFAULT_PHASE_MAX_STEPS = 8

GRAMMAR_REMINDER = (
    'Respond with exactly one JSON object of the form '
    '{"thought": "...", "action": {"type": "tool_call|handoff|phase_complete|final", ...}}.'
)


@dataclass(frozen=True)
class AgentAction:
    thought: str
    variant: str
    tool: str | None = None
    arguments: dict | None = None
    target: str | None = None
    task: str | None = None
    flag: bool = True
    answer: str | None = None

    def to_payload(self) -> dict:
        payload: dict = {"thought": self.thought, "type": self.variant}
        if self.variant == "tool_call":
            payload.update(tool=self.tool, arguments=self.arguments)
        elif self.variant == "handoff":
            payload.update(target=self.target, task=self.task)
        elif self.variant == "final":
            payload.update(answer=self.answer)
        return payload


def _iter_json_objects(text: str):
    decoder = json.JSONDecoder()
    idx = text.find("{")
    while idx != -1:
        try:
            obj, _end = decoder.raw_decode(text[idx:])
        except json.JSONDecodeError:
            idx = text.find("{", idx + 1)
            continue
        if isinstance(obj, dict):
            yield obj
        idx = text.find("{", idx + 1)


def parse_action(output: str, allowed_tools: set[str] | None = None) -> AgentAction:
    """Extract and validate the first well-formed action object in the output."""
    for obj in _iter_json_objects(output):
        if "thought" not in obj or not isinstance(obj.get("action"), dict):
            continue
        action = obj["action"]
        variant = action.get("type")
        if variant not in ACTION_VARIANTS:
            continue
        thought = str(obj["thought"])
        if variant == "tool_call":
            tool = action.get("tool")
            arguments = action.get("arguments", {})
            if not isinstance(tool, str) or not isinstance(arguments, dict):
                raise MalformedAction("tool_call needs a tool name and an arguments object")
            if allowed_tools is not None and tool not in allowed_tools:
                raise DisallowedTool(f"tool {tool!r} is not in the agent's allowed_tools")
            return AgentAction(thought=thought, variant="tool_call", tool=tool, arguments=arguments)
        if variant == "handoff":
            target, task = action.get("target"), action.get("task")
            if not isinstance(target, str) or not isinstance(task, str):
                raise MalformedAction("handoff needs target and task")
            return AgentAction(thought=thought, variant="handoff", target=target, task=task)
        if variant == "phase_complete":
            return AgentAction(thought=thought, variant="phase_complete",
                               flag=bool(action.get("flag", True)))
        if variant == "final":
            answer = action.get("answer")
            if not isinstance(answer, str):
                raise MalformedAction("final needs an answer")
            return AgentAction(thought=thought, variant="final", answer=answer)
    raise MalformedAction("no well-formed action object in model output")


@dataclass
class SopPhase:
    name: str
    prompt_template: str
    allowed_variants: set[str]
    max_steps: int = DEFAULT_PHASE_MAX_STEPS


@dataclass
class SopPlan:
    plan_id: str
    phases: list[SopPhase]

    def __post_init__(self):
        if not self.phases:
            raise ValueError("a plan needs at least one phase")
        for phase in self.phases:
            if not ({"phase_complete", "final"} & phase.allowed_variants):
                raise ValueError(f"phase {phase.name!r} allows no terminal variant")

    @classmethod
    def from_dict(cls, obj: dict) -> "SopPlan":
        return cls(
            plan_id=obj["plan_id"],
            phases=[
                SopPhase(
                    name=p["name"],
                    prompt_template=p.get("prompt_template", ""),
                    allowed_variants=set(p.get("allowed_variants", list(ACTION_VARIANTS))),
                    max_steps=p.get("max_steps", DEFAULT_PHASE_MAX_STEPS),
                )
                for p in obj["phases"]
            ],
        )


def load_plan(path) -> SopPlan:
    with open(path, "r", encoding="utf-8") as fh:
        return SopPlan.from_dict(json.load(fh))


ENGINE_KINDS = ("react", "sop", "summarizer", "rl_dynamic_stub")


# Append callback contract: append(sender, kind, content, parent=None) -> Message
AppendFn = Callable[..., Message]


def _complete_and_parse(provider, request, allowed_tools) -> tuple[AgentAction, int]:
    """One completion with a single grammar-repair retry.

    Returns the action and how many retries were spent (part of the replay
    record).
    """
    response = provider.complete(request)
    try:
        return parse_action(response.text, allowed_tools), 0
    except MalformedAction:
        repaired = list(request.messages)
        repaired.append(ChatMessage(role="user", content=GRAMMAR_REMINDER))
        request.messages = repaired
        response = provider.complete(request)
        return parse_action(response.text, allowed_tools), 1


def react_step(
    agent: AgentProfile,
    visible: Sequence[Message],
    policy: ContextPolicy,
    provider,
    tool_client,
    append: AppendFn,
    extra_system: str = "",
) -> AgentAction:
    """One Think -> Act -> Observe cycle.

    tool_call actions execute via the tool client and the observation is
    appended; handoff/final/phase_complete are returned to the caller
    unexecuted.
    """
    system_prompt = agent.system_prompt
    if extra_system:
        system_prompt = f"{extra_system}\n{system_prompt}" if system_prompt else extra_system
    window = assemble(visible, policy, system_prompt=system_prompt)
    request = window_to_chat(window)
    action, retries = _complete_and_parse(provider, request, agent.allowed_tools)
    if action.variant == "tool_call":
        call_msg = append(
            agent.agent_id,
            "tool_call",
            {"thought": action.thought, "tool": action.tool, "arguments": action.arguments,
             "retries": retries},
        )
        result = tool_client.call_tool(action.tool, action.arguments or {})
        append(
            agent.agent_id,
            "tool_result",
            {"content": result.content, "is_error": result.is_error},
            parent=call_msg.message_id,
        )
    else:
        append(agent.agent_id, "thought",
               {"thought": action.thought, "action": action.to_payload(), "retries": retries})
    return action


def run_react(
    agent: AgentProfile,
    get_visible: Callable[[], list[Message]],
    policy: ContextPolicy,
    provider,
    tool_client,
    append: AppendFn,
    max_steps: int = DEFAULT_MAX_STEPS,
    step_boundary: Callable[[], None] | None = None,
) -> AgentAction:
    """Loop react_step until the agent hands off or answers."""
    for _ in range(max_steps):
        if step_boundary is not None:
            step_boundary()
        action = react_step(agent, get_visible(), policy, provider, tool_client, append)
        if action.variant in ("handoff", "final"):
            return action
    raise StepLimitExceeded(f"agent {agent.agent_id} exceeded {max_steps} steps")


def run_sop(
    agent: AgentProfile,
    plan: SopPlan,
    get_visible: Callable[[], list[Message]],
    policy: ContextPolicy,
    provider,
    tool_client,
    append: AppendFn,
    on_phase: Callable[[int, SopPhase], None] | None = None,
    step_boundary: Callable[[], None] | None = None,
) -> AgentAction:
    """Advance through the plan's phases; each phase constrains the action
    variants and prepends its prompt template as a system segment."""
    for index, phase in enumerate(plan.phases):
        if on_phase is not None:
            on_phase(index, phase)
        last_phase = index == len(plan.phases) - 1
        for _ in range(phase.max_steps):
            if step_boundary is not None:
                step_boundary()
            action = _sop_step(agent, phase, get_visible(), policy, provider, tool_client, append)
            if action.variant == "phase_complete":
                break
            if action.variant == "final":
                if not last_phase and "final" not in phase.allowed_variants:
                    raise DisallowedVariant(
                        f"final is not allowed in phase {phase.name!r}")
                return action
            if action.variant == "handoff":
                return action
        else:
            raise PhaseStepLimit(f"phase {phase.name!r} exceeded {phase.max_steps} steps")
    raise PhaseStepLimit("plan finished without a final answer")


def _sop_step(agent, phase, visible, policy, provider, tool_client, append) -> AgentAction:
    for attempt in range(2):
        action = react_step(
            agent, visible, policy, provider, tool_client, append,
            extra_system=phase.prompt_template,
        )
        if action.variant in phase.allowed_variants:
            return action
        if attempt == 0:
            continue  # one retry, counts as a malformed step
        raise DisallowedVariant(
            f"variant {action.variant!r} is outside phase {phase.name!r}'s allowed set")
    raise AssertionError("unreachable")


def summarize_run(
    visible: Sequence[Message],
    provider=None,
    policy: ContextPolicy | None = None,
) -> str:
    """Produce the run report: provider text when available, else the
    deterministic template (task restatement, one line per tool result,
    final answer)."""
    if not visible:
        raise ValueError("summarize_run needs a nonempty transcript")
    if provider is not None:
        policy = policy or ContextPolicy(budget_tokens=8192, output_reserve_tokens=1024)
        window = assemble(visible, policy, system_prompt="Summarize the diagnostic run.")
        response = provider.complete(window_to_chat(window))
        return response.text
    lines = []
    for m in visible:
        if m.kind == "user_task":
            lines.append(f"Task: {m.text()}")
    for m in visible:
        if m.kind == "tool_result":
            parent = m.parent or "?"
            lines.append(f"Evidence {m.message_id} (from {parent}): {m.text()[:120]}")
    for m in visible:
        if m.kind == "report":
            content = m.content if isinstance(m.content, dict) else {}
            conclusion = content.get("conclusion", "")
            if conclusion:
                lines.append(f"Subtask conclusion [{m.message_id}]: {conclusion}")
    finals = [m for m in visible if m.kind == "final_answer"]
    if finals:
        lines.append(f"Final answer: {finals[-1].text()}")
    return "\n".join(lines)


class RlDynamicStub:
    """Reserved engine slot; refuses to run."""

    def __getattr__(self, _name):
        raise NotImplementedError("the RL dynamic engine is a reserved slot and cannot run")
