"""Diagnostic session model: append-only transcript, lifecycle state machine,
and memory scoping (private / team / group isolation)."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

from .errors import (
    EmptyTask,
    IllegalTransition,
    OrphanToolResult,
    SessionClosed,
    UnknownAgent,
    UnknownScope,
)
from .llm import canonical_text, count_tokens

MESSAGE_KINDS = {
    "user_task",
    "thought",
    "action",
    "tool_call",
    "tool_result",
    "observation",
    "handoff",
    "report",
    "hitl_intervention",
    "final_answer",
    "summary",
}

PRESETS = ("v1_basic_react", "v2_phased", "v3_multi_specialist")

TERMINAL_STATES = {"completed", "failed", "cancelled"}

LEGAL_TRANSITIONS: dict[str, set[str]] = {
    "pending": {"running"},
    "running": {"awaiting_human", "completed", "failed", "cancelled"},
    "awaiting_human": {"running", "cancelled"},
    "completed": set(),
    "failed": set(),
    "cancelled": set(),
}


@dataclass
class AgentProfile:
    agent_id: str
    display_name: str
    role_description: str = ""
    expertise_tags: set[str] = field(default_factory=set)
    allowed_tools: set[str] = field(default_factory=set)
    reasoning_engine: str = "react"
    sub_agents: list[str] = field(default_factory=list)
    system_prompt: str = ""


@dataclass(frozen=True)
class Message:
    message_id: str
    session_id: str
    sender: str  # agent_id | "user" | "system"
    kind: str
    content: Any  # text or structured payload
    token_count: int
    seq: int
    parent: str | None = None
    recipient: str | None = None  # handoff/report routing target

    def text(self) -> str:
        return canonical_text(self.content)

    def to_dict(self) -> dict:
        d = {
            "message_id": self.message_id,
            "session_id": self.session_id,
            "sender": self.sender,
            "kind": self.kind,
            "content": self.content,
            "token_count": self.token_count,
            "seq": self.seq,
        }
        if self.parent is not None:
            d["parent"] = self.parent
        if self.recipient is not None:
            d["recipient"] = self.recipient
        return d


@dataclass
class MemoryScope:
    scope_id: str
    mode: str  # private | team | group
    members: set[str]
    visible: list[str] = field(default_factory=list)  # message ids, append order

    def contains(self, message_id: str) -> bool:
        return message_id in self._visible_set

    @property
    def _visible_set(self) -> set[str]:
        return set(self.visible)


class TaskSession:
    """One diagnostic task: append-only transcript plus scoped visibility."""

    def __init__(self, session_id: str, root_task: str, preset: str, supervisor: str):
        self.session_id = session_id
        self.root_task = root_task
        self.architecture_preset = preset
        self.supervisor = supervisor
        self.status = "pending"
        self.transcript: list[Message] = []
        self.scopes: dict[str, MemoryScope] = {}
        self.artifacts: list[dict] = []
        self._by_id: dict[str, Message] = {}
        self._scope_counter = 0

    # -- scopes --

    def add_scope(self, mode: str, members: set[str], scope_id: str | None = None) -> MemoryScope:
        if scope_id is None:
            self._scope_counter += 1
            scope_id = f"{mode}-{self._scope_counter}"
        scope = MemoryScope(scope_id=scope_id, mode=mode, members=set(members))
        self.scopes[scope_id] = scope
        return scope

    def group_scope(self) -> MemoryScope:
        for scope in self.scopes.values():
            if scope.mode == "group":
                return scope
        raise UnknownScope(f"session {self.session_id} has no group scope")

    def get_message(self, message_id: str) -> Message | None:
        return self._by_id.get(message_id)

    def next_seq(self) -> int:
        return len(self.transcript) + 1

    def final_answers(self) -> list[Message]:
        return [m for m in self.transcript if m.kind == "final_answer"]


class AgentRegistry:
    """Deployment-wide agent profiles, validated for id uniqueness and acyclic
    sub-agent links."""

    def __init__(self):
        self._profiles: dict[str, AgentProfile] = {}

    def register(self, profile: AgentProfile) -> None:
        if profile.agent_id in self._profiles:
            raise UnknownAgent(f"duplicate agent_id {profile.agent_id!r}")
        self._profiles[profile.agent_id] = profile
        self._check_acyclic(profile.agent_id)

    def get(self, agent_id: str) -> AgentProfile:
        try:
            return self._profiles[agent_id]
        except KeyError:
            raise UnknownAgent(f"unknown agent {agent_id!r}") from None

    def known(self, agent_id: str) -> bool:
        return agent_id in self._profiles

    def all_ids(self) -> list[str]:
        return sorted(self._profiles)

    def _check_acyclic(self, start: str) -> None:
        seen: set[str] = set()
        stack = [start]
        while stack:
            current = stack.pop()
            profile = self._profiles.get(current)
            if profile is None:
                continue
            for sub in profile.sub_agents:
                if sub == start:
                    del self._profiles[start]
                    raise UnknownAgent(f"agent {start!r} is its own transitive sub-agent")
                if sub not in seen:
                    seen.add(sub)
                    stack.append(sub)


def create_session(
    registry: AgentRegistry,
    root_task: str,
    preset: str,
    supervisor: str,
    session_id: str,
) -> TaskSession:
    """Create a pending session seeded with the user task and a group scope."""
    if not root_task:
        raise EmptyTask("root_task must be non-empty")
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}")
    if not registry.known(supervisor):
        raise UnknownAgent(f"unknown supervisor {supervisor!r}")
    session = TaskSession(session_id, root_task, preset, supervisor)
    session.add_scope("group", {supervisor}, scope_id="group")
    append_message(session, sender="user", kind="user_task", content=root_task)
    return session


def append_message(
    session: TaskSession,
    sender: str,
    kind: str,
    content: Any,
    parent: str | None = None,
    recipient: str | None = None,
) -> Message:
    """Append to the transcript and fan the message out to scopes.

    Routing: the message becomes visible in every scope containing its author;
    user/system messages go to group scopes; handoff/report envelopes are also
    delivered to scopes containing the recipient.
    """
    if session.status in TERMINAL_STATES:
        raise SessionClosed(f"session {session.session_id} is {session.status}")
    if kind not in MESSAGE_KINDS:
        raise ValueError(f"unknown message kind {kind!r}")
    if kind == "tool_result":
        parent_msg = session.get_message(parent) if parent else None
        if parent_msg is None or parent_msg.kind != "tool_call":
            raise OrphanToolResult("tool_result requires a tool_call parent")
    seq = session.next_seq()
    message = Message(
        message_id=f"{session.session_id}-m{seq}",
        session_id=session.session_id,
        sender=sender,
        kind=kind,
        content=content,
        token_count=count_tokens(canonical_text(content)),
        seq=seq,
        parent=parent,
        recipient=recipient,
    )
    session.transcript.append(message)
    session._by_id[message.message_id] = message
    for scope in session.scopes.values():
        if _routes_to(scope, message):
            scope.visible.append(message.message_id)
    return message


def _routes_to(scope: MemoryScope, message: Message) -> bool:
    if message.sender in scope.members:
        return True
    if message.sender in ("user", "system") and scope.mode == "group":
        return True
    if message.kind in ("handoff", "report") and message.recipient in scope.members:
        return True
    if message.kind == "tool_result" and message.parent:
        # results ride along with their originating call
        return message.parent in scope._visible_set
    return False


def transition(session: TaskSession, new_status: str) -> TaskSession:
    legal = LEGAL_TRANSITIONS.get(session.status)
    if legal is None:
        raise IllegalTransition(f"unknown status {session.status!r}")
    if new_status not in legal:
        raise IllegalTransition(f"illegal transition from {session.status} to {new_status}")
    session.status = new_status
    return session


def visible_messages(session: TaskSession, scope_id: str) -> list[Message]:
    scope = session.scopes.get(scope_id)
    if scope is None:
        raise UnknownScope(f"unknown scope {scope_id!r}")
    wanted = scope._visible_set
    return [m for m in session.transcript if m.message_id in wanted]


def snapshot(session: TaskSession) -> dict:
    """Canonical serializable view of a session (stable field order)."""
    return {
        "session_id": session.session_id,
        "root_task": session.root_task,
        "architecture_preset": session.architecture_preset,
        "supervisor": session.supervisor,
        "status": session.status,
        "transcript": [m.to_dict() for m in session.transcript],
        "scopes": [
            {
                "scope_id": s.scope_id,
                "mode": s.mode,
                "members": sorted(s.members),
                "visible": list(s.visible),
            }
            for s in session.scopes.values()
        ],
        "artifacts": session.artifacts,
    }


def snapshot_text(session: TaskSession) -> str:
    return json.dumps(snapshot(session), indent=2, ensure_ascii=False, sort_keys=False)
