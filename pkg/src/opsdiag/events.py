"""Visualization event stream: per-session append-only buffers with gapless
sequence numbers and resumable reads."""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass
from typing import Any, Iterator

from .errors import InvalidReference

EVENT_KINDS = {
    "status_changed",
    "plan_created",
    "agent_started",
    "thought",
    "tool_call",
    "tool_result",
    "handoff",
    "report_distilled",
    "hitl_requested",
    "hitl_received",
    "final_report",
    "warning",
}

# kinds whose payload must reference an existing transcript message
MESSAGE_BACKED_KINDS = {"thought", "tool_call", "tool_result", "handoff"}

TERMINAL_STATUSES = {"completed", "failed", "cancelled"}


@dataclass(frozen=True)
class VizEvent:
    seq: int
    session_id: str
    kind: str
    payload: dict
    agent_id: str | None = None
    ts: float = 0.0

    def to_dict(self) -> dict:
        d: dict[str, Any] = {
            "seq": self.seq,
            "session_id": self.session_id,
            "kind": self.kind,
            "payload": self.payload,
        }
        if self.agent_id is not None:
            d["agent_id"] = self.agent_id
        d["ts"] = self.ts
        return d


class EventBus:
    """Append-only event buffer for one session.

    Emission is serialized through the session owner; readers see an immutable
    prefix and can resume from any sequence number without loss.
    """

    def __init__(self, session_id: str, message_exists=None):
        self.session_id = session_id
        self._events: list[VizEvent] = []
        self._lock = threading.Lock()
        self._new_event = threading.Condition(self._lock)
        self._message_exists = message_exists or (lambda _mid: True)
        self._closed = False
        self._saw_final_report = False
        self._saw_terminal = False

    def emit(self, kind: str, payload: dict, agent_id: str | None = None) -> VizEvent:
        if kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {kind!r}")
        if kind in MESSAGE_BACKED_KINDS:
            mid = payload.get("message_id")
            if not mid or not self._message_exists(mid):
                raise InvalidReference(f"event {kind} references unknown message {mid!r}")
        with self._new_event:
            event = VizEvent(
                seq=len(self._events) + 1,
                session_id=self.session_id,
                kind=kind,
                payload=payload,
                agent_id=agent_id,
                ts=time.time(),
            )
            self._events.append(event)
            if kind == "final_report":
                self._saw_final_report = True
            if kind == "status_changed" and payload.get("to") in TERMINAL_STATUSES:
                self._saw_terminal = True
            if self._saw_final_report and self._saw_terminal:
                self._closed = True
            self._new_event.notify_all()
            return event

    @property
    def closed(self) -> bool:
        return self._closed

    def events(self, after_seq: int = 0) -> list[VizEvent]:
        with self._lock:
            return self._events[after_seq:]

    def stream(
        self,
        after_seq: int = 0,
        heartbeat_interval: float = 10.0,
        poll_timeout: float = 0.1,
    ) -> Iterator[VizEvent | None]:
        """Yield events in order from after_seq; None marks a heartbeat.

        Terminates once the session emitted its final report and reached a
        terminal status.
        """
        cursor = after_seq
        idle_since = time.monotonic()
        while True:
            with self._new_event:
                batch = self._events[cursor:]
                if not batch and not self._closed:
                    self._new_event.wait(timeout=poll_timeout)
                    batch = self._events[cursor:]
                done = self._closed
            for event in batch:
                cursor = event.seq
                idle_since = time.monotonic()
                yield event
            if done and cursor >= len(self.events()):
                return
            if not batch and time.monotonic() - idle_since >= heartbeat_interval:
                idle_since = time.monotonic()
                yield None
