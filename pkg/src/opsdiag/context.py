"""Context engineering: budgeted context assembly under configurable policies,
summary-based history compression, and structured report distillation.

All operations are pure over immutable snapshots and have deterministic
fallbacks so full runs need no live model.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from typing import Sequence

from .errors import BudgetInfeasible, DistillGrammarError
from .llm import ChatMessage, ChatRequest, count_tokens
from .session import Message

SEGMENT_CLASSES = (
    "system_profile",
    "user_query",
    "final_reasoning",
    "recent_turn",
    "old_turn",
    "tool_output",
    "knowledge_snippet",
    "hitl_guidance",
)

# ascending eviction priority; user_query is a non-evictable floor
EVICTION_PRIORITY = (
    "old_turn",
    "tool_output",
    "knowledge_snippet",
    "recent_turn",
    "hitl_guidance",
    "final_reasoning",
    "system_profile",
)

TRUNCATION_MARKER = "…[truncated]"

_SENTENCE_SPLIT = re.compile(r"(?<=[.?!])\s+|\n+")


@dataclass(frozen=True)
class Strategy:
    kind: str  # keep_full | truncate | summarize | drop
    max_tokens: int | None = None

    @classmethod
    def parse(cls, spec: str) -> "Strategy":
        if spec.startswith("truncate:"):
            return cls("truncate", max_tokens=int(spec.split(":", 1)[1]))
        if spec in ("keep_full", "summarize", "drop"):
            return cls(spec)
        raise ValueError(f"unknown strategy {spec!r}")


DEFAULT_RULES = {
    "system_profile": Strategy("keep_full"),
    "user_query": Strategy("keep_full"),
    "final_reasoning": Strategy("keep_full"),
    "recent_turn": Strategy("keep_full"),
    "old_turn": Strategy("summarize"),
    "tool_output": Strategy("truncate", max_tokens=256),
    "knowledge_snippet": Strategy("truncate", max_tokens=256),
    "hitl_guidance": Strategy("keep_full"),
}


@dataclass
class ContextPolicy:
    budget_tokens: int
    output_reserve_tokens: int = 0
    rules: dict[str, Strategy] = field(default_factory=lambda: dict(DEFAULT_RULES))
    recent_turn_count: int = 6

    def __post_init__(self):
        if self.budget_tokens <= self.output_reserve_tokens:
            raise ValueError("budget_tokens must exceed output_reserve_tokens")
        merged = dict(DEFAULT_RULES)
        merged.update(self.rules)
        merged["user_query"] = Strategy("keep_full")  # non-configurable floor
        self.rules = merged

    @property
    def usable_budget(self) -> int:
        return self.budget_tokens - self.output_reserve_tokens

    @classmethod
    def from_dict(cls, obj: dict) -> "ContextPolicy":
        rules = {k: Strategy.parse(v) for k, v in obj.get("rules", {}).items()}
        return cls(
            budget_tokens=obj["budget_tokens"],
            output_reserve_tokens=obj.get("output_reserve_tokens", 0),
            rules=rules,
            recent_turn_count=obj.get("recent_turn_count", 6),
        )


def load_policies(path) -> dict[str, ContextPolicy]:
    """Policy file: JSON object keyed by policy name."""
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    return {name: ContextPolicy.from_dict(rec) for name, rec in obj.items()}


@dataclass(frozen=True)
class Segment:
    cls: str
    message_ids: tuple[str, ...]
    text: str
    token_count: int
    seq: int  # ordering key within class (source seq; 0 for profile)


@dataclass
class ContextWindow:
    segments: list[Segment]

    @property
    def total_tokens(self) -> int:
        return sum(s.token_count for s in self.segments)

    def render(self) -> str:
        return "\n".join(s.text for s in self.segments)

    def texts(self, cls: str) -> list[str]:
        return [s.text for s in self.segments if s.cls == cls]


@dataclass
class DistilledReport:
    key_findings: list[str]
    confidence: float
    evidence_pointers: list[str]
    conclusion: str

    def __post_init__(self):
        self.confidence = min(1.0, max(0.0, self.confidence))
        if not self.key_findings:
            raise ValueError("key_findings must be nonempty")

    def to_dict(self) -> dict:
        return {
            "key_findings": self.key_findings,
            "confidence": self.confidence,
            "evidence_pointers": self.evidence_pointers,
            "conclusion": self.conclusion,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "DistilledReport":
        return cls(
            key_findings=list(obj["key_findings"]),
            confidence=float(obj["confidence"]),
            evidence_pointers=list(obj.get("evidence_pointers", [])),
            conclusion=obj.get("conclusion", ""),
        )


def split_sentences(text: str) -> list[str]:
    parts = [p.strip() for p in _SENTENCE_SPLIT.split(text)]
    return [p for p in parts if p]


def truncate_text(text: str, max_tokens: int) -> str:
    """Cut at a character boundary and append the truncation marker; the
    result always fits in max_tokens."""
    if count_tokens(text) <= max_tokens:
        return text
    marker_bytes = len(TRUNCATION_MARKER.encode("utf-8"))
    byte_budget = max_tokens * 4 - marker_bytes
    if byte_budget <= 0:
        return ""
    cut = text.encode("utf-8")[:byte_budget].decode("utf-8", errors="ignore")
    return cut + TRUNCATION_MARKER


def extractive_summary(text: str, target_tokens: int) -> str:
    """Deterministic fallback summary: first plus last sentence, truncated."""
    sentences = split_sentences(text)
    if not sentences:
        summary = text.strip()
    elif len(sentences) == 1:
        summary = sentences[0]
    else:
        summary = f"{sentences[0]} {sentences[-1]}"
    return truncate_text(summary, target_tokens)


def compression_target(source_tokens: int) -> int:
    return max(32, math.ceil(0.25 * source_tokens))


def classify(messages: Sequence[Message], recent_turn_count: int) -> list[tuple[Message, str]]:
    """Map each transcript message to its segment class."""
    fixed: dict[str, str] = {}
    turn_ids: list[str] = []
    for m in messages:
        if m.kind in ("user_task", "handoff"):
            # a handoff envelope is the task statement for its recipient
            fixed[m.message_id] = "user_query"
        elif m.kind == "hitl_intervention":
            fixed[m.message_id] = "hitl_guidance"
        elif m.kind == "tool_result":
            fixed[m.message_id] = "tool_output"
        elif m.kind in ("final_answer", "report"):
            fixed[m.message_id] = "final_reasoning"
        elif m.kind == "observation" and isinstance(m.content, dict) and m.content.get("source") == "knowledge":
            fixed[m.message_id] = "knowledge_snippet"
        elif m.kind == "summary":
            fixed[m.message_id] = "old_turn"
        else:
            turn_ids.append(m.message_id)
    recent = set(turn_ids[-recent_turn_count:]) if recent_turn_count > 0 else set()
    out = []
    for m in messages:
        cls = fixed.get(m.message_id)
        if cls is None:
            cls = "recent_turn" if m.message_id in recent else "old_turn"
        out.append((m, cls))
    return out


def assemble(
    messages: Sequence[Message],
    policy: ContextPolicy,
    system_prompt: str = "",
    summarizer=None,
) -> ContextWindow:
    """Build a budgeted context window from a visible transcript.

    Segment order: system profile, user query, knowledge snippets, then the
    remaining transcript in sequence order (old-turn summaries before recent
    turns), with HITL guidance last. Over budget, segments are evicted by
    ascending class priority, oldest first within a class; the user query is
    never evicted.
    """
    classified = classify(messages, policy.recent_turn_count)

    segments: list[Segment] = []
    if system_prompt:
        segments.append(_make_segment("system_profile", (), system_prompt, 0, policy, summarizer))
    header_classes = ("user_query", "knowledge_snippet")
    for wanted in header_classes:
        for m, cls in classified:
            if cls == wanted:
                seg = _apply_strategy(m, cls, policy, summarizer)
                if seg is not None:
                    segments.append(seg)
    for m, cls in classified:
        if cls in header_classes or cls == "hitl_guidance":
            continue
        seg = _apply_strategy(m, cls, policy, summarizer)
        if seg is not None:
            segments.append(seg)
    for m, cls in classified:
        if cls == "hitl_guidance":
            seg = _apply_strategy(m, cls, policy, summarizer)
            if seg is not None:
                segments.append(seg)

    budget = policy.usable_budget
    query_tokens = sum(s.token_count for s in segments if s.cls == "user_query")
    if query_tokens > budget:
        raise BudgetInfeasible(
            f"user query needs {query_tokens} tokens but only {budget} are available"
        )

    total = sum(s.token_count for s in segments)
    while total > budget:
        victim = _pick_victim(segments)
        if victim is None:
            break  # only the query floor remains; guaranteed to fit
        segments.remove(victim)
        total -= victim.token_count
    return ContextWindow(segments=segments)


def _make_segment(cls, message_ids, text, seq, policy, summarizer) -> Segment:
    return Segment(cls=cls, message_ids=tuple(message_ids), text=text,
                   token_count=count_tokens(text), seq=seq)


def _apply_strategy(m: Message, cls: str, policy: ContextPolicy, summarizer) -> Segment | None:
    strategy = policy.rules[cls]
    text = m.text()
    if strategy.kind == "drop":
        return None
    if strategy.kind == "truncate":
        text = truncate_text(text, strategy.max_tokens or 0)
    elif strategy.kind == "summarize" and m.kind != "summary":
        target = compression_target(m.token_count)
        if summarizer is not None:
            text = truncate_text(summarizer(text), target)
        else:
            text = extractive_summary(text, target)
    return Segment(cls=cls, message_ids=(m.message_id,), text=text,
                   token_count=count_tokens(text), seq=m.seq)


def _pick_victim(segments: list[Segment]) -> Segment | None:
    for cls in EVICTION_PRIORITY:
        candidates = [s for s in segments if s.cls == cls]
        if candidates:
            return min(candidates, key=lambda s: s.seq)
    return None


def window_to_chat(
    window: ContextWindow,
    tool_schemas: list[dict] | None = None,
    max_output_tokens: int = 1024,
) -> ChatRequest:
    """Render a window into the two-message chat shape providers consume."""
    system_parts = [s.text for s in window.segments if s.cls == "system_profile"]
    user_parts = [s.text for s in window.segments if s.cls != "system_profile"]
    messages = []
    if system_parts:
        messages.append(ChatMessage(role="system", content="\n".join(system_parts)))
    messages.append(ChatMessage(role="user", content="\n".join(user_parts)))
    return ChatRequest(messages=messages, tool_schemas=tool_schemas or [],
                       max_output_tokens=max_output_tokens)


def compress_history(old_turns: Sequence[Message], summarizer=None) -> tuple[str, int]:
    """Compress old turns into one summary text; returns (text, target_tokens).

    Fallback path extracts the first and last sentence of each turn; the
    provider path delegates to the summarizer and truncates to the same
    target. Never fails.
    """
    if not old_turns:
        raise ValueError("compress_history needs at least one old turn")
    source_tokens = sum(m.token_count for m in old_turns)
    target = compression_target(source_tokens)
    if summarizer is not None:
        try:
            text = summarizer("\n".join(m.text() for m in old_turns))
            return truncate_text(text, target), target
        except Exception:
            pass  # deterministic fallback below
    pieces = []
    for m in old_turns:
        sentences = split_sentences(m.text())
        if not sentences:
            continue
        if len(sentences) == 1:
            pieces.append(sentences[0])
        else:
            pieces.append(f"{sentences[0]} {sentences[-1]}")
    return truncate_text("\n".join(pieces), target), target


def distill(
    report_text: str,
    transcript: Sequence[Message],
    finding_labels: Sequence[str] = (),
    structured_provider=None,
) -> DistilledReport:
    """Distill a sub-agent report into the structured boundary object.

    Provider path expects a JSON object matching the report grammar and gets
    one repair retry; fallback path is rule-based over the report text and
    labels. Evidence pointers are always validated against the transcript.
    """
    if not report_text:
        raise ValueError("report text must be non-empty")
    known_ids = {m.message_id for m in transcript}
    tool_result_ids = [m.message_id for m in transcript if m.kind == "tool_result"]

    if structured_provider is not None:
        for attempt in range(2):
            raw = structured_provider(report_text, repair=attempt > 0)
            try:
                obj = json.loads(raw)
                report = DistilledReport.from_dict(obj)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                continue
            report.evidence_pointers = [p for p in report.evidence_pointers if p in known_ids]
            if any(m.kind == "tool_result" for m in transcript) and not report.evidence_pointers:
                report.evidence_pointers = list(tool_result_ids)
            return report
        raise DistillGrammarError("structured provider output failed the report grammar twice")

    sentences = split_sentences(report_text)
    labels = [label for label in finding_labels if label]
    matched_labels = [
        label for label in labels
        if any(label.lower() in s.lower() for s in sentences)
    ]
    key_findings = [
        s for s in sentences if any(label.lower() in s.lower() for label in labels)
    ]
    if not key_findings:
        key_findings = sentences[:1] if sentences else [report_text]
    confidence = (len(matched_labels) / len(labels)) if labels else 0.0
    conclusion = sentences[-1] if sentences else report_text
    return DistilledReport(
        key_findings=key_findings,
        confidence=confidence,
        evidence_pointers=list(tool_result_ids),
        conclusion=conclusion,
    )
