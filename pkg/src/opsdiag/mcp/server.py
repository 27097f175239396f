"""Tool server: descriptor registry, schema validation, and the tools/list +
tools/call method surface over any transport."""

from __future__ import annotations

import re
import sys
from dataclasses import dataclass, field
from typing import Any, Callable

from ..errors import DuplicateTool
from .codec import (
    INVALID_PARAMS,
    METHOD_NOT_FOUND,
    McpError,
    McpNotification,
    McpRequest,
    McpResponse,
    decode_frame,
    encode_frame,
)

SCHEMA_TYPES = {"string", "number", "integer", "boolean", "timestamp", "array", "object"}

_TIMESTAMP_RE = re.compile(r"^\d{4}-\d{2}-\d{2}[T ]\d{2}:\d{2}:\d{2}(\.\d+)?(Z|[+-]\d{2}:\d{2})?$")


@dataclass(frozen=True)
class ParamSpec:
    name: str
    type: str
    required: bool = True
    description: str = ""

    def __post_init__(self):
        if self.type not in SCHEMA_TYPES:
            raise ValueError(f"unknown schema type {self.type!r}")


@dataclass(frozen=True)
class ToolDescriptor:
    name: str
    description: str
    input_schema: tuple[ParamSpec, ...]
    server: str = "local"

    def to_wire(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "inputSchema": [
                {
                    "name": p.name,
                    "type": p.type,
                    "required": p.required,
                    "description": p.description,
                }
                for p in self.input_schema
            ],
            "server": self.server,
        }


@dataclass
class ToolCallResult:
    content: list[dict] = field(default_factory=list)
    is_error: bool = False

    @classmethod
    def text(cls, text: str, is_error: bool = False) -> "ToolCallResult":
        return cls(content=[{"type": "text", "text": text}], is_error=is_error)

    @classmethod
    def data(cls, data: Any) -> "ToolCallResult":
        return cls(content=[{"type": "data", "data": data}])

    def to_wire(self) -> dict:
        return {"content": self.content, "isError": self.is_error}

    @classmethod
    def from_wire(cls, obj: dict) -> "ToolCallResult":
        return cls(content=list(obj.get("content", [])), is_error=bool(obj.get("isError")))

    def first_text(self) -> str:
        for block in self.content:
            if block.get("type") == "text":
                return block.get("text", "")
        return ""

    def first_data(self) -> Any:
        for block in self.content:
            if block.get("type") == "data":
                return block.get("data")
        return None


def validate_arguments(schema: tuple[ParamSpec, ...], arguments: dict) -> str | None:
    """Return a human-readable violation naming the offending parameter, or None."""
    known = {p.name for p in schema}
    for p in schema:
        if p.required and p.name not in arguments:
            return f"missing required argument: {p.name}"
    for name in arguments:
        if name not in known:
            return f"unexpected argument: {name}"
    for p in schema:
        if p.name not in arguments:
            continue
        value = arguments[p.name]
        ok = {
            "string": lambda v: isinstance(v, str),
            "number": lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
            "integer": lambda v: isinstance(v, int) and not isinstance(v, bool),
            "boolean": lambda v: isinstance(v, bool),
            "timestamp": lambda v: isinstance(v, str) and _TIMESTAMP_RE.match(v) is not None,
            "array": lambda v: isinstance(v, list),
            "object": lambda v: isinstance(v, dict),
        }[p.type](value)
        if not ok:
            return f"argument {p.name} is not a valid {p.type}"
    return None


class ToolServer:
    """Registry of tools plus the JSON-RPC method dispatch."""

    def __init__(self, name: str = "local"):
        self.name = name
        self._tools: dict[str, tuple[ToolDescriptor, Callable[..., ToolCallResult]]] = {}

    def register(self, descriptor: ToolDescriptor, handler: Callable[..., ToolCallResult]) -> None:
        if descriptor.name in self._tools:
            raise DuplicateTool(f"tool {descriptor.name!r} already registered on {self.name}")
        self._tools[descriptor.name] = (descriptor, handler)

    def descriptors(self) -> list[ToolDescriptor]:
        return [self._tools[name][0] for name in sorted(self._tools)]

    def handle(self, message: McpRequest | McpNotification) -> McpResponse | None:
        """Dispatch one decoded frame. Notifications get no response."""
        if isinstance(message, McpNotification):
            return None
        if message.method == "tools/list":
            return McpResponse(
                id=message.id,
                result={"tools": [d.to_wire() for d in self.descriptors()]},
            )
        if message.method == "tools/call":
            return self._handle_call(message)
        return McpResponse(
            id=message.id,
            error=McpError(code=METHOD_NOT_FOUND, message=f"unknown method {message.method!r}"),
        )

    def _handle_call(self, request: McpRequest) -> McpResponse:
        name = request.params.get("name")
        arguments = request.params.get("arguments", {})
        if not isinstance(name, str) or not isinstance(arguments, dict):
            return McpResponse(
                id=request.id,
                error=McpError(code=INVALID_PARAMS, message="tools/call needs name and arguments"),
            )
        entry = self._tools.get(name)
        if entry is None:
            result = ToolCallResult.text(f"unknown tool: {name}", is_error=True)
            return McpResponse(id=request.id, result=result.to_wire())
        descriptor, handler = entry
        violation = validate_arguments(descriptor.input_schema, arguments)
        if violation is not None:
            result = ToolCallResult.text(violation, is_error=True)
            return McpResponse(id=request.id, result=result.to_wire())
        try:
            result = handler(**arguments)
        except Exception as exc:  # tool failures are results, not transport errors
            result = ToolCallResult.text(f"{type(exc).__name__}: {exc}", is_error=True)
        return McpResponse(id=request.id, result=result.to_wire())


def serve_stdio(server: ToolServer, stdin=None, stdout=None) -> None:
    """Newline-delimited frame loop over stdio (one frame per line)."""
    stdin = stdin if stdin is not None else sys.stdin.buffer
    stdout = stdout if stdout is not None else sys.stdout.buffer
    for line in stdin:
        if not line.strip():
            continue
        try:
            message = decode_frame(line)
        except Exception as exc:
            code = getattr(exc, "code", -32700)
            response = McpResponse(id=None, error=McpError(code=code, message=str(exc)))
            stdout.write(encode_frame(response))
            stdout.flush()
            continue
        if isinstance(message, McpResponse):
            continue
        response = server.handle(message)
        if response is not None:
            stdout.write(encode_frame(response))
            stdout.flush()
