"""Tool client: endpoint abstractions plus federation of several servers with
client-side schema re-validation (fail fast before touching the wire)."""

from __future__ import annotations

import itertools
import subprocess
import threading
from typing import Protocol

from ..errors import DuplicateTool, TransportError
from .codec import McpRequest, McpResponse, decode_frame, encode_frame
from .server import ParamSpec, ToolCallResult, ToolDescriptor, ToolServer, validate_arguments


class Endpoint(Protocol):
    def send(self, request: McpRequest) -> McpResponse: ...


class InProcessEndpoint:
    """Direct dispatch into a ToolServer, still round-tripping the codec so
    in-process behavior matches the wire."""

    def __init__(self, server: ToolServer):
        self.server = server

    def send(self, request: McpRequest) -> McpResponse:
        decoded = decode_frame(encode_frame(request))
        response = self.server.handle(decoded)
        if response is None:
            raise TransportError("request got no response")
        return decode_frame(encode_frame(response))


class HttpEndpoint:
    """HTTP POST, one frame per request body."""

    def __init__(self, url: str, timeout_ms: int = 10_000):
        self.url = url
        self.timeout_ms = timeout_ms

    def send(self, request: McpRequest) -> McpResponse:
        import httpx

        try:
            resp = httpx.post(
                self.url,
                content=encode_frame(request),
                headers={"content-type": "application/json"},
                timeout=self.timeout_ms / 1000.0,
            )
            resp.raise_for_status()
        except httpx.HTTPError as exc:
            raise TransportError(str(exc)) from exc
        message = decode_frame(resp.content)
        if not isinstance(message, McpResponse):
            raise TransportError("endpoint answered with a non-response frame")
        return message


class StdioEndpoint:
    """Spawns a tool-server subprocess and exchanges newline-delimited frames."""

    def __init__(self, argv: list[str]):
        self.proc = subprocess.Popen(
            argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE, bufsize=0
        )
        self._lock = threading.Lock()

    def send(self, request: McpRequest) -> McpResponse:
        assert self.proc.stdin and self.proc.stdout
        with self._lock:
            try:
                self.proc.stdin.write(encode_frame(request))
                self.proc.stdin.flush()
                line = self.proc.stdout.readline()
            except (BrokenPipeError, OSError) as exc:
                raise TransportError(str(exc)) from exc
        if not line:
            raise TransportError("stdio server closed the stream")
        message = decode_frame(line)
        if not isinstance(message, McpResponse):
            raise TransportError("stdio server answered with a non-response frame")
        return message

    def close(self) -> None:
        if self.proc.stdin:
            self.proc.stdin.close()
        self.proc.wait(timeout=5)


class ToolClient:
    """Federates tool servers behind one name space; duplicate tool names are
    rejected at registration."""

    def __init__(self):
        self._endpoints: list[Endpoint] = []
        self._tools: dict[str, tuple[ToolDescriptor, Endpoint]] = {}
        self._ids = itertools.count(1)

    def register_endpoint(self, endpoint: Endpoint) -> list[ToolDescriptor]:
        descriptors = self._list_remote(endpoint)
        for d in descriptors:
            if d.name in self._tools:
                raise DuplicateTool(f"tool {d.name!r} offered by more than one server")
        for d in descriptors:
            self._tools[d.name] = (d, endpoint)
        self._endpoints.append(endpoint)
        return descriptors

    def _list_remote(self, endpoint: Endpoint) -> list[ToolDescriptor]:
        response = endpoint.send(McpRequest(id=next(self._ids), method="tools/list", params={}))
        if response.error is not None:
            raise TransportError(f"tools/list failed: {response.error.message}")
        descriptors = []
        for rec in response.result.get("tools", []):
            descriptors.append(
                ToolDescriptor(
                    name=rec["name"],
                    description=rec.get("description", ""),
                    input_schema=tuple(
                        ParamSpec(
                            name=p["name"],
                            type=p["type"],
                            required=p.get("required", True),
                            description=p.get("description", ""),
                        )
                        for p in rec.get("inputSchema", [])
                    ),
                    server=rec.get("server", "remote"),
                )
            )
        return descriptors

    def list_tools(self) -> list[ToolDescriptor]:
        return [self._tools[name][0] for name in sorted(self._tools)]

    def has_tool(self, name: str) -> bool:
        return name in self._tools

    def call_tool(self, name: str, arguments: dict) -> ToolCallResult:
        entry = self._tools.get(name)
        if entry is None:
            return ToolCallResult.text(f"unknown tool: {name}", is_error=True)
        descriptor, endpoint = entry
        violation = validate_arguments(descriptor.input_schema, arguments)
        if violation is not None:
            return ToolCallResult.text(violation, is_error=True)
        response = endpoint.send(
            McpRequest(
                id=next(self._ids),
                method="tools/call",
                params={"name": name, "arguments": arguments},
            )
        )
        if response.error is not None:
            raise TransportError(f"tools/call failed: {response.error.message}")
        return ToolCallResult.from_wire(response.result)
