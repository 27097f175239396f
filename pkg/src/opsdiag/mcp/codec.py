"""JSON-RPC 2.0 frame codec, newline-delimited on the stdio transport.

Frames preserve key order, so encode(decode(frame)) is byte-stable for
well-formed input and decode(encode(message)) is the identity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Union

from ..errors import FrameParseError, ProtocolError

INVALID_REQUEST = -32600
METHOD_NOT_FOUND = -32601
INVALID_PARAMS = -32602
INTERNAL_ERROR = -32603


@dataclass(frozen=True)
class McpError:
    code: int
    message: str

    def to_wire(self) -> dict:
        return {"code": self.code, "message": self.message}


@dataclass(frozen=True)
class McpRequest:
    id: int | str
    method: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class McpNotification:
    method: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class McpResponse:
    id: int | str | None
    result: Any = None
    error: McpError | None = None


McpMessage = Union[McpRequest, McpNotification, McpResponse]


def _to_wire(message: McpMessage) -> dict:
    if isinstance(message, McpRequest):
        return {"jsonrpc": "2.0", "id": message.id, "method": message.method, "params": message.params}
    if isinstance(message, McpNotification):
        return {"jsonrpc": "2.0", "method": message.method, "params": message.params}
    if isinstance(message, McpResponse):
        wire: dict[str, Any] = {"jsonrpc": "2.0", "id": message.id}
        if message.error is not None:
            wire["error"] = message.error.to_wire()
        else:
            wire["result"] = message.result
        return wire
    raise TypeError(f"not an MCP message: {message!r}")


def encode_frame(message: McpMessage) -> bytes:
    """One compact JSON object per line."""
    return json.dumps(_to_wire(message), ensure_ascii=False, separators=(",", ":")).encode("utf-8") + b"\n"


def decode_frame(data: bytes | str) -> McpMessage:
    if isinstance(data, bytes):
        data = data.decode("utf-8", errors="replace")
    try:
        obj = json.loads(data)
    except json.JSONDecodeError as exc:
        raise FrameParseError(f"malformed JSON frame: {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise FrameParseError("frame is not a JSON object")
    if obj.get("jsonrpc") != "2.0":
        raise ProtocolError("missing or wrong jsonrpc version", code=INVALID_REQUEST)
    if "method" in obj:
        method = obj["method"]
        params = obj.get("params", {})
        if not isinstance(method, str):
            raise ProtocolError("method must be a string", code=INVALID_REQUEST)
        if not isinstance(params, dict):
            raise ProtocolError("params must be an object", code=INVALID_REQUEST)
        if "id" in obj:
            return McpRequest(id=obj["id"], method=method, params=params)
        return McpNotification(method=method, params=params)
    if "id" in obj and ("result" in obj or "error" in obj):
        error = None
        if obj.get("error") is not None:
            err = obj["error"]
            if not isinstance(err, dict) or "code" not in err or "message" not in err:
                raise ProtocolError("malformed error object", code=INVALID_REQUEST)
            error = McpError(code=err["code"], message=err["message"])
        return McpResponse(id=obj["id"], result=obj.get("result"), error=error)
    raise ProtocolError("frame is neither request, notification, nor response", code=INVALID_REQUEST)
