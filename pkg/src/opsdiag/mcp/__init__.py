"""Tool-invocation wire protocol: JSON-RPC 2.0 codec, tool servers over
in-process/stdio/HTTP transports, a federating client, and the built-in
simulated monitoring server."""

from .codec import McpError, McpNotification, McpRequest, McpResponse, decode_frame, encode_frame
from .server import ParamSpec, ToolCallResult, ToolDescriptor, ToolServer
from .client import InProcessEndpoint, HttpEndpoint, ToolClient
from .monitor import TimeSeries, build_monitor_server, get_app_metric

__all__ = [
    "McpError",
    "McpNotification",
    "McpRequest",
    "McpResponse",
    "decode_frame",
    "encode_frame",
    "ParamSpec",
    "ToolCallResult",
    "ToolDescriptor",
    "ToolServer",
    "InProcessEndpoint",
    "HttpEndpoint",
    "ToolClient",
    "TimeSeries",
    "build_monitor_server",
    "get_app_metric",
]
