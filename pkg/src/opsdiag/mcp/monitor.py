"""Built-in simulated monitoring tool server serving time-series fixtures.

Window boundaries are inclusive on both ends.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timezone

from ..errors import EmptyWindow, UnknownApp, UnknownMetric
from .server import ParamSpec, ToolCallResult, ToolDescriptor, ToolServer

POLARITIES = ("higher_is_worse", "higher_is_better")


def parse_ts(value: str) -> float:
    """ISO-8601 (with optional trailing Z or space separator) to epoch seconds."""
    text = value.replace(" ", "T")
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def format_ts(epoch: float) -> str:
    dt = datetime.fromtimestamp(epoch, tz=timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass
class TimeSeries:
    app: str
    metric: str
    points: list[tuple[str, float]]  # (ISO timestamp, value), strictly increasing
    polarity: str = "higher_is_worse"

    def __post_init__(self):
        if self.polarity not in POLARITIES:
            raise ValueError(f"unknown polarity {self.polarity!r}")
        epochs = [parse_ts(ts) for ts, _ in self.points]
        if any(b <= a for a, b in zip(epochs, epochs[1:])):
            raise ValueError("timestamps must be strictly increasing")

    def window(self, start: str, end: str) -> "TimeSeries":
        start_e, end_e = parse_ts(start), parse_ts(end)
        selected = [
            (ts, value) for ts, value in self.points if start_e <= parse_ts(ts) <= end_e
        ]
        return TimeSeries(app=self.app, metric=self.metric, points=selected, polarity=self.polarity)

    def to_wire(self) -> dict:
        return {
            "app": self.app,
            "metric": self.metric,
            "polarity": self.polarity,
            "points": [[ts, value] for ts, value in self.points],
        }

    @classmethod
    def from_wire(cls, obj: dict) -> "TimeSeries":
        return cls(
            app=obj["app"],
            metric=obj["metric"],
            points=[(ts, value) for ts, value in obj["points"]],
            polarity=obj.get("polarity", "higher_is_worse"),
        )


class MetricStore:
    """Immutable fixture set keyed by (app, metric)."""

    def __init__(self, series: list[TimeSeries]):
        self._series: dict[tuple[str, str], TimeSeries] = {}
        for s in series:
            self._series[(s.app, s.metric)] = s

    def get(self, app: str, metric: str) -> TimeSeries:
        apps = {a for a, _ in self._series}
        if app not in apps:
            raise UnknownApp(f"unknown app {app!r}")
        series = self._series.get((app, metric))
        if series is None:
            raise UnknownMetric(f"unknown metric {metric!r} for app {app!r}")
        return series


def get_app_metric(store: MetricStore, app: str, metric: str, start: str, end: str) -> TimeSeries:
    if parse_ts(start) > parse_ts(end):
        raise ValueError("start must not be after end")
    series = store.get(app, metric)
    windowed = series.window(start, end)
    if not windowed.points:
        raise EmptyWindow(f"no points for {app}/{metric} in [{start}, {end}]")
    return windowed


def build_monitor_server(series: list[TimeSeries], name: str = "mcp-monitor") -> ToolServer:
    store = MetricStore(series)
    server = ToolServer(name=name)
    descriptor = ToolDescriptor(
        name="get_app_metric",
        description="Fetch a monitoring time-series for an app metric over a closed time window.",
        input_schema=(
            ParamSpec("app", "string", description="application identifier"),
            ParamSpec("metric", "string", description="metric identifier"),
            ParamSpec("start", "timestamp", description="window start, inclusive"),
            ParamSpec("end", "timestamp", description="window end, inclusive"),
        ),
        server=name,
    )

    def handler(app: str, metric: str, start: str, end: str) -> ToolCallResult:
        series = get_app_metric(store, app, metric, start, end)
        return ToolCallResult.data(series.to_wire())

    server.register(descriptor, handler)
    return server
