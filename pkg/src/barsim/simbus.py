"""Deterministic discrete-event clock and named-topic publish/subscribe bus.

Simulated time is kept as integer milliseconds so that ordering never suffers
from float drift. Messages are delivered in ``(due_time, seq)`` order and every
delivered message is appended to the run trace.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator


class BusError(Exception):
    """Raised for wiring mistakes (unknown topic, duplicate subscription)."""


class HandlerError(Exception):
    """A subscriber raised while handling a message; the run is aborted."""

    def __init__(self, seq: int, topic: str, cause: BaseException):
        super().__init__(f"handler failed on seq {seq} ({topic}): {cause!r}")
        self.seq = seq
        self.topic = topic
        self.cause = cause


class TraceError(ValueError):
    pass


def to_ms(seconds: float | int | str) -> int:
    """Convert seconds to integer milliseconds, rounding half away from zero."""
    value = float(seconds)
    ms = int(abs(value) * 1000 + 0.5)
    return -ms if value < 0 else ms


def fmt_seconds(ms: int) -> str:
    sign = "-" if ms < 0 else ""
    ms = abs(ms)
    return f"{sign}{ms // 1000}.{ms % 1000:03d}"


def canonical(payload: Any) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


@dataclass(frozen=True)
class Message:
    topic: str
    payload: dict
    publish_ms: int
    due_ms: int
    seq: int

    @property
    def time(self) -> float:
        return self.due_ms / 1000

    def line(self) -> str:
        return "\t".join((fmt_seconds(self.due_ms), str(self.seq), self.topic, canonical(self.payload)))


@dataclass
class Trace:
    messages: list[Message] = field(default_factory=list)

    def __iter__(self) -> Iterator[Message]:
        return iter(self.messages)

    def __len__(self) -> int:
        return len(self.messages)

    def __add__(self, other: "Trace") -> "Trace":
        return Trace(self.messages + other.messages)

    def lines(self) -> list[str]:
        return [m.line() for m in self.messages]

    def text(self) -> str:
        return "".join(line + "\n" for line in self.lines())

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.text(), encoding="utf-8")

    def on(self, topic: str) -> list[Message]:
        return [m for m in self.messages if m.topic == topic]

    @classmethod
    def parse(cls, text: str, source: str = "<trace>") -> "Trace":
        """Inverse of :meth:`text`. Publish times are not recorded, so they
        are set equal to the due time."""
        messages = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            parts = raw.split("\t", 3)
            try:
                if len(parts) != 4:
                    raise ValueError("expected time, seq, topic and payload")
                t_ms, seq = to_ms(parts[0]), int(parts[1])
                payload = json.loads(parts[3])
                if not isinstance(payload, dict):
                    raise ValueError("payload is not a JSON object")
            except ValueError as exc:
                raise TraceError(f"{source}:{lineno}: malformed trace line: {exc}") from None
            messages.append(Message(parts[2], payload, t_ms, t_ms, seq))
        return cls(messages)

    @classmethod
    def read(cls, path: str | Path) -> "Trace":
        return cls.parse(Path(path).read_text(encoding="utf-8"), str(path))


Handler = Callable[[Message], None]


class Bus:
    """Single-process event queue with a closed topic registry."""

    def __init__(self, topics: Iterable[str]):
        self.topics: tuple[str, ...] = tuple(dict.fromkeys(topics))
        self.now_ms = 0
        self._queue: list[tuple[int, int, Message]] = []
        self._seq = 0
        self._subs: dict[str, list[tuple[str, Handler]]] = {t: [] for t in self.topics}
        self._sub_ids = 0
        self.trace = Trace()

    @property
    def now(self) -> float:
        return self.now_ms / 1000

    def _check_topic(self, topic: str) -> None:
        if topic not in self._subs:
            raise BusError(f"unknown topic {topic!r}; known topics: {', '.join(self.topics)}")

    def publish(self, topic: str, payload: dict, delay: float = 0) -> int:
        return self.publish_ms(topic, payload, to_ms(delay))

    def publish_ms(self, topic: str, payload: dict, delay_ms: int = 0) -> int:
        self._check_topic(topic)
        if delay_ms < 0:
            raise BusError(f"negative delay {delay_ms} ms on {topic}")
        self._seq += 1
        msg = Message(topic, payload, self.now_ms, self.now_ms + delay_ms, self._seq)
        heapq.heappush(self._queue, (msg.due_ms, msg.seq, msg))
        return msg.seq

    def publish_at_ms(self, topic: str, payload: dict, due_ms: int) -> int:
        return self.publish_ms(topic, payload, due_ms - self.now_ms)

    def subscribe(self, topic: str, handler: Handler, name: str | None = None) -> int:
        self._check_topic(topic)
        name = name or getattr(handler, "__qualname__", repr(handler))
        if any(existing == name for existing, _ in self._subs[topic]):
            raise BusError(f"duplicate subscription of {name!r} on {topic}")
        self._subs[topic].append((name, handler))
        self._sub_ids += 1
        return self._sub_ids

    @property
    def pending(self) -> int:
        return len(self._queue)

    def next_due_ms(self) -> int | None:
        return self._queue[0][0] if self._queue else None

    def step(self) -> Message | None:
        """Dispatch the single next message, or return None on an empty queue."""
        if not self._queue:
            return None
        due, _, msg = heapq.heappop(self._queue)
        self.now_ms = due
        self.trace.messages.append(msg)
        for _, handler in list(self._subs[msg.topic]):
            try:
                handler(msg)
            except Exception as exc:
                raise HandlerError(msg.seq, msg.topic, exc) from exc
        return msg

    def run_until(self, t_end: float) -> Trace:
        return self.run_until_ms(to_ms(t_end))

    def run_until_ms(self, t_end_ms: int) -> Trace:
        if t_end_ms < self.now_ms:
            raise BusError(f"run_until {fmt_seconds(t_end_ms)} is before now {fmt_seconds(self.now_ms)}")
        start = len(self.trace.messages)
        while self._queue and self._queue[0][0] <= t_end_ms:
            self.step()
        self.now_ms = t_end_ms
        return Trace(self.trace.messages[start:])

    def run(self, max_messages: int = 1_000_000) -> Trace:
        """Drain the queue completely."""
        start = len(self.trace.messages)
        for _ in range(max_messages):
            if self.step() is None:
                break
        else:
            raise BusError(f"run did not quiesce after {max_messages} messages")
        return Trace(self.trace.messages[start:])
