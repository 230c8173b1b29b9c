"""Run summaries computed from a trace alone, never from live state."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from .simbus import Trace, TraceError, fmt_seconds


@dataclass
class Report:
    # wait: first turn grant into recommendation minus first sighting
    wait_ms: dict[str, int] = field(default_factory=dict)
    makespan_ms: dict[str, int] = field(default_factory=dict)  # order -> first arm start to last end
    engagement: dict[str, float] = field(default_factory=dict)
    transcript: list[str] = field(default_factory=list)
    strategies: Counter = field(default_factory=Counter)
    gestures_placed: int = 0
    gestures_dropped: int = 0

    @property
    def wait(self) -> dict[str, float]:
        return {u: ms / 1000 for u, ms in self.wait_ms.items()}

    def text(self) -> str:
        out = ["# wait (s)"]
        out += [f"{u}\t{fmt_seconds(ms)}" for u, ms in sorted(self.wait_ms.items())]
        mean_wait = sum(self.wait_ms.values()) // len(self.wait_ms) if self.wait_ms else 0
        out.append(f"mean\t{fmt_seconds(mean_wait)}")
        out.append("# drink makespan (s)")
        out += [f"{o}\t{fmt_seconds(ms)}" for o, ms in sorted(self.makespan_ms.items())]
        out.append("# mean engagement")
        out += [f"{u}\t{score:.3f}" for u, score in sorted(self.engagement.items())]
        out.append("# strategies")
        out += [f"{s}\t{n}" for s, n in sorted(self.strategies.items())]
        out.append("# gestures")
        out.append(f"placed\t{self.gestures_placed}")
        out.append(f"dropped\t{self.gestures_dropped}")
        out.append("# transcript")
        out += self.transcript
        return "\n".join(out) + "\n"


def build_report(trace: Trace) -> Report:
    rep = Report()
    seen: dict[str, int] = {}
    arm_start: dict[str, int] = {}
    arm_end: dict[str, int] = {}
    samples: dict[str, list[float]] = {}
    for lineno, m in enumerate(trace, 1):
        try:
            _absorb(rep, m, seen, arm_start, arm_end, samples)
        except (KeyError, TypeError) as exc:
            raise TraceError(f"line {lineno}: {m.topic} payload lacks {exc}") from None
    rep.makespan_ms = {o: arm_end[o] - arm_start[o] for o in arm_start if o in arm_end}
    rep.engagement = {u: sum(v) / len(v) for u, v in samples.items()}
    return rep


def _absorb(rep: Report, m, seen, arm_start, arm_end, samples) -> None:
    p = m.payload
    if m.topic == "/state":
        user = p["user"]
        if p["trigger"] == "user-seen" and p["old"] is None:
            seen.setdefault(user, m.due_ms)
        elif p["new"] == "RECOMMENDATION" and user in seen and user not in rep.wait_ms:
            rep.wait_ms[user] = m.due_ms - seen[user]
    elif m.topic == "/arms" and p.get("kind") == "service":
        if p["phase"] == "start":
            arm_start.setdefault(p["order"], m.due_ms)
        elif p["phase"] == "end":
            arm_end[p["order"]] = m.due_ms
    elif m.topic == "/engagement":
        samples.setdefault(p["user"], []).append(p["score"])
    elif m.topic == "/recommendation":
        rep.strategies[p["strategy"]] += 1
    elif m.topic == "/gestures":
        if p["dropped"]:
            rep.gestures_dropped += 1
        else:
            rep.gestures_placed += 1
    elif m.topic == "/speech":
        rep.transcript.append(f"{fmt_seconds(m.due_ms)}\trobot -> {p['user']}\t{p['text']}")
    elif m.topic == "/percepts" and p.get("kind") == "utterance":
        rep.transcript.append(f"{fmt_seconds(m.due_ms)}\t{p['user']}\t{p['text']}")
