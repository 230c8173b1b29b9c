"""Simulated perception layer: scenario scripts and a noisy intent channel."""

from __future__ import annotations

import random
import shlex
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping

from .beliefs import CHANNELS, PERSONAS
from .nlu import INTENTS
from .simbus import Bus, to_ms

USERS_TOPIC = "/users"
PERCEPTS_TOPIC = "/percepts"

# Recall column of the intent recognition evaluation. DeleteOrder was not
# evaluated; 0.9 is a stand-in and can be overridden from config.
MEASURED_RECALL: dict[str, float] = {
    "AnswerGreeting": 1.0,
    "OrderConfirm": 1.0,
    "OrderReject": 1.0,
    "Help": 1.0,
    "Menu": 0.5,
    "Order": 0.81,
    "NewsConfirm": 0.83,
    "NewsReject": 0.75,
    "Evaluation": 1.0,
}
DEFAULT_DELETE_ORDER_RECALL = 0.9


class Kind(str, Enum):
    USER_SEEN = "user-seen"
    USER_LOST = "user-lost"
    POSE_ENGAGEMENT = "pose-engagement"
    GROUP_MEMBERSHIP = "group-membership"
    UTTERANCE = "utterance"
    FACE_VALENCE = "face-valence"
    VOICE_MOOD = "voice-mood"
    REGISTER = "register"
    CLAIM_ATTENTION = "claim-attention"
    LEAVE = "leave"


USER_KINDS = (Kind.USER_SEEN, Kind.USER_LOST, Kind.REGISTER, Kind.LEAVE)
MOODS = ("neutral", "calm", "pacey")


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class PerceptEvent:
    time_ms: int
    kind: Kind
    user_id: str
    value: Mapping = field(default_factory=dict)

    @property
    def time(self) -> float:
        return self.time_ms / 1000

    def __post_init__(self):
        v = self.value
        if self.kind is Kind.POSE_ENGAGEMENT and not 0.0 <= v["p"] <= 1.0:
            raise ScenarioError(f"engagement probability {v['p']} outside [0, 1]")
        if self.kind is Kind.FACE_VALENCE and not -1.0 <= v["v"] <= 1.0:
            raise ScenarioError(f"valence {v['v']} outside [-1, 1]")
        if self.kind is Kind.VOICE_MOOD and v["mood"] not in MOODS:
            raise ScenarioError(f"unknown mood {v['mood']!r}")
        if self.kind is Kind.GROUP_MEMBERSHIP and self.user_id not in v["members"]:
            raise ScenarioError("a group always contains the reporting user")
        if self.kind is Kind.UTTERANCE and v["intent"] not in INTENTS:
            raise ScenarioError(f"unknown intent {v['intent']!r}")

    def payload(self) -> dict:
        out = {"kind": self.kind.value, "user": self.user_id}
        for k, val in self.value.items():
            out[k] = sorted(val) if isinstance(val, (set, frozenset)) else val
        return out


@dataclass(frozen=True)
class UserDef:
    user_id: str
    persona: str = "unspecified"


@dataclass
class Scenario:
    users: dict[str, UserDef] = field(default_factory=dict)
    events: list[PerceptEvent] = field(default_factory=list)

    @property
    def end_ms(self) -> int:
        return max((e.time_ms for e in self.events), default=0)


def _parse_value(kind: Kind, user: str, kv: dict[str, str], where: str) -> dict:
    try:
        if kind is Kind.POSE_ENGAGEMENT:
            return {"p": float(kv["p"])}
        if kind is Kind.FACE_VALENCE:
            return {"v": float(kv["v"])}
        if kind is Kind.VOICE_MOOD:
            return {"mood": kv["mood"]}
        if kind is Kind.GROUP_MEMBERSHIP:
            return {"members": frozenset(m for m in kv["members"].split(",") if m) | {user}}
        if kind is Kind.UTTERANCE:
            return {"text": kv["text"], "intent": kv["intent"]}
        if kind is Kind.REGISTER:
            persona = kv.get("persona", "unspecified")
            channel = kv.get("channel", "totem")
            if persona not in PERSONAS or channel not in CHANNELS:
                raise ScenarioError(f"{where}: bad persona/channel {persona!r}/{channel!r}")
            return {"persona": persona, "channel": channel}
    except KeyError as exc:
        raise ScenarioError(f"{where}: {kind.value} needs {exc.args[0]}=") from None
    except ValueError as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"{where}: {exc}") from None
    return {}


def parse_scenario(text: str, source: str = "<scenario>") -> Scenario:
    """Lines are ``user <id> [persona=..]`` declarations or
    ``t=<seconds> <kind> <user_id> <key=value ...>`` events."""
    sc = Scenario()
    pending = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        where = f"{source}:{lineno}"
        try:
            tokens = shlex.split(raw, comments=True)
        except ValueError as exc:
            raise ScenarioError(f"{where}: {exc}") from None
        if not tokens:
            continue
        if tokens[0] == "user":
            if len(tokens) < 2:
                raise ScenarioError(f"{where}: user declaration needs an id")
            kv = dict(t.split("=", 1) for t in tokens[2:] if "=" in t)
            persona = kv.get("persona", "unspecified")
            if persona not in PERSONAS:
                raise ScenarioError(f"{where}: unknown persona {persona!r}")
            sc.users[tokens[1]] = UserDef(tokens[1], persona)
            continue
        if not tokens[0].startswith("t=") or len(tokens) < 3:
            raise ScenarioError(f"{where}: expected 't=<seconds> <kind> <user> ...'")
        try:
            t = float(tokens[0][2:])
        except ValueError:
            raise ScenarioError(f"{where}: bad time {tokens[0]!r}") from None
        if t < 0:
            raise ScenarioError(f"{where}: negative timestamp {t}")
        try:
            kind = Kind(tokens[1])
        except ValueError:
            raise ScenarioError(f"{where}: unknown event kind {tokens[1]!r}") from None
        user = tokens[2]
        kv = {}
        for tok in tokens[3:]:
            if "=" not in tok:
                raise ScenarioError(f"{where}: expected key=value, got {tok!r}")
            k, v = tok.split("=", 1)
            kv[k] = v
        value = _parse_value(kind, user, kv, where)
        pending.append((where, to_ms(t), kind, user, value))
    for where, t_ms, kind, user, value in pending:
        refs = {user} | set(value.get("members", ()))
        undefined = sorted(r for r in refs if r not in sc.users)
        if undefined:
            raise ScenarioError(f"{where}: undefined user(s) {', '.join(undefined)}")
        try:
            sc.events.append(PerceptEvent(t_ms, kind, user, value))
        except ScenarioError as exc:
            raise ScenarioError(f"{where}: {exc}") from None
    sc.events.sort(key=lambda e: e.time_ms)  # stable: file order within one instant
    return sc


def script_load(path: str | Path) -> Scenario:
    p = Path(path)
    if not p.exists():
        raise ScenarioError(f"scenario file not found: {p}")
    return parse_scenario(p.read_text(encoding="utf-8"), str(p))


@dataclass
class ConfusionChannel:
    recall: Mapping[str, float]
    confidence_range: tuple[float, float] = (0.5, 1.0)
    rng_seed: int = 0
    rng: random.Random = field(init=False, repr=False)

    def __post_init__(self):
        for intent, r in self.recall.items():
            if intent not in INTENTS:
                raise ScenarioError(f"recall given for unknown intent {intent!r}")
            if not 0.0 < r <= 1.0:
                raise ScenarioError(f"recall for {intent} must be in (0, 1], got {r}")
        lo, hi = self.confidence_range
        if not 0.5 <= lo <= hi <= 1.0:
            raise ScenarioError(f"confidence range {self.confidence_range} not within [0.5, 1]")
        self.rng = random.Random(self.rng_seed)

    @classmethod
    def measured(cls, seed: int = 0, delete_order_recall: float = DEFAULT_DELETE_ORDER_RECALL,
                confidence_range: tuple[float, float] = (0.5, 1.0)) -> "ConfusionChannel":
        recall = dict(MEASURED_RECALL)
        recall["DeleteOrder"] = delete_order_recall
        return cls(recall, confidence_range, seed)


def corrupt_intent(true_intent: str, channel: ConfusionChannel) -> tuple[str, float]:
    if true_intent not in INTENTS:
        raise ScenarioError(f"unknown intent {true_intent!r}")
    if true_intent not in channel.recall:
        raise ScenarioError(f"no recall configured for {true_intent}")
    rng = channel.rng
    if rng.random() < channel.recall[true_intent]:
        classified = true_intent
    else:
        classified = rng.choice([i for i in INTENTS if i != true_intent])
    lo, hi = channel.confidence_range
    return classified, rng.uniform(lo, hi)


def emit(scenario: Scenario, bus: Bus, channel: ConfusionChannel | None = None) -> int:
    """Publish every scripted event at its time; returns the number published.

    Utterances carry ``classified``/``confidence``: the channel's output when
    noise is on, the true intent at confidence 1 otherwise.
    """
    count = 0
    for ev in scenario.events:
        payload = ev.payload()
        if ev.kind is Kind.UTTERANCE:
            if channel is not None:
                classified, conf = corrupt_intent(ev.value["intent"], channel)
            else:
                classified, conf = ev.value["intent"], 1.0
            payload["classified"] = classified
            payload["confidence"] = round(conf, 6)
        topic = USERS_TOPIC if ev.kind in USER_KINDS else PERCEPTS_TOPIC
        bus.publish_at_ms(topic, payload, ev.time_ms)
        count += 1
    return count
