"""Service planning and dual-arm scheduling, gesture interleaving, face behavior.

Effects of an action take hold when it ends. Actions ending at the same
instant apply their effects in timetable order before anything starts at that
instant; preconditions are checked only at start.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

from .fusion import DEFAULT_LOW_THRESHOLD, EngagementEstimate, is_low_engagement
from .simbus import fmt_seconds, to_ms

log = logging.getLogger(__name__)

ARMS = ("arm_left", "arm_right")
ARM_TOKENS = ("arm_left", "arm_right", "arm_any")
DEVICES = ("mixer", "blender", "tap")
RESOURCES = ARM_TOKENS + DEVICES
NO_ARM = "-"


class PlanError(ValueError):
    pass


class DeadlockError(PlanError):
    def __init__(self, action_id: str, missing: Iterable[str]):
        self.action_id = action_id
        self.missing = tuple(sorted(missing))
        super().__init__(f"deadlock: {action_id} waits for {', '.join(self.missing)} which never holds")


@dataclass(frozen=True)
class BasicAction:
    id: str
    drink_order_id: str
    duration: float
    resources: frozenset[str] = frozenset()
    preconditions: frozenset[str] = frozenset()
    add: frozenset[str] = frozenset()
    delete: frozenset[str] = frozenset()
    predecessor_ids: frozenset[str] = frozenset()
    kind: str = "service"

    def __post_init__(self):
        if self.duration <= 0:
            raise PlanError(f"{self.id}: duration must be > 0")
        bad = set(self.resources) - set(RESOURCES)
        if bad:
            raise PlanError(f"{self.id}: unknown resources {sorted(bad)}")

    @property
    def duration_ms(self) -> int:
        return to_ms(self.duration)

    @property
    def arm_demand(self) -> int:
        return sum(r in self.resources for r in ARM_TOKENS)

    @property
    def devices(self) -> frozenset[str]:
        return self.resources & frozenset(DEVICES)


# ---------------------------------------------------------------- recipes


@dataclass(frozen=True)
class RecipeStep:
    name: str
    duration: float
    resources: frozenset[str]
    pre: frozenset[str] = frozenset()
    add: frozenset[str] = frozenset()
    delete: frozenset[str] = frozenset()
    after: tuple[str, ...] | None = None  # None: previous step


def _csv(field_text: str, prefix: str, where: str) -> frozenset[str]:
    if not field_text.startswith(prefix):
        raise PlanError(f"{where}: expected '{prefix}...' column, got {field_text!r}")
    return frozenset(x for x in field_text[len(prefix):].split(",") if x)


def parse_recipes(text: str, source: str = "<recipes>") -> dict[str, list[RecipeStep]]:
    book: dict[str, list[RecipeStep]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        where = f"{source}:{lineno}"
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        if "\t" not in raw:
            current = raw.strip()
            if current in book:
                raise PlanError(f"{where}: recipe {current!r} defined twice")
            book[current] = []
            continue
        if current is None:
            raise PlanError(f"{where}: step before any drink header")
        cols = raw.split("\t")
        if len(cols) not in (6, 7):
            raise PlanError(f"{where}: expected step, duration, resources, pre:, add:, del: [, after:]")
        name, dur, res = cols[:3]
        try:
            duration = float(dur)
        except ValueError:
            raise PlanError(f"{where}: bad duration {dur!r}") from None
        if duration <= 0:
            raise PlanError(f"{where}: duration must be > 0")
        resources = frozenset(r for r in res.split(",") if r and r != NO_ARM)
        if resources - set(RESOURCES):
            raise PlanError(f"{where}: unknown resources {sorted(resources - set(RESOURCES))}")
        after = tuple(sorted(_csv(cols[6], "after:", where))) if len(cols) == 7 else None
        known = {s.name for s in book[current]}
        if after and set(after) - known:
            raise PlanError(f"{where}: after: names unknown earlier steps {sorted(set(after) - known)}")
        if name in known:
            raise PlanError(f"{where}: duplicate step {name!r}")
        book[current].append(
            RecipeStep(
                name,
                duration,
                resources,
                _csv(cols[3], "pre:", where),
                _csv(cols[4], "add:", where),
                _csv(cols[5], "del:", where),
                after,
            )
        )
    empty = [d for d, steps in book.items() if not steps]
    if empty:
        raise PlanError(f"{source}: empty recipe(s): {', '.join(empty)}")
    return book


def load_recipes(path: str | Path) -> dict[str, list[RecipeStep]]:
    return parse_recipes(Path(path).read_text(encoding="utf-8"), str(path))


def _localize(preds: frozenset[str], order_id: str) -> frozenset[str]:
    # '~pred' is private to one order (its glass, its shaker contents)
    return frozenset(f"{order_id}.{p[1:]}" if p.startswith("~") else p for p in preds)


def plan_order(drink: str, recipes: dict[str, list[RecipeStep]], order_id: str = "o1") -> list[BasicAction]:
    if drink not in recipes:
        raise PlanError(f"no recipe for drink {drink!r}")
    steps = recipes[drink]
    if not steps:
        raise PlanError(f"recipe for {drink!r} is empty")
    ids = {s.name: f"{order_id}.{k + 1}.{s.name}" for k, s in enumerate(steps)}
    actions = []
    for k, s in enumerate(steps):
        if s.after is None:
            preds = frozenset({ids[steps[k - 1].name]}) if k else frozenset()
        else:
            preds = frozenset(ids[n] for n in s.after)
        actions.append(
            BasicAction(
                ids[s.name],
                order_id,
                s.duration,
                s.resources,
                _localize(s.pre, order_id),
                _localize(s.add, order_id),
                _localize(s.delete, order_id),
                preds,
            )
        )
    return actions


# ---------------------------------------------------------------- timetable


@dataclass(frozen=True)
class Entry:
    action_id: str
    arm: str
    start_ms: int
    end_ms: int

    @property
    def arms(self) -> tuple[str, ...]:
        return () if self.arm == NO_ARM else tuple(self.arm.split("+"))

    def line(self) -> str:
        return f"{self.action_id}\t{self.arm}\t{fmt_seconds(self.start_ms)}\t{fmt_seconds(self.end_ms)}"


@dataclass
class Timetable:
    entries: list[Entry] = field(default_factory=list)
    world_trajectory: list[tuple[int, frozenset[str]]] = field(default_factory=list)
    actions: dict[str, BasicAction] = field(default_factory=dict)
    arms: int = 2
    dropped: list[str] = field(default_factory=list)

    @property
    def makespan_ms(self) -> int:
        return max((e.end_ms for e in self.entries), default=0)

    @property
    def makespan(self) -> float:
        return self.makespan_ms / 1000

    def export(self) -> str:
        return "".join(e.line() + "\n" for e in self.entries)

    def arm_busy_ms(self, arm: str) -> int:
        return sum(e.end_ms - e.start_ms for e in self.entries if arm in e.arms)

    def shifted(self, offset_ms: int) -> "Timetable":
        return replace(
            self,
            entries=[replace(e, start_ms=e.start_ms + offset_ms, end_ms=e.end_ms + offset_ms) for e in self.entries],
            world_trajectory=[(t + offset_ms, w) for t, w in self.world_trajectory],
        )


def _arm_pool(arms: int) -> tuple[str, ...]:
    if arms not in (1, 2):
        raise PlanError(f"arms must be 1 or 2, got {arms}")
    return ARMS[:arms]


def _pick_arms(action: BasicAction, free: list[str], busy: dict[str, int], pool: tuple[str, ...]) -> tuple[str, ...] | None:
    """Arms for ``action`` among the free ones, or None if it must wait."""
    demand = action.arm_demand
    if demand == 0:
        return ()
    if len(pool) == 1:
        return pool if pool[0] in free else None
    fixed = [a for a in ARMS if a in action.resources]
    if any(a not in free for a in fixed):
        return None
    rest = sorted((a for a in free if a not in fixed), key=lambda a: (busy[a], ARMS.index(a)))
    need = demand - len(fixed)
    if len(rest) < need:
        return None
    return tuple(sorted(fixed + rest[:need], key=ARMS.index))


def validate_plans(plans: Sequence[Sequence[BasicAction]]) -> list[BasicAction]:
    flat = [a for plan in plans for a in plan]
    ids = [a.id for a in flat]
    if len(set(ids)) != len(ids):
        raise PlanError("duplicate action ids across plans")
    known = set(ids)
    for a in flat:
        if a.predecessor_ids - known:
            raise PlanError(f"{a.id}: unknown predecessors {sorted(a.predecessor_ids - known)}")
    # Kahn's algorithm for the acyclicity check
    indeg = {a.id: len(a.predecessor_ids) for a in flat}
    succ: dict[str, list[str]] = {a.id: [] for a in flat}
    for a in flat:
        for p in a.predecessor_ids:
            succ[p].append(a.id)
    queue = [i for i, d in indeg.items() if d == 0]
    seen = 0
    while queue:
        i = queue.pop()
        seen += 1
        for s in succ[i]:
            indeg[s] -= 1
            if indeg[s] == 0:
                queue.append(s)
    if seen != len(flat):
        raise PlanError("predecessor relation has a cycle")
    return flat


def schedule(plans: Sequence[Sequence[BasicAction]], arms: int = 2, world: Iterable[str] = ()) -> Timetable:
    """Greedy earliest-start list scheduling over arms and exclusive devices.

    With two arms the greedy parallel schedule can finish later than the
    sequential one (a list-scheduling anomaly). No two arm actions overlap in
    the single-arm timetable, so its timing is kept and each action is given
    the arms it asks for; the shorter of the two timetables is returned.
    """
    world = frozenset(world)
    best = _greedy(plans, arms, world)
    if arms == 2:
        single = _greedy(plans, 1, world)
        if single.makespan_ms < best.makespan_ms:
            best = _on_two_arms(single)
    return best


def _on_two_arms(single: Timetable) -> Timetable:
    entries = []
    for e in single.entries:
        act = single.actions[e.action_id]
        if e.arm != NO_ARM:
            fixed = [a for a in ARMS if a in act.resources]
            extra = [a for a in ARMS if a not in fixed][: act.arm_demand - len(fixed)]
            e = replace(e, arm="+".join(sorted(fixed + extra, key=ARMS.index)))
        entries.append(e)
    return replace(single, entries=entries, arms=2)


def _greedy(plans: Sequence[Sequence[BasicAction]], arms: int, world: frozenset[str]) -> Timetable:
    pool = _arm_pool(arms)
    flat = validate_plans(plans)
    state = set(world)
    remaining = list(flat)
    running: list[tuple[int, int, BasicAction, tuple[str, ...]]] = []  # (end, start order, action, arms)
    done: set[str] = set()
    busy_ms = {a: 0 for a in pool}
    tt = Timetable(actions={a.id: a for a in flat}, arms=arms)
    t = 0
    started = 0
    while remaining or running:
        for end, _, act, _ in sorted(r for r in running if r[0] == t):
            state = (state - act.delete) | act.add
            done.add(act.id)
        running = [r for r in running if r[0] != t]

        held_arms = {arm for r in running for arm in r[3]}
        held_devices = {d for r in running for d in r[2].devices}
        still = []
        for act in remaining:
            if not act.predecessor_ids <= done or not act.preconditions <= state or act.devices & held_devices:
                still.append(act)
                continue
            free = [a for a in pool if a not in held_arms]
            chosen = _pick_arms(act, free, busy_ms, pool)
            if chosen is None:
                still.append(act)
                continue
            end = t + act.duration_ms
            running.append((end, started, act, chosen))
            started += 1
            held_arms.update(chosen)
            held_devices.update(act.devices)
            for a in chosen:
                busy_ms[a] += act.duration_ms
            tt.entries.append(Entry(act.id, "+".join(chosen) or NO_ARM, t, end))
        remaining = still
        tt.world_trajectory.append((t, frozenset(state)))

        if running:
            t = min(r[0] for r in running)
        elif remaining:
            for act in remaining:
                if act.predecessor_ids <= done:
                    raise DeadlockError(act.id, act.preconditions - state)
            raise DeadlockError(remaining[0].id, ())  # unreachable for an acyclic plan
    return tt


# ---------------------------------------------------------------- gestures


def interleave_gesture(t: Timetable, gesture: BasicAction, window: tuple[float, float]) -> Timetable:
    """Place ``gesture`` in the earliest idle-arm gap inside ``window`` or drop it."""
    if gesture.resources != frozenset({"arm_any"}) or gesture.predecessor_ids:
        raise PlanError("a gesture needs exactly arm_any and no predecessors")
    lo, hi = to_ms(window[0]), to_ms(window[1])
    dur = gesture.duration_ms
    pool = _arm_pool(t.arms)
    order = sorted(pool, key=lambda a: (t.arm_busy_ms(a), ARMS.index(a)))
    best = None
    for arm in order:
        intervals = sorted((e.start_ms, e.end_ms) for e in t.entries if arm in e.arms)
        s = lo
        for a_start, a_end in intervals:
            if a_end <= s:
                continue
            if a_start >= s + dur:
                break
            s = a_end
        if s + dur <= hi and (best is None or s < best[0]):
            best = (s, arm)
    if best is None:
        log.info("dropped gesture %s: no idle arm in [%s, %s]", gesture.id, fmt_seconds(lo), fmt_seconds(hi))
        return replace(t, dropped=t.dropped + [gesture.id])
    s, arm = best
    entries = sorted(t.entries + [Entry(gesture.id, arm, s, s + dur)], key=lambda e: (e.start_ms, e.end_ms))
    return replace(t, entries=entries, actions={**t.actions, gesture.id: gesture})


# ---------------------------------------------------------------- face


EMOTIONS = ("anger", "contempt", "disgust", "fear", "joy", "sadness", "surprise", "neutral")
FACE_KINDS = ("expression", "vocal_sound", "speech", "gaze")


@dataclass(frozen=True)
class FaceEvent:
    kind: str
    user_id: str = ""
    at: float = 0.0
    expression: str | None = None
    text: str = ""

    def __post_init__(self):
        if self.kind not in FACE_KINDS:
            raise PlanError(f"unknown face event kind {self.kind!r}")
        if (self.expression is not None) != (self.kind == "expression"):
            raise PlanError("expression is set exactly on expression events")
        if self.expression is not None and self.expression not in EMOTIONS:
            raise PlanError(f"unknown expression {self.expression!r}")

    def payload(self) -> dict:
        out = {"kind": self.kind, "user": self.user_id}
        if self.expression is not None:
            out["expression"] = self.expression
        if self.text:
            out["text"] = self.text
        return out


TOPIC_EXPRESSION = {"positive": "joy", "negative": "sadness", "neutral": "neutral"}


def face_behavior(
    engagement: EngagementEstimate | None,
    dialogue_state: str,
    topic_sentiment: str | None = None,
    user_id: str = "",
    at: float = 0.0,
    threshold: float = DEFAULT_LOW_THRESHOLD,
) -> list[FaceEvent]:
    """``dialogue_state`` is listening, understood, not_understood or emoting."""
    events = []
    if engagement is not None and is_low_engagement(engagement, threshold):
        events += [
            FaceEvent("expression", user_id, at, "joy"),
            FaceEvent("vocal_sound", user_id, at, text="hey!"),
        ]
    if dialogue_state == "listening":
        events.append(FaceEvent("gaze", user_id, at))
    elif dialogue_state == "not_understood":
        events += [
            FaceEvent("expression", user_id, at, "surprise"),
            FaceEvent("speech", user_id, at, text="Sorry, could you repeat that?"),
        ]
    elif dialogue_state == "emoting":
        events.append(FaceEvent("expression", user_id, at, TOPIC_EXPRESSION[topic_sentiment or "neutral"]))
    elif dialogue_state != "understood":
        raise PlanError(f"unknown dialogue state {dialogue_state!r}")
    return events
