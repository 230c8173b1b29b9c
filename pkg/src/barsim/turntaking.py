"""Per-user interaction state machine and active-user selection."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from enum import Enum
from fractions import Fraction
from typing import Mapping, Sequence

log = logging.getLogger(__name__)


class State(str, Enum):
    GREETING = "GREETING"
    WAITING = "WAITING"
    RECOMMENDATION = "RECOMMENDATION"
    ORDERING = "ORDERING"
    CONFIRMATION = "CONFIRMATION"
    PREPARATION = "PREPARATION"
    SERVING = "SERVING"
    FAREWELL = "FAREWELL"
    GONE = "GONE"
    OUT_OF_SIGHT = "OUT_OF_SIGHT"


TRIGGERS: tuple[str, ...] = (
    "turn-grant",
    "accept",
    "reject",
    "order",
    "order-modify",
    "order-confirm",
    "order-reject",
    "confirm",
    "delete-order",
    "drink-ready",
    "handover",
    "farewell-done",
    "user-lost",
    "user-seen",
    "leave",
)

S = State
# (state, trigger) -> next state. GREETING/turn-grant depends on company and is resolved in transition().
TRANSITIONS: dict[tuple[State, str], State] = {
    (S.GREETING, "turn-grant"): S.RECOMMENDATION,
    (S.WAITING, "turn-grant"): S.RECOMMENDATION,
    (S.RECOMMENDATION, "accept"): S.ORDERING,
    (S.RECOMMENDATION, "order"): S.ORDERING,
    (S.RECOMMENDATION, "reject"): S.RECOMMENDATION,
    (S.ORDERING, "order-modify"): S.ORDERING,
    (S.ORDERING, "order-confirm"): S.CONFIRMATION,
    (S.CONFIRMATION, "confirm"): S.PREPARATION,
    (S.CONFIRMATION, "order-reject"): S.ORDERING,
    (S.CONFIRMATION, "order-modify"): S.ORDERING,
    (S.CONFIRMATION, "delete-order"): S.GONE,
    (S.PREPARATION, "drink-ready"): S.SERVING,
    (S.SERVING, "handover"): S.FAREWELL,
    (S.FAREWELL, "farewell-done"): S.GONE,
}
for _s in State:
    if _s not in (S.GONE, S.OUT_OF_SIGHT):
        TRANSITIONS[(_s, "user-lost")] = S.OUT_OF_SIGHT
    if _s is not S.GONE:
        TRANSITIONS[(_s, "leave")] = S.GONE
del _s
# OUT_OF_SIGHT/user-seen restores the saved state; listed here so is_legal() sees it
TRANSITIONS[(S.OUT_OF_SIGHT, "user-seen")] = S.OUT_OF_SIGHT


class TransitionError(ValueError):
    pass


@dataclass(frozen=True)
class InteractionState:
    user_id: str
    state: State = S.GREETING
    saved_state: State | None = None
    arrival_time: float = 0.0
    last_active: float = 0.0
    in_group: bool = False

    def __post_init__(self):
        if (self.saved_state is not None) != (self.state is S.OUT_OF_SIGHT):
            raise TransitionError("saved_state is set exactly while OUT_OF_SIGHT")
        if self.saved_state in (S.GONE, S.OUT_OF_SIGHT):
            raise TransitionError(f"cannot park a user in {self.saved_state}")


def is_legal(state: State, trigger: str) -> bool:
    if trigger not in TRIGGERS:
        raise TransitionError(f"unknown trigger {trigger!r}")
    return (state, trigger) in TRANSITIONS


def transition(
    s: InteractionState, trigger: str, now: float, others_present: bool = False
) -> InteractionState:
    """Apply ``trigger``; illegal pairs return ``s`` unchanged and log a diagnostic."""
    if not is_legal(s.state, trigger):
        log.debug("ignored %s in %s for %s", trigger, s.state.value, s.user_id)
        return s
    if trigger == "user-lost":
        return replace(s, state=S.OUT_OF_SIGHT, saved_state=s.state, last_active=now)
    if s.state is S.OUT_OF_SIGHT:
        if trigger == "user-seen":
            return replace(s, state=s.saved_state, saved_state=None, last_active=now)
        return replace(s, state=S.GONE, saved_state=None, last_active=now)
    nxt = TRANSITIONS[(s.state, trigger)]
    if s.state is S.GREETING and trigger == "turn-grant" and others_present:
        nxt = S.WAITING
    return replace(s, state=nxt, last_active=now)


@dataclass(frozen=True)
class TurnPolicy:
    weight_wait: float = 1.0
    weight_group: float = 0.5
    weight_arrival: float = 0.5

    def __post_init__(self):
        ws = (self.weight_wait, self.weight_group, self.weight_arrival)
        if min(ws) < 0 or max(ws) <= 0:
            raise ValueError("turn policy weights must be >= 0 with at least one > 0")

    def scaled(self, c: float) -> "TurnPolicy":
        return TurnPolicy(self.weight_wait * c, self.weight_group * c, self.weight_arrival * c)


def turn_scores(
    candidates: Sequence[InteractionState],
    policy: TurnPolicy,
    now: float,
    bonus: Mapping[str, float] | None = None,
) -> dict[str, Fraction]:
    """Exact scores, so that rescaling the weights cannot flip a near-tie."""
    order = sorted(candidates, key=lambda c: (c.arrival_time, c.user_id))
    rank = {c.user_id: i for i, c in enumerate(order)}
    ww, wg, wa = (Fraction(w) for w in (policy.weight_wait, policy.weight_group, policy.weight_arrival))
    scores = {}
    for c in candidates:
        score = (
            ww * (Fraction(now) - Fraction(c.last_active))
            + wg * (1 if c.in_group else 0)
            + wa * Fraction(1, 1 + rank[c.user_id])
        )
        if bonus and c.user_id in bonus:
            score += Fraction(bonus[c.user_id])
        scores[c.user_id] = score
    return scores


def select_active_user(
    candidates: Sequence[InteractionState],
    policy: TurnPolicy,
    now: float,
    bonus: Mapping[str, float] | None = None,
) -> str | None:
    if not candidates:
        return None
    for c in candidates:
        if c.state in (S.GONE, S.OUT_OF_SIGHT):
            raise TransitionError(f"{c.user_id} in {c.state.value} cannot take a turn")
    scores = turn_scores(candidates, policy, now, bonus)
    best = min(candidates, key=lambda c: (-scores[c.user_id], c.arrival_time, c.user_id))
    return best.user_id
