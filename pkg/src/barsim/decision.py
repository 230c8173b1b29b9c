"""Interaction manager: expected-utility action choice, clarification requests,
recommendation strategies and the news entertainment loop."""

from __future__ import annotations

import math
from fractions import Fraction
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .beliefs import PERSONAS, ColdStartError, LongTermStore, SemanticGraph, UserRecord, display_name, preferred_drink_of
from .fusion import DEFAULT_LOW_THRESHOLD, EngagementEstimate, is_low_engagement
from .nlu import INTENTS, IntentDistribution, OrderRequest

ASK_REPEAT = "AskRepeat"


def respond(intent: str) -> str:
    return f"respond_{intent}"


def intent_of(action: str) -> str | None:
    return action[len("respond_"):] if action.startswith("respond_") else None


class DecisionError(ValueError):
    pass


@dataclass(frozen=True)
class UtilityTable:
    actions: tuple[str, ...]
    u: Mapping[tuple[str, str], float]

    def __post_init__(self):
        missing = [(a, i) for a in self.actions for i in INTENTS if (a, i) not in self.u]
        if missing:
            raise DecisionError(f"utility table lacks {len(missing)} entries, e.g. {missing[0]}")

    @classmethod
    def default(cls) -> "UtilityTable":
        actions = tuple(respond(i) for i in INTENTS) + (ASK_REPEAT,)
        u = {}
        for a in actions:
            for i in INTENTS:
                u[(a, i)] = 0.0 if a == ASK_REPEAT else (1.0 if intent_of(a) == i else -1.0)
        return cls(actions, u)

    @classmethod
    def load(cls, path: str | Path) -> "UtilityTable":
        actions: dict[str, None] = {}
        u = {}
        for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not raw.strip() or raw.startswith("#"):
                continue
            parts = raw.split("\t")
            if len(parts) != 3 or parts[1] not in INTENTS:
                raise DecisionError(f"{path}:{lineno}: expected action<TAB>intent<TAB>value")
            action, intent, value = parts
            if action != ASK_REPEAT and intent_of(action) not in INTENTS:
                raise DecisionError(f"{path}:{lineno}: unknown action {action!r}")
            actions[action] = None
            u[(action, intent)] = float(value)
        # keep the canonical order: responses in taxonomy order, AskRepeat last
        ordered = tuple(a for a in UtilityTable.default().actions if a in actions)
        return cls(ordered, u)


def expected_utility(action: str, d: IntentDistribution, table: UtilityTable) -> float:
    if action not in table.actions:
        raise DecisionError(f"unknown action {action!r}")
    return math.fsum(d.probs[i] * table.u[(action, i)] for i in INTENTS)


def _exact_eu(action: str, d: IntentDistribution, table: UtilityTable) -> Fraction:
    return sum((Fraction(d.probs[i]) * Fraction(table.u[(action, i)]) for i in INTENTS), Fraction(0))


def select_action(d: IntentDistribution, table: UtilityTable) -> str:
    """Highest expected utility. AskRepeat wins any tie it is part of (the
    cautious move); otherwise the earlier action in table order wins.

    Actions whose float utility is within rounding distance of the best are
    re-compared exactly, so rounding never decides a near-tie.
    """
    eus = {a: expected_utility(a, d, table) for a in table.actions}
    top = max(eus.values())
    scale = max(1.0, max(abs(v) for v in table.u.values()))
    close = [a for a in table.actions if eus[a] >= top - 1e-9 * scale]
    if len(close) > 1:
        exact = {a: _exact_eu(a, d, table) for a in close}
        best_eu = max(exact.values())
        close = [a for a in close if exact[a] == best_eu]
    if ASK_REPEAT in close:
        return ASK_REPEAT
    return close[0]


# ---------------------------------------------------------------- clarification


@dataclass(frozen=True)
class ClarificationRequest:
    kind: str  # "confirmation" | "counter-expectation" | "ask-product"
    text: str
    product: str = ""
    usual: str = ""


def clarification_request(
    order: OrderRequest,
    confidence: float,
    history: UserRecord | None,
    cr_threshold: float = 0.6,
) -> ClarificationRequest | None:
    if not 0.0 <= confidence <= 1.0:
        raise DecisionError(f"confidence {confidence} outside [0, 1]")
    if order.cancel:
        return None
    if not order.product:
        return ClarificationRequest("ask-product", "Which drink would you like?")
    name = display_name(order.product)
    if confidence < cr_threshold:
        return ClarificationRequest("confirmation", f"Did you say {name}?", order.product)
    usual = preferred_drink_of(history) if history is not None else None
    if usual and usual != order.product:
        return ClarificationRequest(
            "counter-expectation",
            f"A {name}? You usually have the {display_name(usual)}. Shall I make the {name}?",
            order.product,
            usual,
        )
    return None


# ---------------------------------------------------------------- recommendation

PREFERRED = "preferred"
MOST_ORDERED = "most-ordered"
SIMILAR_SAME = "similar-same-category"
SIMILAR_OTHER = "similar-other-category"
ASK = "ask"
EVALS = ("positive", "negative", "none")


@dataclass(frozen=True)
class RecommendationContext:
    persona: str = "unspecified"
    known_user: bool = False
    last_eval: str = "none"
    rejection_count: int = 0
    last_drink: str = ""
    user_id: str = ""
    rejected: frozenset[str] = frozenset()

    def __post_init__(self):
        if self.persona not in PERSONAS:
            raise DecisionError(f"unknown persona {self.persona!r}")
        if self.last_eval not in EVALS:
            raise DecisionError(f"unknown evaluation {self.last_eval!r}")
        if self.rejection_count < 0:
            raise DecisionError("rejection_count must be >= 0")
        if not self.known_user and (self.last_eval != "none" or self.last_drink):
            raise DecisionError("a new user has no evaluation and no last drink")

    @classmethod
    def for_user(
        cls,
        record: UserRecord | None,
        persona: str = "unspecified",
        rejection_count: int = 0,
        rejected: Iterable[str] = (),
        missing_is_positive: bool = True,
    ) -> "RecommendationContext":
        if record is None or not record.known:
            return cls(record.persona if record else persona, False, "none", rejection_count,
                       user_id=record.user_id if record else "", rejected=frozenset(rejected))
        return cls(
            record.persona,
            True,
            record.last_eval(missing_is_positive),
            rejection_count,
            record.orders[-1].drink_id,
            record.user_id,
            frozenset(rejected),
        )


def strategy_chain(ctx: RecommendationContext) -> tuple[str, ...]:
    if ctx.persona == "worker":
        return (PREFERRED, MOST_ORDERED, ASK) if ctx.known_user else (MOST_ORDERED, ASK)
    if not ctx.known_user:
        return (MOST_ORDERED, ASK)
    # a known user whose last drink went unrated is on the optimistic branch
    if ctx.last_eval == "negative":
        return (MOST_ORDERED, ASK)
    return (SIMILAR_SAME, SIMILAR_OTHER, MOST_ORDERED, ASK)


@dataclass
class Beliefs:
    """What recommendation needs to see of memory."""

    graph: SemanticGraph
    store: LongTermStore


def _strategy_drink(strategy: str, ctx: RecommendationContext, beliefs: Beliefs) -> str | None:
    if strategy == PREFERRED:
        if ctx.user_id and ctx.user_id in beliefs.store:
            return beliefs.store.preferred_drink(ctx.user_id)
        return None
    if strategy == MOST_ORDERED:
        try:
            return beliefs.store.most_ordered_drink()
        except ColdStartError:
            return None
    if strategy in (SIMILAR_SAME, SIMILAR_OTHER):
        if not ctx.last_drink:
            return None
        return beliefs.graph.most_similar_drink(ctx.last_drink, strategy == SIMILAR_SAME, ctx.rejected)
    raise DecisionError(f"unknown strategy {strategy!r}")


def recommend(ctx: RecommendationContext, beliefs: Beliefs) -> tuple[str, str | None]:
    """Returns (strategy, drink); the drink is None only for the 'ask' strategy."""
    chain = strategy_chain(ctx)
    for strategy in chain[min(ctx.rejection_count, len(chain) - 1):]:
        if strategy == ASK:
            return ASK, None
        drink = _strategy_drink(strategy, ctx, beliefs)
        if drink is not None and drink not in ctx.rejected:
            return strategy, drink
    return ASK, None


# ---------------------------------------------------------------- news loop


@dataclass(frozen=True)
class NewsItem:
    news_id: str
    category: str
    source: str
    headline: str


class NewsFeed:
    def __init__(self, items: Sequence[NewsItem]):
        self.items = tuple(items)
        ids = [n.news_id for n in self.items]
        if len(set(ids)) != len(ids):
            raise DecisionError("duplicate news ids in feed")
        self.categories = tuple(dict.fromkeys(n.category for n in self.items))
        self.by_id = {n.news_id: n for n in self.items}

    @classmethod
    def load(cls, path: str | Path) -> "NewsFeed":
        items = []
        for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not raw.strip() or raw.startswith("#"):
                continue
            parts = raw.split("\t")
            if len(parts) != 4 or parts[2] not in ("serious", "entertaining"):
                raise DecisionError(f"{path}:{lineno}: expected id<TAB>category<TAB>serious|entertaining<TAB>headline")
            items.append(NewsItem(*parts))
        return cls(items)


@dataclass
class NewsSession:
    current_category: str
    source: str = "entertaining"
    presented: list[str] = field(default_factory=list)
    feedback: list[bool] = field(default_factory=list)
    visited: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.source not in ("serious", "entertaining"):
            raise DecisionError(f"unknown news source {self.source!r}")
        if self.current_category not in self.visited:
            self.visited.append(self.current_category)


@dataclass(frozen=True)
class NewsStop:
    reason: str  # preempted | disengaged | exhausted | uninterested


def opening_category(persona: str, store: LongTermStore, feed: NewsFeed) -> str:
    """Most-liked category among users sharing the persona, else across everyone."""

    def best(users):
        totals: dict[str, float] = {}
        for u in users:
            for cat, score in u.liked_news_categories.items():
                if cat in feed.categories:
                    totals[cat] = totals.get(cat, 0.0) + score
        positive = {c: s for c, s in totals.items() if s > 0}
        if not positive:
            return None
        return min(positive, key=lambda c: (-positive[c], feed.categories.index(c)))

    users = list(store.users.values())
    return (
        best(u for u in users if u.persona == persona)
        or best(users)
        or feed.categories[0]
    )


def _remaining(feed: NewsFeed, session: NewsSession, category: str) -> list[NewsItem]:
    shown = set(session.presented)
    return [n for n in feed.items if n.category == category and n.news_id not in shown]


def next_news(
    session: NewsSession,
    feedback: bool | None,
    engagement: EngagementEstimate | None,
    new_registered_client: bool,
    feed: NewsFeed,
    low_threshold: float = DEFAULT_LOW_THRESHOLD,
) -> str | NewsStop:
    """Advance the session and return the next news id, or why the loop stops."""
    if feedback is not None:
        session.feedback.append(feedback)
    if new_registered_client:
        return NewsStop("preempted")
    if engagement is not None and is_low_engagement(engagement, low_threshold):
        return NewsStop("disengaged")
    if not any(_remaining(feed, session, c) for c in feed.categories):
        return NewsStop("exhausted")

    cats = feed.categories
    start = cats.index(session.current_category) if session.current_category in cats else -1
    rotation = [cats[(start + k) % len(cats)] for k in range(1, len(cats) + 1)]
    if feedback is False:
        fresh = [c for c in rotation if c not in session.visited and _remaining(feed, session, c)]
        if not fresh:
            return NewsStop("uninterested")
        session.current_category = fresh[0]
    elif not _remaining(feed, session, session.current_category):
        fresh = [c for c in rotation if c not in session.visited and _remaining(feed, session, c)]
        session.current_category = (fresh or [c for c in rotation if _remaining(feed, session, c)])[0]
    if session.current_category not in session.visited:
        session.visited.append(session.current_category)

    items = _remaining(feed, session, session.current_category)
    preferred = [n for n in items if n.source == session.source]
    item = (preferred or items)[0]
    session.presented.append(item.news_id)
    return item.news_id
