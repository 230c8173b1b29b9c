"""Memory stores: short-term situation, working orders, long-term profiles, semantic graph."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable

NODE_TYPES = ("DRINK", "CATEGORY", "FOOD_INGREDIENT", "FLAVOR")
EDGE_TYPES = {
    "BELONGS_TO": ("DRINK", "CATEGORY"),
    "CONTAINS": ("DRINK", "FOOD_INGREDIENT"),
    "HAS_FLAVOR": ("FOOD_INGREDIENT", "FLAVOR"),
}
PERSONAS = ("worker", "other", "unspecified")
CHANNELS = ("totem", "bar")


class BeliefError(ValueError):
    pass


class ColdStartError(LookupError):
    """No order has been recorded yet, so popularity is undefined."""


def display_name(node_id: str) -> str:
    return node_id.replace("_", " ").title()


class SemanticGraph:
    def __init__(self):
        self.nodes: dict[str, str] = {}  # id -> type
        self.category: dict[str, str] = {}
        self.ingredients: dict[str, set[str]] = {}
        self.flavors: dict[str, set[str]] = {}
        self.orders: list[tuple[str, str]] = []  # (user_id, drink_id), append-only

    @classmethod
    def parse(cls, text: str, source: str = "<graph>") -> "SemanticGraph":
        g = cls()
        edges = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            if not raw.strip() or raw.startswith("#"):
                continue
            parts = raw.split("\t")
            if parts[0] == "NODE" and len(parts) == 3:
                _, ntype, nid = parts
                if ntype not in NODE_TYPES:
                    raise BeliefError(f"{source}:{lineno}: unknown node type {ntype!r}")
                if nid in g.nodes:
                    raise BeliefError(f"{source}:{lineno}: duplicate node {nid!r}")
                g.nodes[nid] = ntype
                if ntype == "DRINK":
                    g.ingredients[nid] = set()
                elif ntype == "FOOD_INGREDIENT":
                    g.flavors[nid] = set()
            elif parts[0] == "EDGE" and len(parts) == 4:
                edges.append((lineno, *parts[1:]))
            else:
                raise BeliefError(f"{source}:{lineno}: expected NODE or EDGE record")
        for lineno, etype, src, dst in edges:
            if etype not in EDGE_TYPES:
                raise BeliefError(f"{source}:{lineno}: unknown edge type {etype!r}")
            want_src, want_dst = EDGE_TYPES[etype]
            for end, want in ((src, want_src), (dst, want_dst)):
                if g.nodes.get(end) != want:
                    raise BeliefError(f"{source}:{lineno}: {etype} endpoint {end!r} is not a {want} node")
            if etype == "BELONGS_TO":
                if src in g.category:
                    raise BeliefError(f"{source}:{lineno}: drink {src!r} already in {g.category[src]!r}")
                g.category[src] = dst
            elif etype == "CONTAINS":
                g.ingredients[src].add(dst)
            else:
                g.flavors[src].add(dst)
        uncategorized = sorted(d for d in g.ingredients if d not in g.category)
        if uncategorized:
            raise BeliefError(f"{source}: drinks without a category: {uncategorized}")
        return g

    @classmethod
    def load(cls, path: str | Path) -> "SemanticGraph":
        return cls.parse(Path(path).read_text(encoding="utf-8"), str(path))

    @property
    def drinks(self) -> list[str]:
        return sorted(self.ingredients)

    def _drink(self, d: str) -> set[str]:
        try:
            return self.ingredients[d]
        except KeyError:
            raise BeliefError(f"unknown drink {d!r}") from None

    def shared_ingredients(self, a: str, b: str) -> int:
        return len(self._drink(a) & self._drink(b))

    def most_similar_drink(self, d: str, same_category: bool, exclude: Iterable[str] = ()) -> str | None:
        self._drink(d)
        excluded = set(exclude) | {d}
        cat = self.category[d]
        best, best_score = None, -1
        for cand in self.drinks:  # sorted, so the first maximum is the lexicographic winner
            if cand in excluded or (self.category[cand] == cat) != same_category:
                continue
            score = self.shared_ingredients(d, cand)
            if score > best_score:
                best, best_score = cand, score
        return best

    def catalog(self) -> dict[str, str]:
        """Lowercase display name -> drink id."""
        return {display_name(d).lower(): d for d in self.drinks}

    def ingredient_lexicon(self) -> dict[str, str]:
        return {display_name(i).lower(): i for i in self.flavors}

    def add_order(self, user_id: str, drink_id: str) -> None:
        self._drink(drink_id)
        self.orders.append((user_id, drink_id))


@dataclass
class OrderHistoryEntry:
    drink_id: str
    timestamp: float
    rating: int | None = None
    engagement_avg: float | None = None
    channel: str = "bar"
    topics_liked: list[str] = field(default_factory=list)
    visit: int = 0

    def __post_init__(self):
        if self.rating is not None and self.rating not in range(1, 6):
            raise BeliefError(f"rating {self.rating} not in 1..5")
        if self.engagement_avg is not None and not 0.0 <= self.engagement_avg <= 1.0:
            raise BeliefError(f"engagement_avg {self.engagement_avg} outside [0, 1]")
        if self.channel not in CHANNELS:
            raise BeliefError(f"unknown channel {self.channel!r}")


@dataclass
class UserRecord:
    user_id: str
    persona: str = "unspecified"
    registered_at: float = 0.0
    orders: list[OrderHistoryEntry] = field(default_factory=list)
    liked_news_categories: dict[str, float] = field(default_factory=dict)
    interaction_prefs: str = "bar"
    visit_count: int = 0

    def __post_init__(self):
        if self.persona not in PERSONAS:
            raise BeliefError(f"unknown persona {self.persona!r}")
        if self.interaction_prefs not in CHANNELS:
            raise BeliefError(f"unknown interaction preference {self.interaction_prefs!r}")
        if self.visit_count < len({o.visit for o in self.orders}):
            raise BeliefError(f"{self.user_id}: visit_count below number of visits with orders")

    @property
    def known(self) -> bool:
        return len(self.orders) > 0

    def last_eval(self, missing_is_positive: bool = True) -> str:
        """'positive' (rating >= 3), 'negative' (<= 2) or 'none' for an unknown user."""
        if not self.orders:
            return "none"
        rating = self.orders[-1].rating
        if rating is None:
            return "positive" if missing_is_positive else "none"
        return "positive" if rating >= 3 else "negative"

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "UserRecord":
        obj = dict(obj)
        obj["orders"] = [OrderHistoryEntry(**o) for o in obj.get("orders", [])]
        return cls(**obj)


def preferred_drink_of(record: UserRecord) -> str | None:
    """Highest mean rating, ties to the most recently ordered; else most frequent."""
    if not record.orders:
        return None
    last_seen: dict[str, int] = {}
    for idx, o in enumerate(record.orders):
        last_seen[o.drink_id] = idx
    ratings: dict[str, list[int]] = {}
    for o in record.orders:
        if o.rating is not None:
            ratings.setdefault(o.drink_id, []).append(o.rating)
    if ratings:
        return max(ratings, key=lambda d: (sum(ratings[d]) / len(ratings[d]), last_seen[d]))
    counts = Counter(o.drink_id for o in record.orders)
    return max(counts, key=lambda d: (counts[d], last_seen[d]))


class StoreError(ValueError):
    pass


class LongTermStore:
    """User profiles keyed by id; persisted as one JSON record per line."""

    def __init__(self, users: Iterable[UserRecord] = ()):
        self.users: dict[str, UserRecord] = {}
        for u in users:
            self.add(u)

    def __eq__(self, other):
        return isinstance(other, LongTermStore) and self.users == other.users

    def __contains__(self, user_id: str) -> bool:
        return user_id in self.users

    def add(self, record: UserRecord) -> UserRecord:
        if record.user_id in self.users:
            raise StoreError(f"user {record.user_id!r} already registered")
        self.users[record.user_id] = record
        return record

    def get(self, user_id: str) -> UserRecord:
        try:
            return self.users[user_id]
        except KeyError:
            raise StoreError(f"unknown user {user_id!r}") from None

    def preferred_drink(self, user_id: str) -> str | None:
        return preferred_drink_of(self.get(user_id))

    def most_ordered_drink(self) -> str:
        counts = Counter(o.drink_id for u in self.users.values() for o in u.orders)
        if not counts:
            raise ColdStartError("no orders recorded yet")
        return min(counts, key=lambda d: (-counts[d], d))

    def persist(self, path: str | Path) -> None:
        lines = [json.dumps(u.to_json(), sort_keys=True, separators=(",", ":")) for u in self.users.values()]
        Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "LongTermStore":
        store = cls()
        text = Path(path).read_text(encoding="utf-8")
        for n, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                store.add(UserRecord.from_json(json.loads(line)))
            except (ValueError, TypeError) as exc:
                raise StoreError(f"{path}: record {n}: {exc}") from None
        if text and not text.endswith("\n"):
            # a clean writer always terminates records; a missing newline means a cut file
            raise StoreError(f"{path}: record {n}: truncated (no terminating newline)")
        return store


ORDER_STATUSES = ("pending", "confirmed", "preparing", "served", "cancelled")
_NEXT_STATUS = {
    "pending": {"confirmed", "cancelled"},
    "confirmed": {"preparing", "cancelled"},
    "preparing": {"served"},
    "served": set(),
    "cancelled": set(),
}


class IllegalOrderTransition(ValueError):
    pass


@dataclass
class WorkingOrder:
    order_id: str
    user_id: str
    request: object  # nlu.OrderRequest
    status: str = "pending"


@dataclass
class WorkingState:
    order_queue: list[WorkingOrder] = field(default_factory=list)
    active_intention: tuple[str, str] | None = None
    situation: dict[str, object] = field(default_factory=dict)  # user -> EngagementEstimate
    _ids: int = 0

    def add_order(self, user_id: str, request) -> WorkingOrder:
        self._ids += 1
        order = WorkingOrder(f"o{self._ids}", user_id, request)
        self.order_queue.append(order)
        return order

    def find(self, order_id: str) -> WorkingOrder:
        for o in self.order_queue:
            if o.order_id == order_id:
                return o
        raise KeyError(order_id)

    def open_order(self, user_id: str) -> WorkingOrder | None:
        for o in reversed(self.order_queue):
            if o.user_id == user_id and o.status in ("pending", "confirmed", "preparing"):
                return o
        return None

    def advance(self, order_id: str, status: str) -> WorkingOrder:
        order = self.find(order_id)
        if status not in _NEXT_STATUS[order.status]:
            raise IllegalOrderTransition(f"{order_id}: {order.status} -> {status} not allowed")
        if status == "preparing" and any(
            o.user_id == order.user_id and o.status == "preparing" for o in self.order_queue
        ):
            raise IllegalOrderTransition(f"{order.user_id} already has an order in preparation")
        order.status = status
        return order


@dataclass
class ShortTermMemory:
    """Users currently around the counter and their latest percept readings."""

    present: dict[str, float] = field(default_factory=dict)  # user -> first seen (s)
    readings: dict[str, dict[str, object]] = field(default_factory=dict)
    groups: dict[str, frozenset[str]] = field(default_factory=dict)

    def reading(self, user_id: str) -> dict[str, object]:
        return self.readings.setdefault(user_id, {})
