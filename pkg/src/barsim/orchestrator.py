"""Wires perception, memory, turn taking, decision making and execution on one bus.

All state lives here and is mutated only from bus handlers. Batch runs and
the interactive session differ only in where utterances come from: scripted
utterances arrive pre-classified by the noisy channel, typed ones carry just
text and go through the rule classifier.
"""

from __future__ import annotations

import copy
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

from . import nlu
from .beliefs import (
    LongTermStore,
    OrderHistoryEntry,
    SemanticGraph,
    ShortTermMemory,
    UserRecord,
    WorkingState,
    display_name,
)
from .config import RunConfig
from .decision import (
    ASK,
    ASK_REPEAT,
    Beliefs,
    ClarificationRequest,
    NewsFeed,
    NewsSession,
    NewsStop,
    RecommendationContext,
    UtilityTable,
    clarification_request,
    intent_of,
    next_news,
    opening_category,
    recommend,
    select_action,
)
from .fusion import EngagementEstimate, Lexicon, fuse, is_low_engagement, sentiment
from .percepts import PERCEPTS_TOPIC, USERS_TOPIC, ConfusionChannel, Scenario, emit
from .plansched import BasicAction, RecipeStep, Timetable, face_behavior, interleave_gesture, load_recipes, plan_order, schedule
from .simbus import Bus, Message, to_ms
from .turntaking import InteractionState, State, TurnPolicy, is_legal, select_active_user, transition

log = logging.getLogger(__name__)

TOPICS = (
    USERS_TOPIC,
    PERCEPTS_TOPIC,
    "/interacting_user",
    "/state",
    "/speech",
    "/face",
    "/engagement",
    "/recommendation",
    "/orders",
    "/arm_cmd",
    "/arms",
    "/gestures",
    "/news",
    "/timer",
    "/diagnostics",
)
INITIAL_WORLD = frozenset({"glass_available", "blender_empty", "mixer_empty"})
DIALOGUE_STATES = (State.WAITING, State.RECOMMENDATION, State.ORDERING, State.CONFIRMATION)
NUMBER_WORDS = {"one": 1, "two": 2, "three": 3, "four": 4, "five": 5}


@dataclass
class DataBundle:
    graph: SemanticGraph
    store: LongTermStore
    recipes: dict[str, list[RecipeStep]]
    classifier: nlu.IntentClassifier
    lexicon: Lexicon
    feed: NewsFeed
    utilities: UtilityTable

    @classmethod
    def load(cls, cfg: RunConfig) -> "DataBundle":
        cfg.check_paths()
        graph = SemanticGraph.load(cfg.graph_path)
        store = LongTermStore.load(cfg.profiles_path) if Path(cfg.profiles_path).is_file() else LongTermStore()
        recipes = load_recipes(cfg.recipes_path)
        missing = sorted(set(graph.drinks) - set(recipes))
        if missing:
            raise ValueError(f"{cfg.recipes_path}: no recipe for {', '.join(missing)}")
        for rec in store.users.values():
            for o in rec.orders:
                graph.add_order(rec.user_id, o.drink_id)
        return cls(
            graph,
            store,
            recipes,
            nlu.IntentClassifier(nlu.load_rules(cfg.rules_path)),
            Lexicon.load(cfg.positive_lexicon, cfg.negative_lexicon),
            NewsFeed.load(cfg.news_path),
            UtilityTable.load(cfg.utilities_path),
        )


@dataclass
class Visit:
    """Bookkeeping for one user's current stay at the counter."""

    arrival: float
    persona: str = "unspecified"
    channel: str = "bar"
    registered: bool = False
    greeted: bool = False
    rejections: int = 0
    rejected: list[str] = field(default_factory=list)
    recommended: str | None = None
    request: nlu.OrderRequest | None = None
    confidence: float = 1.0
    cr: ClarificationRequest | None = None
    order_id: str | None = None
    drink_ready: bool = False
    news: NewsSession | None = None
    samples: list[float] = field(default_factory=list)
    topics_liked: list[str] = field(default_factory=list)
    oos_token: int = 0


def parse_rating(text: str) -> int | None:
    for tok in re.findall(r"[a-z]+|\d+", text.lower()):
        if tok.isdigit() and 1 <= int(tok) <= 5:
            return int(tok)
        if tok in NUMBER_WORDS:
            return NUMBER_WORDS[tok]
    return None


class Orchestrator:
    def __init__(self, cfg: RunConfig, data: DataBundle, bus: Bus | None = None):
        self.cfg = cfg
        self.bus = bus or Bus(TOPICS)
        self.graph = copy.deepcopy(data.graph)
        self.store = copy.deepcopy(data.store)
        self.recipes = data.recipes
        self.classifier = data.classifier
        self.lexicon = data.lexicon
        self.feed = data.feed
        self.utilities = data.utilities
        self.extractor = nlu.SlotExtractor(self.graph.catalog(), self.graph.ingredient_lexicon(), self.classifier)
        self.policy = TurnPolicy(cfg.weight_wait, cfg.weight_group, cfg.weight_arrival)

        self.states: dict[str, InteractionState] = {}
        self.visits: dict[str, Visit] = {}
        self.personas: dict[str, str] = {}
        self.active: str | None = None
        self.bonus: dict[str, float] = {}
        self.stm = ShortTermMemory()
        self.wm = WorkingState()
        self.timetable = Timetable(arms=cfg.arms)
        self.arms_free_ms = 0
        self.pending_actions: dict[str, int] = {}  # order -> actions not yet finished
        self.order_users: dict[str, str] = {}
        self.order_drinks: dict[str, str] = {}
        self.gestures = 0

        b = self.bus
        b.subscribe(USERS_TOPIC, self.on_users)
        b.subscribe(PERCEPTS_TOPIC, self.on_percept)
        b.subscribe("/timer", self.on_timer)
        b.subscribe("/arm_cmd", self.on_arm_cmd)
        b.subscribe("/arms", self.on_arms)

    # ------------------------------------------------------------ plumbing

    @property
    def now(self) -> float:
        return self.bus.now

    def _pub(self, topic: str, payload: dict, delay: float = 0.0) -> None:
        self.bus.publish(topic, payload, delay)

    def say(self, user: str, text: str, act: str, expects_reply: bool = False) -> None:
        self._pub(
            "/speech",
            {"user": user, "text": text, "act": act, "expects_reply": expects_reply},
            self.cfg.react_s,
        )

    def _face(self, events, delay: float = 0.0) -> None:
        for ev in events:
            self._pub("/face", ev.payload(), self.cfg.react_s + delay)

    def _timer(self, name: str, user: str, delay: float, **extra) -> None:
        self._pub("/timer", {"name": name, "user": user, **extra}, delay)

    def _record(self, user: str) -> UserRecord:
        if user not in self.store:
            self.store.add(UserRecord(user, self.personas.get(user, "unspecified"), registered_at=self.now))
        return self.store.get(user)

    def fire(self, user: str, trigger: str, others_present: bool = False) -> bool:
        st = self.states[user]
        others = others_present
        if not is_legal(st.state, trigger):
            self._pub("/diagnostics", {"user": user, "state": st.state.value, "trigger": trigger, "what": "illegal transition"})
            return False
        new = transition(st, trigger, self.now, others_present=others)
        self.states[user] = new
        self._pub("/state", {"user": user, "old": st.state.value, "new": new.state.value, "trigger": trigger})
        if user == self.active:
            self._pub("/interacting_user", {"user": user, "state": new.state.value})
        if trigger != "user-seen":
            self._enter(user, new.state, trigger, st.state)
        return True

    # ------------------------------------------------------------ turn taking

    def _set_active(self, user: str | None) -> None:
        self.active = user
        self.wm.active_intention = (user, self.states[user].state.value) if user else None
        if user is not None:
            self._pub("/interacting_user", {"user": user, "state": self.states[user].state.value})

    def _candidates(self) -> list[InteractionState]:
        # only users who still need to talk compete for the turn
        return [s for s in self.states.values() if s.state in DIALOGUE_STATES]

    def _reselect(self) -> None:
        if self.active is not None:
            return
        cands = self._candidates()
        chosen = select_active_user(cands, self.policy, self.now, self.bonus)
        self.bonus.clear()
        if chosen is None:
            return
        self._set_active(chosen)
        st = self.states[chosen].state
        if st is State.WAITING:
            self.fire(chosen, "turn-grant")
        else:
            self._resume(chosen)

    def _release(self, user: str) -> None:
        if self.active == user:
            self.active = None
            self.wm.active_intention = None
            self._reselect()

    def _greet_done(self, user: str) -> None:
        visit = self.visits[user]
        if visit.greeted or self.states[user].state is not State.GREETING:
            return
        visit.greeted = True
        busy = self.active is not None or any(s.state is State.WAITING for s in self.states.values())
        if not busy:
            self._set_active(user)
        self.fire(user, "turn-grant", others_present=busy)
        if self.active is None:
            self._reselect()

    # ------------------------------------------------------------ state entry

    def _enter(self, user: str, state: State, trigger: str, old: State) -> None:
        v = self.visits[user]
        if state is State.WAITING:
            self.say(user, "Welcome! Please wait your turn, I will be with you shortly.", "wait")
        elif state is State.RECOMMENDATION:
            self._recommend(user)
        elif state is State.ORDERING:
            self._prompt_order(user)
        elif state is State.CONFIRMATION:
            self._confirm(user)
        elif state is State.PREPARATION:
            self._prepare(user)
        elif state is State.SERVING:
            order = self.wm.find(v.order_id)
            self.wm.advance(order.order_id, "served")
            self._pub("/orders", {"order": order.order_id, "user": user, "status": "served"})
            self.say(user, f"Here is your {display_name(order.request.product)}. Enjoy!", "serve")
            self._timer("handover", user, self.cfg.handover_s)
        elif state is State.FAREWELL:
            self._archive(user)
            self.say(user, "Thank you for coming, see you next time!", "farewell")
            self._timer("farewell-done", user, self.cfg.speech_s)
        elif state is State.GONE:
            self._depart(user)
        elif state is State.OUT_OF_SIGHT:
            if v.news is not None:
                self._stop_news(user, "out-of-sight")
            v.oos_token += 1
            self._timer("oos-timeout", user, self.cfg.oos_timeout_s, token=v.oos_token)
            self._release(user)

    def _resume(self, user: str) -> None:
        """Pick a conversation back up after the user was out of sight or preempted."""
        v = self.visits[user]
        st = self.states[user].state
        if st is State.RECOMMENDATION:
            self._recommend(user)
        elif st is State.ORDERING:
            self._prompt_order(user)
        elif st is State.CONFIRMATION:
            self._confirm(user)
        elif st is State.PREPARATION and v.drink_ready:
            self.fire(user, "drink-ready")
        elif st is State.SERVING:
            self._timer("handover", user, self.cfg.handover_s)
        elif st is State.FAREWELL:
            self._timer("farewell-done", user, self.cfg.speech_s)

    def _recommend(self, user: str) -> None:
        v = self.visits[user]
        rec = self.store.users.get(user)
        ctx = RecommendationContext.for_user(
            rec, v.persona, v.rejections, v.rejected, self.cfg.missing_rating_positive
        )
        strategy, drink = recommend(ctx, Beliefs(self.graph, self.store))
        v.recommended = drink
        self._pub("/recommendation", {"user": user, "strategy": strategy, "drink": drink, "rejections": v.rejections})
        if strategy == ASK:
            self.say(user, "What would you like to order?", "ask", True)
        else:
            self.say(user, f"May I suggest a {display_name(drink)}?", "recommend", True)

    def _prompt_order(self, user: str) -> None:
        req = self.visits[user].request
        if req is None or not req.product:
            cr = clarification_request(req or nlu.OrderRequest(), 1.0, None, self.cfg.cr_threshold)
            self.say(user, cr.text, "clarify", True)
            return
        mods = ", ".join(f"{'no' if op == 'remove' else 'extra'} {display_name(i).lower()}" for i, op in req.modifications)
        desc = display_name(req.product) + (f" ({mods})" if mods else "")
        self.say(user, f"One {desc}. Shall I confirm?", "read-back", True)

    def _confirm(self, user: str) -> None:
        v = self.visits[user]
        if v.cr is None:
            v.cr = clarification_request(v.request, v.confidence, self.store.users.get(user), self.cfg.cr_threshold)
            if v.cr is not None:
                self.say(user, v.cr.text, "clarify", True)
                return
        else:
            self.say(user, v.cr.text, "clarify", True)
            return
        self.fire(user, "confirm")

    def _prepare(self, user: str) -> None:
        v = self.visits[user]
        v.cr = None
        order = self.wm.add_order(user, v.request) if v.order_id is None else self.wm.find(v.order_id)
        v.order_id = order.order_id
        if order.status == "pending":
            self.wm.advance(order.order_id, "confirmed")
        self._pub("/orders", {"order": order.order_id, "user": user, "status": "confirmed", "drink": v.request.product,
                              "modifications": [list(m) for m in v.request.modifications]})
        plan = plan_order(v.request.product, self.recipes, order.order_id)
        start = max(self.bus.now_ms, self.arms_free_ms)
        tt = schedule([plan], self.cfg.arms, INITIAL_WORLD).shifted(start)
        self.timetable = tt
        self.arms_free_ms = tt.makespan_ms
        self.pending_actions[order.order_id] = len(tt.entries)
        self.order_users[order.order_id] = user
        self.order_drinks[order.order_id] = v.request.product
        for e in tt.entries:
            self.bus.publish_at_ms(
                "/arm_cmd",
                {"action": e.action_id, "arm": e.arm, "order": order.order_id, "duration_ms": e.end_ms - e.start_ms, "kind": "service"},
                e.start_ms,
            )
        self.say(user, f"Great, your {display_name(v.request.product)} is on its way.", "confirm")
        self._start_news(user)

    def _archive(self, user: str) -> None:
        v = self.visits[user]
        rec = self._record(user)
        drink = v.request.product
        mean_eng = round(sum(v.samples) / len(v.samples), 6) if v.samples else None
        rec.orders.append(
            OrderHistoryEntry(drink, self.now, None, mean_eng, v.channel, list(v.topics_liked), rec.visit_count)
        )
        self.graph.add_order(user, drink)

    def _depart(self, user: str) -> None:
        v = self.visits[user]
        order = self.wm.open_order(user)
        if order is not None and order.status in ("pending", "confirmed"):
            self.wm.advance(order.order_id, "cancelled")
            self._pub("/orders", {"order": order.order_id, "user": user, "status": "cancelled"})
        if v.news is not None:
            self._stop_news(user, "departed")
        self.stm.present.pop(user, None)
        self._release(user)

    # ------------------------------------------------------------ news

    def _start_news(self, user: str) -> None:
        v = self.visits[user]
        cat = opening_category(v.persona, self.store, self.feed)
        v.news = NewsSession(cat, source="entertaining")
        self._news_step(user, None, delay=self.cfg.speech_s)

    def _stop_news(self, user: str, reason: str) -> None:
        self.visits[user].news = None
        self._pub("/news", {"user": user, "stop": reason})

    def _news_step(self, user: str, feedback: bool | None, delay: float = 0.0, preempted: bool = False) -> None:
        v = self.visits[user]
        if v.news is None:
            return
        prev = v.news.current_category
        if feedback is not None:
            rec = self._record(user)
            rec.liked_news_categories[prev] = rec.liked_news_categories.get(prev, 0.0) + (1.0 if feedback else -1.0)
            if feedback and prev not in v.topics_liked:
                v.topics_liked.append(prev)
        result = next_news(
            v.news, feedback, self.wm.situation.get(user), preempted, self.feed, self.cfg.low_engagement_threshold
        )
        if isinstance(result, NewsStop):
            self._stop_news(user, result.reason)
            return
        item = self.feed.by_id[result]
        self._pub("/news", {"user": user, "news": item.news_id, "category": item.category}, delay)
        self._pub(
            "/speech",
            {"user": user, "text": f"Did you hear? {item.headline}.", "act": "news", "expects_reply": True},
            self.cfg.react_s + delay,
        )
        self._face(face_behavior(None, "emoting", sentiment(item.headline, self.lexicon), user, self.now + delay), delay)
        self._gesture(user, delay)

    def _gesture(self, user: str, delay: float) -> None:
        self.gestures += 1
        gid = f"gesture{self.gestures}"
        g = BasicAction(gid, "", self.cfg.gesture_s, frozenset({"arm_any"}), kind="gesture")
        lo = self.now + delay
        hi = lo + self.cfg.speech_s + self.cfg.gesture_s
        tt = interleave_gesture(self.timetable, g, (lo, hi))
        if gid in tt.dropped:
            self._pub("/gestures", {"user": user, "gesture": gid, "dropped": True}, delay)
            return
        self.timetable = tt
        entry = next(e for e in tt.entries if e.action_id == gid)
        self._pub("/gestures", {"user": user, "gesture": gid, "dropped": False, "arm": entry.arm}, delay)
        self.bus.publish_at_ms(
            "/arm_cmd",
            {"action": gid, "arm": entry.arm, "order": "", "duration_ms": entry.end_ms - entry.start_ms, "kind": "gesture"},
            entry.start_ms,
        )

    # ------------------------------------------------------------ executors

    def on_arm_cmd(self, msg: Message) -> None:
        p = msg.payload
        if p["kind"] == "service":
            order = self.wm.find(p["order"])
            if order.status == "cancelled":
                self._pub("/arms", {**p, "phase": "skipped"})
                return
            if order.status == "confirmed":
                self.wm.advance(order.order_id, "preparing")
                self._pub("/orders", {"order": order.order_id, "user": order.user_id, "status": "preparing"})
        self._pub("/arms", {**p, "phase": "start"})
        self.bus.publish_ms("/arms", {**p, "phase": "end"}, p["duration_ms"])

    def on_arms(self, msg: Message) -> None:
        p = msg.payload
        if p["kind"] != "service" or p["phase"] == "start":
            return
        oid = p["order"]
        self.pending_actions[oid] -= 1
        if self.pending_actions[oid] == 0 and p["phase"] == "end":
            user = self.order_users[oid]
            self.visits[user].drink_ready = True
            if self.states[user].state is State.PREPARATION:
                if self.visits[user].news is not None:
                    self._stop_news(user, "drink-ready")
                self.fire(user, "drink-ready")

    # ------------------------------------------------------------ percepts

    def on_users(self, msg: Message) -> None:
        p = msg.payload
        kind, user = p["kind"], p["user"]
        if kind == "register":
            self._register(user, p["persona"], p["channel"])
        elif kind == "user-seen":
            self._seen(user)
        elif kind == "user-lost":
            if user in self.states:
                self.fire(user, "user-lost")
        elif kind == "leave":
            if user in self.states and self.states[user].state is not State.GONE:
                self.fire(user, "leave")

    def _register(self, user: str, persona: str, channel: str) -> None:
        self.personas[user] = persona
        if user in self.store:
            rec = self.store.get(user)
            if rec.persona != persona and rec.persona != "unspecified":
                self._pub("/diagnostics", {"user": user, "what": "persona is fixed at registration", "kept": rec.persona})
        else:
            self.store.add(UserRecord(user, persona, self.now, interaction_prefs=channel))
        if user in self.visits:
            self.visits[user].channel = channel
            self.visits[user].registered = True
            self.visits[user].persona = self.store.get(user).persona

    def _seen(self, user: str) -> None:
        st = self.states.get(user)
        if st is not None and st.state is State.OUT_OF_SIGHT:
            self.fire(user, "user-seen")
            if self.states[user].state in DIALOGUE_STATES:
                self._reselect()
            else:
                self._resume(user)
            return
        if st is not None and st.state is not State.GONE:
            return  # already tracked
        registered = user in self.store
        rec = self._record(user)
        rec.visit_count += 1
        persona = rec.persona if rec.persona != "unspecified" else self.personas.get(user, "unspecified")
        self.visits[user] = Visit(self.now, persona, rec.interaction_prefs, registered)
        self.states[user] = InteractionState(user, State.GREETING, arrival_time=self.now, last_active=self.now)
        self.stm.present[user] = self.now
        self._pub("/state", {"user": user, "old": None, "new": State.GREETING.value, "trigger": "user-seen"})
        if registered:
            for other, v in self.visits.items():
                if other != user and v.news is not None:
                    self._news_step(other, None, preempted=True)
        if rec.known:
            last = rec.orders[-1]
            text = f"Welcome back, {user}!"
            if last.rating is None:
                text += f" How was your {display_name(last.drink_id)} last time, from 1 to 5?"
            self.say(user, text, "greet", True)
        else:
            self.say(user, f"Hello {user}, welcome to the bar!", "greet", True)
        self._timer("greet-timeout", user, self.cfg.greet_timeout_s)

    def on_percept(self, msg: Message) -> None:
        p = msg.payload
        user, kind = p["user"], p["kind"]
        if user not in self.states or self.states[user].state is State.GONE:
            self._pub("/diagnostics", {"user": user, "what": f"{kind} from an absent user"})
            return
        reading = self.stm.reading(user)
        if kind == "pose-engagement":
            reading["pose"] = p["p"]
        elif kind == "face-valence":
            reading["valence"] = p["v"]
        elif kind == "voice-mood":
            reading["mood"] = p["mood"]
        elif kind == "group-membership":
            members = frozenset(p["members"])
            for m in members:
                self.stm.groups[m] = members
                if m in self.states:
                    self.states[m] = _with_group(self.states[m], len(members) > 1)
            return
        elif kind == "claim-attention":
            self.bonus[user] = self.bonus.get(user, 0.0) + self.cfg.claim_bonus
            return
        elif kind == "utterance":
            reading["sentiment"] = sentiment(p["text"], self.lexicon)
            self._update_engagement(user)
            self._utterance(user, p)
            return
        self._update_engagement(user)

    def _update_engagement(self, user: str) -> None:
        r = self.stm.reading(user)
        est = fuse(r.get("pose"), r.get("valence"), r.get("mood"), r.get("sentiment"), self.cfg.fusion_weights, self.now)
        est = EngagementEstimate(round(est.score, 6), est.components, est.at)
        self.wm.situation[user] = est
        self.visits[user].samples.append(est.score)
        self._pub("/engagement", {"user": user, "score": est.score})
        low = is_low_engagement(est, self.cfg.low_engagement_threshold)
        if low and user == self.active:
            self._face(face_behavior(est, "understood", user_id=user, at=self.now, threshold=self.cfg.low_engagement_threshold))
        if low and self.visits[user].news is not None:
            self._news_step(user, None)

    # ------------------------------------------------------------ dialogue

    def _utterance(self, user: str, p: dict) -> None:
        st = self.states[user].state
        if st is State.OUT_OF_SIGHT:
            self._pub("/diagnostics", {"user": user, "what": "utterance while out of sight"})
            return
        if "classified" in p:
            dist = nlu.to_distribution(p["classified"], p["confidence"])
        else:
            dist = self.classifier.classify(p["text"])
        action = select_action(dist, self.utilities)
        if action == ASK_REPEAT:
            self._face(face_behavior(None, "not_understood", user_id=user, at=self.now))
            self.say(user, "Sorry, could you repeat that?", "ask-repeat", True)
            return
        intent = intent_of(action)
        self._face(face_behavior(None, "understood", user_id=user, at=self.now))
        self._respond(user, intent, p["text"], dist[intent])

    def _respond(self, user: str, intent: str, text: str, confidence: float) -> None:
        v = self.visits[user]
        st = self.states[user].state
        if intent == "Help":
            self.say(user, "I can recommend a drink, take your order, show the menu, or chat while I prepare it.", "help", True)
            return
        if intent == "Menu":
            by_cat: dict[str, list[str]] = {}
            for d in self.graph.drinks:
                by_cat.setdefault(self.graph.category[d], []).append(display_name(d))
            listing = "; ".join(f"{c}s: {', '.join(ds)}" for c, ds in sorted(by_cat.items()))
            self.say(user, f"Today we have {listing}.", "menu", True)
            return
        if intent == "Evaluation":
            self._evaluate(user, text)
            return
        if intent == "AnswerGreeting":
            if st is State.GREETING:
                self._greet_done(user)
            else:
                self.say(user, "Hello again!", "greet")
            return

        if user != self.active and st in (State.GREETING, State.WAITING):
            self.say(user, "I will be with you in a moment.", "wait")
            return
        if st is State.GREETING:
            self._greet_done(user)
            st = self.states[user].state
            if user != self.active:
                return

        if intent == "Order":
            req = self.extractor.extract(text, "Order")
            v.confidence = confidence
            v.cr = None
            if st is State.RECOMMENDATION:
                v.request = req
                self.fire(user, "order")
            elif st in (State.ORDERING, State.CONFIRMATION):
                v.request = v.request.merged(req) if v.request else req
                self.fire(user, "order-modify")
            else:
                self.say(user, "Your order is already being taken care of.", "info")
        elif intent == "OrderConfirm":
            if st is State.RECOMMENDATION:
                if v.recommended:
                    v.request = nlu.OrderRequest(v.recommended)
                    v.confidence = confidence
                    self.fire(user, "accept")
                else:
                    self.say(user, "What would you like to order?", "ask", True)
            elif st is State.ORDERING:
                if v.request is not None and v.request.product:
                    self.fire(user, "order-confirm")
                else:
                    self._prompt_order(user)
            elif st is State.CONFIRMATION:
                self.fire(user, "confirm")
            elif v.news is not None:
                self._news_step(user, True)
            else:
                self.say(user, "Alright.", "ack")
        elif intent == "OrderReject":
            if st is State.RECOMMENDATION:
                if v.recommended:
                    v.rejected.append(v.recommended)
                v.rejections += 1
                self.fire(user, "reject")
            elif st is State.ORDERING:
                v.request = None
                self.say(user, "No problem. What would you like instead?", "clarify", True)
            elif st is State.CONFIRMATION:
                v.cr = None
                self.fire(user, "order-reject")
            elif v.news is not None:
                self._news_step(user, False)
            else:
                self.say(user, "Alright.", "ack")
        elif intent == "DeleteOrder":
            self._delete(user, st)
        elif intent in ("NewsConfirm", "NewsReject"):
            if v.news is not None:
                self._news_step(user, intent == "NewsConfirm")
            else:
                self.say(user, "Glad to chat!" if intent == "NewsConfirm" else "Okay.", "ack")

    def _delete(self, user: str, st: State) -> None:
        v = self.visits[user]
        order = self.wm.open_order(user)
        if st is State.PREPARATION and order is not None and order.status == "preparing":
            self.say(user, "Sorry, your drink is already being prepared.", "info")
            return
        if order is not None:
            self.wm.advance(order.order_id, "cancelled")
            self._pub("/orders", {"order": order.order_id, "user": user, "status": "cancelled"})
        self.say(user, "Your order is cancelled. Goodbye!", "cancel")
        if v.news is not None:
            self._stop_news(user, "cancelled")
        self.fire(user, "delete-order" if st is State.CONFIRMATION else "leave")

    def _evaluate(self, user: str, text: str) -> None:
        rating = parse_rating(text)
        rec = self.store.users.get(user)
        target = next((o for o in reversed(rec.orders) if o.rating is None), None) if rec else None
        if rating is None or target is None:
            self.say(user, "Thanks for telling me!", "ack")
        else:
            target.rating = rating
            self.say(user, f"Thanks, I noted {rating} out of 5 for the {display_name(target.drink_id)}.", "thanks")
        if self.states[user].state is State.GREETING:
            self._greet_done(user)

    # ------------------------------------------------------------ timers

    def on_timer(self, msg: Message) -> None:
        p = msg.payload
        user, name = p["user"], p["name"]
        st = self.states[user].state
        if name == "greet-timeout":
            if st is State.GREETING:
                self._greet_done(user)
        elif name == "handover" and st is State.SERVING:
            self.fire(user, "handover")
        elif name == "farewell-done" and st is State.FAREWELL:
            self.fire(user, "farewell-done")
        elif name == "oos-timeout" and st is State.OUT_OF_SIGHT and p["token"] == self.visits[user].oos_token:
            self.fire(user, "leave")

    # ------------------------------------------------------------ entry points

    def load_scenario(self, scenario: Scenario, channel: ConfusionChannel | None) -> None:
        for u in scenario.users.values():
            self.personas[u.user_id] = u.persona
        emit(scenario, self.bus, channel)


def _with_group(s: InteractionState, in_group: bool) -> InteractionState:
    from dataclasses import replace

    return replace(s, in_group=in_group)


def make_channel(cfg: RunConfig) -> ConfusionChannel | None:
    if not cfg.noise_enabled:
        return None
    return ConfusionChannel.measured(cfg.seed, cfg.delete_order_recall, (cfg.confidence_lo, cfg.confidence_hi))


def run_scenario(cfg: RunConfig, scenario: Scenario, data: DataBundle | None = None) -> Orchestrator:
    data = data or DataBundle.load(cfg)
    orch = Orchestrator(cfg, data)
    orch.load_scenario(scenario, make_channel(cfg))
    orch.bus.run()
    return orch


def interaction_delay_ms(cfg: RunConfig) -> int:
    return to_ms(cfg.typing_s)
