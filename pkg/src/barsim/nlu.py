"""Rule-based intent classification and order slot extraction."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

INTENTS: tuple[str, ...] = (
    "AnswerGreeting",
    "OrderConfirm",
    "OrderReject",
    "DeleteOrder",
    "Help",
    "Menu",
    "Order",
    "NewsConfirm",
    "NewsReject",
    "Evaluation",
)


class NluError(ValueError):
    pass


@dataclass(frozen=True)
class IntentDistribution:
    probs: Mapping[str, float]

    def __post_init__(self):
        missing = [i for i in INTENTS if i not in self.probs]
        if missing:
            raise NluError(f"distribution lacks labels: {missing}")
        extra = [k for k in self.probs if k not in INTENTS]
        if extra:
            raise NluError(f"unknown intent labels: {extra}")
        if any(p < 0 for p in self.probs.values()):
            raise NluError("negative probability")
        total = sum(self.probs.values())
        if abs(total - 1.0) > 1e-9:
            raise NluError(f"probabilities sum to {total!r}, not 1")
        object.__setattr__(self, "probs", {i: float(self.probs[i]) for i in INTENTS})

    def __getitem__(self, intent: str) -> float:
        return self.probs[intent]

    def argmax(self) -> str:
        # first label in taxonomy order wins ties
        return max(INTENTS, key=lambda i: (self.probs[i], -INTENTS.index(i)))

    @classmethod
    def uniform(cls) -> "IntentDistribution":
        return cls({i: 1 / len(INTENTS) for i in INTENTS})


def to_distribution(classified: str, confidence: float) -> IntentDistribution:
    """Put ``confidence`` on ``classified`` and spread the rest evenly."""
    if classified not in INTENTS:
        raise NluError(f"unknown intent {classified!r}")
    if not 0.0 <= confidence <= 1.0:
        raise NluError(f"confidence {confidence} outside [0, 1]")
    rest = (1.0 - confidence) / (len(INTENTS) - 1)
    return IntentDistribution({i: confidence if i == classified else rest for i in INTENTS})


@dataclass(frozen=True)
class Rule:
    intent: str
    pattern: re.Pattern
    confidence: float
    line: int


def parse_rules(text: str, source: str = "<rules>") -> list[Rule]:
    rules = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        parts = raw.split("\t")
        if len(parts) != 3:
            raise NluError(f"{source}:{lineno}: expected intent<TAB>pattern<TAB>confidence")
        intent, pattern, conf = parts
        if intent not in INTENTS:
            raise NluError(f"{source}:{lineno}: unknown intent {intent!r}")
        try:
            compiled = re.compile(pattern, re.IGNORECASE)
        except re.error as exc:
            raise NluError(f"{source}:{lineno}: bad pattern: {exc}") from None
        c = float(conf)
        if not 0.0 <= c <= 1.0:
            raise NluError(f"{source}:{lineno}: confidence {c} outside [0, 1]")
        rules.append(Rule(intent, compiled, c, lineno))
    return rules


def load_rules(path: str | Path) -> list[Rule]:
    return parse_rules(Path(path).read_text(encoding="utf-8"), str(path))


def load_corpus(path: str | Path) -> list[tuple[str, str]]:
    rows = []
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not raw.strip() or raw.startswith("#"):
            continue
        intent, sep, utterance = raw.partition("\t")
        if not sep or intent not in INTENTS:
            raise NluError(f"{path}:{lineno}: expected intent<TAB>utterance")
        rows.append((intent, utterance))
    return rows


class IntentClassifier:
    """Keyword/regex classifier. Longest match wins; ties go to the earlier rule."""

    def __init__(self, rules: Iterable[Rule]):
        self.rules = tuple(rules)

    def best_rule(self, text: str) -> Rule | None:
        best, best_len = None, -1
        for rule in self.rules:
            m = rule.pattern.search(text)
            if m and len(m.group(0)) > best_len:
                best, best_len = rule, len(m.group(0))
        return best

    def classify(self, text: str) -> IntentDistribution:
        if not text or not text.strip():
            raise NluError("cannot classify empty text")
        rule = self.best_rule(text)
        if rule is None:
            return IntentDistribution.uniform()
        return to_distribution(rule.intent, rule.confidence)


@dataclass(frozen=True)
class OrderRequest:
    product: str = ""
    modifications: tuple[tuple[str, str], ...] = ()
    cancel: bool = False

    def __post_init__(self):
        if self.cancel and self.modifications:
            raise NluError("a cancellation carries no modifications")
        for _, op in self.modifications:
            if op not in ("add", "remove"):
                raise NluError(f"bad modification op {op!r}")

    def merged(self, other: "OrderRequest") -> "OrderRequest":
        """Apply a follow-up request (order change) on top of this one."""
        if other.cancel:
            return other
        mods = dict(self.modifications if not other.product or other.product == self.product else ())
        for ingredient, op in other.modifications:
            mods[ingredient] = op
        return OrderRequest(other.product or self.product, tuple(mods.items()))


REMOVE_CUES = ("without", "no", "hold the", "minus", "skip the", "skip", "not", "leave out", "leave out the")
ADD_CUES = ("with", "extra", "add", "plus", "more", "and some", "with some", "with extra")
CANCEL_RE = re.compile(r"\b(cancel|delete|scrap|forget|nevermind|never mind|call off)\b", re.IGNORECASE)


@dataclass
class SlotExtractor:
    """Resolves product names and ingredient tweaks against the catalog."""

    catalog: Mapping[str, str]  # display name (lowercase) -> drink id
    ingredients: Mapping[str, str]  # ingredient phrase (lowercase) -> ingredient id
    classifier: IntentClassifier | None = None
    _cue_re: re.Pattern = field(init=False, repr=False)

    def __post_init__(self):
        cues = sorted(REMOVE_CUES + ADD_CUES, key=len, reverse=True)
        self._cue_re = re.compile(r"\b(" + "|".join(re.escape(c) for c in cues) + r")\b", re.IGNORECASE)

    @staticmethod
    def _find_phrases(text: str, phrases: Iterable[str]) -> list[tuple[int, int, str]]:
        hits = []
        low = text.lower()
        for phrase in sorted(phrases, key=len, reverse=True):
            for m in re.finditer(r"\b" + re.escape(phrase) + r"s?\b", low):
                if not any(s < m.end() and m.start() < e for s, e, _ in hits):
                    hits.append((m.start(), m.end(), phrase))
        return sorted(hits)

    def extract(self, text: str, intent: str | None = None) -> OrderRequest:
        if intent is None and self.classifier is not None:
            intent = self.classifier.classify(text).argmax()
        if intent is not None and intent not in ("Order", "DeleteOrder"):
            raise NluError(f"slot extraction needs an Order or DeleteOrder utterance, got {intent}")
        if intent == "DeleteOrder":
            return OrderRequest(cancel=True)

        products = self._find_phrases(text, self.catalog)
        product = self.catalog[products[0][2]] if products else ""
        taken = [(s, e) for s, e, _ in products]

        mods: dict[str, str] = {}
        low = text.lower()
        cues = [(m.start(), m.group(1).lower()) for m in self._cue_re.finditer(low)]
        for start, end, phrase in self._find_phrases(text, self.ingredients):
            if any(s <= start < e for s, e in taken):
                continue
            before = [c for pos, c in cues if pos < start]
            if not before:
                continue
            cue = before[-1]
            mods[self.ingredients[phrase]] = "remove" if cue in REMOVE_CUES else "add"
        return OrderRequest(product, tuple(mods.items()))


NO_MATCH = "(none)"


def predict(classifier: IntentClassifier, text: str) -> str:
    """Top intent, or NO_MATCH when no rule fired."""
    rule = classifier.best_rule(text)
    return rule.intent if rule is not None else NO_MATCH


def macro_f1(gold: Sequence[str], predicted: Sequence[str], labels: Sequence[str] = INTENTS) -> float:
    """Unweighted mean of per-label F1 over ``labels``; a label with no gold and
    no predicted items scores 0."""
    if len(gold) != len(predicted):
        raise NluError("gold and predicted lengths differ")
    scores = []
    for label in labels:
        tp = sum(g == label and p == label for g, p in zip(gold, predicted))
        fp = sum(g != label and p == label for g, p in zip(gold, predicted))
        fn = sum(g == label and p != label for g, p in zip(gold, predicted))
        scores.append(2 * tp / (2 * tp + fp + fn) if tp else 0.0)
    return sum(scores) / len(scores)


def evaluate(classifier: IntentClassifier, corpus: Sequence[tuple[str, str]]) -> float:
    gold = [intent for intent, _ in corpus]
    return macro_f1(gold, [predict(classifier, text) for _, text in corpus])
